//! Time stepping of the full field–cell model.
//!
//! Each step treats diffusion by backward Euler and everything else
//! (membrane exchange, intracellular kinetics) by forward Euler with the
//! field sampled at the start of the step. The exchange flux leaving a cell
//! is deposited into the field with the same stencil used to sample it, so
//! the exchange conserves mass exactly.

use serde::{Deserialize, Serialize};

use super::grid::{build_grid, deposit_and_sample, FieldGrid, SourceStencil};
use super::snapshot::Snapshot;
use super::solver::{PcgSolver, SolveStats};
use crate::cells::cell_rate;
use crate::error::{Error, Result};
use crate::types::{
    output_map, validate_with, CellKind, ReceiverParams, SenderParams, SignalParams, SystemSpec, Trajectory,
    ValidationOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullSettings {
    /// Grid spacing (µm).
    pub h: f64,
    /// Time step (min).
    pub dt: f64,
    /// Relative residual for the implicit diffusion solve.
    pub tolerance: f64,
    /// Upper bound on `dt·(α + γ_u + Vα·max w)` for the explicit exchange.
    pub stability_limit: f64,
    /// Check the discrete mass balance after every step.
    pub audit: bool,
    /// Times at which to keep whole-field snapshots.
    pub snapshot_times: Vec<f64>,
    pub validation: ValidationOptions,
}

impl Default for FullSettings {
    fn default() -> Self {
        Self {
            h: 1.0,
            dt: 5e-3,
            tolerance: 1e-9,
            stability_limit: 1.0,
            audit: true,
            snapshot_times: Vec::new(),
            validation: ValidationOptions::default(),
        }
    }
}

/// Worst relative mass-balance defect seen so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MassAudit {
    pub steps: u64,
    pub max_relative_defect: f64,
    pub last_relative_defect: f64,
}

pub struct FullModel {
    pub grid: FieldGrid,
    solver: PcgSolver,
    stencils: Vec<SourceStencil>,
    kinds: Vec<CellKind>,
    offsets: Vec<usize>,
    /// Stacked intracellular state.
    pub x: Vec<f64>,
    /// Intracellular signal per cell.
    pub u: Vec<f64>,
    /// Field at the interior nodes.
    pub v: Vec<f64>,
    v_prev: Option<Vec<f64>>,
    pub time: f64,
    steps: u64,
    dt: f64,
    signal: SignalParams,
    sender: SenderParams,
    receiver: ReceiverParams,
    volume: f64,
    diffusivity: f64,
    audit_enabled: bool,
    pub audit: MassAudit,
    pub last_solve: SolveStats,
    rhs: Vec<f64>,
    guess: Vec<f64>,
    rate: Vec<f64>,
}

impl FullModel {
    pub fn new(spec: &SystemSpec, settings: &FullSettings) -> Result<Self> {
        validate_with(spec, settings.validation).into_result()?;
        if !(settings.dt > 0.0 && settings.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt and tolerance must be positive, got {} and {}",
                settings.dt, settings.tolerance
            )));
        }
        let grid = build_grid(&spec.domain, settings.h)?;
        if let Some(c) = spec.cells.iter().find(|c| settings.h > c.radius) {
            return Err(Error::Grid(format!(
                "spacing {} exceeds the cell radius {}",
                settings.h, c.radius
            )));
        }
        let stencils = spec
            .cells
            .iter()
            .map(|c| deposit_and_sample(&grid, &c.position))
            .collect::<Result<Vec<_>>>()?;
        let volume = if spec.cells.is_empty() { 0.0 } else { spec.common_volume()? };
        let sig = spec.signal;

        let w_max = stencils.iter().flat_map(|s| s.weights.iter().copied()).fold(0.0, f64::max);
        let rate = sig.alpha + sig.gamma_u + volume * sig.alpha * w_max;
        let product = settings.dt * rate;
        if !spec.cells.is_empty() && product > settings.stability_limit {
            return Err(Error::UnstableStep {
                product,
                limit: settings.stability_limit,
                suggested_dt: 0.5 * settings.stability_limit / rate,
            });
        }

        let d = spec.domain.diffusivity;
        let solver = PcgSolver::new(&grid, 1.0, settings.dt * d, settings.tolerance)?;
        let kinds = spec.kinds();
        let mut offsets = Vec::with_capacity(kinds.len());
        let mut acc = 0;
        for k in &kinds {
            offsets.push(acc);
            acc += k.state_dim();
        }
        let v: Vec<f64> = (0..grid.len())
            .map(|k| spec.initial_field.value(&spec.domain, &grid.position(k)))
            .collect();
        let n = grid.len();
        Ok(Self {
            solver,
            stencils,
            x: spec.stacked_initial_state(),
            u: spec.initial_signals(),
            v,
            v_prev: None,
            time: 0.0,
            steps: 0,
            dt: settings.dt,
            signal: sig,
            sender: spec.sender,
            receiver: spec.receiver,
            volume,
            diffusivity: d,
            audit_enabled: settings.audit,
            audit: MassAudit::default(),
            last_solve: SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
            rhs: vec![0.0; n],
            guess: vec![0.0; n],
            rate: vec![0.0; 2],
            kinds,
            offsets,
            grid,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kinds(&self) -> &[CellKind] {
        &self.kinds
    }

    pub fn stencils(&self) -> &[SourceStencil] {
        &self.stencils
    }

    /// `v(ℓ_i)` through each cell's stencil.
    pub fn sampled_field(&self) -> Vec<f64> {
        self.stencils.iter().map(|s| s.sample(self.grid.h, &self.v)).collect()
    }

    /// `V·Σu + h³·Σv`.
    pub fn total_mass(&self) -> f64 {
        let h3 = self.grid.h.powi(3);
        self.volume * self.u.iter().sum::<f64>() + h3 * self.v.iter().sum::<f64>()
    }

    /// `‖v‖` in the discrete L² norm.
    pub fn field_norm(&self) -> f64 {
        l2(self.grid.h, &self.v)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            n: self.grid.n,
            h: self.grid.h,
            radius: self.grid.radius,
            values: self.grid.to_lattice(&self.v),
        }
    }

    fn outputs(&self) -> Vec<f64> {
        self.kinds
            .iter()
            .zip(&self.offsets)
            .map(|(&k, &o)| output_map(k, &self.x[o..o + k.state_dim()]).unwrap_or(0.0))
            .collect()
    }

    /// One IMEX step.
    pub fn step(&mut self) -> Result<SolveStats> {
        self.advance(false)
    }

    /// Advances the field only, holding `x` and `u` fixed.
    pub fn step_frozen(&mut self) -> Result<SolveStats> {
        self.advance(true)
    }

    fn advance(&mut self, frozen: bool) -> Result<SolveStats> {
        let dt = self.dt;
        let h3 = self.grid.h.powi(3);
        let sig = self.signal;
        let v_s = self.sampled_field();
        let y = self.outputs();
        let mass_before = self.total_mass();

        self.rhs.copy_from_slice(&self.v);
        let mut production = 0.0;
        for (i, st) in self.stencils.iter().enumerate() {
            let flux = dt * self.volume * sig.alpha * (self.u[i] - v_s[i]);
            for (&k, &w) in st.nodes.iter().zip(&st.weights) {
                self.rhs[k] += flux * w;
            }
        }
        if !frozen {
            for (i, &kind) in self.kinds.iter().enumerate() {
                let o = self.offsets[i];
                let d = kind.state_dim();
                cell_rate(kind, &self.x[o..o + d], self.u[i], &self.sender, &self.receiver, &mut self.rate[..d]);
                for s in 0..d {
                    self.x[o + s] += dt * self.rate[s];
                }
                let source = sig.a_u * y[i] - sig.gamma_u * self.u[i];
                production += self.volume * source;
                self.u[i] += dt * (source - sig.alpha * (self.u[i] - v_s[i]));
            }
        }

        match &self.v_prev {
            Some(prev) => {
                for k in 0..self.v.len() {
                    self.guess[k] = 2.0 * self.v[k] - prev[k];
                }
            }
            None => self.guess.copy_from_slice(&self.v),
        }
        let stats = self.solver.solve(&self.rhs, &mut self.guess, None)?;
        let prev = self.v_prev.get_or_insert_with(|| vec![0.0; self.v.len()]);
        prev.copy_from_slice(&self.v);
        self.v.copy_from_slice(&self.guess);
        self.last_solve = stats;

        self.steps += 1;
        self.time = self.steps as f64 * dt;
        let finite = self.x.iter().chain(&self.u).all(|v| v.is_finite()) && self.v.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Integration {
                t: self.time,
                reason: "non-finite state".into(),
            });
        }

        if self.audit_enabled && !frozen {
            let mass_after = self.total_mass();
            let outflow = dt * self.grid.wall_flux(self.diffusivity, &self.v);
            let defect = mass_after - mass_before - dt * production + outflow;
            let scale = mass_before.abs().max(mass_after.abs()).max(h3 * f64::MIN_POSITIVE);
            let rel = if defect == 0.0 { 0.0 } else { defect.abs() / scale };
            self.audit.steps += 1;
            self.audit.last_relative_defect = rel;
            self.audit.max_relative_defect = self.audit.max_relative_defect.max(rel);
        }
        Ok(stats)
    }

    /// Steady field `v*` for the current `u` with the cells frozen:
    /// `(-D∇²_h + Vα Σ w h³wᵀ) v* = Σ Vα u_i w_i`.
    pub fn frozen_steady_field(&self, tolerance: f64) -> Result<Vec<f64>> {
        let va = self.volume * self.signal.alpha;
        let h3 = self.grid.h.powi(3);
        let mut solver = PcgSolver::new(&self.grid, 0.0, self.diffusivity, tolerance)?;
        let mut b = vec![0.0; self.grid.len()];
        for (st, &u) in self.stencils.iter().zip(&self.u) {
            for (&k, &w) in st.nodes.iter().zip(&st.weights) {
                b[k] += va * u * w;
            }
        }
        let stencils = &self.stencils;
        let extra = move |x: &[f64], y: &mut [f64]| {
            for st in stencils {
                let s: f64 = st.nodes.iter().zip(&st.weights).map(|(&k, w)| w * x[k]).sum();
                for (&k, &w) in st.nodes.iter().zip(&st.weights) {
                    y[k] += va * h3 * w * s;
                }
            }
        };
        let mut v = vec![0.0; self.grid.len()];
        solver.solve(&b, &mut v, Some(&extra))?;
        Ok(v)
    }

    /// Runs `steps` frozen-cell steps and records `(t, ‖v - v*‖)` every
    /// `every` steps, starting with the initial state.
    pub fn relax_frozen(&mut self, steps: usize, every: usize) -> Result<Vec<(f64, f64)>> {
        let target = self.frozen_steady_field(1e-12)?;
        let h = self.grid.h;
        let dist = |v: &[f64]| {
            let d: Vec<f64> = v.iter().zip(&target).map(|(a, b)| a - b).collect();
            l2(h, &d)
        };
        let mut series = vec![(self.time, dist(&self.v))];
        for s in 1..=steps {
            self.step_frozen()?;
            if s % every.max(1) == 0 {
                series.push((self.time, dist(&self.v)));
            }
        }
        Ok(series)
    }

    /// Steps to `t_end`, recording every `output_dt` and keeping snapshots
    /// at the requested times.
    pub fn run(&mut self, t_end: f64, output_dt: f64, snapshot_times: &[f64]) -> Result<FullRun> {
        let per_output = steps_for(output_dt, self.dt, "output_dt")?;
        let total = steps_for(t_end, self.dt, "t_end")?;
        let mut traj = Trajectory::new(self.kinds.clone(), true);
        let mut snaps = Vec::new();
        let mut pending: Vec<f64> = snapshot_times.to_vec();
        pending.sort_by(f64::total_cmp);
        let mut pending = pending.into_iter().peekable();
        let mut cg_iterations = 0usize;

        let record = |m: &FullModel, traj: &mut Trajectory| {
            traj.push(m.time, m.x.clone(), m.u.clone(), Some(m.sampled_field()));
        };
        record(self, &mut traj);
        for s in 1..=total {
            while pending.peek().is_some_and(|&t| t <= self.time + 0.5 * self.dt) {
                pending.next();
                snaps.push(self.snapshot());
            }
            cg_iterations += self.step()?.iterations;
            if s % per_output == 0 || s == total {
                record(self, &mut traj);
            }
        }
        if pending.peek().is_some_and(|&t| t <= self.time + 0.5 * self.dt) {
            snaps.push(self.snapshot());
        }
        Ok(FullRun {
            trajectory: traj,
            snapshots: snaps,
            audit: self.audit,
            steps: total,
            cg_iterations,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FullRun {
    pub trajectory: Trajectory,
    pub snapshots: Vec<Snapshot>,
    pub audit: MassAudit,
    pub steps: usize,
    pub cg_iterations: usize,
}

pub fn simulate_full(spec: &SystemSpec, settings: &FullSettings, t_end: f64, output_dt: f64) -> Result<FullRun> {
    FullModel::new(spec, settings)?.run(t_end, output_dt, &settings.snapshot_times)
}

fn steps_for(span: f64, dt: f64, what: &str) -> Result<usize> {
    let k = (span / dt).round();
    if !(k >= 1.0) || (k * dt - span).abs() > 1e-9 * span {
        return Err(Error::InvalidParameter(format!(
            "{what} = {span} must be a positive multiple of dt = {dt}"
        )));
    }
    Ok(k as usize)
}

pub(crate) fn l2(h: f64, v: &[f64]) -> f64 {
    (h.powi(3) * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}
