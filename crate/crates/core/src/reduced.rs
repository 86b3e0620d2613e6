//! Reduced network model: intracellular ODEs closed by the static
//! interconnection `U = 𝒢Y`.
//!
//! Receivers do not emit signal, so `Y` is nonzero only on senders and only
//! the sender columns of `𝒢` matter. Senders ignore `u`, so inside the
//! right-hand side only the receiver-by-sender block is applied.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::cells::{receiver_rate, sender_rate};
use crate::error::{Error, Result};
use crate::greens::{assemble_gain, assemble_green, GainMatrix};
use crate::linalg::matvec;
use crate::ode::{integrate, output_times, rk4_step, Dopri5, Method, OdeSystem, Rk4Work};
use crate::types::{
    output_map, validate_with, CellKind, ReceiverParams, SenderParams, SystemSpec, Trajectory,
    ValidationOptions,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReducedSettings {
    pub method: Method,
    pub validation: ValidationOptions,
}

/// `U = 𝒢Y`.
pub fn interconnect(gain: &GainMatrix, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != gain.len() {
        return Err(Error::Dimension {
            expected: gain.len(),
            got: y.len(),
        });
    }
    Ok(matvec(gain.entries.as_ref(), y))
}

/// Right-hand side of the reduced model.
struct Kinetics {
    kinds: Vec<CellKind>,
    offsets: Vec<usize>,
    dim: usize,
    sender_offsets: Vec<usize>,
    receivers: Vec<usize>,
    /// Rows: receivers, columns: senders.
    receiver_gain: Mat<f64>,
    sender: SenderParams,
    receiver: ReceiverParams,
}

impl Kinetics {
    fn sender_outputs(&self, x: &[f64]) -> Vec<f64> {
        self.sender_offsets.iter().map(|&o| x[o]).collect()
    }
}

impl OdeSystem for Kinetics {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let y = self.sender_outputs(x);
        let u_r = matvec(self.receiver_gain.as_ref(), &y);
        let mut r = 0;
        for (c, kind) in self.kinds.iter().enumerate() {
            let o = self.offsets[c];
            match kind {
                CellKind::Sender => dx[o] = sender_rate(&x[o..o + 1], &self.sender)[0],
                CellKind::Receiver => {
                    let d = receiver_rate(&x[o..o + 2], u_r[r], &self.receiver);
                    dx[o..o + 2].copy_from_slice(&d);
                    r += 1;
                }
            }
        }
    }
}

pub struct ReducedSystem {
    kinetics: Kinetics,
    gain: GainMatrix,
    sender_gain: Mat<f64>,
    pub state: Vec<f64>,
    pub time: f64,
    method: Method,
    stepper: Stepper,
}

enum Stepper {
    Adaptive(Dopri5),
    Fixed(Rk4Work),
}

impl ReducedSystem {
    pub fn new(spec: &SystemSpec, settings: &ReducedSettings) -> Result<Self> {
        validate_with(spec, settings.validation).into_result()?;
        let green = assemble_green(&spec.domain, &spec.cells)?;
        let gain = assemble_gain(&green, &spec.signal, spec.common_volume()?)?;
        Ok(Self::from_gain(spec, gain, settings.method))
    }

    /// Builds the system around an already assembled gain matrix.
    pub fn from_gain(spec: &SystemSpec, gain: GainMatrix, method: Method) -> Self {
        let kinds = spec.kinds();
        let mut offsets = Vec::with_capacity(kinds.len());
        let mut dim = 0;
        for k in &kinds {
            offsets.push(dim);
            dim += k.state_dim();
        }
        let senders: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == CellKind::Sender).collect();
        let receivers: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == CellKind::Receiver).collect();
        let g = gain.entries.as_ref();
        let receiver_gain = Mat::from_fn(receivers.len(), senders.len(), |i, j| g[(receivers[i], senders[j])]);
        let sender_gain = Mat::from_fn(kinds.len(), senders.len(), |i, j| g[(i, senders[j])]);
        let sender_offsets = senders.iter().map(|&s| offsets[s]).collect();
        let stepper = match method {
            Method::Dopri5 { rtol, atol } => Stepper::Adaptive(Dopri5::new(dim, rtol, atol)),
            Method::Rk4 { .. } => Stepper::Fixed(Rk4Work::new(dim)),
        };
        Self {
            kinetics: Kinetics {
                kinds,
                offsets,
                dim,
                sender_offsets,
                receivers,
                receiver_gain,
                sender: spec.sender,
                receiver: spec.receiver,
            },
            gain,
            sender_gain,
            state: spec.stacked_initial_state(),
            time: 0.0,
            method,
            stepper,
        }
    }

    pub fn gain(&self) -> &GainMatrix {
        &self.gain
    }

    pub fn kinds(&self) -> &[CellKind] {
        &self.kinetics.kinds
    }

    /// `Y`, one entry per cell.
    pub fn outputs(&self) -> Vec<f64> {
        let k = &self.kinetics;
        k.kinds
            .iter()
            .zip(&k.offsets)
            .map(|(&kind, &o)| output_map(kind, &self.state[o..o + kind.state_dim()]).unwrap_or(0.0))
            .collect()
    }

    /// `U = 𝒢Y`, using only the sender columns.
    pub fn signals(&self) -> Vec<f64> {
        matvec(self.sender_gain.as_ref(), &self.kinetics.sender_outputs(&self.state))
    }

    /// Quasi-steady field at the cells, `ν = M_ν U`.
    pub fn field(&self) -> Vec<f64> {
        self.gain.field_at_cells(&self.signals())
    }

    /// Receiver rows of `U`, in receiver order.
    pub fn receiver_signals(&self) -> Vec<f64> {
        let y = self.kinetics.sender_outputs(&self.state);
        let u = matvec(self.kinetics.receiver_gain.as_ref(), &y);
        debug_assert_eq!(u.len(), self.kinetics.receivers.len());
        u
    }

    /// Advances by one integrator step of at most `dt` and returns the step
    /// actually taken (smaller when the adaptive error test rejects `dt`).
    pub fn step(&mut self, dt: f64) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let taken = match &mut self.stepper {
            Stepper::Adaptive(rk) => rk.step(&self.kinetics, self.time, &mut self.state, dt)?.0,
            Stepper::Fixed(w) => {
                rk4_step(&self.kinetics, self.time, &mut self.state, dt, w);
                dt
            }
        };
        self.time += taken;
        if self.state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration {
                t: self.time,
                reason: "non-finite state".into(),
            });
        }
        Ok(taken)
    }

    /// Integrates to `t_end`, recording `x`, `U` and `ν` every `output_dt`.
    pub fn run(&mut self, t_end: f64, output_dt: f64) -> Result<Trajectory> {
        if !(t_end > 0.0 && output_dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_end and output_dt must be positive, got {t_end}, {output_dt}"
            )));
        }
        let times: Vec<f64> = output_times(t_end, output_dt).into_iter().map(|t| t + self.time).collect();
        let mut traj = Trajectory::new(self.kinetics.kinds.clone(), true);
        let sender_gain = &self.sender_gain;
        let kin = &self.kinetics;
        let gain = &self.gain;
        integrate(kin, &mut self.state, &times, self.method, |t, x| {
            let u = matvec(sender_gain.as_ref(), &kin.sender_outputs(x));
            let nu = gain.field_at_cells(&u);
            traj.push(t, x.to_vec(), u, Some(nu));
            Ok(())
        })?;
        self.time = *times.last().unwrap_or(&self.time);
        Ok(traj)
    }
}

pub fn simulate_reduced(spec: &SystemSpec, t_end: f64, output_dt: f64, settings: &ReducedSettings) -> Result<Trajectory> {
    ReducedSystem::new(spec, settings)?.run(t_end, output_dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::paper_sec4;
    use crate::types::{CellSpec, CellState, DomainSpec, InitialField, Point};

    fn spec(cells: Vec<CellSpec>) -> SystemSpec {
        let p = paper_sec4();
        let initial = cells
            .iter()
            .map(|c| CellState {
                x: match c.kind {
                    CellKind::Sender => vec![400.0],
                    CellKind::Receiver => vec![300.0, 1.0],
                },
                u: 0.0,
            })
            .collect();
        SystemSpec {
            domain: DomainSpec::new(20.0, p.diffusivity).unwrap(),
            cells,
            signal: p.signal,
            sender: p.sender,
            receiver: p.receiver,
            initial,
            initial_field: InitialField::Zero,
        }
    }

    fn pair() -> SystemSpec {
        spec(vec![CellSpec::sender([0.0; 3], 1.5), CellSpec::receiver([15.0, 0.0, 0.0], 1.5)])
    }

    #[test]
    fn interconnect_linear_and_checked() {
        let sys = ReducedSystem::new(&pair(), &ReducedSettings::default()).unwrap();
        let g = sys.gain();
        assert_eq!(interconnect(g, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let col = interconnect(g, &[1.0, 0.0]).unwrap();
        assert_eq!(col, vec![g.entries[(0, 0)], g.entries[(1, 0)]]);
        assert!(matches!(interconnect(g, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn no_senders_means_no_signal() {
        let mut s = spec(vec![CellSpec::receiver([5.0, 0.0, 0.0], 1.5), CellSpec::receiver([-5.0, 0.0, 0.0], 1.5)]);
        s.initial[1].x = vec![1.0, 300.0];
        let traj = simulate_reduced(&s, 2000.0, 10.0, &ReducedSettings::default()).unwrap();
        assert!(traj.signals.iter().flatten().all(|&u| u == 0.0));
        let last = traj.states.last().unwrap();
        // Each receiver stays in the basin it started in.
        assert!(last[0] > last[1]);
        assert!(last[3] > last[2]);
    }

    #[test]
    fn lone_sender_reaches_fixed_point_and_tracks_gain() {
        let s = spec(vec![CellSpec::sender([0.0; 3], 1.5)]);
        let traj = simulate_reduced(&s, 2000.0, 50.0, &ReducedSettings::default()).unwrap();
        let x = traj.states.last().unwrap()[0];
        assert!((x - 500.0).abs() / 500.0 < 1e-3, "{x}");
        let g = ReducedSystem::new(&s, &ReducedSettings::default()).unwrap().gain().entries[(0, 0)];
        for (st, u) in traj.states.iter().zip(&traj.signals) {
            assert_eq!(u[0], g * st[0]);
        }
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        for method in [Method::default(), Method::Rk4 { dt: 0.1 }] {
            let settings = ReducedSettings {
                method,
                ..Default::default()
            };
            let a = simulate_reduced(&pair(), 300.0, 1.0, &settings).unwrap();
            let b = simulate_reduced(&pair(), 300.0, 1.0, &settings).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn steady_state_satisfies_exchange_balance() {
        let s = pair();
        let traj = simulate_reduced(&s, 4000.0, 100.0, &ReducedSettings::default()).unwrap();
        let k = traj.len() - 1;
        let (u, nu) = (&traj.signals[k], &traj.field_samples.as_ref().unwrap()[k]);
        let y = [traj.states[k][0], 0.0];
        let p = s.signal;
        for i in 0..2 {
            let r = p.a_u * y[i] - p.gamma_u * u[i] + p.alpha * (nu[i] - u[i]);
            assert!(r.abs() < 1e-6 * (1.0 + u[i].abs()), "cell {i}: {r}");
        }
    }

    #[test]
    fn adaptive_step_reports_taken_size() {
        let mut sys = ReducedSystem::new(&pair(), &ReducedSettings::default()).unwrap();
        let taken = sys.step(1e3).unwrap();
        assert!(taken > 0.0 && taken < 1e3);
        assert_eq!(sys.time, taken);
        assert!(sys.step(-1.0).is_err());
    }

    #[test]
    fn relabeling_permutes_gain() {
        let pos: [Point; 5] = [
            [0.0, 0.0, 0.0],
            [6.0, 1.0, -2.0],
            [-4.0, 7.0, 3.0],
            [2.0, -9.0, 5.0],
            [-8.0, -3.0, -6.0],
        ];
        let kinds = [CellKind::Sender, CellKind::Sender, CellKind::Receiver, CellKind::Receiver, CellKind::Receiver];
        let build = |order: &[usize]| {
            let cells = order
                .iter()
                .map(|&i| CellSpec {
                    position: pos[i],
                    kind: kinds[i],
                    radius: 1.5,
                })
                .collect();
            ReducedSystem::new(&spec(cells), &ReducedSettings::default()).unwrap()
        };
        let perm = [1, 0, 4, 2, 3];
        let a = build(&[0, 1, 2, 3, 4]);
        let b = build(&perm);
        let y = [410.0, 230.0, 0.0, 0.0, 0.0];
        let py: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let u = interconnect(a.gain(), &y).unwrap();
        let pu = interconnect(b.gain(), &py).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!((pu[k] - u[i]).abs() <= 1e-12 * u[i].abs());
        }
    }
}
