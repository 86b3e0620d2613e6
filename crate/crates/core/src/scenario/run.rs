//! Scenario execution: staging, output layout and the run manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

use super::config::{sha256_hex, AnalysisRequest, ModelChoice, ScenarioConfig, TrajectoryScope};
use crate::analysis::{
    classify_toggle, epsilon_sweep, fit_decay_rate, max_abs_error, time_scales, Species, SweepRow, SweepSettings,
    SweepTable,
};
use crate::error::Error;
use crate::field::{FullModel, FullRun, FullSettings};
use crate::greens::GainMatrix;
use crate::io::{fmt_f64, plot_data, trajectory_csv_cells, write_atomic};
use crate::reduced::ReducedSystem;
use crate::types::{validate_with, CellKind, SystemSpec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Parse,
    Validate,
    Solve,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Parse => 2,
            Stage::Validate => 3,
            Stage::Solve => 4,
        }
    }

    /// Stage an error raised while executing belongs to.
    fn of(err: &Error) -> Stage {
        match err {
            Error::InvalidParameter(_)
            | Error::InvalidSystem(_)
            | Error::Config(_)
            | Error::OutsideDomain { .. }
            | Error::Coincident(_)
            | Error::Grid(_)
            | Error::UnstableStep { .. } => Stage::Validate,
            _ => Stage::Solve,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Parse => "config parse",
            Stage::Validate => "validation",
            Stage::Solve => "solver",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} error: {source}")]
pub struct ScenarioError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl ScenarioError {
    pub fn new(stage: Stage, source: Error) -> Self {
        Self { stage, source }
    }

    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

fn at(stage: Stage) -> impl FnOnce(Error) -> ScenarioError {
    move |source| ScenarioError { stage, source }
}

fn classify(err: Error) -> ScenarioError {
    ScenarioError::new(Stage::of(&err), err)
}

/// Command-line overrides applied before hashing.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<ModelChoice>,
}

/// A parsed, expanded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub spec: SystemSpec,
}

impl Scenario {
    pub fn load(path: &Path, overrides: Overrides) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::new(Stage::Parse, e.into()))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: Overrides) -> Result<Self, ScenarioError> {
        let mut config = ScenarioConfig::from_json(text).map_err(at(Stage::Parse))?;
        if let Some(seed) = overrides.seed {
            config.rng_seed = Some(seed);
        }
        if let Some(model) = overrides.model {
            config.model = model;
        }
        Self::from_config(config)
    }

    pub fn from_config(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        let invalid = |m: String| ScenarioError::new(Stage::Validate, Error::Config(m));
        let name_ok = !config.name.is_empty()
            && config.name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && !config.name.starts_with('.');
        if !name_ok {
            return Err(invalid(format!(
                "name {:?} must be non-empty and use only letters, digits, '-', '_' or '.'",
                config.name
            )));
        }
        if !(config.t_end > 0.0 && config.output_dt > 0.0 && config.output_dt <= config.t_end) {
            return Err(invalid(format!(
                "need 0 < output_dt <= t_end, got output_dt = {}, t_end = {}",
                config.output_dt, config.t_end
            )));
        }
        let spec = config.build_spec().map_err(at(Stage::Validate))?;
        if config.model.reduced() {
            validate_with(&spec, config.reduced.validation).into_result().map_err(at(Stage::Validate))?;
        }
        if config.model.full() {
            validate_with(&spec, config.full.validation).into_result().map_err(at(Stage::Validate))?;
        }
        Ok(Self { config, spec })
    }

    pub fn hash(&self) -> String {
        self.config.hash()
    }

    pub fn output_dir_name(&self) -> String {
        self.config.output_dir_name()
    }

    /// Cells whose trajectories are written.
    pub fn recorded_cells(&self) -> Vec<usize> {
        let kinds = self.spec.kinds();
        match self.config.output.trajectory {
            TrajectoryScope::All => (0..kinds.len()).collect(),
            TrajectoryScope::Receivers => (0..kinds.len()).filter(|&i| kinds[i] == CellKind::Receiver).collect(),
        }
    }

    fn receivers(&self) -> Vec<usize> {
        let kinds = self.spec.kinds();
        (0..kinds.len()).filter(|&i| kinds[i] == CellKind::Receiver).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Gain and Green's matrix export only.
    Gain,
    /// Model trajectories only.
    Simulate,
    /// The `error_table` analyses only.
    Sweep,
    /// Every configured analysis, without trajectory files.
    Analyze,
    /// Trajectories plus every configured analysis.
    Run,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Gain => "gain",
            Task::Simulate => "simulate",
            Task::Sweep => "sweep",
            Task::Analyze => "analyze",
            Task::Run => "run",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    /// Output files in write order, with their SHA-256.
    pub files: Vec<(String, String)>,
    pub manifest: Value,
}

/// Executes `task` and moves the results into `out_root/<name>-<hash>`.
///
/// Everything is written to a staging directory first; on failure it is
/// removed and nothing appears under the final name.
pub fn execute(
    scenario: &Scenario,
    task: Task,
    out_root: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<Outcome, ScenarioError> {
    let started = Instant::now();
    let name = scenario.output_dir_name();
    let final_dir = out_root.join(&name);
    let staging = out_root.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| ScenarioError::new(Stage::Solve, e.into()))?;
    }
    fs::create_dir_all(&staging).map_err(|e| ScenarioError::new(Stage::Solve, e.into()))?;

    let mut runner = Runner {
        scenario,
        dir: staging.clone(),
        files: Vec::new(),
        log,
        reduced: None,
        full: None,
        summary: Map::new(),
    };
    let result = runner.perform(task).and_then(|()| {
        let manifest = runner.manifest(task, started.elapsed().as_secs_f64());
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| classify(e.into()))?;
        write_atomic(&runner.dir.join("manifest.json"), &bytes).map_err(classify)?;
        Ok(manifest)
    });
    let manifest = match result {
        Ok(m) => m,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    let files = std::mem::take(&mut runner.files);
    let publish = || -> std::io::Result<()> {
        if final_dir.exists() {
            fs::remove_dir_all(&final_dir)?;
        }
        fs::rename(&staging, &final_dir)
    };
    if let Err(e) = publish() {
        let _ = fs::remove_dir_all(&staging);
        return Err(ScenarioError::new(Stage::Solve, e.into()));
    }
    Ok(Outcome {
        dir: final_dir,
        files,
        manifest,
    })
}

struct Runner<'a> {
    scenario: &'a Scenario,
    dir: PathBuf,
    files: Vec<(String, String)>,
    log: &'a mut dyn FnMut(&str),
    reduced: Option<(Trajectory, GainMatrix)>,
    full: Option<FullRun>,
    summary: Map<String, Value>,
}

impl Runner<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), ScenarioError> {
        write_atomic(&self.dir.join(name), bytes).map_err(classify)?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &Value) -> Result<(), ScenarioError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| classify(e.into()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn config(&self) -> &ScenarioConfig {
        &self.scenario.config
    }

    fn perform(&mut self, task: Task) -> Result<(), ScenarioError> {
        let scales = time_scales(&self.scenario.spec).ok();
        if let Some(ts) = scales {
            if !ts.ok {
                (self.log)(&format!(
                    "warning: weak time-scale separation (eps_u = {:e}, eps_v = {:e}); the reduced model may be inaccurate",
                    ts.eps_u, ts.eps_v
                ));
            }
        }
        self.summary.insert("time_scales".into(), json!(scales));
        self.write_json("time_scales.json", &json!(scales))?;

        let analyses = self.config().analyses.clone();
        match task {
            Task::Gain => self.gain_export()?,
            Task::Simulate => self.trajectories()?,
            Task::Sweep => {
                let tables: Vec<&AnalysisRequest> = analyses
                    .iter()
                    .filter(|a| matches!(a, AnalysisRequest::ErrorTable { .. }))
                    .collect();
                if tables.is_empty() {
                    return Err(ScenarioError::new(
                        Stage::Validate,
                        Error::Config("the config requests no error_table analysis".into()),
                    ));
                }
                for a in tables {
                    self.analysis(a)?;
                }
            }
            Task::Analyze => {
                for a in &analyses {
                    self.analysis(a)?;
                }
            }
            Task::Run => {
                self.trajectories()?;
                for a in &analyses {
                    self.analysis(a)?;
                }
            }
        }
        Ok(())
    }

    fn reduced_run(&mut self) -> Result<&(Trajectory, GainMatrix), ScenarioError> {
        if self.reduced.is_none() {
            let cfg = &self.scenario.config;
            (self.log)(&format!("reduced model: {} cells, t_end = {}", self.scenario.spec.n_cells(), cfg.t_end));
            let mut sys = ReducedSystem::new(&self.scenario.spec, &cfg.reduced).map_err(classify)?;
            let traj = sys.run(cfg.t_end, cfg.output_dt).map_err(classify)?;
            let gain = sys.gain().clone();
            self.summary.insert("gain_condition".into(), json!(gain.condition));
            self.reduced = Some((traj, gain));
        }
        Ok(self.reduced.as_ref().expect("just filled"))
    }

    fn full_run(&mut self) -> Result<&FullRun, ScenarioError> {
        if self.full.is_none() {
            let cfg = &self.scenario.config;
            (self.log)(&format!(
                "full model: h = {}, dt = {}, t_end = {}",
                cfg.full.h, cfg.full.dt, cfg.t_end
            ));
            let mut model = FullModel::new(&self.scenario.spec, &cfg.full).map_err(classify)?;
            let run = model
                .run(cfg.t_end, cfg.output_dt, &cfg.full.snapshot_times)
                .map_err(classify)?;
            self.summary.insert(
                "full_run".into(),
                json!({
                    "grid_unknowns": model.grid.len(),
                    "steps": run.steps,
                    "cg_iterations": run.cg_iterations,
                    "mass_audit": run.audit,
                }),
            );
            self.full = Some(run);
        }
        Ok(self.full.as_ref().expect("just filled"))
    }

    fn trajectories(&mut self) -> Result<(), ScenarioError> {
        let cells = self.scenario.recorded_cells();
        let mut plotted = self.scenario.receivers();
        if self.scenario.spec.n_cells() <= 16 {
            plotted = (0..self.scenario.spec.n_cells()).collect();
        }
        let model = self.config().model;
        if model.reduced() {
            let traj = self.reduced_run()?.0.clone();
            self.write("trajectory_reduced.csv", trajectory_csv_cells(&traj, &cells).as_bytes())?;
            for &c in &plotted {
                self.write(&format!("plot_reduced_cell{c}.dat"), plot_data(&traj, c).as_bytes())?;
            }
        }
        if model.full() {
            let run = self.full_run()?.clone();
            self.write("trajectory_full.csv", trajectory_csv_cells(&run.trajectory, &cells).as_bytes())?;
            for &c in &plotted {
                self.write(&format!("plot_full_cell{c}.dat"), plot_data(&run.trajectory, c).as_bytes())?;
            }
            for snap in &run.snapshots {
                let stem = format!("field_t{}", fmt_f64(snap.time));
                self.write(&format!("{stem}.csv"), snap.to_csv().as_bytes())?;
                self.write(&format!("{stem}.dnsf"), &snap.to_bytes())?;
            }
        }
        Ok(())
    }

    fn analysis(&mut self, request: &AnalysisRequest) -> Result<(), ScenarioError> {
        match request {
            AnalysisRequest::GainExport => self.gain_export(),
            AnalysisRequest::ToggleReport => self.toggle_report(),
            AnalysisRequest::ErrorTable { gammas } if gammas.is_empty() => self.error_table_single(),
            AnalysisRequest::ErrorTable { gammas } => self.error_table_sweep(gammas),
            AnalysisRequest::DecayFit {
                frozen_signals,
                dt,
                steps,
                every,
                window,
            } => self.decay_fit(frozen_signals, *dt, *steps, *every, *window),
        }
    }

    fn gain_export(&mut self) -> Result<(), ScenarioError> {
        let gain = self.reduced_run_gain_only()?;
        self.write("gain.csv", gain.to_csv().as_bytes())?;
        self.write("green.csv", gain.source_green.to_csv().as_bytes())?;
        Ok(())
    }

    /// The gain matrix, reusing a reduced run when there is one.
    fn reduced_run_gain_only(&mut self) -> Result<GainMatrix, ScenarioError> {
        if let Some((_, g)) = &self.reduced {
            return Ok(g.clone());
        }
        let sys = ReducedSystem::new(&self.scenario.spec, &self.scenario.config.reduced).map_err(classify)?;
        self.summary.insert("gain_condition".into(), json!(sys.gain().condition));
        Ok(sys.gain().clone())
    }

    fn toggle_report(&mut self) -> Result<(), ScenarioError> {
        let t = self.config().t_end;
        let receivers = self.scenario.receivers();
        let mut report = Map::new();
        report.insert("time".into(), json!(t));
        let mut models: Vec<(&str, Trajectory)> = Vec::new();
        let model = self.config().model;
        if model.reduced() {
            models.push(("reduced", self.reduced_run()?.0.clone()));
        }
        if model.full() {
            models.push(("full", self.full_run()?.trajectory.clone()));
        }
        for (label, traj) in &models {
            let mut rows = Vec::new();
            for &c in &receivers {
                let state = classify_toggle(traj, c, t).map_err(classify)?;
                let last = traj.cell_state(traj.len() - 1, c);
                (self.log)(&format!("{label}: receiver {c} is {}", if state == crate::analysis::ToggleState::On { "ON" } else { "OFF" }));
                rows.push(json!({ "cell": c, "state": state, "LacI": last[0], "TetR": last[1] }));
            }
            report.insert((*label).into(), Value::Array(rows));
        }
        self.write_json("toggle_report.json", &Value::Object(report))
    }

    fn error_table_single(&mut self) -> Result<(), ScenarioError> {
        let Some(&receiver) = self.scenario.receivers().first() else {
            return Err(ScenarioError::new(Stage::Validate, Error::Analysis("error_table needs a receiver".into())));
        };
        let ts = time_scales(&self.scenario.spec).map_err(classify)?;
        let reduced = self.reduced_run()?.0.clone();
        let full = self.full_run()?.trajectory.clone();
        let species = [Species { cell: receiver, index: 0 }, Species { cell: receiver, index: 1 }];
        let err = max_abs_error(&full, &reduced, &species).map_err(classify)?;
        let table = SweepTable {
            receiver,
            rows: vec![SweepRow {
                gamma: 1.0 / ts.tau_x,
                eps_u: ts.eps_u,
                eps_v: ts.eps_v,
                errors: [err[0], err[1]],
            }],
            slopes: [f64::NAN; 2],
        };
        (self.log)(&format!("max abs error (LacI, TetR): {:e}, {:e}", err[0], err[1]));
        self.write("error_table.csv", table.to_csv().as_bytes())
    }

    fn error_table_sweep(&mut self, gammas: &[f64]) -> Result<(), ScenarioError> {
        let cfg = self.config().clone();
        let settings = SweepSettings {
            t_end: cfg.t_end,
            output_dt: cfg.output_dt,
            full: cfg.full.clone(),
            reduced: cfg.reduced.clone(),
        };
        let cells = self.scenario.recorded_cells();
        let mut pending: Vec<(String, String)> = Vec::new();
        let log = &mut self.log;
        let table = epsilon_sweep(&self.scenario.spec, gammas, &settings, |row, reduced, full| {
            log(&format!(
                "gamma = {}: eps_u = {:e}, errors = {:e}, {:e}",
                row.gamma, row.eps_u, row.errors[0], row.errors[1]
            ));
            let g = fmt_f64(row.gamma);
            pending.push((format!("trajectory_gamma{g}_reduced.csv"), trajectory_csv_cells(reduced, &cells)));
            pending.push((format!("trajectory_gamma{g}_full.csv"), trajectory_csv_cells(&full.trajectory, &cells)));
        })
        .map_err(classify)?;
        for (name, body) in pending {
            self.write(&name, body.as_bytes())?;
        }
        let monotone = table.monotone();
        (self.log)(&format!(
            "log-log slopes {:.3}, {:.3}; monotone {:?}",
            table.slopes[0], table.slopes[1], monotone
        ));
        self.write("error_table.csv", table.to_csv().as_bytes())?;
        self.write_json(
            "error_table.json",
            &json!({ "receiver": table.receiver, "rows": table.rows, "slopes": table.slopes, "monotone": monotone }),
        )
    }

    fn decay_fit(
        &mut self,
        frozen: &[f64],
        dt: f64,
        steps: usize,
        every: usize,
        window: crate::analysis::FitWindow,
    ) -> Result<(), ScenarioError> {
        let spec = &self.scenario.spec;
        if frozen.len() != spec.n_cells() {
            return Err(ScenarioError::new(
                Stage::Validate,
                Error::Dimension {
                    expected: spec.n_cells(),
                    got: frozen.len(),
                },
            ));
        }
        let settings = FullSettings {
            dt,
            audit: false,
            ..self.config().full.clone()
        };
        let mut model = FullModel::new(spec, &settings).map_err(classify)?;
        model.u.copy_from_slice(frozen);
        let series = model.relax_frozen(steps, every).map_err(classify)?;
        let fit = fit_decay_rate(&series, window).map_err(classify)?;
        let l = spec.domain.radius;
        let lambda1 = std::f64::consts::PI.powi(2) * spec.domain.diffusivity / (l * l);
        (self.log)(&format!(
            "decay rate {:.3}/min (first Dirichlet rate {:.3}/min, ratio {:.4})",
            fit.rate,
            lambda1,
            fit.rate / lambda1
        ));
        let mut csv = String::from("time,distance\n");
        for (t, w) in &series {
            csv.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*w)));
        }
        self.write("decay_series.csv", csv.as_bytes())?;
        self.write_json(
            "decay_fit.json",
            &json!({
                "rate": fit.rate,
                "r_squared": fit.r_squared,
                "window": fit.window,
                "samples": fit.samples,
                "dirichlet_rate": lambda1,
                "ratio": fit.rate / lambda1,
                "dt": dt,
            }),
        )
    }

    fn manifest(&self, task: Task, wall_time: f64) -> Value {
        let cfg = self.config();
        let spec_bytes = serde_json::to_vec(&self.scenario.spec).expect("spec serializes");
        let outputs: Map<String, Value> = self.files.iter().map(|(n, h)| (n.clone(), json!(h))).collect();
        let mut m = json!({
            "name": cfg.name,
            "description": cfg.description,
            "command": task.as_str(),
            "schema": cfg.schema,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.scenario.hash(),
            "spec_hash": sha256_hex(&spec_bytes),
            "config": cfg,
            "cells": {
                "senders": self.scenario.spec.n_senders(),
                "receivers": self.scenario.spec.n_cells() - self.scenario.spec.n_senders(),
            },
            "wall_time_s": wall_time,
            "outputs": outputs,
        });
        if let Value::Object(obj) = &mut m {
            for (k, v) in &self.summary {
                obj.insert(k.clone(), v.clone());
            }
        }
        m
    }
}
