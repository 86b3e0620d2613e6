//! Time-scale separation, model-to-model error metrics, decay-rate fits and
//! toggle classification.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{simulate_full, FullRun, FullSettings};
use crate::io::fmt_f64;
use crate::reduced::{simulate_reduced, ReducedSettings};
use crate::types::{CellKind, SystemSpec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScales {
    pub tau_v: f64,
    pub tau_u: f64,
    pub tau_x: f64,
    pub eps_v: f64,
    pub eps_u: f64,
    /// Both ratios at most 0.1.
    pub ok: bool,
}

/// `τ_v = L²/(π²D)`, `τ_u = 1/α`, `τ_x = 1/max(γ_s, γ_r1, γ_r2)`.
pub fn time_scales(spec: &SystemSpec) -> Result<TimeScales> {
    let fastest = spec.sender.gamma_s.max(spec.receiver.gamma_r1).max(spec.receiver.gamma_r2);
    if !(fastest > 0.0) {
        return Err(Error::Analysis("intracellular degradation rates are all zero".into()));
    }
    if !(spec.signal.alpha > 0.0) {
        return Err(Error::Analysis("membrane exchange rate must be positive".into()));
    }
    let l = spec.domain.radius;
    let tau_v = l * l / (PI * PI * spec.domain.diffusivity);
    let tau_u = 1.0 / spec.signal.alpha;
    let tau_x = 1.0 / fastest;
    let (eps_v, eps_u) = (tau_v / tau_x, tau_u / tau_x);
    Ok(TimeScales {
        tau_v,
        tau_u,
        tau_x,
        eps_v,
        eps_u,
        ok: eps_v <= 0.1 && eps_u <= 0.1,
    })
}

/// One intracellular species of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Species {
    pub cell: usize,
    pub index: usize,
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let (first, last) = (*times.first()?, *times.last()?);
    if t < first || t > last {
        return None;
    }
    let k = times.partition_point(|&s| s < t);
    if times[k] == t || k == 0 {
        return Some(values[k]);
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    Some(values[k - 1] * (1.0 - w) + values[k] * w)
}

/// Max over time of `|a - b|` per selected species, on `a`'s time grid
/// (restricted to the span of `b`, which is linearly interpolated).
pub fn max_abs_error(a: &Trajectory, b: &Trajectory, species: &[Species]) -> Result<Vec<f64>> {
    for s in species {
        for t in [a, b] {
            let ok = t.kinds.get(s.cell).is_some_and(|k| s.index < k.state_dim());
            if !ok {
                return Err(Error::Analysis(format!("no species {} on cell {}", s.index, s.cell)));
            }
        }
    }
    let overlap: Vec<usize> = (0..a.len())
        .filter(|&k| {
            let t = a.times[k];
            b.times.first().is_some_and(|&f| t >= f) && b.times.last().is_some_and(|&l| t <= l)
        })
        .collect();
    if overlap.is_empty() {
        return Err(Error::Analysis("trajectories have disjoint time ranges".into()));
    }
    Ok(species
        .iter()
        .map(|s| {
            let va = a.species(s.cell, s.index);
            let vb = b.species(s.cell, s.index);
            overlap
                .iter()
                .map(|&k| {
                    let other = interpolate(&b.times, &vb, a.times[k]).expect("inside overlap");
                    (va[k] - other).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitWindow {
    /// The trailing fraction of the series' time span.
    LastFraction { fraction: f64 },
    Range { start: f64, end: f64 },
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::LastFraction { fraction: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Negated least-squares slope of `ln‖w‖` against `t` (1/min).
    pub rate: f64,
    pub r_squared: f64,
    pub window: [f64; 2],
    pub samples: usize,
}

pub fn fit_decay_rate(series: &[(f64, f64)], window: FitWindow) -> Result<DecayFit> {
    let (start, end) = match window {
        FitWindow::LastFraction { fraction } => {
            let (Some(first), Some(last)) = (series.first(), series.last()) else {
                return Err(Error::Analysis("empty series".into()));
            };
            (last.0 - fraction * (last.0 - first.0), last.0)
        }
        FitWindow::Range { start, end } => (start, end),
    };
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= start && t <= end).collect();
    if pts.len() < 10 {
        return Err(Error::Analysis(format!("need at least 10 samples in the window, got {}", pts.len())));
    }
    if pts.iter().any(|&(_, w)| !(w > 0.0)) {
        return Err(Error::Analysis("norms in the fit window must be positive".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(t, w) in &pts {
        let (dx, dy) = (t - mt, w.ln() - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DecayFit {
        rate: -slope,
        r_squared,
        window: [pts[0].0, pts[pts.len() - 1].0],
        samples: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ToggleState {
    On,
    Off,
}

/// ON iff TetR exceeds LacI at `t` (linear interpolation between samples);
/// a tie counts as OFF.
pub fn classify_toggle(traj: &Trajectory, cell: usize, t: f64) -> Result<ToggleState> {
    match traj.kinds.get(cell) {
        Some(CellKind::Receiver) => {}
        Some(CellKind::Sender) => return Err(Error::Analysis(format!("cell {cell} is a sender"))),
        None => return Err(Error::Analysis(format!("no cell {cell}"))),
    }
    let at = |species| {
        interpolate(&traj.times, &traj.species(cell, species), t)
            .ok_or_else(|| Error::Analysis(format!("t = {t} is outside the trajectory")))
    };
    let (laci, tetr) = (at(0)?, at(1)?);
    Ok(if tetr > laci { ToggleState::On } else { ToggleState::Off })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub eps_u: f64,
    pub eps_v: f64,
    /// Max abs error of the receiver's LacI and TetR.
    pub errors: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub receiver: usize,
    pub rows: Vec<SweepRow>,
    /// Log–log slope of each error column against `ε_u`.
    pub slopes: [f64; 2],
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("gamma,eps_u,eps_v,err_x21,err_x22\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt_f64(r.gamma),
                fmt_f64(r.eps_u),
                fmt_f64(r.eps_v),
                fmt_f64(r.errors[0]),
                fmt_f64(r.errors[1])
            );
        }
        if self.rows.len() > 1 {
            let _ = writeln!(s, "# loglog_slope,,,{},{}", fmt_f64(self.slopes[0]), fmt_f64(self.slopes[1]));
        }
        s
    }

    /// Errors non-increasing as `ε_u` decreases, per column.
    pub fn monotone(&self) -> [bool; 2] {
        let mut rows: Vec<&SweepRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.eps_u.total_cmp(&a.eps_u));
        [0, 1].map(|c| rows.windows(2).all(|w| w[1].errors[c] < w[0].errors[c]))
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// The base spec with all intracellular degradation rates set to `gamma`.
pub fn with_degradation(base: &SystemSpec, gamma: f64) -> SystemSpec {
    let mut s = base.clone();
    s.sender.gamma_s = gamma;
    s.receiver.gamma_r1 = gamma;
    s.receiver.gamma_r2 = gamma;
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub t_end: f64,
    pub output_dt: f64,
    pub full: FullSettings,
    pub reduced: ReducedSettings,
}

/// Runs both models for each `γ` and tabulates the receiver's error.
///
/// `progress` receives each row with the reduced and full runs behind it.
pub fn epsilon_sweep(
    base: &SystemSpec,
    gammas: &[f64],
    settings: &SweepSettings,
    mut progress: impl FnMut(&SweepRow, &Trajectory, &FullRun),
) -> Result<SweepTable> {
    let receiver = base
        .cells
        .iter()
        .position(|c| c.kind == CellKind::Receiver)
        .ok_or_else(|| Error::Analysis("the sweep needs a receiver cell".into()))?;
    if gammas.len() < 2 {
        return Err(Error::Analysis("the sweep needs at least two gamma values".into()));
    }
    let species = [Species { cell: receiver, index: 0 }, Species { cell: receiver, index: 1 }];
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let spec = with_degradation(base, gamma);
        let ts = time_scales(&spec)?;
        let reduced = simulate_reduced(&spec, settings.t_end, settings.output_dt, &settings.reduced)?;
        let full = simulate_full(&spec, &settings.full, settings.t_end, settings.output_dt)?;
        let err = max_abs_error(&full.trajectory, &reduced, &species)?;
        let row = SweepRow {
            gamma,
            eps_u: ts.eps_u,
            eps_v: ts.eps_v,
            errors: [err[0], err[1]],
        };
        progress(&row, &reduced, &full);
        rows.push(row);
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps_u).collect();
    let slopes = [0, 1].map(|c| {
        let e: Vec<f64> = rows.iter().map(|r| r.errors[c]).collect();
        loglog_slope(&eps, &e)
    });
    Ok(SweepTable { receiver, rows, slopes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::paper_sec4;
    use crate::types::{CellSpec, CellState, DomainSpec, InitialField};

    fn spec(l: f64) -> SystemSpec {
        let p = paper_sec4();
        SystemSpec {
            domain: DomainSpec::new(l, p.diffusivity).unwrap(),
            cells: vec![CellSpec::sender([0.0; 3], 1.5), CellSpec::receiver([15.0, 0.0, 0.0], 1.5)],
            signal: p.signal,
            sender: p.sender,
            receiver: p.receiver,
            initial: vec![
                CellState { x: vec![400.0], u: 0.0 },
                CellState { x: vec![300.0, 1.0], u: 0.0 },
            ],
            initial_field: InitialField::Zero,
        }
    }

    fn receiver_traj(points: &[(f64, f64, f64)]) -> Trajectory {
        let mut t = Trajectory::new(vec![CellKind::Receiver], false);
        for &(time, laci, tetr) in points {
            t.push(time, vec![laci, tetr], vec![0.0], None);
        }
        t
    }

    #[test]
    fn paper_time_scales() {
        let ts = time_scales(&spec(20.0)).unwrap();
        assert!((ts.eps_u - 0.01).abs() < 1e-15);
        assert!((ts.eps_v / 2.2e-5 - 1.0).abs() < 0.15, "{}", ts.eps_v);
        assert!(ts.ok);
        let ts = time_scales(&spec(300.0)).unwrap();
        assert!((ts.eps_v / 5.0e-3 - 1.0).abs() < 0.15, "{}", ts.eps_v);
        let mut s = spec(20.0);
        s.signal.alpha *= 10.0;
        assert!((time_scales(&s).unwrap().eps_u - 0.001).abs() < 1e-15);
        let s = with_degradation(&spec(20.0), 0.0);
        assert!(time_scales(&s).is_err());
    }

    #[test]
    fn diffusivity_scaling_is_exact() {
        let a = time_scales(&spec(20.0)).unwrap();
        let mut s = spec(20.0);
        s.domain.diffusivity *= 4.0;
        let b = time_scales(&s).unwrap();
        assert_eq!(b.tau_v, a.tau_v / 4.0);
        assert_eq!(b.eps_v, a.eps_v / 4.0);
    }

    #[test]
    fn error_metric_cases() {
        let a = receiver_traj(&[(0.0, 1.0, 2.0), (1.0, 3.0, 4.0), (2.0, 5.0, 6.0)]);
        let sel = [Species { cell: 0, index: 0 }, Species { cell: 0, index: 1 }];
        assert_eq!(max_abs_error(&a, &a, &sel).unwrap(), vec![0.0, 0.0]);
        let b = receiver_traj(&[(0.0, 1.5, 2.0), (2.0, 5.5, 6.0)]);
        // b is linear in t, so a's midpoint compares with 3.5.
        assert_eq!(max_abs_error(&a, &b, &sel).unwrap(), vec![0.5, 0.0]);
        let c = receiver_traj(&[(5.0, 0.0, 0.0), (6.0, 0.0, 0.0)]);
        assert!(max_abs_error(&a, &c, &sel).is_err());
        assert!(max_abs_error(&a, &a, &[Species { cell: 0, index: 2 }]).is_err());
    }

    #[test]
    fn decay_fits() {
        let exact: Vec<(f64, f64)> = (0..100).map(|k| (k as f64 * 0.01, 5.0 * (-3.0 * k as f64 * 0.01).exp())).collect();
        let fit = fit_decay_rate(&exact, FitWindow::default()).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-6);
        assert!(fit.r_squared > 1.0 - 1e-12);
        let scaled: Vec<(f64, f64)> = exact.iter().map(|&(t, w)| (t, 1e4 * w)).collect();
        assert!((fit_decay_rate(&scaled, FitWindow::default()).unwrap().rate - fit.rate).abs() < 1e-9);

        let two: Vec<(f64, f64)> = (0..200)
            .map(|k| {
                let t = k as f64 * 0.05;
                (t, (-1.0 * t).exp() + 3.0 * (-8.0 * t).exp())
            })
            .collect();
        let late = fit_decay_rate(&two, FitWindow::Range { start: 5.0, end: 10.0 }).unwrap();
        assert!((late.rate - 1.0).abs() < 1e-6);

        assert!(fit_decay_rate(&exact[..5], FitWindow::default()).is_err());
        let mut bad = exact.clone();
        bad[90].1 = 0.0;
        assert!(fit_decay_rate(&bad, FitWindow::default()).is_err());
    }

    #[test]
    fn toggle_classification() {
        let t = receiver_traj(&[(0.0, 300.0, 1.0), (1.0, 1.0, 300.0), (2.0, 7.0, 7.0)]);
        assert_eq!(classify_toggle(&t, 0, 0.0).unwrap(), ToggleState::Off);
        assert_eq!(classify_toggle(&t, 0, 1.0).unwrap(), ToggleState::On);
        assert_eq!(classify_toggle(&t, 0, 2.0).unwrap(), ToggleState::Off);
        assert!(classify_toggle(&t, 0, 3.0).is_err());
        let scaled = receiver_traj(&[(0.0, 3000.0, 10.0), (1.0, 10.0, 3000.0)]);
        assert_eq!(classify_toggle(&scaled, 0, 1.0).unwrap(), ToggleState::On);
        let mut s = Trajectory::new(vec![CellKind::Sender], false);
        s.push(0.0, vec![1.0], vec![0.0], None);
        assert!(classify_toggle(&s, 0, 0.0).is_err());
    }

    #[test]
    fn sweep_csv_layout() {
        let table = SweepTable {
            receiver: 1,
            rows: vec![
                SweepRow { gamma: 0.1, eps_u: 0.1, eps_v: 2e-4, errors: [0.3, 0.01] },
                SweepRow { gamma: 0.01, eps_u: 0.01, eps_v: 2e-5, errors: [0.03, 0.001] },
            ],
            slopes: [1.0, 1.0],
        };
        let csv = table.to_csv();
        assert!(csv.starts_with("gamma,eps_u,eps_v,err_x21,err_x22\n0.1,0.1,0.0002,0.3,0.01\n"));
        assert_eq!(table.monotone(), [true, true]);
        assert!((loglog_slope(&[0.1, 0.01], &[0.3, 0.03]) - 1.0).abs() < 1e-12);
    }
}
