//! Explicit Runge–Kutta integrators for the intracellular networks.
//!
//! `Dopri5` is the Dormand–Prince 5(4) embedded pair with a standard
//! proportional step-size controller; `rk4_step` is the classical fixed-step
//! method used when bit-reproducible sampling on a fixed grid is wanted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Dopri5 { rtol: f64, atol: f64 },
    Rk4 { dt: f64 },
}

impl Default for Method {
    fn default() -> Self {
        Method::Dopri5 {
            rtol: 1e-6,
            atol: 1e-6,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights minus the embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
}

impl Dopri5 {
    pub fn new(dim: usize, rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
        }
    }

    /// Attempts `h`, shrinking it until the error test passes. Returns the
    /// accepted step and a proposal for the next one.
    pub fn step<S: OdeSystem>(&mut self, sys: &S, t: f64, y: &mut [f64], mut h: f64) -> Result<(f64, f64)> {
        let n = y.len();
        let h_min = 1e-14 * t.abs().max(1.0);
        loop {
            if h < h_min {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size underflow ({h:e})"),
                });
            }
            sys.rhs(t, y, &mut self.k[0]);
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, a) in A[s][..s].iter().enumerate() {
                        acc += h * a * self.k[j][i];
                    }
                    self.stage[i] = acc;
                }
                let (_, rest) = self.k.split_at_mut(s);
                sys.rhs(t + C[s] * h, &self.stage, &mut rest[0]);
            }
            // Stage 7 is evaluated at the 5th-order solution.
            self.y_new.copy_from_slice(&self.stage);

            let mut err = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (s, w) in E.iter().enumerate() {
                    e += w * self.k[s][i];
                }
                let sc = self.atol + self.rtol * y[i].abs().max(self.y_new[i].abs());
                err += (h * e / sc).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() || self.y_new.iter().any(|v| !v.is_finite()) {
                h *= 0.25;
                continue;
            }
            if err <= 1.0 {
                y.copy_from_slice(&self.y_new);
                let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
                return Ok((h, h * fac));
            }
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
}

pub struct Rk4Work {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4Work {
    pub fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
        }
    }
}

pub fn rk4_step<S: OdeSystem>(sys: &S, t: f64, y: &mut [f64], dt: f64, w: &mut Rk4Work) {
    let n = y.len();
    sys.rhs(t, y, &mut w.k[0]);
    for (s, c) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
        for i in 0..n {
            w.stage[i] = y[i] + c * dt * w.k[s - 1][i];
        }
        let (_, rest) = w.k.split_at_mut(s);
        sys.rhs(t + c * dt, &w.stage, &mut rest[0]);
    }
    for i in 0..n {
        y[i] += dt / 6.0 * (w.k[0][i] + 2.0 * w.k[1][i] + 2.0 * w.k[2][i] + w.k[3][i]);
    }
}

/// Output grid `0, Δ, 2Δ, …` up to and including `t_end`.
pub fn output_times(t_end: f64, output_dt: f64) -> Vec<f64> {
    let n = (t_end / output_dt * (1.0 + 1e-12)).floor() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|k| k as f64 * output_dt).collect();
    if t_end - ts[n] > 1e-9 * output_dt {
        ts.push(t_end);
    }
    ts
}

/// Integrates from `times[0]` through every entry of `times`, calling
/// `observe` at each one (including the first).
pub fn integrate<S, F>(sys: &S, y: &mut [f64], times: &[f64], method: Method, mut observe: F) -> Result<()>
where
    S: OdeSystem,
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    let Some(&t0) = times.first() else {
        return Ok(());
    };
    observe(t0, y)?;
    let mut t = t0;
    match method {
        Method::Dopri5 { rtol, atol } => {
            let mut rk = Dopri5::new(y.len(), rtol, atol);
            let mut h = initial_step(sys, t, y, rtol, atol);
            for &target in &times[1..] {
                while t < target {
                    let remaining = target - t;
                    let last = h >= remaining * (1.0 - 1e-12);
                    let try_h = if last { remaining } else { h };
                    let (taken, next) = rk.step(sys, t, y, try_h)?;
                    t = if last && taken == try_h { target } else { t + taken };
                    if !(last && taken == try_h) || next < h {
                        h = next;
                    }
                }
                check_finite(t, y)?;
                observe(target, y)?;
            }
        }
        Method::Rk4 { dt } => {
            let mut w = Rk4Work::new(y.len());
            let mut step = 0u64;
            for &target in &times[1..] {
                // Fixed grid t0 + k·dt; a partial step lands exactly on an output
                // time that is not a multiple of dt.
                while t < target - 1e-12 * dt {
                    let grid = t0 + (step + 1) as f64 * dt;
                    let next = grid.min(target);
                    rk4_step(sys, t, y, next - t, &mut w);
                    if next == grid {
                        step += 1;
                    }
                    t = next;
                }
                check_finite(t, y)?;
                observe(target, y)?;
            }
        }
    }
    Ok(())
}

fn check_finite(t: f64, y: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integration {
            t,
            reason: "non-finite state".into(),
        })
    }
}

/// Hairer–Wanner starting step heuristic.
fn initial_step<S: OdeSystem>(sys: &S, t: f64, y: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = y.len().max(1);
    let mut f0 = vec![0.0; y.len()];
    sys.rhs(t, y, &mut f0);
    let sc: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let (d0, d1) = (rms(y), rms(&f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(&f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    sys.rhs(t + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
    }

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn dopri_matches_exponential() {
        let mut y = [2.0];
        let times = output_times(10.0, 0.5);
        let mut seen = Vec::new();
        integrate(&Decay(0.7), &mut y, &times, Method::Dopri5 { rtol: 1e-10, atol: 1e-12 }, |t, y| {
            seen.push((t, y[0]));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 21);
        for (t, v) in seen {
            assert!((v - 2.0 * (-0.7 * t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn dopri_oscillator_long_run() {
        let mut y = [1.0, 0.0];
        let times = [0.0, 20.0];
        integrate(&Oscillator, &mut y, &times, Method::Dopri5 { rtol: 1e-9, atol: 1e-9 }, |_, _| Ok(())).unwrap();
        assert!((y[0] - 20f64.cos()).abs() < 1e-6);
        assert!((y[1] + 20f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |dt: f64| {
            let mut y = [1.0];
            integrate(&Decay(1.0), &mut y, &[0.0, 2.0], Method::Rk4 { dt }, |_, _| Ok(())).unwrap();
            (y[0] - (-2.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 14.0 && ratio < 18.0, "{ratio}");
    }

    #[test]
    fn output_grid_includes_end() {
        assert_eq!(output_times(1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(output_times(1.1, 0.5), vec![0.0, 0.5, 1.0, 1.1]);
    }
}
