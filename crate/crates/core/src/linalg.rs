//! Dense factorizations used by the gain-matrix assembly.
//!
//! LU with partial pivoting comes from `faer`; this module adds the 1-norm
//! condition estimate (Hager/Higham) that decides when a system is too close
//! to singular to trust.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatRef};

use crate::error::{Error, Result};

/// Caps the worker threads used by dense factorizations; 0 or 1 means
/// sequential.
pub fn limit_threads(n: usize) {
    faer::set_global_parallelism(if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
}

/// Systems whose estimated 1-norm condition number exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

pub struct DenseLu {
    lu: PartialPivLu<f64>,
    n: usize,
    cond: f64,
}

impl DenseLu {
    pub fn new(a: MatRef<'_, f64>, what: &'static str) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "square matrix required");
        if !all_finite(a) {
            return Err(Error::Singular {
                what,
                cond: f64::INFINITY,
            });
        }
        let lu = a.partial_piv_lu();
        let mut out = Self {
            lu,
            n: a.nrows(),
            cond: 0.0,
        };
        let inv_norm = out.inverse_norm1_estimate();
        out.cond = norm1(a) * inv_norm;
        if !out.cond.is_finite() || out.cond > MAX_CONDITION {
            return Err(Error::Singular {
                what,
                cond: out.cond,
            });
        }
        Ok(out)
    }

    pub fn condition_estimate(&self) -> f64 {
        self.cond
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = rhs.to_owned();
        self.lu.solve_in_place(x.as_mut());
        x
    }

    pub fn solve_transpose(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = rhs.to_owned();
        self.lu.solve_transpose_in_place(x.as_mut());
        x
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.lu.solve_in_place(x.as_mut());
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    fn solve_transpose_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.lu.solve_transpose_in_place(x.as_mut());
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Hager's estimator for `‖A⁻¹‖₁`, with Higham's alternating-sign
    /// safeguard.
    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve_vec(&x);
            if y.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose_vec(&xi);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x.iter_mut().for_each(|v| *v = 0.0);
            x[jmax] = 1.0;
        }
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            })
            .collect();
        let y = self.solve_vec(&alt);
        let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

pub fn norm1(a: MatRef<'_, f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn all_finite(a: MatRef<'_, f64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].is_finite()))
}

pub fn matvec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}
