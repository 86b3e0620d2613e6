//! Conjugate gradients for `σI + c(-∇²_h)` on the masked grid, preconditioned
//! by one geometric multigrid V-cycle.
//!
//! Each coarser level doubles the spacing and rediscretizes the cut-cell
//! operator; coarse node `K` coincides with fine node `2K`. Transfers are
//! trilinear prolongation and its scaled adjoint, smoothing is damped Jacobi
//! (the same number of sweeps before and after, so the cycle is symmetric),
//! and the coarsest level is factorized densely.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};

use super::grid::{lattice, FieldGrid, BOUNDARY};
use crate::error::{Error, Result};

const JACOBI_WEIGHT: f64 = 6.0 / 7.0;
const SWEEPS: usize = 2;
const COARSEST_MAX: usize = 1200;

/// Sparse rows `fine i -> Σ_j w_ij coarse_j`.
struct Prolongation {
    start: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

struct Level {
    n: usize,
    /// Neighbour indices with boundary links pointing at the zero sentinel
    /// slot `n` of every level vector.
    nb: Vec<[u32; 6]>,
    diag: Vec<f64>,
    off: f64,
    /// From the next coarser level onto this one.
    prolong: Option<Prolongation>,
    r: Vec<f64>,
    z: Vec<f64>,
    tmp: Vec<f64>,
}

impl Level {
    fn new(grid: &FieldGrid, sigma: f64, c: f64) -> Self {
        let n = grid.len();
        let ih2 = 1.0 / (grid.h * grid.h);
        let nb = grid
            .neighbors
            .iter()
            .map(|row| row.map(|q| if q == BOUNDARY { n as u32 } else { q }))
            .collect();
        let diag = (0..n)
            .map(|k| sigma + c * ih2 * (grid.interior_links(k) as f64 + grid.wall[k]))
            .collect();
        Self {
            n,
            nb,
            diag,
            off: c * ih2,
            prolong: None,
            r: vec![0.0; n + 1],
            z: vec![0.0; n + 1],
            tmp: vec![0.0; n + 1],
        }
    }

    /// `y = A x` over the first `n` slots; `x[n]` must be zero.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let nb = &self.nb[i];
            let s = x[nb[0] as usize]
                + x[nb[1] as usize]
                + x[nb[2] as usize]
                + x[nb[3] as usize]
                + x[nb[4] as usize]
                + x[nb[5] as usize];
            y[i] = self.diag[i] * x[i] - self.off * s;
        }
    }

    fn smooth(&mut self, zero_start: bool) {
        let mut sweeps = SWEEPS;
        if zero_start {
            for i in 0..self.n {
                self.z[i] = JACOBI_WEIGHT * self.r[i] / self.diag[i];
            }
            sweeps -= 1;
        }
        for _ in 0..sweeps {
            let mut tmp = std::mem::take(&mut self.tmp);
            self.apply(&self.z, &mut tmp);
            for i in 0..self.n {
                self.z[i] += JACOBI_WEIGHT * (self.r[i] - tmp[i]) / self.diag[i];
            }
            self.tmp = tmp;
        }
    }

    fn dense(&self) -> Mat<f64> {
        let mut a = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            a[(i, i)] = self.diag[i];
            for &q in &self.nb[i] {
                if (q as usize) < self.n {
                    a[(i, q as usize)] = -self.off;
                }
            }
        }
        a
    }
}

fn prolongation(fine: &FieldGrid, coarse: &FieldGrid) -> Prolongation {
    let mut p = Prolongation {
        start: vec![0],
        cols: Vec::new(),
        weights: Vec::new(),
    };
    let axis = |c: i32| -> [(i32, f64); 2] {
        if c.rem_euclid(2) == 0 {
            [(c / 2, 1.0), (0, 0.0)]
        } else {
            [((c - 1) / 2, 0.5), ((c + 1) / 2, 0.5)]
        }
    };
    for c in &fine.coords {
        let (ax, ay, az) = (axis(c[0]), axis(c[1]), axis(c[2]));
        for (i, wi) in ax {
            for (j, wj) in ay {
                for (k, wk) in az {
                    let w = wi * wj * wk;
                    if w == 0.0 {
                        continue;
                    }
                    if let Some(q) = coarse.unknown([i, j, k]) {
                        p.cols.push(q as u32);
                        p.weights.push(w);
                    }
                }
            }
        }
        p.start.push(p.cols.len());
    }
    p
}

pub struct Multigrid {
    levels: Vec<Level>,
    coarse: Llt<f64>,
    coarse_rhs: Mat<f64>,
}

impl Multigrid {
    /// Hierarchy for `σI + c(-∇²_h)` on `grid`.
    pub fn new(grid: &FieldGrid, sigma: f64, c: f64) -> Result<Self> {
        let mut levels = vec![Level::new(grid, sigma, c)];
        let mut current = grid.clone();
        while current.len() > COARSEST_MAX {
            let next = lattice(current.radius, 2.0 * current.h);
            if next.is_empty() || next.len() >= current.len() {
                break;
            }
            levels.last_mut().expect("level").prolong = Some(prolongation(&current, &next));
            levels.push(Level::new(&next, sigma, c));
            current = next;
        }
        let last = levels.last().expect("level");
        let coarse = last.dense().llt(Side::Lower).map_err(|_| Error::Singular {
            what: "coarsest multigrid operator",
            cond: f64::INFINITY,
        })?;
        let coarse_rhs = Mat::zeros(last.n, 1);
        Ok(Self {
            levels,
            coarse,
            coarse_rhs,
        })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    fn vcycle(&mut self, l: usize) {
        if l + 1 == self.levels.len() {
            let lv = &mut self.levels[l];
            for i in 0..lv.n {
                self.coarse_rhs[(i, 0)] = lv.r[i];
            }
            self.coarse.solve_in_place(self.coarse_rhs.as_mut());
            for i in 0..lv.n {
                lv.z[i] = self.coarse_rhs[(i, 0)];
            }
            return;
        }
        let (head, tail) = self.levels.split_at_mut(l + 1);
        let (fine, coarse) = (&mut head[l], &mut tail[0]);
        fine.smooth(true);

        let mut res = std::mem::take(&mut fine.tmp);
        fine.apply(&fine.z, &mut res);
        coarse.r.iter_mut().for_each(|v| *v = 0.0);
        let p = fine.prolong.as_ref().expect("prolongation");
        for i in 0..fine.n {
            let ri = (fine.r[i] - res[i]) / 8.0;
            for e in p.start[i]..p.start[i + 1] {
                coarse.r[p.cols[e] as usize] += p.weights[e] * ri;
            }
        }
        fine.tmp = res;

        self.vcycle(l + 1);

        let (head, tail) = self.levels.split_at_mut(l + 1);
        let (fine, coarse) = (&mut head[l], &tail[0]);
        let p = fine.prolong.as_ref().expect("prolongation");
        for i in 0..fine.n {
            let mut acc = 0.0;
            for e in p.start[i]..p.start[i + 1] {
                acc += p.weights[e] * coarse.z[p.cols[e] as usize];
            }
            fine.z[i] += acc;
        }
        fine.smooth(false);
    }

    /// `z ≈ A⁻¹ r` by one V-cycle. Both slices have the sentinel slot.
    fn precondition(&mut self, r: &[f64], z: &mut [f64]) {
        let n = self.levels[0].n;
        self.levels[0].r[..n].copy_from_slice(&r[..n]);
        self.vcycle(0);
        z[..n].copy_from_slice(&self.levels[0].z[..n]);
    }
}

/// Outcome of one linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Extra symmetric term added to the operator, `y += E x`.
pub type Extra<'a> = &'a dyn Fn(&[f64], &mut [f64]);

pub struct PcgSolver {
    mg: Multigrid,
    pub tolerance: f64,
    pub max_iterations: usize,
    x: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl PcgSolver {
    pub fn new(grid: &FieldGrid, sigma: f64, c: f64, tolerance: f64) -> Result<Self> {
        let n = grid.len();
        Ok(Self {
            mg: Multigrid::new(grid, sigma, c)?,
            tolerance,
            max_iterations: 500,
            x: vec![0.0; n + 1],
            r: vec![0.0; n + 1],
            z: vec![0.0; n + 1],
            p: vec![0.0; n + 1],
            q: vec![0.0; n + 1],
        })
    }

    pub fn levels(&self) -> usize {
        self.mg.depth()
    }

    fn apply(&mut self, extra: Option<Extra<'_>>) {
        let n = self.mg.levels[0].n;
        self.mg.levels[0].apply(&self.p, &mut self.q);
        if let Some(e) = extra {
            e(&self.p[..n], &mut self.q[..n]);
        }
    }

    /// Solves `(σI + c(-∇²) + E) x = b`, starting from the contents of `x`.
    pub fn solve(&mut self, b: &[f64], x: &mut [f64], extra: Option<Extra<'_>>) -> Result<SolveStats> {
        let n = self.mg.levels[0].n;
        assert!(b.len() == n && x.len() == n, "vector length must match the grid");
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        self.p[..n].copy_from_slice(x);
        self.apply(extra);
        for i in 0..n {
            self.x[i] = x[i];
            self.r[i] = b[i] - self.q[i];
        }
        let target = self.tolerance * b_norm;
        let mut res = dot(&self.r[..n], &self.r[..n]).sqrt();
        let mut iterations = 0;
        if res > target {
            self.mg.precondition(&self.r, &mut self.z);
            self.p[..n].copy_from_slice(&self.z[..n]);
            let mut rz = dot(&self.r[..n], &self.z[..n]);
            while res > target {
                if iterations == self.max_iterations || !res.is_finite() {
                    return Err(Error::NoConvergence {
                        iterations,
                        residual: res / b_norm,
                    });
                }
                iterations += 1;
                self.apply(extra);
                let alpha = rz / dot(&self.p[..n], &self.q[..n]);
                for i in 0..n {
                    self.x[i] += alpha * self.p[i];
                    self.r[i] -= alpha * self.q[i];
                }
                res = dot(&self.r[..n], &self.r[..n]).sqrt();
                if res <= target {
                    break;
                }
                self.mg.precondition(&self.r, &mut self.z);
                let rz_new = dot(&self.r[..n], &self.z[..n]);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    self.p[i] = self.z[i] + beta * self.p[i];
                }
            }
        }
        x.copy_from_slice(&self.x[..n]);
        Ok(SolveStats {
            iterations,
            relative_residual: res / b_norm,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::grid::build_grid;
    use crate::types::DomainSpec;

    fn residual(grid: &FieldGrid, sigma: f64, c: f64, x: &[f64], b: &[f64]) -> f64 {
        let mut lap = vec![0.0; grid.len()];
        grid.neg_laplacian(x, &mut lap);
        let r: Vec<f64> = (0..grid.len()).map(|k| b[k] - sigma * x[k] - c * lap[k]).collect();
        dot(&r, &r).sqrt() / dot(b, b).sqrt()
    }

    #[test]
    fn converges_on_shifted_and_pure_laplacian() {
        let grid = build_grid(&DomainSpec::new(20.0, 1.0).unwrap(), 1.0).unwrap();
        let b: Vec<f64> = (0..grid.len()).map(|k| ((k * 7919) % 113) as f64 - 50.0).collect();
        for (sigma, c) in [(1.0, 100.0), (0.0, 2.0e4)] {
            let mut s = PcgSolver::new(&grid, sigma, c, 1e-10).unwrap();
            assert!(s.levels() >= 3);
            let mut x = vec![0.0; grid.len()];
            let stats = s.solve(&b, &mut x, None).unwrap();
            assert!(stats.iterations < 40, "{stats:?}");
            assert!(residual(&grid, sigma, c, &x, &b) < 2e-10);
        }
    }

    #[test]
    fn warm_start_at_solution_needs_no_iterations() {
        let grid = build_grid(&DomainSpec::new(10.0, 1.0).unwrap(), 1.0).unwrap();
        let b = vec![1.0; grid.len()];
        let mut s = PcgSolver::new(&grid, 1.0, 10.0, 1e-9).unwrap();
        let mut x = vec![0.0; grid.len()];
        s.solve(&b, &mut x, None).unwrap();
        let again = s.solve(&b, &mut x, None).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn low_rank_extra_term() {
        let grid = build_grid(&DomainSpec::new(10.0, 1.0).unwrap(), 1.0).unwrap();
        let k0 = grid.unknown([0, 0, 0]).unwrap();
        let extra = move |x: &[f64], y: &mut [f64]| y[k0] += 5.0 * x[k0];
        let b = vec![1.0; grid.len()];
        let mut s = PcgSolver::new(&grid, 0.0, 1.0, 1e-11).unwrap();
        let mut x = vec![0.0; grid.len()];
        s.solve(&b, &mut x, Some(&extra)).unwrap();
        let mut lap = vec![0.0; grid.len()];
        grid.neg_laplacian(&x, &mut lap);
        lap[k0] += 5.0 * x[k0];
        let err = lap.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }
}
