//! Dirichlet Green's function of the ball and the communication gain matrix.
//!
//! The Green's function solves `D∇²g(·, ℓ) = -δ(· - ℓ)` with `g = 0` on
//! `|r| = L`, built from a point source at `ℓ` and a negative image of
//! strength `L/|ℓ|` at `ℓ* = (L²/|ℓ|²)·ℓ`.
//!
//! The self-interaction `g(ℓ, ℓ)` is regularized by averaging the free-space
//! part over the cell ball `B_R(ℓ)`, which gives `3/(8πDR)`; the smooth image
//! part is evaluated at the cell centre. Its closed form is
//! `L / (4πD(L² - |ℓ|²))`: the diffusivity appears in both terms.
//!
//! With `G` the matrix of pairwise values and `V` the cell volume, the
//! quasi-steady field at the cells is `ν = VαG(I + VαG)⁻¹ U` and the fast
//! AHL balance closes to `U = 𝒢 Y` with
//! `𝒢 = (I - Vα²/(α+γ_u) · G(I + VαG)⁻¹)⁻¹ · a_u/(α+γ_u)`.

use std::f64::consts::PI;

use faer::Mat;

use crate::error::{Error, Result};
use crate::io::matrix_csv;
use crate::linalg::{all_finite, matvec, DenseLu};
use crate::types::{distance, norm, CellSpec, DomainSpec, Point, SignalParams};

/// `g(probe, source)` for distinct points, in min/µm³.
///
/// The image term `(L/|ℓ|)/|r - ℓ*|` is evaluated as
/// `1/sqrt(|r|²|ℓ|²/L² - 2r·ℓ + L²)`, which is the same quantity written
/// symmetrically in `r` and `ℓ` and stays finite as `ℓ → 0`.
///
/// The probe may sit on the boundary (to within a relative `1e-12`), where
/// the result is zero up to rounding.
pub fn green_pair(domain: &DomainSpec, source: &Point, probe: &Point) -> Result<f64> {
    let l = domain.radius;
    let rs = norm(source);
    if !(rs < l) {
        return Err(Error::OutsideDomain {
            point: *source,
            radius: l,
        });
    }
    if !(norm(probe) <= l * (1.0 + 1e-12)) {
        return Err(Error::OutsideDomain {
            point: *probe,
            radius: l,
        });
    }
    let d = distance(probe, source);
    if d == 0.0 {
        return Err(Error::Coincident(*probe));
    }
    let pref = 1.0 / (4.0 * PI * domain.diffusivity);
    let rp = norm(probe);
    let dot = probe[0] * source[0] + probe[1] * source[1] + probe[2] * source[2];
    let image = ((rp * rs / l).powi(2) - 2.0 * dot + l * l).sqrt();
    Ok(pref * (1.0 / d - 1.0 / image))
}

/// Regularized self-interaction of a cell of radius `r_cell` at `position`.
pub fn green_self(domain: &DomainSpec, position: &Point, r_cell: f64) -> Result<f64> {
    let l = domain.radius;
    let rp = norm(position);
    if !(r_cell > 0.0) {
        return Err(Error::InvalidParameter(format!("cell radius {r_cell}")));
    }
    if !(rp < l - r_cell) {
        return Err(Error::OutsideDomain {
            point: *position,
            radius: l - r_cell,
        });
    }
    let dd = domain.diffusivity;
    Ok(3.0 / (8.0 * PI * dd * r_cell) - l / (4.0 * PI * dd * (l * l - rp * rp)))
}

#[derive(Debug, Clone)]
pub struct GreenMatrix {
    /// `entries[(j, i)] = g(ℓ_j, ℓ_i)`.
    pub entries: Mat<f64>,
    pub domain: DomainSpec,
    pub positions: Vec<Point>,
}

impl GreenMatrix {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(self.entries.as_ref())
    }
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// Pairwise Green's matrix. Only the upper triangle is evaluated; the lower
/// triangle is its mirror, so `G == Gᵀ` exactly.
pub fn assemble_green(domain: &DomainSpec, cells: &[CellSpec]) -> Result<GreenMatrix> {
    let n = cells.len();
    let mut entries = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        entries[(i, i)] = green_self(domain, &cells[i].position, cells[i].radius)?;
        for j in (i + 1)..n {
            let g = green_pair(domain, &cells[i].position, &cells[j].position)?;
            entries[(j, i)] = g;
            entries[(i, j)] = g;
        }
    }
    Ok(GreenMatrix {
        entries,
        domain: *domain,
        positions: cells.iter().map(|c| c.position).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct GainMatrix {
    /// `𝒢`, dimensionless.
    pub entries: Mat<f64>,
    /// `M_ν = VαG(I + VαG)⁻¹`, mapping `U` to the quasi-steady field at the cells.
    pub field_operator: Mat<f64>,
    pub source_green: GreenMatrix,
    pub signal: SignalParams,
    pub volume: f64,
    /// 1-norm condition estimates of `I + VαG` and of the outer factor.
    pub condition: [f64; 2],
}

impl GainMatrix {
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    /// Columns `0..n_cols` (the sender block) as a dense column-major copy.
    pub fn leading_columns(&self, n_cols: usize) -> Mat<f64> {
        self.entries.subcols(0, n_cols).to_owned()
    }

    pub fn field_at_cells(&self, u: &[f64]) -> Vec<f64> {
        matvec(self.field_operator.as_ref(), u)
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(self.entries.as_ref())
    }
}

pub fn assemble_gain(green: &GreenMatrix, signal: &SignalParams, volume: f64) -> Result<GainMatrix> {
    let n = green.len();
    let (alpha, gamma_u, a_u) = (signal.alpha, signal.gamma_u, signal.a_u);
    if !(alpha >= 0.0 && gamma_u >= 0.0 && alpha + gamma_u > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gain needs alpha >= 0, gamma_u >= 0, alpha + gamma_u > 0 (got {alpha}, {gamma_u})"
        )));
    }
    let va = volume * alpha;
    let g = green.entries.as_ref();

    let (mut g_inv, inner_cond) = {
        let inner = Mat::from_fn(n, n, |i, j| delta(i, j) + va * g[(i, j)]);
        let inner_lu = DenseLu::new(inner.as_ref(), "I + VαG")?;
        // G (I + VαG)⁻¹, formed as the transpose of (I + VαG)⁻ᵀ Gᵀ.
        let g_inv = inner_lu.solve_transpose(g.transpose()).transpose().to_owned();
        (g_inv, inner_lu.condition_estimate())
    };

    let c = volume * alpha * alpha / (alpha + gamma_u);
    let (entries, outer_cond) = {
        let outer = Mat::from_fn(n, n, |i, j| delta(i, j) - c * g_inv[(i, j)]);
        let outer_lu = DenseLu::new(outer.as_ref(), "I - Vα²/(α+γ_u)·G(I + VαG)⁻¹")?;
        drop(outer);
        let scale = a_u / (alpha + gamma_u);
        let ident = Mat::from_fn(n, n, |i, j| scale * delta(i, j));
        (outer_lu.solve(ident.as_ref()), outer_lu.condition_estimate())
    };
    if !all_finite(entries.as_ref()) {
        return Err(Error::Singular {
            what: "communication gain",
            cond: f64::INFINITY,
        });
    }
    for j in 0..n {
        for i in 0..n {
            g_inv[(i, j)] *= va;
        }
    }

    Ok(GainMatrix {
        entries,
        field_operator: g_inv,
        source_green: green.clone(),
        signal: *signal,
        volume,
        condition: [inner_cond, outer_cond],
    })
}

/// Quasi-steady field for frozen intracellular signals `u`.
///
/// Probes that coincide with a cell return that cell's entry of
/// `ν = VαG(I + VαG)⁻¹U`; any other probe gets the superposition
/// `Vα Σ_j g(r, ℓ_j)(u_j - ν_j)`.
pub fn static_field(
    green: &GreenMatrix,
    signal: &SignalParams,
    volume: f64,
    u: &[f64],
    probes: &[Point],
) -> Result<Vec<f64>> {
    let n = green.len();
    if u.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: u.len(),
        });
    }
    let va = volume * signal.alpha;
    let g = green.entries.as_ref();
    let inner = Mat::from_fn(n, n, |i, j| delta(i, j) + va * g[(i, j)]);
    let z = DenseLu::new(inner.as_ref(), "I + VαG")?.solve_vec(u);
    let nu: Vec<f64> = matvec(g, &z).into_iter().map(|x| va * x).collect();

    probes
        .iter()
        .map(|p| {
            if let Some(k) = green.positions.iter().position(|c| c == p) {
                return Ok(nu[k]);
            }
            let mut acc = 0.0;
            for (j, src) in green.positions.iter().enumerate() {
                acc += green_pair(&green.domain, src, p)? * (u[j] - nu[j]);
            }
            Ok(va * acc)
        })
        .collect()
}
