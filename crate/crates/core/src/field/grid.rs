//! Masked Cartesian lattice over the ball and the cut-cell Laplacian on it.
//!
//! Nodes sit at `h·(i, j, k)` for integer indices in `-n..=n`. A node is an
//! unknown when it lies strictly inside the sphere; everything else holds
//! zero. Links that leave the ball are shortened to the exact boundary
//! crossing at `θ·h` and the boundary value is imposed there, which keeps the
//! operator symmetric and second-order accurate.

use crate::error::{Error, Result};
use crate::types::{DomainSpec, Point};

/// Neighbour slot for a link that ends on the boundary.
pub const BOUNDARY: u32 = u32::MAX;

const DIRS: [[i32; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub h: f64,
    pub radius: f64,
    /// Lattice indices run over `-n..=n` on each axis.
    pub n: i32,
    /// Lattice index of every unknown.
    pub coords: Vec<[i32; 3]>,
    /// Unknown index of each link's far end, or [`BOUNDARY`].
    pub neighbors: Vec<[u32; 6]>,
    /// `Σ 1/θ` over boundary links, per unknown (zero away from the wall).
    pub wall: Vec<f64>,
    lookup: Vec<u32>,
}

impl FieldGrid {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Points per axis, `2n + 1`.
    pub fn side(&self) -> usize {
        (2 * self.n + 1) as usize
    }

    pub fn position(&self, k: usize) -> Point {
        let c = self.coords[k];
        [c[0] as f64 * self.h, c[1] as f64 * self.h, c[2] as f64 * self.h]
    }

    /// Row-major offset of a lattice index, `z` fastest.
    pub fn lattice_offset(&self, c: [i32; 3]) -> Option<usize> {
        if c.iter().any(|v| v.abs() > self.n) {
            return None;
        }
        let m = self.side();
        let [i, j, k] = c.map(|v| (v + self.n) as usize);
        Some((i * m + j) * m + k)
    }

    /// Unknown index at a lattice index, if that node is interior.
    pub fn unknown(&self, c: [i32; 3]) -> Option<usize> {
        let off = self.lattice_offset(c)?;
        let u = self.lookup[off];
        (u != BOUNDARY).then_some(u as usize)
    }

    /// Number of interior links of unknown `k`.
    pub fn interior_links(&self, k: usize) -> usize {
        self.neighbors[k].iter().filter(|&&q| q != BOUNDARY).count()
    }

    /// `(-∇²_h v)_k`.
    pub fn neg_laplacian(&self, v: &[f64], out: &mut [f64]) {
        let ih2 = 1.0 / (self.h * self.h);
        for (k, nb) in self.neighbors.iter().enumerate() {
            let mut acc = (self.interior_links(k) as f64 + self.wall[k]) * v[k];
            for &q in nb {
                if q != BOUNDARY {
                    acc -= v[q as usize];
                }
            }
            out[k] = acc * ih2;
        }
    }

    /// Discrete outward flux `D·h·Σ v_k/θ` across the wall, per unit time.
    pub fn wall_flux(&self, diffusivity: f64, v: &[f64]) -> f64 {
        let s: f64 = self.wall.iter().zip(v).filter(|(w, _)| **w > 0.0).map(|(w, x)| w * x).sum();
        diffusivity * self.h * s
    }

    /// Embeds the unknowns in the full lattice with zeros elsewhere.
    pub fn to_lattice(&self, v: &[f64]) -> Vec<f64> {
        let m = self.side();
        let mut out = vec![0.0; m * m * m];
        for (k, c) in self.coords.iter().enumerate() {
            out[self.lattice_offset(*c).expect("interior node")] = v[k];
        }
        out
    }
}

/// Builds the grid for `domain` at spacing `h`.
pub fn build_grid(domain: &DomainSpec, h: f64) -> Result<FieldGrid> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Grid(format!("spacing must be positive, got {h}")));
    }
    if h > domain.radius / 4.0 {
        return Err(Error::Grid(format!(
            "spacing {h} is too coarse for radius {} (need h <= L/4)",
            domain.radius
        )));
    }
    Ok(lattice(domain.radius, h))
}

/// Unchecked construction; coarse multigrid levels go below the `L/4` floor.
pub(crate) fn lattice(radius: f64, h: f64) -> FieldGrid {
    let n = (radius / h).ceil() as i32;
    let m = (2 * n + 1) as usize;
    let r2 = radius * radius;
    let inside = |c: [i32; 3]| {
        let p = c.map(|v| v as f64 * h);
        p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < r2
    };
    let mut lookup = vec![BOUNDARY; m * m * m];
    let mut coords = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                if inside([i, j, k]) {
                    let off = (((i + n) as usize * m) + (j + n) as usize) * m + (k + n) as usize;
                    lookup[off] = coords.len() as u32;
                    coords.push([i, j, k]);
                }
            }
        }
    }
    let mut grid = FieldGrid {
        h,
        radius,
        n,
        neighbors: Vec::with_capacity(coords.len()),
        wall: Vec::with_capacity(coords.len()),
        coords,
        lookup,
    };
    for idx in 0..grid.coords.len() {
        let c = grid.coords[idx];
        let x = c.map(|v| v as f64 * h);
        let x2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let mut nb = [BOUNDARY; 6];
        let mut wall = 0.0;
        for (s, d) in DIRS.iter().enumerate() {
            let q = [c[0] + d[0], c[1] + d[1], c[2] + d[2]];
            match grid.unknown(q) {
                Some(u) => nb[s] = u as u32,
                None => {
                    let axis = s / 2;
                    let xd = x[axis] * d[axis] as f64;
                    // Distance along the link to |x + t·e| = L.
                    let t = -xd + (xd * xd + r2 - x2).sqrt();
                    wall += h / t.clamp(1e-12 * h, h);
                }
            }
        }
        grid.neighbors.push(nb);
        grid.wall.push(wall);
    }
    grid
}

/// Cloud-in-cell transfer weights for one cell (units 1/µm³).
///
/// The same weights deposit the cell's exchange flux into the field and
/// interpolate the field back at the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceStencil {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl SourceStencil {
    /// `Σ w_k h³ v_k`.
    pub fn sample(&self, h: f64, v: &[f64]) -> f64 {
        let h3 = h * h * h;
        self.nodes.iter().zip(&self.weights).map(|(&k, w)| w * h3 * v[k]).sum()
    }
}

pub fn deposit_and_sample(grid: &FieldGrid, position: &Point) -> Result<SourceStencil> {
    let h = grid.h;
    let q = position.map(|p| p / h);
    let base = q.map(|v| v.floor());
    let frac = [q[0] - base[0], q[1] - base[1], q[2] - base[2]];
    let base = base.map(|v| v as i32);
    let h3 = h * h * h;
    let mut nodes = Vec::with_capacity(8);
    let mut weights = Vec::with_capacity(8);
    for corner in 0..8 {
        let o = [corner >> 2 & 1, corner >> 1 & 1, corner & 1];
        let c = [base[0] + o[0], base[1] + o[1], base[2] + o[2]];
        let k = grid.unknown(c).ok_or_else(|| {
            Error::Grid(format!(
                "cell at {position:?} touches a node outside the domain at spacing {h}"
            ))
        })?;
        let mut w = 1.0;
        for a in 0..3 {
            w *= if o[a] == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if w > 0.0 {
            nodes.push(k);
            weights.push(w / h3);
        }
    }
    Ok(SourceStencil { nodes, weights })
}
