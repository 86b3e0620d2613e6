//! Cell placement generators.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{distance, norm, DomainSpec, Point};

pub const MAX_ATTEMPTS: u64 = 1_000_000;

/// Uniform random positions with `lo ≤ r₁ ≤ hi` inside the ball, at least
/// `cell_radius` from the boundary and more than `2·cell_radius` from each
/// other and from every point in `avoid`. Dart throwing with a fixed budget
/// of [`MAX_ATTEMPTS`] draws.
pub fn place_slab(
    count: usize,
    (lo, hi): (f64, f64),
    domain: &DomainSpec,
    cell_radius: f64,
    avoid: &[Point],
    seed: u64,
) -> Result<Vec<Point>> {
    let l = domain.radius;
    let limit = l - cell_radius;
    let (lo_c, hi_c) = (lo.max(-limit), hi.min(limit));
    if !(lo <= hi) || lo_c > hi_c || !(cell_radius > 0.0) {
        return Err(Error::Config(format!(
            "slab [{lo}, {hi}] does not meet the domain interior"
        )));
    }
    let min_sep = 2.0 * cell_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid: HashMap<[i64; 3], Vec<Point>> = HashMap::new();
    let key = |p: &Point| p.map(|c| (c / min_sep).floor() as i64);
    for p in avoid {
        grid.entry(key(p)).or_default().push(*p);
    }
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while out.len() < count {
        if attempts == MAX_ATTEMPTS {
            return Err(Error::Config(format!(
                "slab packing failed: placed {} of {count} cells in {MAX_ATTEMPTS} attempts",
                out.len()
            )));
        }
        attempts += 1;
        let p = [
            rng.gen_range(lo_c..=hi_c),
            rng.gen_range(-limit..=limit),
            rng.gen_range(-limit..=limit),
        ];
        if norm(&p) >= limit {
            continue;
        }
        let k = key(&p);
        let mut clear = true;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if cell.iter().any(|q| distance(&p, q) <= min_sep) {
                            clear = false;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if clear {
            grid.entry(k).or_default().push(p);
            out.push(p);
        }
    }
    Ok(out)
}

/// Near-uniform points on the sphere of the given radius.
///
/// Fibonacci lattice with the first and last points pinned to the poles and
/// the rest offset away from them, which avoids the crowding the plain
/// lattice shows near the poles. Two points come out antipodal.
pub fn place_shell(count: usize, radius: f64, domain: &DomainSpec, cell_radius: f64) -> Result<Vec<Point>> {
    if !(radius > 0.0 && radius + cell_radius < domain.radius) {
        return Err(Error::Config(format!(
            "shell radius {radius} must be positive and leave room for cells of radius {cell_radius} inside L = {}",
            domain.radius
        )));
    }
    const OFFSET: f64 = 3.5;
    let golden = PI * (3.0 - 5f64.sqrt());
    let pole = |s: f64| [0.0, 0.0, s * radius];
    match count {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![pole(1.0)]),
        _ => {}
    }
    let m = count - 2;
    let mut out = Vec::with_capacity(count);
    out.push(pole(1.0));
    for j in 0..m {
        let z = 1.0 - 2.0 * (j as f64 + OFFSET) / (m as f64 - 1.0 + 2.0 * OFFSET);
        let r = (1.0 - z * z).max(0.0).sqrt();
        let phi = (j + 1) as f64 * golden;
        out.push([radius * r * phi.cos(), radius * r * phi.sin(), radius * z]);
    }
    out.push(pole(-1.0));
    Ok(out)
}
