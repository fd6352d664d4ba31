//! Regularity audits: boundary collars, the Fisher constant and the cone property.

use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::polytope::ConvexPolytope;
use super::shape::{DomainShape, Relation};
use crate::config::{Aabb, LatticeSpec, Site};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::vec3::{Mat3, Vec3};

pub const MIN_COLLAR_SAMPLES: usize = 10_000;
const CHUNK: usize = 1 << 15;
/// Points of the spherical Fibonacci design in the direction codebook.
pub const FIBONACCI_DIRECTIONS: usize = 482;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollarEstimate {
    pub t: f64,
    /// Collar width `|D|^{1/3} t`.
    pub width: f64,
    pub volume: f64,
    pub stderr: f64,
    pub samples: usize,
}

fn uniform_in(rng: &mut SimRng, b: &Aabb) -> Vec3 {
    Vec3::new(
        b.lo[0] + (b.hi[0] - b.lo[0]) * rng.random::<f64>(),
        b.lo[1] + (b.hi[1] - b.lo[1]) * rng.random::<f64>(),
        b.lo[2] + (b.hi[2] - b.lo[2]) * rng.random::<f64>(),
    )
}

/// Monte Carlo volume of `{x : d(x, boundary) <= |D|^{1/3} t}`.
pub fn collar_volume(d: &DomainShape, t: f64, n_mc: usize, seed: u64) -> Result<CollarEstimate> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::precondition(format!("collar thickness must be >= 0 (got {t})")));
    }
    if n_mc < MIN_COLLAR_SAMPLES {
        return Err(Error::precondition(format!("collar_volume needs n_mc >= {MIN_COLLAR_SAMPLES} (got {n_mc})")));
    }
    let width = d.volume().cbrt() * t;
    if t == 0.0 || d.is_empty() {
        return Ok(CollarEstimate { t, width, volume: 0.0, stderr: 0.0, samples: n_mc });
    }
    let bbox = d.bounds().expanded(width);
    let chunks = n_mc.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK.min(n_mc - c * CHUNK);
            let mut rng = rng_from_seed(derive_seed(seed, "collar", c as u64));
            (0..n).filter(|_| d.boundary_distance(uniform_in(&mut rng, &bbox)) <= width).count() as u64
        })
        .sum();
    let p = hits as f64 / n_mc as f64;
    let vb = bbox.volume();
    Ok(CollarEstimate {
        t,
        width,
        volume: vb * p,
        stderr: vb * (p * (1.0 - p) / n_mc as f64).sqrt(),
        samples: n_mc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    /// `max_t collar(t) / (|D| t)` over the grid.
    pub a: f64,
    pub a_stderr: f64,
    pub argmax_t: f64,
    pub ratios: Vec<f64>,
    pub profile: Vec<CollarEstimate>,
}

/// Smallest `a` with `collar(t) <= a t |D|` on the grid.
pub fn fisher_a_estimate(d: &DomainShape, grid: &[f64], n_mc: usize, seed: u64) -> Result<FisherEstimate> {
    if grid.is_empty() || grid.iter().any(|&t| !(t > 0.0 && t <= 0.2)) {
        return Err(Error::precondition("fisher grid must be a nonempty subset of (0, 0.2]"));
    }
    if d.is_empty() {
        return Err(Error::precondition("fisher_a_estimate needs a domain of positive volume"));
    }
    let mut profile = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        profile.push(collar_volume(d, t, n_mc, derive_seed(seed, "fisher", i as u64))?);
    }
    let v = d.volume();
    let ratios: Vec<f64> = profile.iter().map(|c| c.volume / (v * c.t)).collect();
    let (imax, a) = ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    Ok(FisherEstimate {
        a,
        a_stderr: profile[imax].stderr / (v * profile[imax].t),
        argmax_t: profile[imax].t,
        ratios,
        profile,
    })
}

/// Fibonacci sphere design followed by the 26 lattice directions.
pub fn direction_codebook() -> &'static [Vec3] {
    static BOOK: OnceLock<Vec<Vec3>> = OnceLock::new();
    BOOK.get_or_init(|| {
        let n = FIBONACCI_DIRECTIONS;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut dirs: Vec<Vec3> = (0..n)
            .map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                Vec3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        for i in -1i32..=1 {
            for j in -1i32..=1 {
                for k in -1i32..=1 {
                    if (i, j, k) != (0, 0, 0) {
                        dirs.push(Vec3::new(i as f64, j as f64, k as f64).normalized());
                    }
                }
            }
        }
        dirs
    })
}

/// Unit-cone test pattern around `+z`: the apex offsets `s u` with `u` at
/// angle `<= theta` from the axis and `s < eps`.
fn cone_pattern(eps: f64) -> Vec<Vec3> {
    let theta = (1.0 - eps * eps).clamp(-1.0, 1.0).acos() * (1.0 - 1e-9);
    let mut pts = Vec::with_capacity(132);
    for r in [0.25, 0.5, 0.75, 1.0 - 1e-9] {
        let s = eps * r;
        pts.push(Vec3::new(0.0, 0.0, s));
        for alpha in [theta / 2.0, theta] {
            for m in 0..16 {
                let phi = std::f64::consts::TAU * m as f64 / 16.0;
                pts.push(Vec3::new(alpha.sin() * phi.cos(), alpha.sin() * phi.sin(), alpha.cos()) * s);
            }
        }
    }
    pts
}

/// Rotation taking `+z` to `v`.
fn frame(v: Vec3) -> Mat3 {
    let helper = if v[0].abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let a = helper.cross(v).normalized();
    let b = v.cross(a);
    Mat3::from_columns(a, b, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeWitness {
    pub point: Vec3,
    /// True when the point lies in `D`, false for the complement.
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub pass: bool,
    pub cone_epsilon: f64,
    pub tested_inside: usize,
    pub tested_outside: usize,
    pub failures: Vec<ConeWitness>,
}

/// Search the codebook for an axis `v` whose finite cone
/// `{x - s u : u.v > 1 - eps^2, 0 < s < eps}` stays on the side of `x`.
fn admits_cone(d: &DomainShape, x: Vec3, inside: bool, pattern: &[Vec3]) -> bool {
    let book = direction_codebook();
    let g = d.gradient(x);
    let hint = if inside { g } else { -g };
    let mut order: Vec<(f64, usize)> = book.iter().enumerate().map(|(i, u)| (-u.dot(hint), i)).collect();
    if hint.is_finite() {
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    order.iter().any(|&(_, i)| {
        let r = frame(book[i]);
        pattern.iter().all(|p| d.contains(x - r * *p) == inside)
    })
}

/// Probabilistic audit of the cone property for `D` and its complement.
pub fn cone_check(d: &DomainShape, cone_epsilon: f64, n_samples: usize, seed: u64) -> Result<ConeReport> {
    if !(cone_epsilon > 0.0 && cone_epsilon.is_finite()) {
        return Err(Error::precondition(format!("cone_epsilon must be positive (got {cone_epsilon})")));
    }
    if d.is_empty() {
        return Err(Error::precondition("cone_check needs a domain of positive volume"));
    }
    let pattern = cone_pattern(cone_epsilon);
    let inner_box = d.bounds();
    let outer_box = inner_box.expanded(cone_epsilon);
    let draw = |side: bool, i: usize| -> Vec3 {
        let label = if side { "cone-in" } else { "cone-out" };
        let mut rng = rng_from_seed(derive_seed(seed, label, i as u64));
        let b = if side { &inner_box } else { &outer_box };
        loop {
            let x = uniform_in(&mut rng, b);
            if d.contains(x) == side {
                return x;
            }
        }
    };
    let mut failures = Vec::new();
    for side in [true, false] {
        let found: Vec<Option<ConeWitness>> = (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let x = draw(side, i);
                (!admits_cone(d, x, side, &pattern)).then_some(ConeWitness { point: x, inside: side })
            })
            .collect();
        failures.extend(found.into_iter().flatten());
    }
    Ok(ConeReport {
        pass: failures.is_empty(),
        cone_epsilon,
        tested_inside: n_samples,
        tested_outside: n_samples,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedVolume {
    pub cells: usize,
    pub volume: f64,
}

/// Cell-union surrogate of the regularized volume: `|W|` times the number of
/// cells `W + j` meeting `D`.
pub fn regularized_volume(d: &DomainShape, lattice: &LatticeSpec) -> Result<RegularizedVolume> {
    lattice.validate()?;
    if d.is_empty() {
        return Ok(RegularizedVolume { cells: 0, volume: 0.0 });
    }
    let (lo, hi) = lattice.site_range(&d.bounds());
    let b = lattice.basis;
    let half = b * Vec3::splat(0.5);
    let slabs: Vec<usize> = (lo[0]..=hi[0])
        .into_par_iter()
        .map(|i| {
            let mut n = 0;
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let site: Site = [i, j, k];
                    let o = lattice.point(site) - half;
                    let cell = ConvexPolytope::parallelepiped(o, b.column(0), b.column(1), b.column(2));
                    if d.relation(&cell) != Relation::Outside {
                        n += 1;
                    }
                }
            }
            n
        })
        .collect();
    let cells: usize = slabs.iter().sum();
    Ok(RegularizedVolume { cells, volume: cells as f64 * lattice.cell_volume() })
}
