//! Group-averaged simplex tilings of a domain.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::group::{sample_group_elements, sites_near, GroupElement, TilingSpec, TranslationMode};
use super::polytope::barycentric;
use super::shape::{DomainShape, Relation, RigidTransform};
use crate::config::Site;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::stats::Summary;
use crate::vec3::Vec3;

pub const MIN_GROUP_SAMPLES: usize = 1000;
/// Poses audited per site by [`classify_cells`].
pub const BOUNDARY_POSES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TilingReport {
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub rel_error: f64,
    pub n_g: usize,
    pub n_mc: usize,
    pub scale: f64,
}

/// Fraction of the simplex `v` inside `d`, by rejection sampling of `n`
/// points from its bounding box.
fn sampled_fraction(d: &DomainShape, v: &[Vec3; 4], n: usize, rng: &mut SimRng) -> f64 {
    let mut lo = v[0];
    let mut hi = v[0];
    for p in &v[1..] {
        lo = lo.zip(*p, f64::min);
        hi = hi.zip(*p, f64::max);
    }
    let (mut accepted, mut hit) = (0usize, 0usize);
    while accepted < n {
        let x = Vec3::new(
            lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(),
            lo[1] + (hi[1] - lo[1]) * rng.random::<f64>(),
            lo[2] + (hi[2] - lo[2]) * rng.random::<f64>(),
        );
        if barycentric(x, v).iter().all(|&l| l >= 0.0) {
            accepted += 1;
            if d.contains(x) {
                hit += 1;
            }
        }
    }
    hit as f64 / n as f64
}

/// The domain moved so that its frame origin is zero, with the removed
/// translation. Site offsets `j - t` are then exact for dyadic `t`, which
/// makes per-site results invariant under lattice translations of `D`.
fn centred(d: &DomainShape) -> Result<(DomainShape, Vec3)> {
    let t = d.transform.translation;
    let c = d.with_transform(RigidTransform { rotation: d.transform.rotation, translation: Vec3::ZERO })?;
    Ok((c, t))
}

fn site_offset(j: Site, t: Vec3) -> Vec3 {
    Vec3::new(j[0] as f64 - t[0], j[1] as f64 - t[1], j[2] as f64 - t[2])
}

/// `sum_j |D cap (g ell Delta + j)| / |ell Delta|` for one group element.
fn tiled_fraction(
    d0: &DomainShape,
    t: Vec3,
    tiling: &TilingSpec,
    g: &GroupElement,
    sites: &[Site],
    n_mc: usize,
    rng: &mut SimRng,
) -> f64 {
    let mut fractions = Vec::new();
    for &j in sites {
        let p = tiling.placed_polytope(g, site_offset(j, t));
        match d0.relation(&p) {
            Relation::Inside => fractions.push(1.0),
            Relation::Outside => {}
            Relation::Straddles => {
                let v = [p.vertices[0], p.vertices[1], p.vertices[2], p.vertices[3]];
                fractions.push(sampled_fraction(d0, &v, n_mc, rng));
            }
        }
    }
    crate::stats::pairwise_sum(&fractions)
}

/// Double Monte Carlo check of `|D| = |W| E_g sum_j |D cap g ell Delta_j| / |ell Delta|`
/// with rotations Haar and translations uniform on `W`.
pub fn tiling_volume_identity(
    d: &DomainShape,
    tiling: &TilingSpec,
    n_g: usize,
    n_mc: usize,
    seed: u64,
) -> Result<TilingReport> {
    tiling.validate()?;
    if n_g < MIN_GROUP_SAMPLES {
        return Err(Error::precondition(format!("tiling identity needs n_g >= {MIN_GROUP_SAMPLES} (got {n_g})")));
    }
    if n_mc == 0 {
        return Err(Error::precondition("tiling identity needs n_mc >= 1"));
    }
    let lhs = d.volume();
    if d.is_empty() {
        return Ok(TilingReport { lhs, rhs: 0.0, rhs_stderr: 0.0, rel_error: 0.0, n_g, n_mc, scale: tiling.scale });
    }
    let (d0, t) = centred(d)?;
    let reach = tiling.bounding_radius() + 3f64.sqrt() / 2.0;
    let bounds = d0.bounds().translated(t);
    let sites = sites_near(&bounds, reach);
    let poses = sample_group_elements(n_g, &TranslationMode::CellTranslation, seed)?;
    let values: Vec<f64> = poses
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut rng = rng_from_seed(derive_seed(seed, "tiling-mc", i as u64));
            tiled_fraction(&d0, t, tiling, g, &sites, n_mc, &mut rng)
        })
        .collect();
    // |W| = 1 for the cubic lattice
    let s = Summary::of(&values);
    let rel_error = if lhs > 0.0 { (s.mean - lhs).abs() / lhs } else { s.mean.abs() };
    Ok(TilingReport { lhs, rhs: s.mean, rhs_stderr: s.stderr, rel_error, n_g, n_mc, scale: tiling.scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellClassification {
    /// `#G`: sites whose every pose lies inside `D`.
    pub inner: usize,
    /// `#dG`: sites with a sampled pose meeting the boundary.
    pub boundary: usize,
    pub poses: usize,
}

/// Radius of the ball about `j` holding every pose `R ell Delta + tau + j`:
/// `ell * circumradius + diam(W)`.
pub fn inclusion_radius(tiling: &TilingSpec) -> f64 {
    tiling.bounding_radius() + 3f64.sqrt()
}

/// Inner and boundary site counts for the tiling of `D`.
pub fn classify_cells(d: &DomainShape, tiling: &TilingSpec, seed: u64) -> Result<CellClassification> {
    tiling.validate()?;
    if d.is_empty() {
        return Ok(CellClassification { inner: 0, boundary: 0, poses: BOUNDARY_POSES });
    }
    let rho = inclusion_radius(tiling);
    let (d0, t) = centred(d)?;
    let poses = sample_group_elements(BOUNDARY_POSES, &TranslationMode::CellTranslation, seed)?;
    let sites = sites_near(&d.bounds(), rho);
    let counts: Vec<(usize, usize)> = sites
        .par_chunks(4096)
        .map(|chunk| {
            let (mut inner, mut boundary) = (0, 0);
            for &j in chunk {
                let o = site_offset(j, t);
                let sd = d0.signed_distance(o);
                if sd <= -rho {
                    inner += 1;
                }
                if sd.abs() < rho
                    && poses.iter().any(|g| d0.relation(&tiling.placed_polytope(g, o)) == Relation::Straddles)
                {
                    boundary += 1;
                }
            }
            (inner, boundary)
        })
        .collect();
    let inner = counts.iter().map(|c| c.0).sum();
    let boundary = counts.iter().map(|c| c.1).sum();
    Ok(CellClassification { inner, boundary, poses: BOUNDARY_POSES })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_domain_gives_zero() {
        let t = TilingSpec::regular(1.0).unwrap();
        let r = tiling_volume_identity(&DomainShape::empty(), &t, 1000, 4, 1).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        let c = classify_cells(&DomainShape::empty(), &t, 1).unwrap();
        assert_eq!((c.inner, c.boundary), (0, 0));
    }

    #[test]
    fn too_few_group_samples() {
        let t = TilingSpec::regular(1.0).unwrap();
        assert!(tiling_volume_identity(&DomainShape::cube(2.0).unwrap(), &t, 10, 4, 1).is_err());
    }

    #[test]
    fn inner_cells_fit() {
        let d = DomainShape::aligned_cube(16).unwrap();
        let t = TilingSpec::regular(2.0).unwrap();
        let c = classify_cells(&d, &t, 5).unwrap();
        assert!(c.inner > 0 && c.inner as f64 <= d.volume());
        assert!(c.boundary > 0);
    }
}
