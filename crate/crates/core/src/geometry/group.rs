//! Rigid motions: Haar-random rotations and cell translations.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::polytope::{tetrahedron_volume, ConvexPolytope};
use crate::config::{Aabb, Site};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::vec3::{Mat3, Vec3};

/// Translation law of a sampled group element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TranslationMode {
    /// Uniform on the fundamental cell `W`.
    CellTranslation,
    /// Uniform on the box `[lo, hi)`.
    Free { lo: [f64; 3], hi: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement { rotation: Mat3::IDENTITY, translation: Vec3::ZERO }
    }

    #[inline]
    pub fn apply(&self, x: Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Haar-uniform rotation from a normalized 4-dimensional Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-12 {
            return Mat3::from_quaternion(q.map(|c| c / n));
        }
    }
}

fn draw_with(rng: &mut SimRng, mode: &TranslationMode) -> GroupElement {
    let rotation = random_rotation(rng);
    let translation = match mode {
        TranslationMode::CellTranslation => {
            Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        }
        TranslationMode::Free { lo, hi } => Vec3::new(
            lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(),
            lo[1] + (hi[1] - lo[1]) * rng.random::<f64>(),
            lo[2] + (hi[2] - lo[2]) * rng.random::<f64>(),
        ),
    };
    GroupElement { rotation, translation }
}

fn check_mode(mode: &TranslationMode) -> Result<()> {
    if let TranslationMode::Free { lo, hi } = mode {
        if (0..3).any(|i| !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i])) {
            return Err(Error::invalid("free translation box must satisfy lo < hi"));
        }
    }
    Ok(())
}

/// One group element; the scale `ell` only enters through its precondition.
pub fn sample_group_element(ell: f64, mode: &TranslationMode, seed: u64) -> Result<GroupElement> {
    if !(ell >= 1.0 && ell.is_finite()) {
        return Err(Error::precondition(format!("scale must be >= 1 (got {ell})")));
    }
    check_mode(mode)?;
    Ok(draw_with(&mut rng_from_seed(seed), mode))
}

/// `count` independent elements; element `i` uses its own derived stream.
pub fn sample_group_elements(count: usize, mode: &TranslationMode, seed: u64) -> Result<Vec<GroupElement>> {
    check_mode(mode)?;
    Ok((0..count)
        .map(|i| draw_with(&mut rng_from_seed(derive_seed(seed, "group", i as u64)), mode))
        .collect())
}

/// Haar CDF of the rotation angle: `(theta - sin theta) / pi`.
pub fn rotation_angle_cdf(theta: f64) -> f64 {
    let t = theta.clamp(0.0, std::f64::consts::PI);
    (t - t.sin()) / std::f64::consts::PI
}

/// Regular tetrahedron with unit circumradius centred at the origin.
pub fn reference_simplex() -> [Vec3; 4] {
    let s = 1.0 / 3f64.sqrt();
    [
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ]
}

/// A reference simplex and its scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingSpec {
    pub simplex: [Vec3; 4],
    pub scale: f64,
}

impl TilingSpec {
    pub fn new(simplex: [Vec3; 4], scale: f64) -> Result<Self> {
        let t = TilingSpec { simplex, scale };
        t.validate()?;
        Ok(t)
    }

    /// The regular reference simplex at scale `ell`.
    pub fn regular(scale: f64) -> Result<Self> {
        TilingSpec::new(reference_simplex(), scale)
    }

    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.scale.is_finite() && self.scale >= 1.0) {
            v.push(format!("{path}.scale must be >= 1 (got {})", self.scale));
        }
        if !(tetrahedron_volume(&self.simplex) > 1e-14) {
            v.push(format!("{path}.simplex is degenerate (zero volume)"));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("tiling");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(v.join("; ")))
        }
    }

    fn centroid(&self) -> Vec3 {
        (self.simplex[0] + self.simplex[1] + self.simplex[2] + self.simplex[3]) * 0.25
    }

    /// `|ell Delta|`.
    pub fn volume(&self) -> f64 {
        tetrahedron_volume(&self.simplex) * self.scale.powi(3)
    }

    /// Radius of the smallest centroid-centred ball holding `ell Delta`
    /// (the circumradius for the regular simplex).
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.scale * self.simplex.iter().map(|v| (*v - c).norm()).fold(0.0, f64::max)
    }

    /// Vertices of `R ell Delta + tau + offset`, with `Delta` recentred at its centroid.
    pub fn placed(&self, g: &GroupElement, offset: Vec3) -> [Vec3; 4] {
        let c = self.centroid();
        self.simplex.map(|v| g.rotation * ((v - c) * self.scale) + g.translation + offset)
    }

    pub fn placed_polytope(&self, g: &GroupElement, offset: Vec3) -> ConvexPolytope {
        ConvexPolytope::tetrahedron(self.placed(g, offset))
    }
}

/// Sites `j` with `j` inside `bounds` expanded by `reach`.
pub(crate) fn sites_near(bounds: &Aabb, reach: f64) -> Vec<Site> {
    let lo = bounds.lo - Vec3::splat(reach);
    let hi = bounds.hi + Vec3::splat(reach);
    let mut out = Vec::new();
    for i in lo[0].ceil() as i64..=hi[0].floor() as i64 {
        for j in lo[1].ceil() as i64..=hi[1].floor() as i64 {
            for k in lo[2].ceil() as i64..=hi[2].floor() as i64 {
                out.push([i, j, k]);
            }
        }
    }
    out
}
