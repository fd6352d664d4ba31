//! Probability laws of the i.i.d. perturbed-lattice model: the displacement
//! law of each nucleus around its lattice site and the law of its charge.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LatticeSpec;
use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Default Gaussian truncation radius in units of sigma.
pub const GAUSSIAN_CUTOFF_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisplacementLaw {
    /// No displacement: the perfect lattice.
    PointMass,
    /// Isotropic Gaussian with standard deviation `sigma` per coordinate,
    /// conditioned on `|r| <= cutoff` (default `8 sigma`).
    Gaussian {
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    /// Uniform on the closed ball of the given radius.
    UniformBall { radius: f64 },
    /// Uniform on the half-open box `[lo, hi)` given in fractional lattice
    /// coordinates; must lie inside the fundamental cell `[-1/2, 1/2)^3`.
    CompactInCell { lo: [f64; 3], hi: [f64; 3] },
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub law: DisplacementLaw,
}

impl DisplacementLaw {
    pub fn gaussian(sigma: f64) -> Self {
        DisplacementLaw::Gaussian { sigma, cutoff: None }
    }

    /// Every violated constraint, each prefixed with `path`.
    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            DisplacementLaw::PointMass => {}
            DisplacementLaw::Gaussian { sigma, cutoff } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    out.push(format!("{path}.sigma must be a positive length (got {sigma})"));
                }
                if let Some(c) = cutoff {
                    if !(c.is_finite() && *c > 0.0) {
                        out.push(format!("{path}.cutoff must be a positive length (got {c})"));
                    }
                }
            }
            DisplacementLaw::UniformBall { radius } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    out.push(format!("{path}.radius must be a nonnegative length (got {radius})"));
                }
            }
            DisplacementLaw::CompactInCell { lo, hi } => {
                for i in 0..3 {
                    if !(lo[i] >= -0.5 && lo[i] < hi[i] && hi[i] <= 0.5) {
                        out.push(format!(
                            "{path}: sub-box axis {i} [{}, {}) must satisfy -0.5 <= lo < hi <= 0.5",
                            lo[i], hi[i]
                        ));
                    }
                }
            }
            DisplacementLaw::Mixture { components } => {
                if components.is_empty() {
                    out.push(format!("{path}.components must not be empty"));
                }
                let mut total = 0.0;
                for (i, c) in components.iter().enumerate() {
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        out.push(format!("{path}.components[{i}].weight must be >= 0"));
                    }
                    total += c.weight;
                    out.extend(c.law.violations(&format!("{path}.components[{i}].law")));
                }
                if !components.is_empty() && (total - 1.0).abs() > 1e-9 {
                    out.push(format!("{path}: mixture weights sum to {total}, expected 1"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("displacement");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(v.join("; ")))
        }
    }

    /// True when the law has bounded support without truncation.
    pub fn is_compact(&self) -> bool {
        match self {
            DisplacementLaw::Gaussian { .. } => false,
            DisplacementLaw::Mixture { components } => components.iter().all(|c| c.law.is_compact()),
            _ => true,
        }
    }

    /// Truncation radius of unbounded components, if any.
    pub fn tail_cutoff(&self) -> Option<f64> {
        match self {
            DisplacementLaw::Gaussian { sigma, cutoff } => {
                Some(cutoff.unwrap_or(GAUSSIAN_CUTOFF_SIGMAS * sigma))
            }
            DisplacementLaw::Mixture { components } => components
                .iter()
                .filter_map(|c| c.law.tail_cutoff())
                .reduce(f64::max),
            _ => None,
        }
    }

    /// Radius of a ball around the origin containing every possible draw.
    pub fn support_radius(&self, lattice: &LatticeSpec) -> f64 {
        match self {
            DisplacementLaw::PointMass => 0.0,
            DisplacementLaw::Gaussian { .. } => self.tail_cutoff().unwrap_or(0.0),
            DisplacementLaw::UniformBall { radius } => *radius,
            DisplacementLaw::CompactInCell { lo, hi } => {
                let mut r: f64 = 0.0;
                for corner in 0..8 {
                    let u = Vec3::new(
                        if corner & 1 == 0 { lo[0] } else { hi[0] },
                        if corner & 2 == 0 { lo[1] } else { hi[1] },
                        if corner & 4 == 0 { lo[2] } else { hi[2] },
                    );
                    r = r.max((lattice.basis * u).norm());
                }
                r
            }
            DisplacementLaw::Mixture { components } => components
                .iter()
                .map(|c| c.law.support_radius(lattice))
                .fold(0.0, f64::max),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, lattice: &LatticeSpec) -> Vec3 {
        match self {
            DisplacementLaw::PointMass => Vec3::ZERO,
            DisplacementLaw::Gaussian { sigma, .. } => {
                let cutoff2 = self.tail_cutoff().unwrap_or(f64::INFINITY).powi(2);
                loop {
                    let r = Vec3::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ) * *sigma;
                    if r.norm2() <= cutoff2 {
                        return r;
                    }
                }
            }
            DisplacementLaw::UniformBall { radius } => loop {
                let r = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if r.norm2() <= 1.0 {
                    return r * *radius;
                }
            },
            DisplacementLaw::CompactInCell { lo, hi } => {
                let u = Vec3::new(
                    lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(),
                    lo[1] + (hi[1] - lo[1]) * rng.random::<f64>(),
                    lo[2] + (hi[2] - lo[2]) * rng.random::<f64>(),
                );
                lattice.basis * u
            }
            DisplacementLaw::Mixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        return c.law.sample(rng, lattice);
                    }
                }
                components
                    .last()
                    .map(|c| c.law.sample(rng, lattice))
                    .unwrap_or(Vec3::ZERO)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChargeLaw {
    Constant { z: f64 },
    UniformInterval { min: f64, max: f64 },
    /// Charge `z` with probability `1 - p_vac`, otherwise the nucleus is removed.
    Vacancy { p_vac: f64, z: f64 },
}

impl ChargeLaw {
    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            ChargeLaw::Constant { z } => {
                if !(z.is_finite() && *z > 0.0) {
                    out.push(format!("{path}.z must be positive (got {z})"));
                }
            }
            ChargeLaw::UniformInterval { min, max } => {
                if !(min.is_finite() && max.is_finite() && *min > 0.0 && min <= max) {
                    out.push(format!("{path}: need 0 < min <= max (got [{min}, {max}])"));
                }
            }
            ChargeLaw::Vacancy { p_vac, z } => {
                if !(*p_vac >= 0.0 && *p_vac < 1.0) {
                    out.push(format!("{path}.p_vac must lie in [0, 1) (got {p_vac})"));
                }
                if !(z.is_finite() && *z > 0.0) {
                    out.push(format!("{path}.z must be positive (got {z})"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("charge");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(v.join("; ")))
        }
    }

    /// `(Z_min, Z_max)` of the nonzero charges.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ChargeLaw::Constant { z } | ChargeLaw::Vacancy { z, .. } => (z, z),
            ChargeLaw::UniformInterval { min, max } => (min, max),
        }
    }

    /// Expected charge per site, vacancies counting as zero.
    pub fn mean(&self) -> f64 {
        match *self {
            ChargeLaw::Constant { z } => z,
            ChargeLaw::UniformInterval { min, max } => 0.5 * (min + max),
            ChargeLaw::Vacancy { p_vac, z } => (1.0 - p_vac) * z,
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            ChargeLaw::Constant { .. } | ChargeLaw::Vacancy { .. } => true,
            ChargeLaw::UniformInterval { min, max } => min == max,
        }
    }

    /// A draw; `0.0` means the site is vacant.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ChargeLaw::Constant { z } => z,
            ChargeLaw::UniformInterval { min, max } => {
                if min == max {
                    min
                } else {
                    rng.random_range(min..=max)
                }
            }
            ChargeLaw::Vacancy { p_vac, z } => {
                if rng.random::<f64>() < p_vac {
                    0.0
                } else {
                    z
                }
            }
        }
    }
}
