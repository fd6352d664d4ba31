use serde::{Deserialize, Serialize};

use super::{
    poisson_configuration, sample_configuration_at, sample_neighborhood, Aabb, ChargeLaw,
    DisplacementLaw, LatticeSpec, NuclearConfiguration, Site,
};
use crate::error::{Error, Result};

/// Half-width of the site block drawn by the origin-cell protocol (a `9^3` block).
pub const NEIGHBORHOOD_HALF_WIDTH: i64 = 4;

/// Default margin around the origin cell for Poisson replicas.
pub const POISSON_ORIGIN_MARGIN: f64 = 4.0;

/// A random nuclear model: the law of `K(omega)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Iid {
        #[serde(default)]
        lattice: LatticeSpec,
        displacement: DisplacementLaw,
        charge: ChargeLaw,
    },
    Poisson {
        intensity: f64,
        charge: ChargeLaw,
    },
}

impl ModelSpec {
    pub fn iid(displacement: DisplacementLaw, charge: ChargeLaw) -> Self {
        ModelSpec::Iid { lattice: LatticeSpec::cubic(), displacement, charge }
    }

    /// Gaussian-perturbed `Z^3` with unit charges.
    pub fn gaussian(sigma: f64) -> Self {
        ModelSpec::iid(DisplacementLaw::gaussian(sigma), ChargeLaw::Constant { z: 1.0 })
    }

    /// Parses and validates a model table such as `kind = "iid"` plus laws.
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: ModelSpec = toml::from_str(text).map_err(|e| Error::Schema(vec![e.message().to_string()]))?;
        let v = m.violations("model");
        if v.is_empty() {
            Ok(m)
        } else {
            Err(Error::Schema(v))
        }
    }

    pub fn violations(&self, path: &str) -> Vec<String> {
        match self {
            ModelSpec::Iid { lattice, displacement, charge } => {
                let mut v = Vec::new();
                if lattice.validate().is_err() {
                    v.push(format!("{path}.lattice.basis must be linearly independent"));
                }
                v.extend(displacement.violations(&format!("{path}.displacement")));
                v.extend(charge.violations(&format!("{path}.charge")));
                v
            }
            ModelSpec::Poisson { intensity, charge } => {
                let mut v = Vec::new();
                if !(intensity.is_finite() && *intensity > 0.0) {
                    v.push(format!("{path}.intensity must be positive (got {intensity})"));
                }
                v.extend(charge.violations(&format!("{path}.charge")));
                v
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("model");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(v.join("; ")))
        }
    }

    pub fn lattice(&self) -> LatticeSpec {
        match self {
            ModelSpec::Iid { lattice, .. } => lattice.clone(),
            ModelSpec::Poisson { .. } => LatticeSpec::cubic(),
        }
    }

    pub fn charge(&self) -> &ChargeLaw {
        match self {
            ModelSpec::Iid { charge, .. } | ModelSpec::Poisson { charge, .. } => charge,
        }
    }

    /// Expected nuclear charge per unit volume.
    pub fn mean_charge_density(&self) -> f64 {
        match self {
            ModelSpec::Iid { lattice, charge, .. } => charge.mean() / lattice.cell_volume(),
            ModelSpec::Poisson { intensity, charge } => intensity * charge.mean(),
        }
    }

    /// Smallest margin that makes a window sample complete.
    pub fn required_margin(&self) -> f64 {
        match self {
            ModelSpec::Iid { lattice, displacement, .. } => displacement
                .tail_cutoff()
                .unwrap_or(0.0)
                .max(displacement.support_radius(lattice)),
            ModelSpec::Poisson { .. } => 0.0,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            ModelSpec::Iid { displacement, charge, .. } => {
                matches!(displacement, DisplacementLaw::PointMass)
                    && matches!(charge, ChargeLaw::Constant { .. })
            }
            ModelSpec::Poisson { .. } => false,
        }
    }

    pub fn sample(&self, window: Aabb, margin: f64, seed: u64) -> Result<NuclearConfiguration> {
        self.sample_at(window, margin, seed, [0, 0, 0])
    }

    /// A window sample of `K(tau_k omega)`. Poisson models ignore the shift.
    pub fn sample_at(&self, window: Aabb, margin: f64, seed: u64, omega_shift: Site) -> Result<NuclearConfiguration> {
        match self {
            ModelSpec::Iid { lattice, displacement, charge } => {
                sample_configuration_at(lattice, displacement, charge, window, margin, seed, omega_shift)
            }
            ModelSpec::Poisson { intensity, charge } => {
                poisson_configuration(*intensity, charge, window, margin, seed)
            }
        }
    }

    /// One replica of the origin-cell protocol.
    pub fn sample_origin(&self, seed: u64) -> Result<NuclearConfiguration> {
        match self {
            ModelSpec::Iid { lattice, displacement, charge } => {
                sample_neighborhood(lattice, displacement, charge, NEIGHBORHOOD_HALF_WIDTH, seed)
            }
            ModelSpec::Poisson { intensity, charge } => {
                poisson_configuration(*intensity, charge, Aabb::unit_cell(), POISSON_ORIGIN_MARGIN, seed)
            }
        }
    }
}
