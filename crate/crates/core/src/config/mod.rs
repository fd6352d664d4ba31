//! Finite realizations of stationary random nuclear configurations.
//!
//! Two models are provided: the i.i.d. perturbed lattice, where each site
//! `j` carries one nucleus at `j + r_j` with charge `z_j`, and the
//! homogeneous Poisson field. The lattice model keys every per-site draw by
//! `(seed, j)`, so sampling is equivariant under lattice translations
//! bit-for-bit on dyadic lattices such as `Z^3`.

mod io;
mod laws;
mod model;
mod sample;

pub use io::{ConfigurationDescriptor, NUCLEI_CSV_HEADER};
pub use model::{ModelSpec, NEIGHBORHOOD_HALF_WIDTH, POISSON_ORIGIN_MARGIN};
pub use laws::{ChargeLaw, DisplacementLaw, MixtureComponent, GAUSSIAN_CUTOFF_SIGMAS};
pub use sample::{
    poisson_configuration, sample_configuration, sample_configuration_at, sample_neighborhood,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{Mat3, Vec3};

/// Integer coordinates of a lattice point in the lattice basis.
pub type Site = [i64; 3];

/// Positions are rounded to this dyadic grid. Translations by integer
/// vectors are then exact in floating point.
pub const POSITION_QUANTUM: f64 = 1.0 / (1u64 << 36) as f64;

#[inline]
pub fn quantize(x: f64) -> f64 {
    (x / POSITION_QUANTUM).round() * POSITION_QUANTUM
}

#[inline]
pub fn quantize_vec(v: Vec3) -> Vec3 {
    v.map(quantize)
}

/// A Bravais lattice with fundamental cell `W = B [-1/2, 1/2)^3`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// Basis vectors as columns.
    pub basis: Mat3,
    #[serde(skip)]
    inverse: Option<Mat3>,
}

impl PartialEq for LatticeSpec {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis
    }
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec::cubic()
    }
}

impl LatticeSpec {
    pub fn cubic() -> Self {
        LatticeSpec { basis: Mat3::IDENTITY, inverse: Some(Mat3::IDENTITY) }
    }

    pub fn new(b0: Vec3, b1: Vec3, b2: Vec3) -> Result<Self> {
        let basis = Mat3::from_columns(b0, b1, b2);
        let inverse = basis.inverse();
        if inverse.is_none() || basis.det().abs() < 1e-12 {
            return Err(Error::invalid("lattice basis vectors must be linearly independent"));
        }
        Ok(LatticeSpec { basis, inverse })
    }

    fn inv(&self) -> Mat3 {
        self.inverse
            .or_else(|| self.basis.inverse())
            .expect("lattice basis is invertible")
    }

    pub fn validate(&self) -> Result<()> {
        LatticeSpec::new(self.basis.column(0), self.basis.column(1), self.basis.column(2)).map(|_| ())
    }

    pub fn is_cubic(&self) -> bool {
        self.basis == Mat3::IDENTITY
    }

    #[inline]
    pub fn point(&self, site: Site) -> Vec3 {
        if self.is_cubic() {
            return Vec3::new(site[0] as f64, site[1] as f64, site[2] as f64);
        }
        self.basis * Vec3::new(site[0] as f64, site[1] as f64, site[2] as f64)
    }

    #[inline]
    pub fn fractional(&self, x: Vec3) -> Vec3 {
        if self.is_cubic() {
            return x;
        }
        self.inv() * x
    }

    /// Index `j` of the cell `W + j` containing `x` (half-open convention).
    #[inline]
    pub fn cell_of(&self, x: Vec3) -> Site {
        let u = self.fractional(x);
        [
            (u[0] + 0.5).floor() as i64,
            (u[1] + 0.5).floor() as i64,
            (u[2] + 0.5).floor() as i64,
        ]
    }

    pub fn cell_volume(&self) -> f64 {
        self.basis.det().abs()
    }

    /// Diameter of the fundamental cell: the longest of its four diagonals.
    pub fn cell_diameter(&self) -> f64 {
        let (a, b, c) = (self.basis.column(0), self.basis.column(1), self.basis.column(2));
        [a + b + c, a + b - c, a - b + c, a - b - c]
            .iter()
            .map(|d| d.norm())
            .fold(0.0, f64::max)
    }

    /// Smallest distance between opposite faces of the cell.
    pub fn min_face_width(&self) -> f64 {
        let inv = self.inv();
        let m = (0..3).map(|i| inv.row(i).norm()).fold(0.0, f64::max);
        1.0 / m
    }

    /// The lattice site equal to `k`, if `k` is a lattice vector.
    pub fn as_site(&self, k: Vec3) -> Option<Site> {
        let u = self.fractional(k);
        let r = u.map(f64::round);
        if (u - r).0.iter().all(|d| d.abs() < 1e-9) {
            Some([r[0] as i64, r[1] as i64, r[2] as i64])
        } else {
            None
        }
    }

    /// Axis-aligned bounding box of the cell `W + j`.
    pub fn cell_bounds(&self, j: Site) -> Aabb {
        let c = self.point(j);
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for corner in 0..8 {
            let u = Vec3::new(
                if corner & 1 == 0 { -0.5 } else { 0.5 },
                if corner & 2 == 0 { -0.5 } else { 0.5 },
                if corner & 4 == 0 { -0.5 } else { 0.5 },
            );
            let p = c + self.basis * u;
            lo = lo.zip(p, f64::min);
            hi = hi.zip(p, f64::max);
        }
        Aabb { lo, hi }
    }

    /// Inclusive range of sites `j` whose cell could intersect `region`.
    pub fn site_range(&self, region: &Aabb) -> (Site, Site) {
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for corner in 0..8 {
            let p = Vec3::new(
                if corner & 1 == 0 { region.lo[0] } else { region.hi[0] },
                if corner & 2 == 0 { region.lo[1] } else { region.hi[1] },
                if corner & 4 == 0 { region.lo[2] } else { region.hi[2] },
            );
            let u = self.fractional(p);
            for i in 0..3 {
                lo[i] = lo[i].min((u[i] - 0.5).floor() as i64);
                hi[i] = hi[i].max((u[i] + 0.5).ceil() as i64);
            }
        }
        (lo, hi)
    }
}

/// Half-open axis-aligned box `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        Aabb { lo: quantize_vec(lo), hi: quantize_vec(hi) }
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        Aabb::new(Vec3::splat(lo), Vec3::splat(hi))
    }

    /// The fundamental cell `[-1/2, 1/2)^3` of the cubic lattice.
    pub fn unit_cell() -> Self {
        Aabb::cube(-0.5, 0.5)
    }

    pub fn is_degenerate(&self) -> bool {
        !(0..3).all(|i| self.hi[i] > self.lo[i]) || !self.lo.is_finite() || !self.hi.is_finite()
    }

    pub fn volume(&self) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        (0..3).map(|i| self.hi[i] - self.lo[i]).product()
    }

    #[inline]
    pub fn contains(&self, x: Vec3) -> bool {
        (0..3).all(|i| x[i] >= self.lo[i] && x[i] < self.hi[i])
    }

    pub fn expanded(&self, m: f64) -> Aabb {
        Aabb::new(self.lo - Vec3::splat(m), self.hi + Vec3::splat(m))
    }

    pub fn translated(&self, t: Vec3) -> Aabb {
        Aabb { lo: self.lo + t, hi: self.hi + t }
    }

    /// Euclidean distance from an interior point to the box boundary.
    pub fn depth(&self, x: Vec3) -> f64 {
        (0..3)
            .map(|i| (x[i] - self.lo[i]).min(self.hi[i] - x[i]))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub position: Vec3,
    pub charge: f64,
    /// Lattice site the nucleus was drawn from (cell index for Poisson fields).
    pub site: Site,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDescriptor {
    Iid {
        displacement: DisplacementLaw,
        charge: ChargeLaw,
        /// Truncation radius applied to unbounded displacement laws.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail_cutoff: Option<f64>,
        /// Accumulated lattice shift `k`: the realization is `K(tau_k omega)`.
        omega_shift: Site,
        /// Half-width, in cells, of the site neighbourhood when the
        /// configuration was drawn by the origin-cell protocol.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        neighborhood: Option<i64>,
    },
    Poisson {
        intensity: f64,
        charge: ChargeLaw,
    },
    /// Nuclei supplied directly by the caller.
    Explicit,
}

/// A finite realization of the random nuclei inside `window` expanded by `margin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuclearConfiguration {
    pub nuclei: Vec<Nucleus>,
    pub window: Aabb,
    pub margin: f64,
    pub lattice: LatticeSpec,
    pub seed: u64,
    pub model: ModelDescriptor,
}

impl NuclearConfiguration {
    /// A configuration from given nuclei on the cubic lattice. Positions are
    /// quantized; each must lie in `window` expanded by `margin` and be distinct.
    pub fn from_nuclei(nuclei: Vec<Nucleus>, window: Aabb, margin: f64) -> Result<Self> {
        NuclearConfiguration::from_nuclei_on(LatticeSpec::cubic(), nuclei, window, margin)
    }

    pub fn from_nuclei_on(
        lattice: LatticeSpec,
        nuclei: Vec<Nucleus>,
        window: Aabb,
        margin: f64,
    ) -> Result<Self> {
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(Error::invalid(format!("margin must be a nonnegative length (got {margin})")));
        }
        let window = Aabb::new(window.lo, window.hi);
        let region = window.expanded(margin);
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(nuclei.len());
        for (i, n) in nuclei.into_iter().enumerate() {
            let position = quantize_vec(n.position);
            if !position.is_finite() || !region.contains(position) {
                return Err(Error::invalid(format!(
                    "nucleus {i} at {:?} lies outside window expanded by margin",
                    n.position.0
                )));
            }
            if !(n.charge.is_finite() && n.charge > 0.0) {
                return Err(Error::invalid(format!("nucleus {i} has non-positive charge {}", n.charge)));
            }
            if !seen.insert(position.0.map(|c| (c + 0.0).to_bits())) {
                return Err(Error::invalid(format!("nucleus {i} duplicates an earlier position")));
            }
            out.push(Nucleus { position, charge: n.charge, site: n.site });
        }
        Ok(NuclearConfiguration {
            nuclei: out,
            window,
            margin,
            lattice,
            seed: 0,
            model: ModelDescriptor::Explicit,
        })
    }

    /// Nuclei at the given points with unit charge, each tagged by its cell.
    pub fn from_points(points: &[Vec3], window: Aabb, margin: f64) -> Result<Self> {
        let lattice = LatticeSpec::cubic();
        let nuclei = points
            .iter()
            .map(|&p| Nucleus { position: p, charge: 1.0, site: lattice.cell_of(p) })
            .collect();
        NuclearConfiguration::from_nuclei(nuclei, window, margin)
    }

    pub fn len(&self) -> usize {
        self.nuclei.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nuclei.is_empty()
    }

    /// `window` expanded by `margin`: the region where the realization is complete.
    pub fn sampled_region(&self) -> Aabb {
        self.window.expanded(self.margin)
    }

    pub fn total_charge(&self) -> f64 {
        self.nuclei.iter().map(|n| n.charge).sum()
    }

    /// Number of nuclei inside the window proper.
    pub fn count_in_window(&self) -> usize {
        self.nuclei.iter().filter(|n| self.window.contains(n.position)).count()
    }

    /// `K(tau_k omega) = K(omega) - k` for the lattice vector with coordinates `k`.
    pub fn shift(&self, k: Site) -> NuclearConfiguration {
        let t = self.lattice.point(k);
        let nuclei = self
            .nuclei
            .iter()
            .map(|n| Nucleus {
                position: n.position - t,
                charge: n.charge,
                site: [n.site[0] - k[0], n.site[1] - k[1], n.site[2] - k[2]],
            })
            .collect();
        let model = match &self.model {
            ModelDescriptor::Iid { displacement, charge, tail_cutoff, omega_shift, neighborhood } => {
                ModelDescriptor::Iid {
                    displacement: displacement.clone(),
                    charge: charge.clone(),
                    tail_cutoff: *tail_cutoff,
                    omega_shift: [omega_shift[0] + k[0], omega_shift[1] + k[1], omega_shift[2] + k[2]],
                    neighborhood: *neighborhood,
                }
            }
            m => m.clone(),
        };
        NuclearConfiguration {
            nuclei,
            window: self.window.translated(-t),
            margin: self.margin,
            lattice: self.lattice.clone(),
            seed: self.seed,
            model,
        }
    }

    /// As [`shift`](Self::shift), taking a Cartesian vector that must lie on the lattice.
    pub fn shift_by_vector(&self, k: Vec3) -> Result<NuclearConfiguration> {
        let site = self
            .lattice
            .as_site(k)
            .ok_or_else(|| Error::invalid(format!("shift {k:?} is not a lattice vector")))?;
        Ok(self.shift(site))
    }
}

/// Convenience alias.
pub fn shift_configuration(config: &NuclearConfiguration, k: Vec3) -> Result<NuclearConfiguration> {
    config.shift_by_vector(k)
}
