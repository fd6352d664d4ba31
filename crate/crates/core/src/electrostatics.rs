//! Classical pair energies, screening clouds and the trial-state energy.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{NuclearConfiguration, Site};
use crate::error::{Error, Result};
use crate::geometry::DomainShape;
use crate::rng::{derive_seed, rng_from_seed};
use crate::spatial::build_index;
use crate::stats::pairwise_sum;
use crate::vec3::Vec3;

/// Default kinetic surrogate constant.
pub const DEFAULT_C_KIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCharge {
    pub position: Vec3,
    pub charge: f64,
}

impl PointCharge {
    pub fn new(position: Vec3, charge: f64) -> Self {
        PointCharge { position, charge }
    }
}

fn check_charges(charges: &[PointCharge]) -> Result<()> {
    for (i, c) in charges.iter().enumerate() {
        if !(c.position.is_finite() && c.charge.is_finite()) {
            return Err(Error::invalid(format!("charge {i} has non-finite data")));
        }
    }
    Ok(())
}

/// `sum_{i<j} q_i q_j k(|y_i - y_j|)`, rows summed in parallel and reduced in order.
fn pair_energy(charges: &[PointCharge], kernel: impl Fn(f64) -> f64 + Sync) -> Result<f64> {
    check_charges(charges)?;
    let rows: Vec<Result<f64>> = (0..charges.len())
        .into_par_iter()
        .map(|i| {
            let a = charges[i];
            let mut terms = Vec::with_capacity(charges.len() - i);
            for (j, b) in charges.iter().enumerate().skip(i + 1) {
                let r = (a.position - b.position).norm();
                if r == 0.0 {
                    return Err(Error::invalid(format!("charges {i} and {j} coincide")));
                }
                terms.push(a.charge * b.charge * kernel(r));
            }
            Ok(pairwise_sum(&terms))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&rows))
}

/// `sum_{i<j} q_i q_j / |y_i - y_j|`.
pub fn coulomb_energy(charges: &[PointCharge]) -> Result<f64> {
    pair_energy(charges, |r| 1.0 / r)
}

/// `sum_{i<j} q_i q_j e^{-m r} / r`.
pub fn yukawa_energy(charges: &[PointCharge], mass: f64) -> Result<f64> {
    if !(mass.is_finite() && mass >= 0.0) {
        return Err(Error::invalid(format!("yukawa mass must be >= 0 (got {mass})")));
    }
    pair_energy(charges, move |r| (-mass * r).exp() / r)
}

/// `sum_{i != j} q_i q_j (1 - e^{-r}) / r + sum_i q_i^2`, which is nonnegative.
pub fn yukawa_comparison_deficit(charges: &[PointCharge]) -> Result<f64> {
    // -expm1 keeps (1 - e^{-r}) accurate for close pairs
    let pairs = pair_energy(charges, |r| -(-r).exp_m1() / r)?;
    let diag = pairwise_sum(&charges.iter().map(|c| c.charge * c.charge).collect::<Vec<_>>());
    Ok(2.0 * pairs + diag)
}

/// `Dip(R, R')` for uniform clouds of charge `-z` at `X` and `-z'` at `X'`.
/// The offsets must not exceed `|R - R'| / 4`, which keeps the clouds apart.
pub fn dipole_interaction(r: Vec3, z: f64, x: Vec3, r2: Vec3, z2: f64, x2: Vec3) -> Result<f64> {
    let d = (r - r2).norm();
    if d == 0.0 {
        return Err(Error::invalid("dipole nuclei coincide"));
    }
    let (o1, o2) = ((x - r).norm(), (x2 - r2).norm());
    if o1 > d / 4.0 || o2 > d / 4.0 {
        return Err(Error::invalid(format!(
            "cloud offsets {o1} and {o2} exceed |R - R'|/4 = {}; the clouds may overlap",
            d / 4.0
        )));
    }
    let zz = z * z2;
    Ok(zz / d + zz / (x - x2).norm() - zz / (x - r2).norm() - zz / (x2 - r).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleAudit {
    pub samples: usize,
    /// Pairs with `|Dip| > 6 z z' / r`.
    pub violations: usize,
    /// `max |Dip| r (1 + r^2) / (z z')`.
    pub max_decay_ratio: f64,
}

/// Random admissible pairs with `r` uniform in `[r_min, r_max]`, offsets
/// uniform in the ball of radius `max_offset` and charges uniform in `[0.1, 5]`.
pub fn dipole_audit(samples: usize, r_min: f64, r_max: f64, max_offset: f64, seed: u64) -> Result<DipoleAudit> {
    if !(r_min > 0.0 && r_min <= r_max && max_offset >= 0.0 && 4.0 * max_offset <= r_min) {
        return Err(Error::precondition("dipole audit needs 0 < r_min <= r_max and 4 max_offset <= r_min"));
    }
    let rows: Vec<Result<(bool, f64)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, "dipole", i as u64));
            let mut unit = || loop {
                let v = Vec3::new(
                    2.0 * rng.random::<f64>() - 1.0,
                    2.0 * rng.random::<f64>() - 1.0,
                    2.0 * rng.random::<f64>() - 1.0,
                );
                if v.norm2() <= 1.0 && v.norm2() > 0.0 {
                    break v;
                }
            };
            let dir = unit().normalized();
            let o1 = unit() * max_offset;
            let o2 = unit() * max_offset;
            let mut rng = rng_from_seed(derive_seed(seed, "dipole-scalars", i as u64));
            let dist = r_min + (r_max - r_min) * rng.random::<f64>();
            let z = 0.1 + 4.9 * rng.random::<f64>();
            let z2 = 0.1 + 4.9 * rng.random::<f64>();
            let (ra, rb) = (Vec3::ZERO, dir * dist);
            let rr = (ra - rb).norm();
            let dip = dipole_interaction(ra, z, ra + o1, rb, z2, rb + o2)?;
            let zz = z * z2;
            Ok((dip.abs() > 6.0 * zz / rr, dip.abs() * rr * (1.0 + rr * rr) / zz))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DipoleAudit {
        samples,
        violations: rows.iter().filter(|r| r.0).count(),
        max_decay_ratio: rows.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

/// Random system: `n` uniform in `1..=n_max`, charges uniform in `[-2, 2]`,
/// positions uniform in `[0, side)^3` with pairwise separation at least `min_sep`.
pub fn random_charge_system(n_max: usize, side: f64, min_sep: f64, seed: u64) -> Vec<PointCharge> {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(1..=n_max.max(1));
    let mut out: Vec<PointCharge> = Vec::with_capacity(n);
    while out.len() < n {
        let p = Vec3::new(side * rng.random::<f64>(), side * rng.random::<f64>(), side * rng.random::<f64>());
        let q = -2.0 + 4.0 * rng.random::<f64>();
        if out.iter().all(|c| (c.position - p).norm() >= min_sep) {
            out.push(PointCharge::new(p, q));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    OnTop,
    /// Displaced by `delta' / 4` along the unit `direction`.
    ConeOffset { direction: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningCloud {
    pub nucleus: PointCharge,
    pub center: Vec3,
    pub radius: f64,
    pub charge: f64,
    /// `min(delta, cone_epsilon)`.
    pub delta_prime: f64,
    pub placement: Placement,
}

pub(crate) struct DomainNuclei {
    pub(crate) positions: Vec<Vec3>,
    pub(crate) charges: Vec<f64>,
    pub(crate) deltas: Vec<f64>,
    pub(crate) truncated: bool,
}

pub(crate) fn nuclei_in_domain(config: &NuclearConfiguration, d: &DomainShape) -> Result<DomainNuclei> {
    let inside: Vec<usize> = (0..config.nuclei.len()).filter(|&i| d.contains(config.nuclei[i].position)).collect();
    if inside.is_empty() {
        return Ok(DomainNuclei { positions: vec![], charges: vec![], deltas: vec![], truncated: false });
    }
    let index = build_index(config)?;
    let ds = inside.par_iter().map(|&i| index.delta(i)).collect::<Result<Vec<_>>>()?;
    Ok(DomainNuclei {
        positions: inside.iter().map(|&i| config.nuclei[i].position).collect(),
        charges: inside.iter().map(|&i| config.nuclei[i].charge).collect(),
        deltas: ds.iter().map(|n| n.delta).collect(),
        truncated: ds.iter().any(|n| n.truncated),
    })
}

fn check_cone_epsilon(cone_epsilon: f64) -> Result<()> {
    if !(cone_epsilon.is_finite() && cone_epsilon > 0.0) {
        return Err(Error::invalid(format!("cone_epsilon must be positive (got {cone_epsilon})")));
    }
    Ok(())
}

fn screen(nuclei: &DomainNuclei, d: &DomainShape, cone_epsilon: f64) -> Result<Vec<ScreeningCloud>> {
    let clouds = (0..nuclei.positions.len())
        .into_par_iter()
        .map(|i| {
            let r = nuclei.positions[i];
            let z = nuclei.charges[i];
            let dp = nuclei.deltas[i].min(cone_epsilon);
            let radius = dp / 8.0;
            let mut placement = Placement::OnTop;
            let mut center = r;
            if d.boundary_distance(r) <= cone_epsilon {
                let target = d.nearest_eroded_point(r, cone_epsilon).ok_or_else(|| {
                    Error::precondition(format!(
                        "nucleus {i} at {:?}: the domain has no points at depth {cone_epsilon}",
                        r.0
                    ))
                })?;
                let v = target - r;
                if v.norm() > 0.0 {
                    let u = v.normalized();
                    center = r + u * (dp / 4.0);
                    placement = Placement::ConeOffset { direction: u };
                }
            }
            if !(d.contains(center) && d.boundary_distance(center) >= radius) {
                return Err(Error::precondition(format!(
                    "nucleus {i} at {:?}: no inward direction keeps its cloud inside the domain",
                    r.0
                )));
            }
            Ok(ScreeningCloud {
                nucleus: PointCharge::new(r, z),
                center,
                radius,
                charge: -z,
                delta_prime: dp,
                placement,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    check_disjoint(&clouds)?;
    Ok(clouds)
}

/// Pairwise `|X - X'| > r + r'`, via a bucket grid of spacing `2 max r`.
fn check_disjoint(clouds: &[ScreeningCloud]) -> Result<()> {
    let rmax = clouds.iter().map(|c| c.radius).fold(0.0, f64::max);
    if clouds.len() < 2 || rmax == 0.0 {
        return Ok(());
    }
    let h = 2.0 * rmax;
    let key = |x: Vec3| -> Site { [(x[0] / h).floor() as i64, (x[1] / h).floor() as i64, (x[2] / h).floor() as i64] };
    let mut grid: HashMap<Site, Vec<usize>> = HashMap::new();
    for (i, c) in clouds.iter().enumerate() {
        grid.entry(key(c.center)).or_default().push(i);
    }
    for (i, c) in clouds.iter().enumerate() {
        let k = key(c.center);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else { continue };
                    for &j in bucket {
                        if j > i && (c.center - clouds[j].center).norm() <= c.radius + clouds[j].radius {
                            return Err(Error::precondition(format!("screening clouds {i} and {j} overlap")));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// One neutralizing cloud per nucleus of `K cap D`. The caller is expected
/// to have audited the cone property of `D` at `cone_epsilon`.
pub fn build_screening(config: &NuclearConfiguration, d: &DomainShape, cone_epsilon: f64) -> Result<Vec<ScreeningCloud>> {
    check_cone_epsilon(cone_epsilon)?;
    let nuclei = nuclei_in_domain(config, d)?;
    screen(&nuclei, d, cone_epsilon)
}

/// Nuclear plus cloud charge of a screened system.
pub fn screened_charge(clouds: &[ScreeningCloud]) -> f64 {
    clouds.iter().map(|c| c.nucleus.charge + c.charge).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellEnergy {
    pub cell: Site,
    pub nuclei: usize,
    pub kinetic: f64,
    pub boundary: f64,
    pub lieb_yau: f64,
}

pub const ENERGY_CSV_HEADER: [&str; 7] = ["i", "j", "k", "nuclei", "kinetic", "boundary", "lieb_yau"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEnergyReport {
    pub kinetic: f64,
    pub boundary: f64,
    /// `(Z^2/8) sum 1/delta`, present for constant-charge configurations.
    pub lieb_yau: Option<f64>,
    pub cone_epsilon: f64,
    pub c_kin: f64,
    pub nuclei: usize,
    pub collar_nuclei: usize,
    pub on_top: usize,
    /// Some `delta` was cut by the sampled region.
    pub truncated: bool,
    pub cells: Vec<CellEnergy>,
}

impl TrialEnergyReport {
    /// Kinetic plus boundary term.
    pub fn total(&self) -> f64 {
        self.kinetic + self.boundary
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ENERGY_CSV_HEADER)?;
        for c in &self.cells {
            w.write_record([
                c.cell[0].to_string(),
                c.cell[1].to_string(),
                c.cell[2].to_string(),
                c.nuclei.to_string(),
                c.kinetic.to_string(),
                c.boundary.to_string(),
                c.lieb_yau.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn constant_charge(charges: &[f64]) -> Option<f64> {
    let first = *charges.first()?;
    charges.iter().all(|&z| z == first).then_some(first)
}

/// Kinetic surrogate `c_kin sum z^{5/3} / delta'^2` and the collar pair sum
/// `sum_{R != R'} z z' / (|R - R'| (1 + |R - R'|^2))` over ordered pairs in
/// `{x : d(x, boundary) <= cone_epsilon}`.
pub fn trial_energy(
    config: &NuclearConfiguration,
    d: &DomainShape,
    cone_epsilon: f64,
    c_kin: f64,
) -> Result<TrialEnergyReport> {
    check_cone_epsilon(cone_epsilon)?;
    if !(c_kin.is_finite() && c_kin >= 0.0) {
        return Err(Error::invalid(format!("c_kin must be >= 0 (got {c_kin})")));
    }
    let nuclei = nuclei_in_domain(config, d)?;
    let clouds = screen(&nuclei, d, cone_epsilon)?;
    let n = nuclei.positions.len();
    let kinetic_i: Vec<f64> =
        clouds.iter().map(|c| c_kin * c.nucleus.charge.powf(5.0 / 3.0) / (c.delta_prime * c.delta_prime)).collect();
    let ly_i: Vec<f64> = (0..n).map(|i| nuclei.charges[i].powi(2) / 8.0 / nuclei.deltas[i]).collect();
    let collar: Vec<usize> = (0..n).filter(|&i| d.boundary_distance(nuclei.positions[i]) <= cone_epsilon).collect();
    let mut boundary_i = vec![0.0; n];
    let rows: Vec<f64> = collar
        .par_iter()
        .map(|&i| {
            let (a, za) = (nuclei.positions[i], nuclei.charges[i]);
            let terms: Vec<f64> = collar
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let r = (a - nuclei.positions[j]).norm();
                    za * nuclei.charges[j] / (r * (1.0 + r * r))
                })
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    for (k, &i) in collar.iter().enumerate() {
        boundary_i[i] = rows[k];
    }
    let lattice = &config.lattice;
    let mut by_cell: Vec<(Site, usize)> = (0..n).map(|i| (lattice.cell_of(nuclei.positions[i]), i)).collect();
    by_cell.sort();
    let mut cells: Vec<CellEnergy> = Vec::new();
    for group in by_cell.chunk_by(|a, b| a.0 == b.0) {
        let idx: Vec<usize> = group.iter().map(|g| g.1).collect();
        let pick = |v: &[f64]| pairwise_sum(&idx.iter().map(|&i| v[i]).collect::<Vec<_>>());
        cells.push(CellEnergy {
            cell: group[0].0,
            nuclei: idx.len(),
            kinetic: pick(&kinetic_i),
            boundary: pick(&boundary_i),
            lieb_yau: pick(&ly_i),
        });
    }
    let lieb_yau = if n == 0 {
        Some(0.0)
    } else {
        constant_charge(&nuclei.charges).map(|_| pairwise_sum(&ly_i))
    };
    Ok(TrialEnergyReport {
        kinetic: pairwise_sum(&kinetic_i),
        boundary: pairwise_sum(&rows),
        lieb_yau,
        cone_epsilon,
        c_kin,
        nuclei: n,
        collar_nuclei: collar.len(),
        on_top: clouds.iter().filter(|c| c.placement == Placement::OnTop).count(),
        truncated: nuclei.truncated,
        cells,
    })
}

/// Kinetic plus ordered-pair collar sum for nuclei with the given depths in
/// their region, without building the clouds (neither term depends on the
/// cloud placement).
pub(crate) fn proxy_energy(positions: &[Vec3], charges: &[f64], deltas: &[f64], depths: &[f64], eps: f64, c_kin: f64) -> f64 {
    let kinetic: Vec<f64> = (0..positions.len())
        .map(|i| {
            let dp = deltas[i].min(eps);
            c_kin * charges[i].powf(5.0 / 3.0) / (dp * dp)
        })
        .collect();
    let collar: Vec<usize> = (0..positions.len()).filter(|&i| depths[i] <= eps).collect();
    let mut pairs = Vec::with_capacity(collar.len() * collar.len());
    for &i in &collar {
        for &j in &collar {
            if i != j {
                let r = (positions[i] - positions[j]).norm();
                pairs.push(charges[i] * charges[j] / (r * (1.0 + r * r)));
            }
        }
    }
    pairwise_sum(&kinetic) + pairwise_sum(&pairs)
}

/// `(Z^2/8) sum_{K cap D} 1/delta` for a configuration of constant charge `z`.
pub fn lieb_yau_term(config: &NuclearConfiguration, d: &DomainShape, z: f64) -> Result<f64> {
    if let Some(i) = config.nuclei.iter().position(|n| n.charge != z) {
        return Err(Error::invalid(format!(
            "lieb_yau_term needs constant charges {z}; nucleus {i} has charge {}",
            config.nuclei[i].charge
        )));
    }
    let nuclei = nuclei_in_domain(config, d)?;
    let terms: Vec<f64> = nuclei.deltas.iter().map(|d| 1.0 / d).collect();
    Ok(z * z / 8.0 * pairwise_sum(&terms))
}
