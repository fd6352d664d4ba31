//! Spatial averages over growing domains, neutrality and proxy-energy scaling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Aabb, ModelSpec, NuclearConfiguration, Site};
use crate::electrostatics::{nuclei_in_domain, proxy_energy, trial_energy};
use crate::error::{Error, Result};
use crate::geometry::{
    fisher_a_estimate, polytope::barycentric, reference_simplex, sample_group_elements, DomainShape,
    FisherEstimate, RigidTransform, ShapeKind, TilingSpec, TranslationMode,
};
use crate::moments::{Statistic, DEFAULT_LEVEL, MIN_REPLICAS};
use crate::rng::derive_seed;
use crate::spatial::{build_index, cell_statistics, CellIndex};
use crate::stats::{ols, pairwise_sum, Summary};
use crate::vec3::Vec3;

/// Extra margin beyond the law's support, so that cut `delta` values are negligible.
pub const NEIGHBOR_MARGIN: f64 = 3.0;
pub const MIN_GAP_GROUP_SAMPLES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Cube,
    Ball,
    Simplex,
}

/// Domains anchored at the cell corner `(-1/2, -1/2, -1/2)`: the cube
/// `[-1/2, L - 1/2)^3`, the ball of diameter `L` and the regular simplex of
/// circumradius `L/2`, both centred at the cube's centre.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainSequence {
    pub family: ShapeFamily,
    pub sizes: Vec<f64>,
    pub domains: Vec<DomainShape>,
    /// `max_n diam(D_n) |D_n|^{-1/3}`.
    pub containment: f64,
    pub fisher: Vec<FisherEstimate>,
}

impl DomainSequence {
    pub fn new(family: ShapeFamily, sizes: &[f64]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::invalid("domain sequence needs at least one size"));
        }
        let mut domains = Vec::with_capacity(sizes.len());
        for &l in sizes {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!("domain size must be positive (got {l})")));
            }
            let c = RigidTransform::translation(Vec3::splat((l - 1.0) / 2.0));
            let kind = match family {
                ShapeFamily::Cube => ShapeKind::Cube { side: l },
                ShapeFamily::Ball => ShapeKind::Ball { radius: l / 2.0 },
                ShapeFamily::Simplex => {
                    ShapeKind::Simplex { vertices: reference_simplex().map(|v| (v * (l / 2.0)).0) }
                }
            };
            domains.push(DomainShape::new(kind, c)?);
        }
        if domains.windows(2).any(|w| w[1].volume() <= w[0].volume()) {
            return Err(Error::invalid("domain volumes must be strictly increasing"));
        }
        let containment = domains.iter().map(|d| d.diameter() / d.volume().cbrt()).fold(0.0, f64::max);
        Ok(DomainSequence { family, sizes: sizes.to_vec(), domains, containment, fisher: Vec::new() })
    }

    pub fn cubes(sizes: &[usize]) -> Result<Self> {
        DomainSequence::new(ShapeFamily::Cube, &sizes.iter().map(|&l| l as f64).collect::<Vec<_>>())
    }

    /// Fisher audit of every domain.
    pub fn audit(mut self, grid: &[f64], n_mc: usize, seed: u64) -> Result<Self> {
        self.fisher = self
            .domains
            .iter()
            .enumerate()
            .map(|(i, d)| fisher_a_estimate(d, grid, n_mc, derive_seed(seed, "sequence-fisher", i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self)
    }

    pub fn is_audited(&self) -> bool {
        self.fisher.len() == self.domains.len()
    }

    /// Cell-aligned window holding every domain.
    pub fn window(&self) -> Aabb {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for d in &self.domains {
            let b = d.bounds();
            lo = lo.zip(b.lo, f64::min);
            hi = hi.zip(b.hi, f64::max);
        }
        let lo = lo.map(|x| (x + 0.5).floor() - 0.5);
        let hi = hi.map(|x| (x - 0.5).ceil() + 0.5);
        Aabb { lo, hi }
    }

    /// Lattice sites in `D_n`.
    pub fn sites(&self, n: usize) -> Vec<Site> {
        let d = &self.domains[n];
        let b = d.bounds();
        let mut out = Vec::new();
        for i in b.lo[0].ceil() as i64..=b.hi[0].floor() as i64 {
            for j in b.lo[1].ceil() as i64..=b.hi[1].floor() as i64 {
                for k in b.lo[2].ceil() as i64..=b.hi[2].floor() as i64 {
                    if d.contains(Vec3::new(i as f64, j as f64, k as f64)) {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }

    fn sample(&self, model: &ModelSpec, seed: u64) -> Result<NuclearConfiguration> {
        model.sample(self.window(), model.required_margin() + NEIGHBOR_MARGIN, seed)
    }
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas < MIN_REPLICAS {
        return Err(Error::precondition(format!("needs replicas >= {MIN_REPLICAS} (got {replicas})")));
    }
    Ok(())
}

/// Per-cell values of an ergodic statistic on every cell of the index window.
fn cell_values(index: &CellIndex, config: &NuclearConfiguration, statistic: &Statistic) -> Result<Vec<(Site, f64)>> {
    let cells = index.window_cells();
    cells
        .into_par_iter()
        .map(|j| {
            let v = match statistic {
                Statistic::X0 => index.bucket(j).count() as f64,
                Statistic::ChargePerCell => pairwise_sum(&index.bucket(j).map(|i| config.nuclei[i].charge).collect::<Vec<_>>()),
                Statistic::X1 => cell_statistics(index, j, 1.0, &[])?.x1,
                Statistic::XpTruncated { p, eps } => cell_statistics(index, j, *eps, &[*p])?.xp[0].value,
                Statistic::DeltaAtOrigin | Statistic::InverseDeltaAtOrigin => {
                    return Err(Error::invalid("ergodic averages take cell statistics (X0, X1, Xp, charge_per_cell)"))
                }
            };
            Ok((j, v))
        })
        .collect()
}

/// `E X` when it is known in closed form.
pub fn expected_statistic(model: &ModelSpec, statistic: &Statistic) -> Option<f64> {
    let w = model.lattice().cell_volume();
    match (statistic, model) {
        (Statistic::ChargePerCell, _) => Some(model.mean_charge_density() * w),
        (Statistic::X0, ModelSpec::Poisson { intensity, .. }) => Some(intensity * w),
        (Statistic::X0, ModelSpec::Iid { charge, .. }) => Some(match charge {
            crate::config::ChargeLaw::Vacancy { p_vac, .. } => 1.0 - p_vac,
            _ => 1.0,
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSize {
    pub size: f64,
    pub volume: f64,
    pub sites: usize,
    /// The average along the single realization of replica 0.
    pub trace: f64,
    pub mean: f64,
    pub stderr: f64,
    /// `E |average - reference|` across replicas.
    pub l1_error: f64,
    pub l1_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub statistic: String,
    pub replicas: usize,
    pub reference: f64,
    /// True when `reference` is the exact expectation; otherwise it is the
    /// cross-replica mean at the largest size.
    pub reference_exact: bool,
    pub sizes: Vec<ErgodicSize>,
}

/// `(1/|D_n|) sum_{k in D_n} X(tau_k omega)` per replica and size. Each
/// replica draws one configuration on the window holding all `D_n`.
pub fn ergodic_average(
    model: &ModelSpec,
    statistic: &Statistic,
    seq: &DomainSequence,
    replicas: usize,
    seed: u64,
) -> Result<ErgodicReport> {
    model.validate()?;
    if replicas == 0 {
        return Err(Error::precondition("ergodic_average needs at least one replica"));
    }
    let site_sets: Vec<Vec<Site>> = (0..seq.domains.len()).map(|n| seq.sites(n)).collect();
    let per_replica: Vec<Vec<f64>> = (0..replicas)
        .map(|r| {
            let config = seq.sample(model, derive_seed(seed, "ergodic", r as u64))?;
            let index = build_index(&config)?;
            let values: std::collections::HashMap<Site, f64> =
                cell_values(&index, &config, statistic)?.into_iter().collect();
            Ok(site_sets
                .iter()
                .zip(&seq.domains)
                .map(|(sites, d)| {
                    let v: Vec<f64> = sites.iter().map(|s| values[s]).collect();
                    pairwise_sum(&v) / d.volume()
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let exact = expected_statistic(model, statistic);
    let last = seq.domains.len() - 1;
    let reference = exact.unwrap_or_else(|| Summary::of(&per_replica.iter().map(|v| v[last]).collect::<Vec<_>>()).mean);
    let sizes = (0..seq.domains.len())
        .map(|n| {
            let avgs: Vec<f64> = per_replica.iter().map(|v| v[n]).collect();
            let devs: Vec<f64> = avgs.iter().map(|a| (a - reference).abs()).collect();
            let s = Summary::of(&avgs);
            let l = Summary::of(&devs);
            ErgodicSize {
                size: seq.sizes[n],
                volume: seq.domains[n].volume(),
                sites: site_sets[n].len(),
                trace: avgs[0],
                mean: s.mean,
                stderr: s.stderr,
                l1_error: l.mean,
                l1_stderr: l.stderr,
            }
        })
        .collect();
    Ok(ErgodicReport { statistic: statistic.id(), replicas, reference, reference_exact: exact.is_some(), sizes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeutralitySize {
    pub size: f64,
    pub volume: f64,
    pub mean: f64,
    pub stderr: f64,
    pub lo: f64,
    pub hi: f64,
    pub covers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralityReport {
    /// Expected charge per unit volume.
    pub z_av: f64,
    pub level: f64,
    pub replicas: usize,
    pub sizes: Vec<NeutralitySize>,
    /// Per replica and size: `(1/|D|) sum_{K cap D} z`.
    pub values: Vec<Vec<f64>>,
}

/// `(1/|D_n|) sum_{(R,z) in K cap D_n} z` with a 99% interval per size.
pub fn neutrality_estimate(model: &ModelSpec, seq: &DomainSequence, replicas: usize, seed: u64) -> Result<NeutralityReport> {
    model.validate()?;
    if replicas < 2 {
        return Err(Error::precondition("neutrality_estimate needs at least two replicas"));
    }
    let values: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let config = seq.sample(model, derive_seed(seed, "neutrality", r as u64))?;
            Ok(seq
                .domains
                .iter()
                .map(|d| {
                    let zs: Vec<f64> =
                        config.nuclei.iter().filter(|n| d.contains(n.position)).map(|n| n.charge).collect();
                    pairwise_sum(&zs) / d.volume()
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let z_av = model.mean_charge_density();
    let sizes = (0..seq.domains.len())
        .map(|n| {
            let s = Summary::of(&values.iter().map(|v| v[n]).collect::<Vec<_>>());
            let (lo, hi) = s.interval(DEFAULT_LEVEL);
            NeutralitySize {
                size: seq.sizes[n],
                volume: seq.domains[n].volume(),
                mean: s.mean,
                stderr: s.stderr,
                lo,
                hi,
                covers: lo <= z_av && z_av <= hi,
            }
        })
        .collect();
    Ok(NeutralityReport { z_av, level: DEFAULT_LEVEL, replicas, sizes, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub size: f64,
    pub volume: f64,
    pub replicas: usize,
    /// Mean of `F/|D|`.
    pub mean: f64,
    pub stderr: f64,
    /// `E |F/|D| - mean|`.
    pub l1_dev: f64,
    pub kinetic_mean: f64,
    pub boundary_mean: f64,
    pub truncated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub points: Vec<ScalingPoint>,
    /// Two-point extrapolation from the largest sizes assuming `f + b |D|^{-1/3}`.
    pub richardson_limit: f64,
    /// Least-squares fit of `f + b |D|^{-1/3}` over all sizes.
    pub fitted_limit: f64,
    pub fitted_correction: f64,
    /// `|mean - fit| / |fitted_limit|` at the largest size.
    pub fit_residual: f64,
    /// Slope of `log l1_dev` against `log |D|` (`NaN` when some deviation is 0).
    pub deviation_slope: f64,
    pub deviation_slope_stderr: f64,
    /// Slope of `log (boundary mean / |D|)` against `log |D|`.
    pub boundary_slope: f64,
    pub kinetic_limit: f64,
}

/// `f + b x` with `x = |D|^{-1/3}`, by least squares.
fn correction_fit(volumes: &[f64], means: &[f64]) -> (f64, f64) {
    let x: Vec<f64> = volumes.iter().map(|v| v.powf(-1.0 / 3.0)).collect();
    match ols(&x, means) {
        Some(f) => (f.intercept, f.slope),
        None => (means.last().copied().unwrap_or(f64::NAN), 0.0),
    }
}

fn richardson(volumes: &[f64], means: &[f64]) -> f64 {
    let n = volumes.len();
    if n < 2 {
        return means.last().copied().unwrap_or(f64::NAN);
    }
    let (x1, x2) = (volumes[n - 2].powf(-1.0 / 3.0), volumes[n - 1].powf(-1.0 / 3.0));
    let b = (means[n - 2] - means[n - 1]) / (x1 - x2);
    means[n - 1] - b * x2
}

fn log_slope(volumes: &[f64], ys: &[f64]) -> (f64, f64) {
    if volumes.len() < 2 || ys.iter().any(|y| !(*y > 0.0)) {
        return (f64::NAN, f64::NAN);
    }
    let lx: Vec<f64> = volumes.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ols(&lx, &ly).map(|f| (f.slope, f.slope_stderr)).unwrap_or((f64::NAN, f64::NAN))
}

/// Trial energy per volume across sizes and replicas.
pub fn thermo_scan(
    model: &ModelSpec,
    seq: &DomainSequence,
    cone_epsilon: f64,
    c_kin: f64,
    replicas: usize,
    seed: u64,
) -> Result<ScalingSeries> {
    model.validate()?;
    check_replicas(replicas)?;
    if !seq.is_audited() {
        return Err(Error::precondition("thermo_scan needs a Fisher-audited domain sequence"));
    }
    // (total, kinetic, boundary, truncated) per replica and size
    let rows: Vec<Vec<(f64, f64, f64, bool)>> = (0..replicas)
        .map(|r| {
            let config = seq.sample(model, derive_seed(seed, "thermo", r as u64))?;
            seq.domains
                .iter()
                .map(|d| {
                    let e = trial_energy(&config, d, cone_epsilon, c_kin)?;
                    let v = d.volume();
                    Ok((e.total() / v, e.kinetic / v, e.boundary / v, e.truncated))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<ScalingPoint> = (0..seq.domains.len())
        .map(|n| {
            let f: Vec<f64> = rows.iter().map(|r| r[n].0).collect();
            let s = Summary::of(&f);
            let dev: Vec<f64> = f.iter().map(|x| (x - s.mean).abs()).collect();
            ScalingPoint {
                size: seq.sizes[n],
                volume: seq.domains[n].volume(),
                replicas,
                mean: s.mean,
                stderr: s.stderr,
                l1_dev: pairwise_sum(&dev) / replicas as f64,
                kinetic_mean: pairwise_sum(&rows.iter().map(|r| r[n].1).collect::<Vec<_>>()) / replicas as f64,
                boundary_mean: pairwise_sum(&rows.iter().map(|r| r[n].2).collect::<Vec<_>>()) / replicas as f64,
                truncated: rows.iter().filter(|r| r[n].3).count(),
            }
        })
        .collect();
    let vols: Vec<f64> = points.iter().map(|p| p.volume).collect();
    let means: Vec<f64> = points.iter().map(|p| p.mean).collect();
    let (f, b) = correction_fit(&vols, &means);
    let last = points.len() - 1;
    let fit_residual = (means[last] - (f + b * vols[last].powf(-1.0 / 3.0))).abs() / f.abs();
    let (deviation_slope, deviation_slope_stderr) =
        log_slope(&vols, &points.iter().map(|p| p.l1_dev).collect::<Vec<_>>());
    let (boundary_slope, _) = log_slope(&vols, &points.iter().map(|p| p.boundary_mean).collect::<Vec<_>>());
    let kinetic_limit = richardson(&vols, &points.iter().map(|p| p.kinetic_mean).collect::<Vec<_>>());
    Ok(ScalingSeries {
        richardson_limit: richardson(&vols, &means),
        fitted_limit: f,
        fitted_correction: b,
        fit_residual,
        deviation_slope,
        deviation_slope_stderr,
        boundary_slope,
        kinetic_limit,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    pub c_gs: f64,
    pub cone_epsilon: f64,
    pub c_kin: f64,
}

impl Default for GapParams {
    fn default() -> Self {
        GapParams { c_gs: 1.0, cone_epsilon: 0.5, c_kin: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub scale: f64,
    pub c_gs: f64,
    pub lhs: f64,
    /// `|W| E_g sum_j F(D cap g ell Delta_j) / |ell Delta|`.
    pub integral: f64,
    pub integral_stderr: f64,
    pub rhs: f64,
    pub gap: f64,
    pub nuclei: usize,
    pub n_g: usize,
}

/// Proxy energy `F(omega, D)` compared with its simplex-tiling average.
pub fn graf_schenker_gap(
    config: &NuclearConfiguration,
    d: &DomainShape,
    tiling: &TilingSpec,
    n_g: usize,
    params: GapParams,
    seed: u64,
) -> Result<GapReport> {
    tiling.validate()?;
    if n_g < MIN_GAP_GROUP_SAMPLES {
        return Err(Error::precondition(format!("graf_schenker_gap needs n_g >= {MIN_GAP_GROUP_SAMPLES} (got {n_g})")));
    }
    if !(params.c_gs.is_finite() && params.c_gs >= 0.0) {
        return Err(Error::invalid("c_gs must be >= 0"));
    }
    if !(params.cone_epsilon > 0.0 && params.c_kin >= 0.0) {
        return Err(Error::invalid("cone_epsilon must be positive and c_kin >= 0"));
    }
    let nuclei = nuclei_in_domain(config, d)?;
    let n = nuclei.positions.len();
    let depth_d: Vec<f64> = nuclei.positions.iter().map(|x| d.boundary_distance(*x)).collect();
    let (eps, c_kin) = (params.cone_epsilon, params.c_kin);
    let lhs = proxy_energy(&nuclei.positions, &nuclei.charges, &nuclei.deltas, &depth_d, eps, c_kin);
    let poses = sample_group_elements(n_g, &TranslationMode::CellTranslation, derive_seed(seed, "gap", 0))?;
    let vol_s = tiling.volume();
    let values: Vec<f64> = poses
        .par_iter()
        .map(|g| {
            let s0 = tiling.placed(g, Vec3::ZERO);
            let mut lo = s0[0];
            let mut hi = s0[0];
            for p in &s0[1..] {
                lo = lo.zip(*p, f64::min);
                hi = hi.zip(*p, f64::max);
            }
            let faces = crate::geometry::ConvexPolytope::tetrahedron(s0);
            // pieces keyed by j: nuclei x with x - j in the placed simplex
            let mut pieces: std::collections::BTreeMap<Site, Vec<usize>> = Default::default();
            for (i, x) in nuclei.positions.iter().enumerate() {
                let a = *x - hi;
                let b = *x - lo;
                for ji in a[0].ceil() as i64..=b[0].floor() as i64 {
                    for jj in a[1].ceil() as i64..=b[1].floor() as i64 {
                        for jk in a[2].ceil() as i64..=b[2].floor() as i64 {
                            let q = *x - Vec3::new(ji as f64, jj as f64, jk as f64);
                            if barycentric(q, &s0).iter().all(|&l| l >= 0.0) {
                                pieces.entry([ji, jj, jk]).or_default().push(i);
                            }
                        }
                    }
                }
            }
            let energies: Vec<f64> = pieces
                .iter()
                .map(|(j, idx)| {
                    let off = Vec3::new(j[0] as f64, j[1] as f64, j[2] as f64);
                    let pos: Vec<Vec3> = idx.iter().map(|&i| nuclei.positions[i]).collect();
                    let z: Vec<f64> = idx.iter().map(|&i| nuclei.charges[i]).collect();
                    let del: Vec<f64> = idx.iter().map(|&i| nuclei.deltas[i]).collect();
                    let dep: Vec<f64> =
                        idx.iter().map(|&i| depth_d[i].min(faces.depth(nuclei.positions[i] - off).max(0.0))).collect();
                    proxy_energy(&pos, &z, &del, &dep, eps, c_kin)
                })
                .collect();
            pairwise_sum(&energies) / vol_s
        })
        .collect();
    let s = Summary::of(&values);
    let k = params.c_gs / tiling.scale;
    let rhs = (1.0 - k) * s.mean - k * (n as f64 + d.volume());
    Ok(GapReport {
        scale: tiling.scale,
        c_gs: params.c_gs,
        lhs,
        integral: s.mean,
        integral_stderr: s.stderr,
        rhs,
        gap: lhs - rhs,
        nuclei: n,
        n_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ChargeLaw, DisplacementLaw};

    #[test]
    fn aligned_cube_sequence() {
        let s = DomainSequence::cubes(&[2, 4]).unwrap();
        assert_eq!(s.sites(0).len(), 8);
        assert_eq!(s.sites(1).len(), 64);
        assert_eq!(s.window(), Aabb { lo: Vec3::splat(-0.5), hi: Vec3::splat(3.5) });
        assert!(DomainSequence::cubes(&[4, 2]).is_err());
        assert!((s.containment - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn point_mass_average_is_one() {
        let m = ModelSpec::iid(DisplacementLaw::PointMass, ChargeLaw::Constant { z: 2.0 });
        let s = DomainSequence::cubes(&[2, 3]).unwrap();
        let r = ergodic_average(&m, &Statistic::X0, &s, 2, 1).unwrap();
        assert!(r.sizes.iter().all(|z| z.mean == 1.0 && z.l1_error == 0.0));
        let n = neutrality_estimate(&m, &s, 2, 1).unwrap();
        assert!(n.sizes.iter().all(|z| z.mean == 2.0));
    }
}
