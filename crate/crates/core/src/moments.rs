//! Monte Carlo moments and tail exponents of the origin-cell statistics, and
//! the integrability inequalities relating `X0` and `X1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DisplacementLaw, LatticeSpec, ModelSpec, NuclearConfiguration, Site};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::spatial::brute_force_delta;
use crate::stats::{ols, pairwise_sum, Summary};

pub const MIN_REPLICAS: usize = 30;
pub const MIN_TAIL_HITS: usize = 50;
pub const DEFAULT_LEVEL: f64 = 0.99;
/// Seed stream of the origin-cell replicas.
pub const ORIGIN_STREAM: &str = "origin";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Statistic {
    X0,
    X1,
    XpTruncated { p: f64, eps: f64 },
    /// `delta` of the nucleus drawn at site 0 (0 when the site is vacant).
    DeltaAtOrigin,
    /// `1 / delta` of the nucleus drawn at site 0 (0 when the site is vacant).
    InverseDeltaAtOrigin,
    /// Total charge of the nuclei in the cell.
    ChargePerCell,
}

impl Statistic {
    pub fn id(&self) -> String {
        match self {
            Statistic::X0 => "X0".into(),
            Statistic::X1 => "X1".into(),
            Statistic::XpTruncated { p, eps } => format!("Xp(p={p},eps={eps})"),
            Statistic::DeltaAtOrigin => "delta_at_origin".into(),
            Statistic::InverseDeltaAtOrigin => "inverse_delta_at_origin".into(),
            Statistic::ChargePerCell => "charge_per_cell".into(),
        }
    }

    pub fn violations(&self, path: &str) -> Vec<String> {
        match self {
            Statistic::XpTruncated { p, eps } => {
                let mut v = Vec::new();
                if !(p.is_finite() && *p > 0.0) {
                    v.push(format!("{path}.p must be positive (got {p})"));
                }
                if !(eps.is_finite() && *eps > 0.0) {
                    v.push(format!("{path}.eps must be a positive length (got {eps})"));
                }
                v
            }
            _ => Vec::new(),
        }
    }

    fn needs_site(&self) -> bool {
        matches!(self, Statistic::DeltaAtOrigin | Statistic::InverseDeltaAtOrigin)
    }
}

/// Everything the moment experiments read from one origin-cell replica.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginSample {
    /// `delta` of every nucleus in `W`.
    pub deltas: Vec<f64>,
    pub charge: f64,
    /// `delta` of the nucleus drawn at site 0.
    pub delta0: Option<f64>,
    pub truncated: bool,
}

impl OriginSample {
    pub fn from_config(config: &NuclearConfiguration) -> Result<OriginSample> {
        let lattice = &config.lattice;
        let mut deltas = Vec::new();
        let mut charge = 0.0;
        let mut delta0 = None;
        let mut truncated = false;
        for (i, n) in config.nuclei.iter().enumerate() {
            let in_w = lattice.cell_of(n.position) == [0, 0, 0];
            let at_site = n.site == [0, 0, 0];
            if !(in_w || at_site) {
                continue;
            }
            let d = brute_force_delta(config, i)?;
            truncated |= d.truncated;
            if in_w {
                deltas.push(d.delta);
                charge += n.charge;
            }
            if at_site && !matches!(config.model, crate::config::ModelDescriptor::Poisson { .. }) {
                delta0 = Some(d.delta);
            }
        }
        Ok(OriginSample { deltas, charge, delta0, truncated })
    }

    pub fn x0(&self) -> f64 {
        self.deltas.len() as f64
    }

    pub fn x1(&self) -> f64 {
        self.deltas.iter().map(|d| 1.0 / d).sum()
    }

    pub fn value(&self, statistic: &Statistic) -> f64 {
        match *statistic {
            Statistic::X0 => self.x0(),
            Statistic::X1 => self.x1(),
            Statistic::XpTruncated { p, eps } => self.deltas.iter().map(|d| d.min(eps).powf(-p)).sum(),
            Statistic::DeltaAtOrigin => self.delta0.unwrap_or(0.0),
            Statistic::InverseDeltaAtOrigin => self.delta0.map(|d| 1.0 / d).unwrap_or(0.0),
            Statistic::ChargePerCell => self.charge,
        }
    }
}

/// Origin-cell replicas `r = 0..replicas`, each drawn from seed
/// `derive_seed(seed, "origin", r)`.
pub fn origin_samples(model: &ModelSpec, replicas: usize, seed: u64) -> Result<Vec<OriginSample>> {
    model.validate()?;
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let config = model.sample_origin(derive_seed(seed, ORIGIN_STREAM, r as u64))?;
            OriginSample::from_config(&config)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub statistic: String,
    pub p: f64,
    pub replicas: usize,
    pub mean: f64,
    pub stderr: f64,
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
    /// Replicas whose origin-cell statistic hit the margin.
    pub truncated: usize,
}

impl MomentEstimate {
    pub fn from_values(statistic: String, p: f64, values: &[f64], seed: u64, truncated: usize, level: f64) -> Self {
        let s = Summary::of(values);
        let (lo, hi) = s.interval(level);
        MomentEstimate {
            statistic,
            p,
            replicas: s.n,
            mean: s.mean,
            stderr: s.stderr,
            level,
            lo,
            hi,
            seed,
            truncated,
        }
    }

    pub fn covers(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn check_moment_args(statistic: &Statistic, p: f64, replicas: usize) -> Result<()> {
    if replicas < MIN_REPLICAS {
        return Err(Error::invalid(format!("replicas must be >= {MIN_REPLICAS} (got {replicas})")));
    }
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::invalid(format!("exponent p must be positive (got {p})")));
    }
    let v = statistic.violations("statistic");
    if !v.is_empty() {
        return Err(Error::InvalidInput(v.join("; ")));
    }
    Ok(())
}

fn check_site_statistic(model: &ModelSpec, statistic: &Statistic) -> Result<()> {
    if statistic.needs_site() && matches!(model, ModelSpec::Poisson { .. }) {
        return Err(Error::invalid(format!("{} requires a lattice model", statistic.id())));
    }
    Ok(())
}

/// `E[statistic^p]` at the origin cell with a normal confidence interval at level 0.99.
pub fn estimate_moment(
    model: &ModelSpec,
    statistic: Statistic,
    p: f64,
    replicas: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    check_moment_args(&statistic, p, replicas)?;
    check_site_statistic(model, &statistic)?;
    let samples = origin_samples(model, replicas, seed)?;
    Ok(moment_from_samples(&samples, statistic, p, seed))
}

pub fn moment_from_samples(samples: &[OriginSample], statistic: Statistic, p: f64, seed: u64) -> MomentEstimate {
    let values: Vec<f64> = samples.iter().map(|s| s.value(&statistic).powf(p)).collect();
    let truncated = samples.iter().filter(|s| s.truncated).count();
    MomentEstimate::from_values(statistic.id(), p, &values, seed, truncated, DEFAULT_LEVEL)
}

/// Estimates over the first `n` replicas for each checkpoint `n`, sharing one replica stream.
pub fn running_moments(
    model: &ModelSpec,
    statistic: Statistic,
    p: f64,
    checkpoints: &[usize],
    seed: u64,
) -> Result<Vec<MomentEstimate>> {
    let max = checkpoints.iter().copied().max().unwrap_or(0);
    check_moment_args(&statistic, p, checkpoints.iter().copied().min().unwrap_or(0))?;
    check_site_statistic(model, &statistic)?;
    let samples = origin_samples(model, max, seed)?;
    Ok(checkpoints
        .iter()
        .map(|&n| moment_from_samples(&samples[..n], statistic, p, seed))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// `P(statistic < t)` against `t`.
    SmallBall,
    /// `P(statistic > t)` against `t`.
    Exceedance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub mode: TailMode,
    pub statistic: String,
    pub thresholds: Vec<f64>,
    pub hits: Vec<usize>,
    pub probabilities: Vec<f64>,
    /// Thresholds that entered the regression.
    pub fitted: Vec<bool>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub replicas: usize,
    pub warnings: Vec<String>,
    /// No event was observed at any threshold.
    pub degenerate: bool,
}

/// Log-log slope of the empirical tail probabilities over `thresholds`.
pub fn tail_exponent(
    model: &ModelSpec,
    statistic: Statistic,
    mode: TailMode,
    thresholds: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<TailFit> {
    check_moment_args(&statistic, 1.0, replicas)?;
    check_site_statistic(model, &statistic)?;
    check_grid(thresholds)?;
    let samples = origin_samples(model, replicas, seed)?;
    let values: Vec<f64> = samples.iter().filter_map(|s| tail_value(s, &statistic)).collect();
    Ok(tail_from_values(&values, replicas, statistic.id(), mode, thresholds))
}

fn tail_value(s: &OriginSample, statistic: &Statistic) -> Option<f64> {
    match statistic {
        Statistic::DeltaAtOrigin => s.delta0,
        Statistic::InverseDeltaAtOrigin => s.delta0.map(|d| 1.0 / d),
        other => Some(s.value(other)),
    }
}

fn check_grid(thresholds: &[f64]) -> Result<()> {
    if thresholds.len() < 4 {
        return Err(Error::invalid("threshold grid needs at least 4 points"));
    }
    if thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::invalid("thresholds must be positive"));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("threshold grid must be strictly increasing"));
    }
    Ok(())
}

/// Fit from precomputed values; `replicas` is the denominator of the probabilities.
pub fn tail_from_values(values: &[f64], replicas: usize, statistic: String, mode: TailMode, thresholds: &[f64]) -> TailFit {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let hits: Vec<usize> = thresholds
        .iter()
        .map(|&t| match mode {
            TailMode::SmallBall => sorted.partition_point(|&v| v < t),
            TailMode::Exceedance => sorted.len() - sorted.partition_point(|&v| v <= t),
        })
        .collect();
    let n = replicas as f64;
    let probabilities: Vec<f64> = hits.iter().map(|&h| h as f64 / n).collect();
    let mut warnings = Vec::new();
    let mut fitted = vec![false; thresholds.len()];
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for (i, (&t, &h)) in thresholds.iter().zip(&hits).enumerate() {
        if h == 0 {
            warnings.push(format!("threshold {t}: no hits, dropped from fit"));
        } else if h < MIN_TAIL_HITS {
            warnings.push(format!("threshold {t}: {h} hits < {MIN_TAIL_HITS}, dropped from fit"));
        } else {
            fitted[i] = true;
            lx.push(t.ln());
            ly.push((h as f64 / n).ln());
        }
    }
    let degenerate = hits.iter().all(|&h| h == 0);
    let fit = ols(&lx, &ly);
    if fit.is_none() && !degenerate {
        warnings.push("fewer than two usable thresholds; no slope".into());
    }
    TailFit {
        mode,
        statistic,
        thresholds: thresholds.to_vec(),
        hits,
        probabilities,
        fitted,
        slope: fit.map(|f| f.slope).unwrap_or(f64::NAN),
        slope_stderr: fit.map(|f| f.slope_stderr).unwrap_or(f64::NAN),
        r_squared: fit.map(|f| f.r_squared).unwrap_or(f64::NAN),
        replicas,
        warnings,
        degenerate,
    }
}

/// `n` log-spaced points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub p: f64,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// `rhs` is a partial sum only: its truncation error could not be certified.
    pub rhs_lower_bound_only: bool,
    pub holds: bool,
    pub replicas: usize,
    pub seed: u64,
}

/// Masses `nu(W - j)` of the displacement law, with a certified bound on
/// `sum_j nu(W - j)^{1/p}` over the sites not listed.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMasses {
    pub masses: Vec<(Site, f64)>,
    pub tail_bound: f64,
}

const MASS_TAIL_TOLERANCE: f64 = 1e-12;
const BALL_QUADRATURE_POINTS: usize = 160;

/// Upper tail `P(N > x)` of the standard normal without cancellation.
fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `P(n - 1/2 <= sigma N < n + 1/2)`.
fn gaussian_axis_mass(n: i64, sigma: f64) -> f64 {
    let a = (n as f64 - 0.5) / sigma;
    let b = (n as f64 + 0.5) / sigma;
    if n > 0 {
        normal_sf(a) - normal_sf(b)
    } else if n < 0 {
        normal_sf(-b) - normal_sf(-a)
    } else {
        1.0 - 2.0 * normal_sf(b)
    }
}

pub fn cell_masses(law: &DisplacementLaw, lattice: &LatticeSpec, p: f64) -> Result<CellMasses> {
    match law {
        DisplacementLaw::PointMass => Ok(CellMasses { masses: vec![([0, 0, 0], 1.0)], tail_bound: 0.0 }),
        DisplacementLaw::CompactInCell { .. } => {
            Ok(CellMasses { masses: vec![([0, 0, 0], 1.0)], tail_bound: 0.0 })
        }
        DisplacementLaw::Gaussian { sigma, .. } => {
            require_cubic(lattice, "Gaussian cell masses")?;
            let sigma = *sigma;
            // per-axis masses until the 1/p-th power tail is negligible
            let mut axis = vec![gaussian_axis_mass(0, sigma)];
            let mut n = 1i64;
            let q = 1.0 / p;
            let tail = loop {
                axis.push(gaussian_axis_mass(n, sigma));
                let t1 = normal_sf((n as f64 + 0.5) / sigma).powf(q);
                let t2 = normal_sf((n as f64 + 1.5) / sigma).powf(q);
                if t1 < 1e-17 {
                    // tails of the Gaussian decay faster than geometrically with ratio t2 / t1
                    let rho = if t1 > 0.0 { (t2 / t1).min(0.999) } else { 0.0 };
                    break 2.0 * t1 / (1.0 - rho);
                }
                n += 1;
                if n > 10_000 {
                    break f64::INFINITY;
                }
            };
            let nmax = n;
            let s_n: f64 = (-nmax..=nmax).map(|k| axis[k.unsigned_abs() as usize].powf(q)).sum();
            let mut masses = Vec::new();
            for i in -nmax..=nmax {
                for j in -nmax..=nmax {
                    for k in -nmax..=nmax {
                        let m = axis[i.unsigned_abs() as usize]
                            * axis[j.unsigned_abs() as usize]
                            * axis[k.unsigned_abs() as usize];
                        masses.push(([i, j, k], m));
                    }
                }
            }
            let tail_bound = (s_n + tail).powi(3) - s_n.powi(3);
            Ok(CellMasses { masses, tail_bound })
        }
        DisplacementLaw::UniformBall { radius } => {
            require_cubic(lattice, "uniform-ball cell masses")?;
            Ok(CellMasses { masses: ball_masses(*radius), tail_bound: 0.0 })
        }
        DisplacementLaw::Mixture { components } => {
            let mut acc: std::collections::BTreeMap<Site, f64> = Default::default();
            let mut tail_bound = 0.0;
            for c in components {
                let cm = cell_masses(&c.law, lattice, p)?;
                for (j, m) in cm.masses {
                    *acc.entry(j).or_insert(0.0) += c.weight * m;
                }
                // (a + b)^{1/p} <= a^{1/p} + b^{1/p} for p >= 1
                tail_bound += c.weight.powf(1.0 / p) * cm.tail_bound;
            }
            if p < 1.0 {
                tail_bound = f64::INFINITY;
            }
            Ok(CellMasses { masses: acc.into_iter().collect(), tail_bound })
        }
    }
}

fn require_cubic(lattice: &LatticeSpec, what: &str) -> Result<()> {
    if lattice.is_cubic() {
        Ok(())
    } else {
        Err(Error::precondition(format!("{what} are implemented for the cubic lattice only")))
    }
}

/// Midpoint-grid quadrature of the uniform ball over the cells `W - j`.
fn ball_masses(radius: f64) -> Vec<(Site, f64)> {
    if radius < 0.5 {
        return vec![([0, 0, 0], 1.0)];
    }
    let n = BALL_QUADRATURE_POINTS;
    let h = 2.0 * radius / n as f64;
    let mut acc: std::collections::BTreeMap<Site, f64> = Default::default();
    let mut total = 0.0;
    for a in 0..n {
        let x = -radius + (a as f64 + 0.5) * h;
        for b in 0..n {
            let y = -radius + (b as f64 + 0.5) * h;
            for c in 0..n {
                let z = -radius + (c as f64 + 0.5) * h;
                if x * x + y * y + z * z <= radius * radius {
                    let cell = [
                        (x + 0.5).floor() as i64,
                        (y + 0.5).floor() as i64,
                        (z + 0.5).floor() as i64,
                    ];
                    *acc.entry(cell).or_insert(0.0) += 1.0;
                    total += 1.0;
                }
            }
        }
    }
    acc.into_iter().map(|(j, m)| (j, m / total)).collect()
}

/// `sum_j nu(W - j)^{1/p}`, and whether its truncation is certified.
pub fn x0_norm_rhs(law: &DisplacementLaw, lattice: &LatticeSpec, p: f64) -> Result<(f64, bool)> {
    let cm = cell_masses(law, lattice, p)?;
    let mut terms: Vec<f64> = cm.masses.iter().map(|(_, m)| m.powf(1.0 / p)).collect();
    terms.sort_by(f64::total_cmp);
    let sum = pairwise_sum(&terms);
    Ok((sum, cm.tail_bound <= MASS_TAIL_TOLERANCE * sum.max(1.0)))
}

fn displacement_of(model: &ModelSpec) -> Result<(&DisplacementLaw, LatticeSpec)> {
    match model {
        ModelSpec::Iid { lattice, displacement, .. } => Ok((displacement, lattice.clone())),
        ModelSpec::Poisson { .. } => Err(Error::precondition("the cell-mass bound needs an i.i.d. lattice model")),
    }
}

/// `||X0||_p <= sum_j nu(W - j)^{1/p}`.
pub fn check_x0_norm_bound(model: &ModelSpec, p: f64, replicas: usize, seed: u64) -> Result<BoundReport> {
    check_moment_args(&Statistic::X0, p, replicas)?;
    let (law, lattice) = displacement_of(model)?;
    let (rhs, certified) = x0_norm_rhs(law, &lattice, p)?;
    let samples = origin_samples(model, replicas, seed)?;
    let m = moment_from_samples(&samples, Statistic::X0, p, seed);
    let lhs = m.mean.powf(1.0 / p);
    // delta method for m^{1/p}
    let lhs_stderr = if m.mean > 0.0 { m.stderr * m.mean.powf(1.0 / p - 1.0) / p } else { 0.0 };
    Ok(BoundReport {
        p,
        lhs,
        lhs_stderr,
        rhs,
        rhs_stderr: 0.0,
        rhs_lower_bound_only: !certified,
        holds: lhs <= rhs + 3.0 * lhs_stderr,
        replicas,
        seed,
    })
}

/// `E X0^p <= 1 + diam(W)^p E X1^p`.
pub fn check_x1_implies_x0(model: &ModelSpec, p: f64, replicas: usize, seed: u64) -> Result<BoundReport> {
    check_moment_args(&Statistic::X0, p, replicas)?;
    let samples = origin_samples(model, replicas, seed)?;
    let diam = model.lattice().cell_diameter();
    let l = moment_from_samples(&samples, Statistic::X0, p, seed);
    let r = moment_from_samples(&samples, Statistic::X1, p, seed);
    let scale = diam.powf(p);
    let rhs = 1.0 + scale * r.mean;
    let rhs_stderr = scale * r.stderr;
    let combined = (l.stderr * l.stderr + rhs_stderr * rhs_stderr).sqrt();
    Ok(BoundReport {
        p,
        lhs: l.mean,
        lhs_stderr: l.stderr,
        rhs,
        rhs_stderr,
        rhs_lower_bound_only: false,
        holds: l.mean <= rhs + 3.0 * combined,
        replicas,
        seed,
    })
}
