//! Experiment dispatch, CSV outputs and run manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::{
    BoundCheck, ExperimentKind, ExperimentSpec, DEFAULT_FISHER_GRID, DEFAULT_MARGIN_EXTRA, DEFAULT_N_MC,
};
use crate::config::{Aabb, ModelSpec, NuclearConfiguration};
use crate::electrostatics::{trial_energy, DEFAULT_C_KIN};
use crate::ergodic::{
    ergodic_average, graf_schenker_gap, neutrality_estimate, thermo_scan, DomainSequence, GapParams, ShapeFamily,
};
use crate::error::{Error, Result};
use crate::geometry::{
    classify_cells, cone_check, fisher_a_estimate, regularized_volume, tiling_volume_identity, DomainShape,
    TilingSpec,
};
use crate::moments::{
    check_x0_norm_bound, check_x1_implies_x0, estimate_moment, running_moments, tail_exponent, MomentEstimate,
    Statistic, TailMode, DEFAULT_LEVEL, ORIGIN_STREAM,
};
use crate::rng::derive_seed;
use crate::spatial::{build_index, window_statistics, DEFAULT_EPSILON, DEFAULT_P_LIST};
use crate::stats::normal_quantile;

pub const MANIFEST_FILE: &str = "manifest.toml";
/// Per-replica seeds listed in the manifest for each stream.
pub const MANIFEST_SEEDS_LISTED: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
    pub columns: Vec<Column>,
}

/// A labeled seed stream `derive_seed(base, label, i)`, `i < count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    pub label: String,
    /// Hexadecimal base seed the stream is derived from.
    pub base: String,
    pub count: usize,
    /// The first seeds of the stream, hexadecimal.
    pub seeds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub library: String,
    pub version: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub streams: Vec<SeedStream>,
    pub outputs: Vec<OutputRecord>,
    pub spec: ExperimentSpec,
}

impl RunManifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("manifest does not serialize: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(vec![e.message().to_string()]))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        RunManifest::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn output(&self, file: &str) -> Option<&OutputRecord> {
        self.outputs.iter().find(|o| o.file == file)
    }
}

fn hex(x: u64) -> String {
    format!("{x:016x}")
}

/// One CSV table with units per column.
struct Table {
    file: &'static str,
    columns: Vec<(&'static str, &'static str)>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &'static str, columns: &[(&'static str, &'static str)]) -> Self {
        Table { file, columns: columns.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.0))?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Raw file produced by a library writer, with its column units.
struct Raw {
    file: &'static str,
    columns: Vec<(&'static str, &'static str)>,
    bytes: Vec<u8>,
}

#[derive(Default)]
struct Outputs {
    files: Vec<Raw>,
    streams: Vec<SeedStream>,
}

impl Outputs {
    fn table(&mut self, t: Table) -> Result<()> {
        let bytes = t.bytes()?;
        self.files.push(Raw { file: t.file, columns: t.columns, bytes });
        Ok(())
    }

    fn raw(&mut self, file: &'static str, columns: &[(&'static str, &'static str)], bytes: Vec<u8>) {
        self.files.push(Raw { file, columns: columns.to_vec(), bytes });
    }

    fn stream(&mut self, label: &str, base: u64, count: usize) {
        let seeds = (0..count.min(MANIFEST_SEEDS_LISTED)).map(|i| hex(derive_seed(base, label, i as u64))).collect();
        self.streams.push(SeedStream { label: label.into(), base: hex(base), count, seeds });
    }
}

fn f(x: f64) -> String {
    x.to_string()
}

fn model_of(spec: &ExperimentSpec) -> Result<&ModelSpec> {
    spec.model.as_ref().ok_or_else(|| Error::Schema(vec!["model is required".into()]))
}

fn domain_of(spec: &ExperimentSpec) -> Result<DomainShape> {
    spec.domain.as_ref().ok_or_else(|| Error::Schema(vec!["domain is required".into()]))?.build()
}

/// Smallest union of whole cells holding `b`.
pub fn cell_aligned_window(b: &Aabb) -> Aabb {
    Aabb { lo: b.lo.map(|x| (x + 0.5).floor() - 0.5), hi: b.hi.map(|x| (x - 0.5).ceil() + 0.5) }
}

/// Configuration drawn on the cell-aligned window around `d`.
fn sample_for_domain(model: &ModelSpec, d: &DomainShape, seed: u64) -> Result<NuclearConfiguration> {
    model.sample(cell_aligned_window(&d.bounds()), model.required_margin() + DEFAULT_MARGIN_EXTRA, seed)
}

fn moment_row(t: &mut Table, m: &MomentEstimate) {
    t.push(vec![
        m.statistic.clone(),
        f(m.p),
        m.replicas.to_string(),
        f(m.mean),
        f(m.stderr),
        f(m.level),
        f(m.lo),
        f(m.hi),
        m.truncated.to_string(),
    ]);
}

const MOMENT_COLUMNS: [(&str, &str); 9] = [
    ("statistic", "label"),
    ("p", "1"),
    ("replicas", "count"),
    ("mean", "statistic^p"),
    ("stderr", "statistic^p"),
    ("level", "probability"),
    ("ci_lo", "statistic^p"),
    ("ci_hi", "statistic^p"),
    ("truncated", "count"),
];

fn run_kind(kind: ExperimentKind, spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let p = &spec.params;
    let seed = derive_seed(spec.seed, kind.name(), 0);
    match kind {
        ExperimentKind::Sample | ExperimentKind::Stats => {
            let model = model_of(spec)?;
            let window = p.window.ok_or_else(|| Error::Schema(vec!["params.window is required".into()]))?.aabb();
            let extra = if kind == ExperimentKind::Stats { DEFAULT_MARGIN_EXTRA } else { 0.0 };
            let margin = p.margin.unwrap_or(model.required_margin() + extra);
            out.stream(kind.name(), spec.seed, 1);
            let config = model.sample(window, margin, seed)?;
            if kind == ExperimentKind::Sample {
                let mut buf = Vec::new();
                config.write_csv(&mut buf)?;
                out.raw(
                    "nuclei.csv",
                    &[
                        ("x", "length"),
                        ("y", "length"),
                        ("z", "length"),
                        ("charge", "charge"),
                        ("site_i", "index"),
                        ("site_j", "index"),
                        ("site_k", "index"),
                    ],
                    buf,
                );
                out.raw("configuration.toml", &[], config.descriptor().to_toml()?.into_bytes());
            } else {
                let index = build_index(&config)?;
                let eps = p.eps.unwrap_or(DEFAULT_EPSILON);
                let p_list = p.p_list.clone().unwrap_or(DEFAULT_P_LIST.to_vec());
                let stats = window_statistics(&index, eps, &p_list)?;
                let mut buf = Vec::new();
                crate::spatial::write_cell_csv(&stats, &mut buf)?;
                out.raw(
                    "cells.csv",
                    &[
                        ("i", "index"),
                        ("j", "index"),
                        ("k", "index"),
                        ("X0", "count"),
                        ("X1", "1/length"),
                        ("Xp2", "1/length^2"),
                        ("flag", "bool"),
                    ],
                    buf,
                );
            }
        }
        ExperimentKind::Moments => {
            let model = model_of(spec)?;
            let replicas = p.replicas.unwrap_or(0);
            let pp = p.p.unwrap_or(1.0);
            out.stream(ORIGIN_STREAM, seed, replicas);
            if let Some(b) = p.bound {
                let r = match b {
                    BoundCheck::X0Norm => check_x0_norm_bound(model, pp, replicas, seed)?,
                    BoundCheck::X1ImpliesX0 => check_x1_implies_x0(model, pp, replicas, seed)?,
                };
                let mut t = Table::new(
                    "bounds.csv",
                    &[
                        ("bound", "label"),
                        ("p", "1"),
                        ("lhs", "1"),
                        ("lhs_stderr", "1"),
                        ("rhs", "1"),
                        ("rhs_stderr", "1"),
                        ("rhs_lower_bound_only", "bool"),
                        ("holds", "bool"),
                        ("replicas", "count"),
                    ],
                );
                let name = match b {
                    BoundCheck::X0Norm => "x0_norm",
                    BoundCheck::X1ImpliesX0 => "x1_implies_x0",
                };
                t.push(vec![
                    name.into(),
                    f(r.p),
                    f(r.lhs),
                    f(r.lhs_stderr),
                    f(r.rhs),
                    f(r.rhs_stderr),
                    r.rhs_lower_bound_only.to_string(),
                    r.holds.to_string(),
                    r.replicas.to_string(),
                ]);
                out.table(t)?;
            }
            if let Some(stat) = p.statistic.clone() {
                let m = estimate_moment(model, stat.clone(), pp, replicas, seed)?;
                let mut t = Table::new("moments.csv", &MOMENT_COLUMNS);
                moment_row(&mut t, &m);
                out.table(t)?;
                if let Some(cp) = &p.checkpoints {
                    let rs = running_moments(model, stat, pp, cp, seed)?;
                    let mut t = Table::new("running.csv", &MOMENT_COLUMNS);
                    for m in &rs {
                        moment_row(&mut t, m);
                    }
                    out.table(t)?;
                }
            }
        }
        ExperimentKind::Tails => {
            let model = model_of(spec)?;
            let replicas = p.replicas.unwrap_or(0);
            let stat = p.statistic.clone().unwrap_or(Statistic::DeltaAtOrigin);
            let mode = p.tail_mode.unwrap_or(TailMode::SmallBall);
            let thresholds = p.thresholds.clone().unwrap_or_default();
            out.stream(ORIGIN_STREAM, seed, replicas);
            let fit = tail_exponent(model, stat, mode, &thresholds, replicas, seed)?;
            let mut t = Table::new(
                "tails.csv",
                &[("threshold", "statistic"), ("hits", "count"), ("probability", "probability"), ("fitted", "bool")],
            );
            for i in 0..fit.thresholds.len() {
                t.push(vec![f(fit.thresholds[i]), fit.hits[i].to_string(), f(fit.probabilities[i]), fit.fitted[i].to_string()]);
            }
            out.table(t)?;
            let mut t = Table::new(
                "tail_fit.csv",
                &[
                    ("statistic", "label"),
                    ("mode", "label"),
                    ("slope", "1"),
                    ("slope_stderr", "1"),
                    ("r_squared", "1"),
                    ("replicas", "count"),
                    ("fitted_points", "count"),
                    ("degenerate", "bool"),
                ],
            );
            let mode_name = match fit.mode {
                TailMode::SmallBall => "small_ball",
                TailMode::Exceedance => "exceedance",
            };
            t.push(vec![
                fit.statistic.clone(),
                mode_name.into(),
                f(fit.slope),
                f(fit.slope_stderr),
                f(fit.r_squared),
                fit.replicas.to_string(),
                fit.fitted.iter().filter(|b| **b).count().to_string(),
                fit.degenerate.to_string(),
            ]);
            out.table(t)?;
        }
        ExperimentKind::Geometry => {
            let d = domain_of(spec)?;
            let grid = p.t_grid.clone().unwrap_or(DEFAULT_FISHER_GRID.to_vec());
            let n_mc = p.n_mc.unwrap_or(DEFAULT_N_MC);
            let eps = p.cone_epsilon.unwrap_or(DEFAULT_EPSILON);
            let samples = p.cone_samples.unwrap_or(1000);
            out.stream("collar", derive_seed(seed, "fisher", 0), n_mc.div_ceil(1 << 15));
            let fisher = fisher_a_estimate(&d, &grid, n_mc, seed)?;
            let mut t = Table::new(
                "collar.csv",
                &[("t", "1"), ("width", "length"), ("collar", "volume"), ("stderr", "volume"), ("ratio", "1")],
            );
            for (c, r) in fisher.profile.iter().zip(&fisher.ratios) {
                t.push(vec![f(c.t), f(c.width), f(c.volume), f(c.stderr), f(*r)]);
            }
            out.table(t)?;
            let cone = cone_check(&d, eps, samples, derive_seed(seed, "cone", 0))?;
            let mut t = Table::new(
                "cone_witnesses.csv",
                &[("x", "length"), ("y", "length"), ("z", "length"), ("inside", "bool")],
            );
            for w in &cone.failures {
                t.push(vec![f(w.point[0]), f(w.point[1]), f(w.point[2]), w.inside.to_string()]);
            }
            out.table(t)?;
            let reg = regularized_volume(&d, &crate::config::LatticeSpec::cubic())?;
            let mut t = Table::new(
                "geometry.csv",
                &[
                    ("volume", "volume"),
                    ("fisher_a", "1"),
                    ("fisher_a_stderr", "1"),
                    ("cone_epsilon", "length"),
                    ("cone_pass", "bool"),
                    ("cone_failures", "count"),
                    ("regularized_cells", "count"),
                    ("regularized_volume", "volume"),
                ],
            );
            t.push(vec![
                f(d.volume()),
                f(fisher.a),
                f(fisher.a_stderr),
                f(eps),
                cone.pass.to_string(),
                cone.failures.len().to_string(),
                reg.cells.to_string(),
                f(reg.volume),
            ]);
            out.table(t)?;
        }
        ExperimentKind::Tiling => {
            let scales = p.scales.clone().unwrap_or_default();
            if spec.domain.is_some() {
                let d = domain_of(spec)?;
                let n_g = p.n_g.unwrap_or(1000);
                let n_mc = p.n_mc.unwrap_or(32);
                let mut t = Table::new(
                    "identity.csv",
                    &[
                        ("ell", "1"),
                        ("lhs", "volume"),
                        ("rhs", "volume"),
                        ("rhs_stderr", "volume"),
                        ("rel_error", "1"),
                        ("n_g", "count"),
                        ("n_mc", "count"),
                    ],
                );
                for (i, &ell) in scales.iter().enumerate() {
                    let s = derive_seed(spec.seed, kind.name(), i as u64);
                    out.stream("group", s, n_g);
                    let r = tiling_volume_identity(&d, &TilingSpec::regular(ell)?, n_g, n_mc, s)?;
                    t.push(vec![f(ell), f(r.lhs), f(r.rhs), f(r.rhs_stderr), f(r.rel_error), n_g.to_string(), n_mc.to_string()]);
                }
                out.table(t)?;
            }
            if let Some(sizes) = &p.sizes {
                let mut t = Table::new(
                    "classify.csv",
                    &[("ell", "1"), ("L", "length"), ("volume", "volume"), ("inner", "count"), ("boundary", "count")],
                );
                for (i, &ell) in scales.iter().enumerate() {
                    let s = derive_seed(spec.seed, "classify", i as u64);
                    out.stream("group", s, crate::geometry::tiling::BOUNDARY_POSES);
                    let tiling = TilingSpec::regular(ell)?;
                    for &l in sizes {
                        if l.fract() != 0.0 {
                            return Err(Error::invalid(format!("classification sizes must be integers (got {l})")));
                        }
                        let d = DomainShape::aligned_cube(l as usize)?;
                        let c = classify_cells(&d, &tiling, s)?;
                        t.push(vec![f(ell), f(l), f(d.volume()), c.inner.to_string(), c.boundary.to_string()]);
                    }
                }
                out.table(t)?;
            }
        }
        ExperimentKind::Energy => {
            let model = model_of(spec)?;
            let d = domain_of(spec)?;
            let eps = p.cone_epsilon.unwrap_or(DEFAULT_EPSILON);
            let c_kin = p.c_kin.unwrap_or(DEFAULT_C_KIN);
            out.stream(kind.name(), spec.seed, 1);
            let config = sample_for_domain(model, &d, seed)?;
            let e = trial_energy(&config, &d, eps, c_kin)?;
            let mut buf = Vec::new();
            e.write_csv(&mut buf)?;
            out.raw(
                "energy_cells.csv",
                &[
                    ("i", "index"),
                    ("j", "index"),
                    ("k", "index"),
                    ("nuclei", "count"),
                    ("kinetic", "energy"),
                    ("boundary", "energy"),
                    ("lieb_yau", "energy"),
                ],
                buf,
            );
            let mut t = Table::new(
                "energy.csv",
                &[
                    ("volume", "volume"),
                    ("nuclei", "count"),
                    ("collar_nuclei", "count"),
                    ("on_top", "count"),
                    ("kinetic", "energy"),
                    ("boundary", "energy"),
                    ("total", "energy"),
                    ("lieb_yau", "energy"),
                    ("cone_epsilon", "length"),
                    ("c_kin", "1"),
                    ("truncated", "bool"),
                ],
            );
            t.push(vec![
                f(d.volume()),
                e.nuclei.to_string(),
                e.collar_nuclei.to_string(),
                e.on_top.to_string(),
                f(e.kinetic),
                f(e.boundary),
                f(e.total()),
                e.lieb_yau.map(f).unwrap_or_default(),
                f(eps),
                f(c_kin),
                e.truncated.to_string(),
            ]);
            out.table(t)?;
        }
        ExperimentKind::Ergodic => {
            let model = model_of(spec)?;
            let seq = DomainSequence::new(p.family.unwrap_or(ShapeFamily::Cube), p.sizes.as_deref().unwrap_or(&[]))?;
            let stat = p.statistic.clone().unwrap_or(Statistic::X0);
            let replicas = p.replicas.unwrap_or(0);
            out.stream("ergodic", seed, replicas);
            let r = ergodic_average(model, &stat, &seq, replicas, seed)?;
            let mut t = Table::new(
                "ergodic.csv",
                &[
                    ("L", "length"),
                    ("volume", "volume"),
                    ("sites", "count"),
                    ("trace", "statistic/volume"),
                    ("mean", "statistic/volume"),
                    ("stderr", "statistic/volume"),
                    ("l1_error", "statistic/volume"),
                    ("l1_stderr", "statistic/volume"),
                    ("reference", "statistic/volume"),
                    ("reference_exact", "bool"),
                ],
            );
            for s in &r.sizes {
                t.push(vec![
                    f(s.size),
                    f(s.volume),
                    s.sites.to_string(),
                    f(s.trace),
                    f(s.mean),
                    f(s.stderr),
                    f(s.l1_error),
                    f(s.l1_stderr),
                    f(r.reference),
                    r.reference_exact.to_string(),
                ]);
            }
            out.table(t)?;
            if stat == Statistic::ChargePerCell && replicas >= 2 {
                let ns = derive_seed(spec.seed, "neutrality", 0);
                out.stream("neutrality", ns, replicas);
                let n = neutrality_estimate(model, &seq, replicas, ns)?;
                let mut t = Table::new(
                    "neutrality.csv",
                    &[
                        ("L", "length"),
                        ("volume", "volume"),
                        ("mean", "charge/volume"),
                        ("stderr", "charge/volume"),
                        ("ci_lo", "charge/volume"),
                        ("ci_hi", "charge/volume"),
                        ("z_av", "charge/volume"),
                        ("covers", "bool"),
                    ],
                );
                for s in &n.sizes {
                    t.push(vec![
                        f(s.size),
                        f(s.volume),
                        f(s.mean),
                        f(s.stderr),
                        f(s.lo),
                        f(s.hi),
                        f(n.z_av),
                        s.covers.to_string(),
                    ]);
                }
                out.table(t)?;
            }
        }
        ExperimentKind::Thermo => {
            let model = model_of(spec)?;
            let grid = p.t_grid.clone().unwrap_or(DEFAULT_FISHER_GRID.to_vec());
            let n_mc = p.n_mc.unwrap_or(DEFAULT_N_MC);
            let seq = DomainSequence::new(p.family.unwrap_or(ShapeFamily::Cube), p.sizes.as_deref().unwrap_or(&[]))?
                .audit(&grid, n_mc, derive_seed(spec.seed, "audit", 0))?;
            let replicas = p.replicas.unwrap_or(0);
            out.stream("thermo", seed, replicas);
            let s = thermo_scan(
                model,
                &seq,
                p.cone_epsilon.unwrap_or(DEFAULT_EPSILON),
                p.c_kin.unwrap_or(DEFAULT_C_KIN),
                replicas,
                seed,
            )?;
            let z = normal_quantile(DEFAULT_LEVEL);
            let mut t = Table::new(
                "thermo.csv",
                &[
                    ("L", "length"),
                    ("volume", "volume"),
                    ("replicas", "count"),
                    ("mean", "energy/volume"),
                    ("l1_dev", "energy/volume"),
                    ("ci_lo", "energy/volume"),
                    ("ci_hi", "energy/volume"),
                    ("kinetic_mean", "energy/volume"),
                    ("boundary_mean", "energy/volume"),
                    ("truncated", "count"),
                    ("fisher_a", "1"),
                ],
            );
            for (i, q) in s.points.iter().enumerate() {
                t.push(vec![
                    f(q.size),
                    f(q.volume),
                    q.replicas.to_string(),
                    f(q.mean),
                    f(q.l1_dev),
                    f(q.mean - z * q.stderr),
                    f(q.mean + z * q.stderr),
                    f(q.kinetic_mean),
                    f(q.boundary_mean),
                    q.truncated.to_string(),
                    f(seq.fisher[i].a),
                ]);
            }
            out.table(t)?;
            let mut t = Table::new(
                "thermo_fit.csv",
                &[
                    ("richardson_limit", "energy/volume"),
                    ("fitted_limit", "energy/volume"),
                    ("fitted_correction", "energy/length^2"),
                    ("fit_residual", "1"),
                    ("deviation_slope", "1"),
                    ("deviation_slope_stderr", "1"),
                    ("boundary_slope", "1"),
                    ("kinetic_limit", "energy/volume"),
                    ("containment", "1"),
                ],
            );
            t.push(vec![
                f(s.richardson_limit),
                f(s.fitted_limit),
                f(s.fitted_correction),
                f(s.fit_residual),
                f(s.deviation_slope),
                f(s.deviation_slope_stderr),
                f(s.boundary_slope),
                f(s.kinetic_limit),
                f(seq.containment),
            ]);
            out.table(t)?;
        }
        ExperimentKind::Gap => {
            let model = model_of(spec)?;
            let d = domain_of(spec)?;
            let scales = p.scales.clone().unwrap_or_default();
            let n_g = p.n_g.unwrap_or(crate::ergodic::MIN_GAP_GROUP_SAMPLES);
            let params = GapParams {
                c_gs: p.c_gs.unwrap_or(1.0),
                cone_epsilon: p.cone_epsilon.unwrap_or(DEFAULT_EPSILON),
                c_kin: p.c_kin.unwrap_or(DEFAULT_C_KIN),
            };
            out.stream(kind.name(), spec.seed, 1);
            let config = sample_for_domain(model, &d, seed)?;
            let mut t = Table::new(
                "gap.csv",
                &[
                    ("ell", "1"),
                    ("lhs", "energy"),
                    ("rhs", "energy"),
                    ("gap", "energy"),
                    ("integral", "energy"),
                    ("integral_stderr", "energy"),
                    ("c_gs", "1"),
                    ("n_g", "count"),
                ],
            );
            for (i, &ell) in scales.iter().enumerate() {
                let s = derive_seed(spec.seed, "gap-group", i as u64);
                out.stream("group", derive_seed(s, "gap", 0), n_g);
                let r = graf_schenker_gap(&config, &d, &TilingSpec::regular(ell)?, n_g, params, s)?;
                t.push(vec![
                    f(ell),
                    f(r.lhs),
                    f(r.rhs),
                    f(r.gap),
                    f(r.integral),
                    f(r.integral_stderr),
                    f(r.c_gs),
                    n_g.to_string(),
                ]);
            }
            out.table(t)?;
        }
    }
    Ok(())
}

/// Validates `spec`, runs it and writes every output plus the manifest into `out_dir`.
pub fn run(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunManifest> {
    spec.validate()?;
    let kind = spec.resolved_kind()?;
    let start = Instant::now();
    let mut outputs = Outputs::default();
    run_kind(kind, spec, &mut outputs)?;
    std::fs::create_dir_all(out_dir)?;
    let mut records = Vec::new();
    for raw in &outputs.files {
        std::fs::write(out_dir.join(raw.file), &raw.bytes)?;
        let rows = if raw.file.ends_with(".csv") {
            raw.bytes.iter().filter(|&&b| b == b'\n').count().saturating_sub(1)
        } else {
            0
        };
        records.push(OutputRecord {
            file: raw.file.to_string(),
            sha256: format!("{:x}", Sha256::digest(&raw.bytes)),
            rows,
            columns: raw.columns.iter().map(|(n, u)| Column { name: n.to_string(), unit: u.to_string() }).collect(),
        });
    }
    let manifest = RunManifest {
        library: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind,
        seed: spec.seed,
        threads: rayon::current_num_threads(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        streams: outputs.streams,
        outputs: records,
        spec: spec.clone(),
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), manifest.to_toml()?)?;
    Ok(manifest)
}

/// [`run`] inside a dedicated pool of `threads` workers.
pub fn run_with_threads(spec: &ExperimentSpec, out_dir: &Path, threads: Option<usize>) -> Result<RunManifest> {
    match threads {
        None => run(spec, out_dir),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| run(spec, out_dir))
        }
    }
}

/// Output directory: the explicit one, else the spec's, else `out`.
pub fn output_dir(spec: &ExperimentSpec, explicit: Option<PathBuf>) -> PathBuf {
    explicit.or_else(|| spec.output.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

/// Re-runs the spec recorded in `manifest` into `out_dir` and lists every
/// output whose checksum differs from the recorded one.
pub fn replay(manifest: &RunManifest, out_dir: &Path, threads: Option<usize>) -> Result<(RunManifest, Vec<String>)> {
    let mut spec = manifest.spec.clone();
    spec.kind = Some(manifest.kind);
    spec.seed = manifest.seed;
    let fresh = run_with_threads(&spec, out_dir, threads)?;
    let mut mismatches = Vec::new();
    for old in &manifest.outputs {
        match fresh.output(&old.file) {
            Some(new) if new.sha256 == old.sha256 => {}
            Some(_) => mismatches.push(format!("{}: checksum differs", old.file)),
            None => mismatches.push(format!("{}: not produced", old.file)),
        }
    }
    for new in &fresh.outputs {
        if manifest.output(&new.file).is_none() {
            mismatches.push(format!("{}: not in manifest", new.file));
        }
    }
    Ok((fresh, mismatches))
}
