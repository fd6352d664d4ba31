//! Experiment specification files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Aabb, ModelSpec, Site};
use crate::ergodic::ShapeFamily;
use crate::error::{Error, Result};
use crate::geometry::{DomainShape, RigidTransform, ShapeKind};
use crate::moments::{Statistic, TailMode, MIN_REPLICAS};
use crate::vec3::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sample,
    Stats,
    Moments,
    Tails,
    Geometry,
    Tiling,
    Energy,
    Ergodic,
    Thermo,
    Gap,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Sample,
        ExperimentKind::Stats,
        ExperimentKind::Moments,
        ExperimentKind::Tails,
        ExperimentKind::Geometry,
        ExperimentKind::Tiling,
        ExperimentKind::Energy,
        ExperimentKind::Ergodic,
        ExperimentKind::Thermo,
        ExperimentKind::Gap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::Stats => "stats",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Tails => "tails",
            ExperimentKind::Geometry => "geometry",
            ExperimentKind::Tiling => "tiling",
            ExperimentKind::Energy => "energy",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::Thermo => "thermo",
            ExperimentKind::Gap => "gap",
        }
    }

    fn needs_model(&self) -> bool {
        !matches!(self, ExperimentKind::Geometry | ExperimentKind::Tiling)
    }

    fn needs_domain(&self) -> bool {
        matches!(self, ExperimentKind::Geometry | ExperimentKind::Energy | ExperimentKind::Gap)
    }
}

/// A domain: a shape, an optional unit quaternion `[w, x, y, z]` and a translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Cube {
        side: f64,
        #[serde(default)]
        translation: [f64; 3],
        rotation: Option<[f64; 4]>,
    },
    /// `[-1/2, L - 1/2)^3`, the union of `L^3` lattice cells.
    AlignedCube { side: usize },
    Cuboid {
        sides: [f64; 3],
        #[serde(default)]
        translation: [f64; 3],
        rotation: Option<[f64; 4]>,
    },
    Ball {
        radius: f64,
        #[serde(default)]
        translation: [f64; 3],
    },
    Simplex {
        vertices: [[f64; 3]; 4],
        #[serde(default)]
        translation: [f64; 3],
        rotation: Option<[f64; 4]>,
    },
    CellUnion { cells: Vec<Site> },
}

fn rotation_of(q: &Option<[f64; 4]>) -> std::result::Result<Mat3, String> {
    match q {
        None => Ok(Mat3::IDENTITY),
        Some(q) => {
            let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !((n - 1.0).abs() <= 1e-9) {
                return Err(format!("rotation quaternion must have unit norm (got {n})"));
            }
            Ok(Mat3::from_quaternion(q.map(|c| c / n)))
        }
    }
}

impl DomainSpec {
    /// Parses a domain table such as `kind = "ball"` and builds the shape.
    pub fn shape_from_toml(text: &str) -> Result<DomainShape> {
        let d: DomainSpec = toml::from_str(text).map_err(|e| Error::Schema(vec![e.message().to_string()]))?;
        d.build()
    }

    pub fn build(&self) -> Result<DomainShape> {
        let place = |kind: ShapeKind, t: &[f64; 3], q: &Option<[f64; 4]>| {
            let rotation = rotation_of(q).map_err(Error::InvalidInput)?;
            DomainShape::new(kind, RigidTransform { rotation, translation: Vec3(*t) })
        };
        match self {
            DomainSpec::Cube { side, translation, rotation } => {
                place(ShapeKind::Cube { side: *side }, translation, rotation)
            }
            DomainSpec::AlignedCube { side } => {
                if *side == 0 {
                    return Err(Error::invalid("aligned cube side must be >= 1"));
                }
                DomainShape::aligned_cube(*side)
            }
            DomainSpec::Cuboid { sides, translation, rotation } => {
                place(ShapeKind::Cuboid { sides: *sides }, translation, rotation)
            }
            DomainSpec::Ball { radius, translation } => place(ShapeKind::Ball { radius: *radius }, translation, &None),
            DomainSpec::Simplex { vertices, translation, rotation } => {
                place(ShapeKind::Simplex { vertices: *vertices }, translation, rotation)
            }
            DomainSpec::CellUnion { cells } => DomainShape::cell_union(cells.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl WindowSpec {
    pub fn aabb(&self) -> Aabb {
        Aabb::new(Vec3(self.lo), Vec3(self.hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCheck {
    X0Norm,
    X1ImpliesX0,
}

/// Numeric parameters; which ones are required depends on the experiment kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub replicas: Option<usize>,
    pub statistic: Option<Statistic>,
    pub p: Option<f64>,
    pub p_list: Option<Vec<f64>>,
    /// Truncation cap of `X'_p`.
    pub eps: Option<f64>,
    pub window: Option<WindowSpec>,
    pub margin: Option<f64>,
    pub checkpoints: Option<Vec<usize>>,
    pub bound: Option<BoundCheck>,
    pub tail_mode: Option<TailMode>,
    pub thresholds: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub n_mc: Option<usize>,
    pub cone_epsilon: Option<f64>,
    pub cone_samples: Option<usize>,
    pub scales: Option<Vec<f64>>,
    pub n_g: Option<usize>,
    pub family: Option<ShapeFamily>,
    pub sizes: Option<Vec<f64>>,
    pub c_kin: Option<f64>,
    pub c_gs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub model: Option<ModelSpec>,
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub params: Params,
}

pub const DEFAULT_MARGIN_EXTRA: f64 = 3.0;
pub const DEFAULT_FISHER_GRID: [f64; 4] = [0.005, 0.01, 0.015, 0.02];
pub const DEFAULT_N_MC: usize = 200_000;

fn positive(v: &mut Vec<String>, name: &str, x: Option<f64>) {
    if let Some(x) = x {
        if !(x.is_finite() && x > 0.0) {
            v.push(format!("params.{name} must be positive (got {x})"));
        }
    }
}

fn require<T>(v: &mut Vec<String>, kind: ExperimentKind, name: &str, x: &Option<T>) {
    if x.is_none() {
        v.push(format!("params.{name} is required for kind = \"{}\"", kind.name()));
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(vec![e.message().to_string()]))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentSpec::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn resolved_kind(&self) -> Result<ExperimentKind> {
        self.kind.ok_or_else(|| Error::Schema(vec!["kind is required".into()]))
    }

    /// Every schema and range violation, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.seed > i64::MAX as u64 {
            v.push(format!("seed must be < 2^63 (got {})", self.seed));
        }
        let Some(kind) = self.kind else {
            v.push("kind is required".into());
            return v;
        };
        let p = &self.params;
        match &self.model {
            Some(m) => v.extend(m.violations("model")),
            None if kind.needs_model() => v.push(format!("model is required for kind = \"{}\"", kind.name())),
            None => {}
        }
        match &self.domain {
            Some(d) => {
                if let Err(e) = d.build() {
                    v.push(format!("domain: {e}"));
                }
            }
            None if kind.needs_domain() => v.push(format!("domain is required for kind = \"{}\"", kind.name())),
            None => {}
        }
        if let Some(s) = &p.statistic {
            v.extend(s.violations("params.statistic"));
        }
        for (name, x) in [
            ("p", p.p),
            ("eps", p.eps),
            ("cone_epsilon", p.cone_epsilon),
        ] {
            positive(&mut v, name, x);
        }
        for (name, x) in [("margin", p.margin), ("c_kin", p.c_kin), ("c_gs", p.c_gs)] {
            if let Some(x) = x {
                if !(x.is_finite() && x >= 0.0) {
                    v.push(format!("params.{name} must be >= 0 (got {x})"));
                }
            }
        }
        if let Some(w) = &p.window {
            if (0..3).any(|i| !(w.lo[i].is_finite() && w.hi[i].is_finite() && w.lo[i] < w.hi[i])) {
                v.push("params.window must satisfy lo < hi on every axis".into());
            }
        }
        if let Some(list) = &p.p_list {
            if list.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                v.push("params.p_list entries must be positive".into());
            }
        }
        if let Some(g) = &p.t_grid {
            if g.is_empty() || g.iter().any(|t| !(*t > 0.0 && *t <= 0.2)) {
                v.push("params.t_grid must be a nonempty subset of (0, 0.2]".into());
            }
        }
        if let Some(s) = &p.scales {
            if s.is_empty() || s.iter().any(|l| !(l.is_finite() && *l >= 1.0)) {
                v.push("params.scales entries must be >= 1".into());
            }
        }
        if let Some(s) = &p.sizes {
            if s.is_empty() || s.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                v.push("params.sizes entries must be positive".into());
            } else if s.windows(2).any(|w| w[1] <= w[0]) {
                v.push("params.sizes must be strictly increasing".into());
            }
        }
        if let Some(n) = p.n_mc {
            if kind == ExperimentKind::Tiling {
                if n == 0 {
                    v.push("params.n_mc must be >= 1".into());
                }
            } else if n < crate::geometry::regular::MIN_COLLAR_SAMPLES {
                v.push(format!(
                    "params.n_mc must be >= {} (got {n})",
                    crate::geometry::regular::MIN_COLLAR_SAMPLES
                ));
            }
        }
        let replicas_at_least = |v: &mut Vec<String>, min: usize| match p.replicas {
            Some(r) if r < min => {
                v.push(format!("params.replicas must be >= {min} for kind = \"{}\" (got {r})", kind.name()))
            }
            None => v.push(format!("params.replicas is required for kind = \"{}\"", kind.name())),
            _ => {}
        };
        match kind {
            ExperimentKind::Sample | ExperimentKind::Stats => require(&mut v, kind, "window", &p.window),
            ExperimentKind::Moments => {
                replicas_at_least(&mut v, MIN_REPLICAS);
                if p.bound.is_none() {
                    require(&mut v, kind, "statistic", &p.statistic);
                }
                if let Some(c) = &p.checkpoints {
                    if c.iter().any(|&n| n < MIN_REPLICAS) {
                        v.push(format!("params.checkpoints entries must be >= {MIN_REPLICAS}"));
                    }
                    if c.windows(2).any(|w| w[1] <= w[0]) {
                        v.push("params.checkpoints must be strictly increasing".into());
                    }
                }
            }
            ExperimentKind::Tails => {
                replicas_at_least(&mut v, MIN_REPLICAS);
                require(&mut v, kind, "statistic", &p.statistic);
                match &p.thresholds {
                    None => require(&mut v, kind, "thresholds", &p.thresholds),
                    Some(t) => {
                        if t.len() < 4 || t.iter().any(|x| !(x.is_finite() && *x > 0.0)) || t.windows(2).any(|w| w[1] <= w[0]) {
                            v.push("params.thresholds needs >= 4 positive, strictly increasing values".into());
                        }
                    }
                }
            }
            ExperimentKind::Geometry => {}
            ExperimentKind::Tiling => {
                require(&mut v, kind, "scales", &p.scales);
                if self.domain.is_none() && p.sizes.is_none() {
                    v.push("tiling needs a domain (identity check) or params.sizes (cell classification)".into());
                }
                if let Some(n) = p.n_g {
                    if n < crate::geometry::tiling::MIN_GROUP_SAMPLES {
                        v.push(format!(
                            "params.n_g must be >= {} (got {n})",
                            crate::geometry::tiling::MIN_GROUP_SAMPLES
                        ));
                    }
                }
            }
            ExperimentKind::Energy => {}
            ExperimentKind::Ergodic => {
                require(&mut v, kind, "sizes", &p.sizes);
                require(&mut v, kind, "statistic", &p.statistic);
                if matches!(p.statistic, Some(Statistic::DeltaAtOrigin | Statistic::InverseDeltaAtOrigin)) {
                    v.push("params.statistic must be a cell statistic (x0, x1, xp_truncated, charge_per_cell)".into());
                }
                replicas_at_least(&mut v, 2);
            }
            ExperimentKind::Thermo => {
                require(&mut v, kind, "sizes", &p.sizes);
                replicas_at_least(&mut v, MIN_REPLICAS);
            }
            ExperimentKind::Gap => {
                require(&mut v, kind, "scales", &p.scales);
                if let Some(n) = p.n_g {
                    if n < crate::ergodic::MIN_GAP_GROUP_SAMPLES {
                        v.push(format!("params.n_g must be >= {} (got {n})", crate::ergodic::MIN_GAP_GROUP_SAMPLES));
                    }
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(v))
        }
    }
}
