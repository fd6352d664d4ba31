//! Bounded domains with closed-form boundary distances.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::polytope::{barycentric, closest_point_tetrahedron, ConvexPolytope};
use crate::config::{quantize_vec, Aabb, Site};
use crate::error::{Error, Result};
use crate::vec3::{Mat3, Vec3};

/// Tolerance of the rotation orthonormality check.
pub const ROTATION_TOL: f64 = 1e-12;

/// Shape in its local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeKind {
    /// `[-side/2, side/2)^3`.
    Cube { side: f64 },
    /// Box with the given side lengths, centred at the origin.
    Cuboid { sides: [f64; 3] },
    /// Open ball `|x| < radius`.
    Ball { radius: f64 },
    Simplex { vertices: [[f64; 3]; 4] },
    /// Union of the unit cells `j + [-1/2, 1/2)^3`.
    CellUnion { cells: Vec<Site> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        RigidTransform { rotation: Mat3::IDENTITY, translation: Vec3::ZERO }
    }
}

impl RigidTransform {
    pub fn translation(t: Vec3) -> Self {
        RigidTransform { rotation: Mat3::IDENTITY, translation: t }
    }

    pub fn validate(&self) -> Result<()> {
        let (res, det) = self.rotation.orthonormality_residual();
        if res > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::invalid(format!(
                "rotation is not in SO(3): orthonormality residual {res:e}, determinant {det}"
            )));
        }
        if !self.translation.is_finite() {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn to_local(&self, x: Vec3) -> Vec3 {
        if self.rotation == Mat3::IDENTITY {
            return x - self.translation;
        }
        self.rotation.transpose() * (x - self.translation)
    }

    #[inline]
    pub fn to_world(&self, q: Vec3) -> Vec3 {
        if self.rotation == Mat3::IDENTITY {
            return q + self.translation;
        }
        self.rotation * q + self.translation
    }
}

/// Position of a convex piece relative to a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Inside,
    Outside,
    Straddles,
}

#[derive(Debug, Clone)]
struct UnionCache {
    set: HashSet<Site>,
    /// Exposed faces: cell, axis, side (+1 or -1).
    faces: Vec<(Site, usize, i8)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainShape {
    pub kind: ShapeKind,
    pub transform: RigidTransform,
    volume: f64,
    #[serde(skip)]
    union: Option<UnionCache>,
}

impl PartialEq for DomainShape {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.transform == other.transform
    }
}

fn simplex_vertices(v: &[[f64; 3]; 4]) -> [Vec3; 4] {
    [Vec3(v[0]), Vec3(v[1]), Vec3(v[2]), Vec3(v[3])]
}

impl DomainShape {
    pub fn new(kind: ShapeKind, transform: RigidTransform) -> Result<Self> {
        transform.validate()?;
        let transform = RigidTransform { translation: quantize_vec(transform.translation), ..transform };
        let positive = |x: f64, what: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be positive (got {x})")))
            }
        };
        let (volume, union) = match &kind {
            ShapeKind::Cube { side } => {
                positive(*side, "cube side")?;
                (side.powi(3), None)
            }
            ShapeKind::Cuboid { sides } => {
                for s in sides {
                    positive(*s, "cuboid side")?;
                }
                (sides[0] * sides[1] * sides[2], None)
            }
            ShapeKind::Ball { radius } => {
                positive(*radius, "ball radius")?;
                (4.0 / 3.0 * std::f64::consts::PI * radius.powi(3), None)
            }
            ShapeKind::Simplex { vertices } => {
                let v = simplex_vertices(vertices);
                let vol = super::polytope::tetrahedron_volume(&v);
                if !(vol.is_finite() && vol > 1e-14) {
                    return Err(Error::invalid("simplex is degenerate (zero volume)"));
                }
                (vol, None)
            }
            ShapeKind::CellUnion { cells } => {
                let set: HashSet<Site> = cells.iter().copied().collect();
                let mut faces = Vec::new();
                let mut sorted: Vec<Site> = set.iter().copied().collect();
                sorted.sort();
                for c in &sorted {
                    for axis in 0..3 {
                        for side in [-1i8, 1] {
                            let mut n = *c;
                            n[axis] += side as i64;
                            if !set.contains(&n) {
                                faces.push((*c, axis, side));
                            }
                        }
                    }
                }
                (set.len() as f64, Some(UnionCache { set, faces }))
            }
        };
        Ok(DomainShape { kind, transform, volume, union })
    }

    pub fn cube(side: f64) -> Result<Self> {
        DomainShape::new(ShapeKind::Cube { side }, RigidTransform::default())
    }

    /// Cube of integer side `l` whose faces lie on cell faces: it is the union
    /// of the cells `W + j`, `j in {0..l-1}^3`.
    pub fn aligned_cube(l: usize) -> Result<Self> {
        let c = (l as f64 - 1.0) / 2.0;
        DomainShape::new(ShapeKind::Cube { side: l as f64 }, RigidTransform::translation(Vec3::splat(c)))
    }

    pub fn cuboid(sides: [f64; 3]) -> Result<Self> {
        DomainShape::new(ShapeKind::Cuboid { sides }, RigidTransform::default())
    }

    pub fn ball(radius: f64) -> Result<Self> {
        DomainShape::new(ShapeKind::Ball { radius }, RigidTransform::default())
    }

    pub fn simplex(vertices: [Vec3; 4]) -> Result<Self> {
        DomainShape::new(ShapeKind::Simplex { vertices: vertices.map(|v| v.0) }, RigidTransform::default())
    }

    pub fn cell_union(cells: Vec<Site>) -> Result<Self> {
        DomainShape::new(ShapeKind::CellUnion { cells }, RigidTransform::default())
    }

    /// The empty domain.
    pub fn empty() -> Self {
        DomainShape::cell_union(Vec::new()).expect("empty union")
    }

    pub fn with_transform(&self, transform: RigidTransform) -> Result<Self> {
        DomainShape::new(self.kind.clone(), transform)
    }

    pub fn translated(&self, t: Vec3) -> Result<Self> {
        let tr = RigidTransform { rotation: self.transform.rotation, translation: self.transform.translation + t };
        DomainShape::new(self.kind.clone(), tr)
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn is_empty(&self) -> bool {
        self.volume == 0.0
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self.kind, ShapeKind::CellUnion { .. })
    }

    fn half_extents(&self) -> Option<Vec3> {
        match &self.kind {
            ShapeKind::Cube { side } => Some(Vec3::splat(side / 2.0)),
            ShapeKind::Cuboid { sides } => Some(Vec3(*sides) * 0.5),
            _ => None,
        }
    }

    fn local_simplex(&self) -> Option<[Vec3; 4]> {
        match &self.kind {
            ShapeKind::Simplex { vertices } => Some(simplex_vertices(vertices)),
            _ => None,
        }
    }

    pub fn contains(&self, x: Vec3) -> bool {
        let q = self.transform.to_local(x);
        match &self.kind {
            ShapeKind::Cube { .. } | ShapeKind::Cuboid { .. } => {
                let h = self.half_extents().expect("box");
                (0..3).all(|i| q[i] >= -h[i] && q[i] < h[i])
            }
            ShapeKind::Ball { radius } => q.norm2() < radius * radius,
            ShapeKind::Simplex { vertices } => {
                barycentric(q, &simplex_vertices(vertices)).iter().all(|&l| l >= 0.0)
            }
            ShapeKind::CellUnion { .. } => {
                let c = [(q[0] + 0.5).floor() as i64, (q[1] + 0.5).floor() as i64, (q[2] + 0.5).floor() as i64];
                self.union.as_ref().is_some_and(|u| u.set.contains(&c))
            }
        }
    }

    /// Distance to the boundary, negative inside.
    pub fn signed_distance(&self, x: Vec3) -> f64 {
        let q = self.transform.to_local(x);
        match &self.kind {
            ShapeKind::Cube { .. } | ShapeKind::Cuboid { .. } => {
                let h = self.half_extents().expect("box");
                let d = q.map(f64::abs) - h;
                let outside = d.map(|c| c.max(0.0)).norm();
                let inside = d.max_elem().min(0.0);
                outside + inside
            }
            ShapeKind::Ball { radius } => q.norm() - radius,
            ShapeKind::Simplex { vertices } => {
                let v = simplex_vertices(vertices);
                let c = closest_point_tetrahedron(q, &v);
                if c == q {
                    -ConvexPolytope::tetrahedron(v).depth(q).max(0.0)
                } else {
                    (c - q).norm()
                }
            }
            ShapeKind::CellUnion { .. } => {
                let d = self.union_boundary_distance(q);
                if self.contains(x) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    fn union_boundary_distance(&self, q: Vec3) -> f64 {
        let Some(u) = &self.union else { return f64::INFINITY };
        let mut best = f64::INFINITY;
        for &(c, axis, side) in &u.faces {
            let mut d2 = 0.0;
            for i in 0..3 {
                let ci = c[i] as f64;
                let t = if i == axis {
                    q[i] - (ci + 0.5 * side as f64)
                } else {
                    ((q[i] - ci).abs() - 0.5).max(0.0)
                };
                d2 += t * t;
            }
            best = best.min(d2);
        }
        best.sqrt()
    }

    /// `d(x, boundary of D)`.
    pub fn boundary_distance(&self, x: Vec3) -> f64 {
        self.signed_distance(x).abs()
    }

    /// Unit outward normal estimate: the gradient of the signed distance.
    pub fn gradient(&self, x: Vec3) -> Vec3 {
        let h = 1e-5 * self.volume.cbrt().max(1e-3);
        let mut g = [0.0; 3];
        for (i, gi) in g.iter_mut().enumerate() {
            let mut e = Vec3::ZERO;
            e.0[i] = h;
            *gi = (self.signed_distance(x + e) - self.signed_distance(x - e)) / (2.0 * h);
        }
        Vec3(g).normalized()
    }

    /// World-frame bounding box.
    pub fn bounds(&self) -> Aabb {
        let pts: Vec<Vec3> = match &self.kind {
            ShapeKind::Ball { radius } => {
                let c = self.transform.translation;
                return Aabb { lo: c - Vec3::splat(*radius), hi: c + Vec3::splat(*radius) };
            }
            ShapeKind::Cube { .. } | ShapeKind::Cuboid { .. } => {
                let h = self.half_extents().expect("box");
                box_corners(-h, h)
            }
            ShapeKind::Simplex { vertices } => simplex_vertices(vertices).to_vec(),
            ShapeKind::CellUnion { cells } => {
                if cells.is_empty() {
                    let t = self.transform.translation;
                    return Aabb { lo: t, hi: t };
                }
                let mut lo = Vec3::splat(f64::INFINITY);
                let mut hi = Vec3::splat(f64::NEG_INFINITY);
                for c in cells {
                    let v = Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64);
                    lo = lo.zip(v, f64::min);
                    hi = hi.zip(v, f64::max);
                }
                box_corners(lo - Vec3::splat(0.5), hi + Vec3::splat(0.5))
            }
        };
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for p in pts {
            let w = self.transform.to_world(p);
            lo = lo.zip(w, f64::min);
            hi = hi.zip(w, f64::max);
        }
        Aabb { lo, hi }
    }

    /// Diameter, or an upper bound for cell unions (the bounding-box diagonal).
    pub fn diameter(&self) -> f64 {
        match &self.kind {
            ShapeKind::Ball { radius } => 2.0 * radius,
            ShapeKind::Cube { side } => side * 3f64.sqrt(),
            ShapeKind::Cuboid { sides } => Vec3(*sides).norm(),
            ShapeKind::Simplex { vertices } => {
                let v = simplex_vertices(vertices);
                let mut d: f64 = 0.0;
                for i in 0..4 {
                    for j in i + 1..4 {
                        d = d.max((v[i] - v[j]).norm());
                    }
                }
                d
            }
            ShapeKind::CellUnion { .. } => {
                let b = self.bounds();
                (b.hi - b.lo).norm()
            }
        }
    }

    /// The domain as a world-frame convex polytope, for boxes and simplices.
    pub fn convex_polytope(&self) -> Option<ConvexPolytope> {
        match &self.kind {
            ShapeKind::Cube { .. } | ShapeKind::Cuboid { .. } => {
                let h = self.half_extents()?;
                let r = self.transform.rotation;
                let o = self.transform.to_world(-h);
                Some(ConvexPolytope::parallelepiped(
                    o,
                    r.column(0) * (2.0 * h[0]),
                    r.column(1) * (2.0 * h[1]),
                    r.column(2) * (2.0 * h[2]),
                ))
            }
            ShapeKind::Simplex { vertices } => {
                Some(ConvexPolytope::tetrahedron(simplex_vertices(vertices).map(|v| self.transform.to_world(v))))
            }
            _ => None,
        }
    }

    /// How the convex polytope `p` sits relative to the domain (up to
    /// boundary contact of measure zero).
    pub fn relation(&self, p: &ConvexPolytope) -> Relation {
        if self.is_empty() {
            return Relation::Outside;
        }
        match &self.kind {
            ShapeKind::Ball { radius } => {
                let c = self.transform.translation;
                let r2 = radius * radius;
                if p.vertices.iter().all(|v| (*v - c).norm2() < r2) {
                    return Relation::Inside;
                }
                let d = point_polytope_distance(c, p);
                if d >= *radius {
                    Relation::Outside
                } else {
                    Relation::Straddles
                }
            }
            ShapeKind::CellUnion { .. } => self.union_relation(p),
            _ => {
                let d = self.convex_polytope().expect("convex shape");
                if d.contains_polytope(p) {
                    Relation::Inside
                } else if d.intersects(p) {
                    Relation::Straddles
                } else {
                    Relation::Outside
                }
            }
        }
    }

    fn union_relation(&self, p: &ConvexPolytope) -> Relation {
        let u = self.union.as_ref().expect("union cache");
        let local = ConvexPolytope {
            vertices: p.vertices.iter().map(|v| self.transform.to_local(*v)).collect(),
            faces: p
                .faces
                .iter()
                .map(|(n, d)| {
                    let nl = self.transform.rotation.transpose() * *n;
                    (nl, d - n.dot(self.transform.translation))
                })
                .collect(),
            edges: p.edges.iter().map(|e| self.transform.rotation.transpose() * *e).collect(),
        };
        let (lo, hi) = local.bounds();
        let (mut any_in, mut any_out) = (false, false);
        for i in (lo[0] + 0.5).floor() as i64..=(hi[0] + 0.5).floor() as i64 {
            for j in (lo[1] + 0.5).floor() as i64..=(hi[1] + 0.5).floor() as i64 {
                for k in (lo[2] + 0.5).floor() as i64..=(hi[2] + 0.5).floor() as i64 {
                    let c = Vec3::new(i as f64, j as f64, k as f64);
                    let cell = ConvexPolytope::aabb(c - Vec3::splat(0.5), c + Vec3::splat(0.5));
                    if cell.intersects(&local) {
                        if u.set.contains(&[i, j, k]) {
                            any_in = true;
                        } else {
                            any_out = true;
                        }
                    }
                    if any_in && any_out {
                        return Relation::Straddles;
                    }
                }
            }
        }
        match (any_in, any_out) {
            (true, false) => Relation::Inside,
            (true, true) => Relation::Straddles,
            _ => Relation::Outside,
        }
    }

    /// Nearest point of the eroded domain `{y in D : d(y, boundary) >= eps}`.
    pub fn nearest_eroded_point(&self, x: Vec3, eps: f64) -> Option<Vec3> {
        let q = self.transform.to_local(x);
        let local = match &self.kind {
            ShapeKind::Cube { .. } | ShapeKind::Cuboid { .. } => {
                let h = self.half_extents()? - Vec3::splat(eps);
                if h.min_elem() <= 0.0 {
                    return None;
                }
                q.zip(h, |a, b| a.clamp(-b, b))
            }
            ShapeKind::Ball { radius } => {
                let r = radius - eps;
                if r <= 0.0 {
                    return None;
                }
                let n = q.norm();
                if n <= r {
                    q
                } else {
                    q * (r / n)
                }
            }
            ShapeKind::Simplex { vertices } => {
                let v = simplex_vertices(vertices);
                let inset = inset_simplex(&v, eps)?;
                closest_point_tetrahedron(q, &inset)
            }
            ShapeKind::CellUnion { .. } => return self.sampled_eroded_point(x, eps),
        };
        Some(self.transform.to_world(local))
    }

    fn sampled_eroded_point(&self, x: Vec3, eps: f64) -> Option<Vec3> {
        if self.contains(x) && self.boundary_distance(x) >= eps {
            return Some(x);
        }
        let dirs = super::regular::direction_codebook();
        let steps = 64;
        for s in 1..=steps {
            let r = 3.0 * eps * s as f64 / steps as f64;
            let mut best: Option<(f64, Vec3)> = None;
            for u in dirs.iter() {
                let y = x + *u * r;
                if self.contains(y) {
                    let d = self.boundary_distance(y);
                    if d >= eps && best.is_none_or(|(bd, _)| d > bd) {
                        best = Some((d, y));
                    }
                }
            }
            if let Some((_, y)) = best {
                return Some(y);
            }
        }
        None
    }

    pub fn inradius_center(&self) -> Option<(Vec3, f64)> {
        let v = self.local_simplex()?;
        let (c, r) = incenter(&v);
        Some((self.transform.to_world(c), r))
    }
}

fn box_corners(lo: Vec3, hi: Vec3) -> Vec<Vec3> {
    (0..8)
        .map(|k| {
            Vec3::new(
                if k & 1 == 0 { lo[0] } else { hi[0] },
                if k & 2 == 0 { lo[1] } else { hi[1] },
                if k & 4 == 0 { lo[2] } else { hi[2] },
            )
        })
        .collect()
}

/// Incenter and inradius of a tetrahedron.
pub fn incenter(v: &[Vec3; 4]) -> (Vec3, f64) {
    let area = |a: Vec3, b: Vec3, c: Vec3| 0.5 * (b - a).cross(c - a).norm();
    let opp = [
        area(v[1], v[2], v[3]),
        area(v[0], v[2], v[3]),
        area(v[0], v[1], v[3]),
        area(v[0], v[1], v[2]),
    ];
    let total: f64 = opp.iter().sum();
    let c = (v[0] * opp[0] + v[1] * opp[1] + v[2] * opp[2] + v[3] * opp[3]) * (1.0 / total);
    let r = 3.0 * super::polytope::tetrahedron_volume(v) / total;
    (c, r)
}

/// The tetrahedron whose faces are those of `v` moved inward by `eps`.
fn inset_simplex(v: &[Vec3; 4], eps: f64) -> Option<[Vec3; 4]> {
    let (c, r) = incenter(v);
    if eps >= r {
        return None;
    }
    let k = (r - eps) / r;
    Some(v.map(|p| c + (p - c) * k))
}

/// Distance from a point to a convex polytope (0 inside).
pub fn point_polytope_distance(x: Vec3, p: &ConvexPolytope) -> f64 {
    if p.contains(x) {
        return 0.0;
    }
    if p.vertices.len() == 4 {
        let v = [p.vertices[0], p.vertices[1], p.vertices[2], p.vertices[3]];
        return (closest_point_tetrahedron(x, &v) - x).norm();
    }
    // parallelepiped: decompose into 6 tetrahedra through the 0-7 diagonal
    let v = &p.vertices;
    let tets = [[0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7], [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7]];
    tets.iter()
        .map(|t| (closest_point_tetrahedron(x, &[v[t[0]], v[t[1]], v[t[2]], v[t[3]]]) - x).norm())
        .fold(f64::INFINITY, f64::min)
}
