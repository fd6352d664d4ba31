//! Convex polytopes: separating-axis intersection tests and closest points.

use crate::vec3::Vec3;

const SAT_TOL: f64 = 1e-12;

/// A convex polytope given by vertices, outward face normals and edge directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolytope {
    pub vertices: Vec<Vec3>,
    /// Outward unit normals with offsets: the polytope is `{x : n.x <= d}`.
    pub faces: Vec<(Vec3, f64)>,
    pub edges: Vec<Vec3>,
}

impl ConvexPolytope {
    /// Parallelepiped `origin + M [0,1]^3` spanned by the columns `a, b, c`.
    pub fn parallelepiped(origin: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Self {
        let mut vertices = Vec::with_capacity(8);
        for k in 0..8 {
            let mut v = origin;
            if k & 1 != 0 {
                v += a;
            }
            if k & 2 != 0 {
                v += b;
            }
            if k & 4 != 0 {
                v += c;
            }
            vertices.push(v);
        }
        let mut faces = Vec::with_capacity(6);
        for n in [b.cross(c), c.cross(a), a.cross(b)] {
            let n = n.normalized();
            let hi = vertices.iter().map(|v| n.dot(*v)).fold(f64::NEG_INFINITY, f64::max);
            let lo = vertices.iter().map(|v| n.dot(*v)).fold(f64::INFINITY, f64::min);
            faces.push((n, hi));
            faces.push((-n, -lo));
        }
        ConvexPolytope { vertices, faces, edges: vec![a.normalized(), b.normalized(), c.normalized()] }
    }

    pub fn aabb(lo: Vec3, hi: Vec3) -> Self {
        let d = hi - lo;
        ConvexPolytope::parallelepiped(
            lo,
            Vec3::new(d[0], 0.0, 0.0),
            Vec3::new(0.0, d[1], 0.0),
            Vec3::new(0.0, 0.0, d[2]),
        )
    }

    pub fn tetrahedron(v: [Vec3; 4]) -> Self {
        let centroid = (v[0] + v[1] + v[2] + v[3]) * 0.25;
        let mut faces = Vec::with_capacity(4);
        for skip in 0..4 {
            let idx: Vec<usize> = (0..4).filter(|&i| i != skip).collect();
            let (a, b, c) = (v[idx[0]], v[idx[1]], v[idx[2]]);
            let mut n = (b - a).cross(c - a).normalized();
            if n.dot(centroid - a) > 0.0 {
                n = -n;
            }
            faces.push((n, n.dot(a)));
        }
        let mut edges = Vec::with_capacity(6);
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push((v[j] - v[i]).normalized());
            }
        }
        ConvexPolytope { vertices: v.to_vec(), faces, edges }
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.zip(*v, f64::min);
            hi = hi.zip(*v, f64::max);
        }
        (lo, hi)
    }

    pub fn contains(&self, x: Vec3) -> bool {
        self.faces.iter().all(|(n, d)| n.dot(x) <= *d)
    }

    /// Depth of an interior point: distance to the nearest face plane.
    pub fn depth(&self, x: Vec3) -> f64 {
        self.faces.iter().map(|(n, d)| d - n.dot(x)).fold(f64::INFINITY, f64::min)
    }

    fn project(&self, axis: Vec3) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &self.vertices {
            let p = axis.dot(*v);
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    /// True when the interiors intersect (touching polytopes do not count).
    pub fn intersects(&self, other: &ConvexPolytope) -> bool {
        let scale = self
            .vertices
            .iter()
            .chain(&other.vertices)
            .map(|v| v.norm())
            .fold(1.0, f64::max);
        let tol = SAT_TOL * scale;
        let separated = |axis: Vec3| {
            let n2 = axis.norm2();
            if n2 < 1e-20 {
                return false;
            }
            let axis = axis * (1.0 / n2.sqrt());
            let (a0, a1) = self.project(axis);
            let (b0, b1) = other.project(axis);
            a1 <= b0 + tol || b1 <= a0 + tol
        };
        for (n, _) in self.faces.iter().chain(&other.faces) {
            if separated(*n) {
                return false;
            }
        }
        for e in &self.edges {
            for f in &other.edges {
                if separated(e.cross(*f)) {
                    return false;
                }
            }
        }
        true
    }

    pub fn contains_polytope(&self, other: &ConvexPolytope) -> bool {
        other.vertices.iter().all(|v| self.contains(*v))
    }
}

/// Closest point to `p` on the triangle `abc`.
pub fn closest_point_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Closest point of the solid tetrahedron to `p`.
pub fn closest_point_tetrahedron(p: Vec3, v: &[Vec3; 4]) -> Vec3 {
    if barycentric(p, v).iter().all(|&l| l >= 0.0) {
        return p;
    }
    let tris = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    let mut best = p;
    let mut best_d = f64::INFINITY;
    for t in tris {
        let q = closest_point_triangle(p, v[t[0]], v[t[1]], v[t[2]]);
        let d = (q - p).norm2();
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// Distance from `p` to the surface of the tetrahedron.
pub fn tetrahedron_surface_distance(p: Vec3, v: &[Vec3; 4]) -> f64 {
    let tris = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    tris.iter()
        .map(|t| (closest_point_triangle(p, v[t[0]], v[t[1]], v[t[2]]) - p).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Barycentric coordinates of `p` with respect to the tetrahedron `v`.
pub fn barycentric(p: Vec3, v: &[Vec3; 4]) -> [f64; 4] {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let e3 = v[3] - v[0];
    let q = p - v[0];
    let det = e1.dot(e2.cross(e3));
    let l1 = q.dot(e2.cross(e3)) / det;
    let l2 = e1.dot(q.cross(e3)) / det;
    let l3 = e1.dot(e2.cross(q)) / det;
    [1.0 - l1 - l2 - l3, l1, l2, l3]
}

pub fn tetrahedron_volume(v: &[Vec3; 4]) -> f64 {
    (v[1] - v[0]).dot((v[2] - v[0]).cross(v[3] - v[0])).abs() / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tet() -> [Vec3; 4] {
        [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)]
    }

    #[test]
    fn touching_boxes_do_not_intersect() {
        let a = ConvexPolytope::aabb(Vec3::ZERO, Vec3::splat(1.0));
        let b = ConvexPolytope::aabb(Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        let c = ConvexPolytope::aabb(Vec3::new(0.9, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        assert!(!a.intersects(&b));
        assert!(a.intersects(&c));
    }

    #[test]
    fn edge_edge_separation() {
        // two tetrahedra separated only by an edge-cross-edge axis
        let t = ConvexPolytope::tetrahedron(unit_tet());
        let far = ConvexPolytope::tetrahedron(unit_tet().map(|v| v + Vec3::splat(0.6)));
        assert!(!t.intersects(&far));
        let near = ConvexPolytope::tetrahedron(unit_tet().map(|v| v + Vec3::splat(0.1)));
        assert!(t.intersects(&near));
    }

    #[test]
    fn closest_point_matches_sampling() {
        let v = unit_tet();
        let p = Vec3::new(1.0, 1.0, -0.5);
        let q = closest_point_tetrahedron(p, &v);
        let d = (q - p).norm();
        // brute force over a barycentric grid
        let mut best = f64::INFINITY;
        let n = 60;
        for i in 0..=n {
            for j in 0..=n - i {
                for k in 0..=n - i - j {
                    let x = Vec3::new(i as f64, j as f64, k as f64) * (1.0 / n as f64);
                    best = best.min((x - p).norm());
                }
            }
        }
        assert!(d <= best + 1e-12 && best - d < 0.02, "{d} {best}");
    }

    #[test]
    fn barycentric_volume() {
        let v = unit_tet();
        assert!((tetrahedron_volume(&v) - 1.0 / 6.0).abs() < 1e-15);
        let l = barycentric(Vec3::splat(0.25), &v);
        assert!(l.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }
}
