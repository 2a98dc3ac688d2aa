use crate::geometry::Vec3;

/// Contact tolerance in LDU: overlaps of at most this depth count as
/// touching, not intersecting.
pub const CONTACT_EPS: f64 = 1e-6;

fn project(t: &[Vec3; 3], axis: &Vec3) -> (f64, f64) {
    let a = t[0].dot(axis);
    let b = t[1].dot(axis);
    let c = t[2].dot(axis);
    (a.min(b).min(c), a.max(b).max(c))
}

/// Separating-axis triangle–triangle test.
///
/// Candidate axes are both face normals, the nine edge–edge cross products
/// and the six in-plane edge normals (needed for coplanar pairs). The
/// triangles intersect only if their projections overlap by more than `eps`
/// on every axis, so touching and coplanar contact report `false`.
pub fn triangles_intersect(a: &[Vec3; 3], b: &[Vec3; 3], eps: f64) -> bool {
    let ea = [a[1] - a[0], a[2] - a[1], a[0] - a[2]];
    let eb = [b[1] - b[0], b[2] - b[1], b[0] - b[2]];
    let na = ea[0].cross(&ea[1]);
    let nb = eb[0].cross(&eb[1]);

    let separated = |axis: Vec3| -> bool {
        let len = axis.norm();
        if len < 1e-12 {
            return false;
        }
        let axis = axis / len;
        let (amin, amax) = project(a, &axis);
        let (bmin, bmax) = project(b, &axis);
        amax <= bmin + eps || bmax <= amin + eps
    };

    if separated(na) || separated(nb) {
        return false;
    }
    for e in &ea {
        for f in &eb {
            if separated(e.cross(f)) {
                return false;
            }
        }
    }
    for e in &ea {
        if separated(na.cross(e)) {
            return false;
        }
    }
    for f in &eb {
        if separated(nb.cross(f)) {
            return false;
        }
    }
    true
}

/// Möller–Trumbore ray/triangle hit distance (strictly positive).
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, t: &[Vec3; 3]) -> Option<f64> {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - t[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let dist = e2.dot(&q) * inv;
    (dist > 1e-12).then_some(dist)
}
