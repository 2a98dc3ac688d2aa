use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::ldraw::RawMesh;

use super::bvh::{Aabb, Bvh, BvhNode};
use super::triangle::ray_triangle;

/// Triangles with area below this (LDU²) are dropped.
pub const DEGENERATE_AREA: f64 = 1e-9;

/// Vertices closer than this grid pitch (LDU) are welded.
const WELD_GRID: f64 = 1e-6;
/// Inward offset of the per-face containment probes.
pub const PROBE_DEPTH: f64 = 1e-3;

/// Lower bound on the cosine between a vertex normal and an incident face
/// normal when scaling the inset; caps the displacement at sharp spikes.
const MIN_NORMAL_COS: f64 = 0.2;

/// Immutable collision geometry in part-local LDU.
#[derive(Debug, Clone)]
pub struct CollisionMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub bvh: Bvh,
    pub source_inset: f64,
    /// Every edge is shared by exactly two consistently wound triangles.
    pub closed: bool,
    /// One point just inside each face of a closed mesh; empty otherwise.
    probes: Vec<Vec3>,
    largest: usize,
}

impl CollisionMesh {
    /// Builds a mesh from indexed triangles without moving any vertex.
    /// Used for externally supplied, already inset geometry.
    pub fn from_indexed(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, source_inset: f64) -> Result<Self> {
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("mesh vertex"));
        }
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::DataFile {
                name: "mesh".into(),
                message: format!("triangle {t:?} references a vertex out of range"),
            });
        }
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| area(&tri_points(&vertices, t)) >= DEGENERATE_AREA)
            .collect();
        if triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(Self::assemble(vertices, triangles, source_inset))
    }

    fn assemble(vertices: Vec<Vec3>, mut triangles: Vec<[u32; 3]>, source_inset: f64) -> Self {
        let closed = is_closed(&triangles);
        if closed && signed_volume(&vertices, &triangles) < 0.0 {
            for t in &mut triangles {
                t.swap(1, 2);
            }
        }
        let bounds: Vec<Aabb> = triangles.iter().map(|t| Aabb::of_triangle(&tri_points(&vertices, t))).collect();
        let bvh = Bvh::build(&bounds);
        let probes: Vec<Vec3> = if closed {
            triangles
                .iter()
                .map(|t| {
                    let p = tri_points(&vertices, t);
                    let n = (p[1] - p[0]).cross(&(p[2] - p[0])).normalize();
                    (p[0] + p[1] + p[2]) / 3.0 - n * PROBE_DEPTH
                })
                .collect()
        } else {
            Vec::new()
        };
        let largest = (0..triangles.len())
            .max_by(|&a, &b| area(&tri_points(&vertices, &triangles[a])).total_cmp(&area(&tri_points(&vertices, &triangles[b]))))
            .expect("non-empty");
        CollisionMesh {
            vertices,
            triangles,
            bvh,
            source_inset,
            closed,
            probes,
            largest,
        }
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        tri_points(&self.vertices, &self.triangles[i])
    }

    pub fn bounds(&self) -> Aabb {
        *self.bvh.root_bounds().expect("collision meshes are non-empty")
    }

    /// A point just inside a closed mesh, `None` for open meshes.
    pub fn interior_point(&self) -> Option<Vec3> {
        self.probes.get(self.largest).copied()
    }

    /// Points just inside every face of a closed mesh. Any of them lying
    /// inside another closed mesh means the volumes overlap, which catches
    /// overlaps whose surface contacts are all coplanar.
    pub fn probes(&self) -> &[Vec3] {
        &self.probes
    }

    /// Ray-parity point-in-mesh test; meaningful for closed meshes only.
    pub fn contains_point(&self, p: &Vec3) -> bool {
        // an irrational-ish direction avoids grazing axis-aligned edges
        let dir = Vec3::new(0.5773, 0.6151, 0.5371).normalize();
        let inv = dir.map(|c| 1.0 / c);
        let mut hits = 0usize;
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.bvh.nodes[n as usize];
            if !ray_hits_box(p, &inv, node.bounds()) {
                continue;
            }
            match node {
                BvhNode::Leaf { start, count, .. } => {
                    for &ti in &self.bvh.order[*start as usize..(*start + *count) as usize] {
                        if ray_triangle(p, &dir, &self.triangle(ti as usize)).is_some() {
                            hits += 1;
                        }
                    }
                }
                BvhNode::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        hits % 2 == 1
    }

    /// Indexed-triangle text form: an optional `inset <ldu>` line, then
    /// `v x y z` and `f i j k` lines (0-based indices); `#` starts a comment.
    pub fn to_tri(&self) -> String {
        let mut out = format!("inset {}\n", self.source_inset);
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    pub fn from_tri(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut inset = 0.0;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                line: n + 1,
                message: m.to_string(),
            };
            let mut it = line.split_whitespace();
            let tag = it.next().unwrap_or_default();
            let rest: Vec<&str> = it.collect();
            match tag {
                "inset" if rest.len() == 1 => inset = rest[0].parse().map_err(|_| bad("bad inset value"))?,
                "v" if rest.len() == 3 => {
                    let c: Vec<f64> = rest
                        .iter()
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad vertex coordinate"))?;
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                "f" if rest.len() == 3 => {
                    let c: Vec<u32> = rest
                        .iter()
                        .map(|s| s.parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad face index"))?;
                    triangles.push([c[0], c[1], c[2]]);
                }
                _ => return Err(bad("expected `v x y z`, `f i j k` or `inset d`")),
            }
        }
        Self::from_indexed(vertices, triangles, inset)
    }
}

fn tri_points(v: &[Vec3], t: &[u32; 3]) -> [Vec3; 3] {
    [v[t[0] as usize], v[t[1] as usize], v[t[2] as usize]]
}

fn area(t: &[Vec3; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}

fn signed_volume(v: &[Vec3], tris: &[[u32; 3]]) -> f64 {
    tris.iter()
        .map(|t| {
            let p = tri_points(v, t);
            p[0].dot(&p[1].cross(&p[2]))
        })
        .sum::<f64>()
        / 6.0
}

fn is_closed(tris: &[[u32; 3]]) -> bool {
    let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
    for t in tris {
        for k in 0..3 {
            *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    directed
        .iter()
        .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
}

fn ray_hits_box(o: &Vec3, inv: &Vec3, b: &Aabb) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        let a = (b.min[i] - o[i]) * inv[i];
        let c = (b.max[i] - o[i]) * inv[i];
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    t0 <= t1
}

fn weld(raw: &RawMesh) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let mut index: HashMap<[i64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for tri in &raw.triangles {
        if area(tri) < DEGENERATE_AREA {
            continue;
        }
        let ids = tri.map(|p| {
            let key = [0, 1, 2].map(|i| (p[i] / WELD_GRID).round() as i64);
            *index.entry(key).or_insert_with(|| {
                vertices.push(p);
                (vertices.len() - 1) as u32
            })
        });
        if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
            triangles.push(ids);
        }
    }
    (vertices, triangles)
}

/// Moves every vertex inward by `offset` LDU and builds the BVH.
///
/// Vertices are welded first. Each vertex moves against its angle-weighted
/// pseudo-normal, scaled by `1 / min cos` over incident faces so that every
/// incident face plane recedes by at least `offset` (a box shrinks by exactly
/// `2 * offset` per axis). Vertices on open boundaries use the plain mean of
/// their face normals.
pub fn inset_mesh(raw: &RawMesh, offset: f64) -> Result<CollisionMesh> {
    if !offset.is_finite() {
        return Err(Error::NonFinite("inset offset"));
    }
    if raw.triangles.iter().any(|t| t.iter().any(|p| !p.iter().all(|c| c.is_finite()))) {
        return Err(Error::NonFinite("mesh vertex"));
    }
    let (vertices, mut triangles) = weld(raw);
    if triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if is_closed(&triangles) && signed_volume(&vertices, &triangles) < 0.0 {
        for t in &mut triangles {
            t.swap(1, 2);
        }
    }
    if offset == 0.0 {
        return Ok(CollisionMesh::assemble(vertices, triangles, 0.0));
    }

    let mut edge_use: HashMap<(u32, u32), u32> = HashMap::new();
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edge_use.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut boundary = vec![false; vertices.len()];
    for (&(a, b), &n) in &edge_use {
        if n != 2 {
            boundary[a as usize] = true;
            boundary[b as usize] = true;
        }
    }

    let n = vertices.len();
    let mut weighted = vec![Vec3::zeros(); n];
    let mut plain = vec![Vec3::zeros(); n];
    let mut faces: Vec<Vec<Vec3>> = vec![Vec::new(); n];
    for t in &triangles {
        let p = tri_points(&vertices, t);
        let normal = (p[1] - p[0]).cross(&(p[2] - p[0])).normalize();
        for k in 0..3 {
            let u = (p[(k + 1) % 3] - p[k]).normalize();
            let w = (p[(k + 2) % 3] - p[k]).normalize();
            let angle = u.dot(&w).clamp(-1.0, 1.0).acos();
            let v = t[k] as usize;
            weighted[v] += normal * angle;
            plain[v] += normal;
            faces[v].push(normal);
        }
    }

    let moved: Vec<Vec3> = (0..n)
        .map(|i| {
            let sum = if boundary[i] { plain[i] } else { weighted[i] };
            let len = sum.norm();
            if len < 1e-12 {
                return vertices[i];
            }
            let dir = sum / len;
            let min_cos = faces[i].iter().map(|f| f.dot(&dir)).fold(1.0f64, f64::min).max(MIN_NORMAL_COS);
            vertices[i] - dir * (offset / min_cos)
        })
        .collect();
    CollisionMesh::from_indexed(moved, triangles, offset)
}
