//! Part–part collision detection on inset meshes.

mod bvh;
mod mesh;
mod triangle;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{RigidTransform, Vec3};
use crate::ldraw::NodeId;

pub use bvh::{Aabb, Bvh, BvhNode};
pub use mesh::{inset_mesh, CollisionMesh, DEGENERATE_AREA};
pub use triangle::{ray_triangle, triangles_intersect, CONTACT_EPS};

/// Default inset applied to part meshes, in LDU.
pub const DEFAULT_INSET: f64 = 0.25;

/// `b`'s vertices expressed in `a`'s local frame.
fn vertices_in_frame_of_a(pose_a: &RigidTransform, b: &CollisionMesh, pose_b: &RigidTransform) -> (RigidTransform, Vec<Vec3>) {
    let rel = pose_a.inverse().compose(pose_b);
    let verts = b.vertices.iter().map(|v| rel.apply_point(v)).collect();
    (rel, verts)
}

fn tri_of(verts: &[Vec3], t: &[u32; 3]) -> [Vec3; 3] {
    [verts[t[0] as usize], verts[t[1] as usize], verts[t[2] as usize]]
}

/// True iff some triangle of `a` properly crosses some triangle of `b`
/// (BVH-vs-BVH traversal). Touching within [`CONTACT_EPS`] does not count.
pub fn surfaces_intersect(a: &CollisionMesh, pose_a: &RigidTransform, b: &CollisionMesh, pose_b: &RigidTransform) -> bool {
    let (rel, bv) = vertices_in_frame_of_a(pose_a, b, pose_b);
    let mut stack = vec![(0u32, 0u32)];
    while let Some((na, nb)) = stack.pop() {
        let node_a = &a.bvh.nodes[na as usize];
        let node_b = &b.bvh.nodes[nb as usize];
        if !node_a.bounds().overlaps(&node_b.bounds().transformed(&rel)) {
            continue;
        }
        match (node_a, node_b) {
            (BvhNode::Leaf { start: sa, count: ca, .. }, BvhNode::Leaf { start: sb, count: cb, .. }) => {
                for &ta in &a.bvh.order[*sa as usize..(*sa + *ca) as usize] {
                    let tri_a = a.triangle(ta as usize);
                    for &tb in &b.bvh.order[*sb as usize..(*sb + *cb) as usize] {
                        if triangles_intersect(&tri_a, &tri_of(&bv, &b.triangles[tb as usize]), CONTACT_EPS) {
                            return true;
                        }
                    }
                }
            }
            (BvhNode::Inner { left, right, .. }, BvhNode::Leaf { .. }) => {
                stack.push((*left, nb));
                stack.push((*right, nb));
            }
            (BvhNode::Leaf { .. }, BvhNode::Inner { left, right, .. }) => {
                stack.push((na, *left));
                stack.push((na, *right));
            }
            (BvhNode::Inner { left: la, right: ra, bounds: ba }, BvhNode::Inner { left: lb, right: rb, bounds: bb }) => {
                // descend the larger box
                if ba.half().norm_squared() >= bb.half().norm_squared() {
                    stack.push((*la, nb));
                    stack.push((*ra, nb));
                } else {
                    stack.push((na, *lb));
                    stack.push((na, *rb));
                }
            }
        }
    }
    false
}

/// Exhaustive all-triangle-pairs counterpart of [`surfaces_intersect`].
pub fn surfaces_intersect_brute(a: &CollisionMesh, pose_a: &RigidTransform, b: &CollisionMesh, pose_b: &RigidTransform) -> bool {
    let (_, bv) = vertices_in_frame_of_a(pose_a, b, pose_b);
    (0..a.triangles.len()).any(|i| {
        let tri_a = a.triangle(i);
        b.triangles
            .iter()
            .any(|t| triangles_intersect(&tri_a, &tri_of(&bv, t), CONTACT_EPS))
    })
}

/// Whether a face probe of closed `a` lies inside closed `b`.
fn probes_inside(a: &CollisionMesh, pose_a: &RigidTransform, b: &CollisionMesh, pose_b: &RigidTransform) -> bool {
    let to_b = pose_b.inverse().compose(pose_a);
    let bounds = b.bounds();
    a.probes().iter().any(|p| {
        let q = to_b.apply_point(p);
        bounds.overlaps(&Aabb { min: q, max: q }) && b.contains_point(&q)
    })
}

/// Collision test: surface crossing, or (for two closed meshes) a face
/// probe of one lying inside the other.
pub fn intersects(a: &CollisionMesh, pose_a: &RigidTransform, b: &CollisionMesh, pose_b: &RigidTransform) -> bool {
    if surfaces_intersect(a, pose_a, b, pose_b) {
        return true;
    }
    a.closed && b.closed && (probes_inside(a, pose_a, b, pose_b) || probes_inside(b, pose_b, a, pose_a))
}

/// A mesh placed in the world.
#[derive(Debug, Clone)]
pub struct Placed {
    pub node: NodeId,
    pub mesh: Arc<CollisionMesh>,
    pub pose: RigidTransform,
}

impl Placed {
    pub fn world_bounds(&self) -> Aabb {
        self.mesh.bounds().transformed(&self.pose)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionReport {
    /// Unordered pairs stored as (smaller id, larger id), sorted.
    pub colliding_pairs: Vec<(NodeId, NodeId)>,
    /// Input position of the first instance that collides with an earlier one.
    pub first_offender: Option<usize>,
}

impl CollisionReport {
    fn from_index_pairs(instances: &[Placed], mut hits: Vec<(usize, usize)>) -> Self {
        let first_offender = hits.iter().map(|&(i, j)| i.max(j)).min();
        hits.sort_unstable();
        let mut pairs: Vec<(NodeId, NodeId)> = hits
            .into_iter()
            .map(|(i, j)| {
                let (a, b) = (instances[i].node, instances[j].node);
                (a.min(b), a.max(b))
            })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        CollisionReport {
            colliding_pairs: pairs,
            first_offender,
        }
    }
}

/// Sweep-and-prune along x over world AABBs; returns index pairs (i < j).
pub fn broad_phase(instances: &[Placed]) -> Vec<(usize, usize)> {
    let boxes: Vec<Aabb> = instances.iter().map(Placed::world_bounds).collect();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&i, &j| boxes[i].min.x.total_cmp(&boxes[j].min.x).then(i.cmp(&j)));
    let mut active: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for &i in &order {
        active.retain(|&j| boxes[j].max.x >= boxes[i].min.x);
        for &j in &active {
            if boxes[i].overlaps(&boxes[j]) {
                out.push((i.min(j), i.max(j)));
            }
        }
        active.push(i);
    }
    out.sort_unstable();
    out
}

/// All pairwise collisions of an assembly.
pub fn check_assembly(instances: &[Placed]) -> CollisionReport {
    let hits: Vec<(usize, usize)> = broad_phase(instances)
        .into_par_iter()
        .filter(|&(i, j)| {
            let (a, b) = (&instances[i], &instances[j]);
            intersects(&a.mesh, &a.pose, &b.mesh, &b.pose)
        })
        .collect();
    CollisionReport::from_index_pairs(instances, hits)
}

/// Accumulating checker: each new instance is tested against all earlier
/// ones.
#[derive(Debug, Clone, Default)]
pub struct IncrementalChecker {
    placed: Vec<(Placed, Aabb)>,
    first_offender: Option<usize>,
}

impl IncrementalChecker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an instance and returns the nodes it collides with.
    pub fn add(&mut self, p: Placed) -> Vec<NodeId> {
        let bounds = p.world_bounds();
        let hits: Vec<NodeId> = self
            .placed
            .par_iter()
            .filter(|(q, qb)| qb.overlaps(&bounds) && intersects(&q.mesh, &q.pose, &p.mesh, &p.pose))
            .map(|(q, _)| q.node)
            .collect();
        if !hits.is_empty() && self.first_offender.is_none() {
            self.first_offender = Some(self.placed.len());
        }
        self.placed.push((p, bounds));
        hits
    }

    /// Step index (0-based insertion order) of the first colliding addition.
    pub fn first_offender(&self) -> Option<usize> {
        self.first_offender
    }

    pub fn len(&self) -> usize {
        self.placed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placed.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_axis, rot_y};
    use crate::ldraw::RawMesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cuboid(min: Vec3, max: Vec3) -> RawMesh {
        let c = |i: usize| {
            Vec3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        RawMesh {
            triangles: quads
                .iter()
                .flat_map(|q| [[c(q[0]), c(q[1]), c(q[2])], [c(q[0]), c(q[2]), c(q[3])]])
                .collect(),
        }
    }

    fn unit_box(inset: f64) -> Arc<CollisionMesh> {
        Arc::new(inset_mesh(&cuboid(Vec3::zeros(), Vec3::repeat(20.0)), inset).unwrap())
    }

    fn at(x: f64, y: f64, z: f64) -> RigidTransform {
        RigidTransform::from_translation(Vec3::new(x, y, z))
    }

    #[test]
    fn separated_and_identical_boxes() {
        let b = unit_box(0.0);
        assert!(!intersects(&b, &at(0.0, 0.0, 0.0), &b, &at(50.0, 0.0, 0.0)));
        assert!(intersects(&b, &at(0.0, 0.0, 0.0), &b, &at(0.0, 0.0, 0.0)));
        // stacked face to face: touching only
        assert!(!intersects(&b, &at(0.0, 0.0, 0.0), &b, &at(0.0, 20.0, 0.0)));
        assert!(intersects(&b, &at(0.0, 0.0, 0.0), &b, &at(0.0, 19.0, 0.0)));
        // small box fully inside a big one
        let small = Arc::new(inset_mesh(&cuboid(Vec3::repeat(5.0), Vec3::repeat(6.0)), 0.0).unwrap());
        assert!(!surfaces_intersect(&b, &RigidTransform::identity(), &small, &RigidTransform::identity()));
        assert!(intersects(&b, &RigidTransform::identity(), &small, &RigidTransform::identity()));
        assert!(intersects(&small, &RigidTransform::identity(), &b, &RigidTransform::identity()));
    }

    #[test]
    fn bvh_matches_brute_force_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let meshes: Vec<CollisionMesh> = (0..6)
            .map(|_| {
                let lo = Vec3::new(rng.random_range(-10.0..0.0), rng.random_range(-10.0..0.0), rng.random_range(-10.0..0.0));
                let hi = lo + Vec3::new(rng.random_range(1.0..20.0), rng.random_range(1.0..20.0), rng.random_range(1.0..20.0));
                inset_mesh(&cuboid(lo, hi), 0.25).unwrap()
            })
            .collect();
        for _ in 0..300 {
            let a = &meshes[rng.random_range(0..meshes.len())];
            let b = &meshes[rng.random_range(0..meshes.len())];
            let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let pa = RigidTransform::new(rot_axis(&axis, rng.random_range(0.0..360.0)), Vec3::zeros());
            let pb = RigidTransform::new(
                rot_y(rng.random_range(0.0..360.0)),
                Vec3::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0)),
            );
            let fast = surfaces_intersect(a, &pa, b, &pb);
            assert_eq!(fast, surfaces_intersect_brute(a, &pa, b, &pb));
            assert_eq!(intersects(a, &pa, b, &pb), intersects(b, &pb, a, &pa));
        }
    }

    #[test]
    fn assembly_finds_planted_pairs() {
        assert_eq!(check_assembly(&[]), CollisionReport::default());
        let b = unit_box(0.25);
        let one = [Placed {
            node: NodeId(0),
            mesh: b.clone(),
            pose: RigidTransform::identity(),
        }];
        assert_eq!(check_assembly(&one), CollisionReport::default());

        // a row of stacked boxes, two of which are pushed into neighbours
        let mut inst: Vec<Placed> = (0..10)
            .map(|i| Placed {
                node: NodeId(i),
                mesh: b.clone(),
                pose: at(0.0, -20.0 * i as f64, 0.0),
            })
            .collect();
        inst[3].pose = at(0.0, -20.0 * 3.0 + 5.0, 0.0);
        inst[8].pose = at(4.0, -20.0 * 7.0, 0.0);
        let report = check_assembly(&inst);
        let mut oracle = Vec::new();
        for i in 0..inst.len() {
            for j in i + 1..inst.len() {
                if intersects(&inst[i].mesh, &inst[i].pose, &inst[j].mesh, &inst[j].pose) {
                    oracle.push((inst[i].node, inst[j].node));
                }
            }
        }
        assert_eq!(report.colliding_pairs, oracle);
        assert_eq!(report.colliding_pairs, vec![(NodeId(2), NodeId(3)), (NodeId(7), NodeId(8))]);
        assert_eq!(report.first_offender, Some(3));

        let mut inc = IncrementalChecker::new();
        let mut firsts = Vec::new();
        for p in inst {
            if !inc.add(p).is_empty() {
                firsts.push(inc.len() - 1);
            }
        }
        assert_eq!(firsts, vec![3, 8]);
        assert_eq!(inc.first_offender(), Some(3));
    }

    #[test]
    fn inset_monotonicity_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let raw = cuboid(Vec3::zeros(), Vec3::new(8.0, 12.0, 6.0));
        let insets = [0.0, 0.1, 0.25, 0.5];
        let meshes: Vec<CollisionMesh> = insets.iter().map(|&d| inset_mesh(&raw, d).unwrap()).collect();
        for _ in 0..200 {
            let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0);
            let pb = RigidTransform::new(
                rot_axis(&axis, rng.random_range(0.0..360.0)),
                Vec3::new(rng.random_range(-12.0..12.0), rng.random_range(-14.0..14.0), rng.random_range(-10.0..10.0)),
            );
            let hits: Vec<bool> = meshes.iter().map(|m| intersects(m, &RigidTransform::identity(), m, &pb)).collect();
            for k in 1..hits.len() {
                assert!(hits[k - 1] || !hits[k], "{hits:?}");
            }
        }
    }

    #[test]
    fn report_json_shape() {
        let r = CollisionReport {
            colliding_pairs: vec![(NodeId(1), NodeId(4))],
            first_offender: Some(4),
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"colliding_pairs":[[1,4]],"first_offender":4}"#);
    }
}
