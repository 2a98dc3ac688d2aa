use crate::geometry::{Mat3, RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn of_triangle(t: &[Vec3; 3]) -> Aabb {
        let mut b = Aabb::empty();
        for p in t {
            b.grow(p);
        }
        b
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn half(&self) -> Vec3 {
        (self.max - self.min) * 0.5
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= o.min[i] && self.max[i] >= o.max[i])
    }

    /// Overlap with positive volume or touching; boxes separated by a gap
    /// return `false`.
    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= o.max[i] && o.min[i] <= self.max[i])
    }

    /// Enclosing box of this box after a rigid motion.
    pub fn transformed(&self, t: &RigidTransform) -> Aabb {
        let c = t.apply_point(&self.center());
        let abs: Mat3 = t.rotation.abs();
        let h = abs * self.half() + Vec3::repeat(1e-9);
        Aabb { min: c - h, max: c + h }
    }
}

#[derive(Debug, Clone)]
pub enum BvhNode {
    Leaf { bounds: Aabb, start: u32, count: u32 },
    Inner { bounds: Aabb, left: u32, right: u32 },
}

impl BvhNode {
    pub fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { bounds, .. } | BvhNode::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Axis-aligned bounding-volume hierarchy over triangle indices; node 0 is
/// the root.
#[derive(Debug, Clone, Default)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    /// Triangle indices, leaves reference contiguous ranges.
    pub order: Vec<u32>,
}

impl Bvh {
    pub fn build(tri_bounds: &[Aabb]) -> Bvh {
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..tri_bounds.len() as u32).collect(),
        };
        if !tri_bounds.is_empty() {
            let n = tri_bounds.len();
            bvh.build_node(tri_bounds, 0, n);
        }
        bvh
    }

    fn build_node(&mut self, tb: &[Aabb], start: usize, end: usize) -> u32 {
        let bounds = self.order[start..end]
            .iter()
            .fold(Aabb::empty(), |acc, &i| acc.merge(&tb[i as usize]));
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(BvhNode::Leaf {
                bounds,
                start: start as u32,
                count: (end - start) as u32,
            });
            return id;
        }
        let mut cb = Aabb::empty();
        for &i in &self.order[start..end] {
            cb.grow(&tb[i as usize].center());
        }
        let ext = cb.max - cb.min;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            tb[a as usize].center()[axis]
                .total_cmp(&tb[b as usize].center()[axis])
                .then(a.cmp(&b))
        });
        // placeholder, patched once children exist
        self.nodes.push(BvhNode::Leaf {
            bounds,
            start: 0,
            count: 0,
        });
        let left = self.build_node(tb, start, mid);
        let right = self.build_node(tb, mid, end);
        self.nodes[id as usize] = BvhNode::Inner { bounds, left, right };
        id
    }

    pub fn root_bounds(&self) -> Option<&Aabb> {
        self.nodes.first().map(|n| n.bounds())
    }
}
