use std::collections::{BTreeSet, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::collision::{IncrementalChecker, Placed};
use crate::error::{Error, Result};
use crate::ldraw::NodeId;

use super::{ConnEdge, ConnectivityGraph};

/// Default cap on parts per sampled path.
pub const DEFAULT_MAX_PARTS: usize = 100;

/// One attach step: `edge.a` lies on an already introduced node, `edge.b`
/// on `new_node`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub new_node: NodeId,
    pub edge: ConnEdge,
}

/// A spanning-tree prefix in introduction order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildPath {
    pub root: NodeId,
    pub steps: Vec<PathStep>,
}

impl BuildPath {
    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nodes in introduction order.
    pub fn nodes(&self) -> Vec<NodeId> {
        std::iter::once(self.root).chain(self.steps.iter().map(|s| s.new_node)).collect()
    }

    pub fn truncate(&mut self, parts: usize) {
        self.steps.truncate(parts.saturating_sub(1));
    }

    /// Checks the prefix-introduction invariant.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = BTreeSet::from([self.root]);
        self.steps.iter().all(|s| {
            s.edge.b.node == s.new_node && seen.contains(&s.edge.a.node) && seen.insert(s.new_node)
        })
    }
}

/// Samples a uniformly random spanning tree of the root's component
/// (Wilson's loop-erased random walks), then introduces nodes by random
/// frontier expansion over that tree, stopping after `max_parts` nodes.
///
/// `root = None` picks a uniformly random node. Multi-edges between the
/// same nodes are distinct edges of the multigraph.
pub fn sample_path(g: &ConnectivityGraph, root: Option<NodeId>, max_parts: usize, seed: u64) -> Result<BuildPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<NodeId> = g.nodes.keys().copied().collect();
    if ids.is_empty() {
        return Err(Error::Empty("graph"));
    }
    let root = match root {
        Some(r) if g.nodes.contains_key(&r) => r,
        Some(r) => return Err(Error::UnknownNode(r.0)),
        None => ids[rng.random_range(0..ids.len())],
    };

    // adjacency: node -> incident edge indices
    let mut adj: HashMap<NodeId, Vec<usize>> = HashMap::new();
    for (i, e) in g.edges.iter().enumerate() {
        if e.a.node != e.b.node {
            adj.entry(e.a.node).or_default().push(i);
            adj.entry(e.b.node).or_default().push(i);
        }
    }
    let component = g.component_of(root);

    // Wilson: parent edge of every non-root node, pointing toward the root.
    let mut in_tree: HashMap<NodeId, bool> = component.iter().map(|&n| (n, false)).collect();
    in_tree.insert(root, true);
    let mut next: HashMap<NodeId, usize> = HashMap::new();
    for &start in &component {
        let mut u = start;
        while !in_tree[&u] {
            let inc = &adj[&u];
            let e = inc[rng.random_range(0..inc.len())];
            next.insert(u, e);
            u = g.edges[e].other(u);
        }
        let mut u = start;
        while !in_tree[&u] {
            in_tree.insert(u, true);
            u = g.edges[next[&u]].other(u);
        }
    }
    let mut children: HashMap<NodeId, Vec<(NodeId, usize)>> = HashMap::new();
    for &n in &component {
        if let Some(&e) = next.get(&n) {
            children.entry(g.edges[e].other(n)).or_default().push((n, e));
        }
    }

    let mut steps = Vec::new();
    let mut frontier: Vec<(NodeId, usize)> = children.get(&root).cloned().unwrap_or_default();
    while steps.len() + 1 < max_parts && !frontier.is_empty() {
        let k = rng.random_range(0..frontier.len());
        let (node, e) = frontier.swap_remove(k);
        let edge = g.edges[e].oriented_from(g.edges[e].other(node))?;
        steps.push(PathStep { new_node: node, edge });
        if let Some(ch) = children.get(&node) {
            frontier.extend(ch.iter().copied());
        }
    }
    if max_parts == 0 {
        steps.clear();
    }
    Ok(BuildPath { root, steps })
}

/// Length of the collision-free prefix of `path` when parts are placed at
/// their graph poses in introduction order. Parts without geometry never
/// collide.
pub fn collision_free_prefix(path: &BuildPath, g: &ConnectivityGraph, catalog: &Catalog) -> Result<usize> {
    let mut checker = IncrementalChecker::new();
    for (k, node) in path.nodes().into_iter().enumerate() {
        let inst = g.nodes.get(&node).ok_or(Error::UnknownNode(node.0))?;
        if let Some(mesh) = catalog.collision_mesh(&inst.part_id)? {
            let hits = checker.add(Placed {
                node,
                mesh,
                pose: inst.pose,
            });
            if !hits.is_empty() {
                return Ok(k);
            }
        }
    }
    Ok(path.len())
}

/// Corpus sampling options.
#[derive(Debug, Clone, Copy)]
pub struct CorpusSampling {
    pub count: usize,
    pub max_parts: usize,
    pub seed: u64,
}

/// Graph indices drawn with probability proportional to the square root of
/// their node count.
pub fn select_graphs(sizes: &[usize], count: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let weights: Vec<f64> = sizes.iter().map(|&n| (n as f64).sqrt()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|_| Error::Empty("corpus"))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Draws `count` paths from a corpus. With a catalog, each path is cut at
/// its first colliding step. Returns (graph index, path) pairs.
pub fn sample_corpus_paths(
    corpus: &[ConnectivityGraph],
    opts: &CorpusSampling,
    collision: Option<&Catalog>,
) -> Result<Vec<(usize, BuildPath)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sizes: Vec<usize> = corpus.iter().map(|g| g.nodes.len()).collect();
    let picks = select_graphs(&sizes, opts.count, &mut rng)?;
    let seeds: Vec<u64> = picks.iter().map(|_| rng.next_u64()).collect();
    picks
        .into_par_iter()
        .zip(seeds)
        .map(|(gi, seed)| {
            let g = &corpus[gi];
            let mut path = sample_path(g, None, opts.max_parts, seed)?;
            if let Some(cat) = collision {
                let ok = collision_free_prefix(&path, g, cat)?;
                path.truncate(ok);
            }
            Ok((gi, path))
        })
        .collect()
}
