//! Connectivity graphs: connector matching, parameter extraction and
//! spanning-tree path sampling.

mod matching;
mod params;
mod sample;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::connectors::{ConnIndex, ConnectorFamily};
use crate::error::Result;
use crate::geometry::QuantizedParams;
use crate::ldraw::{NodeId, PartInstance};

pub use matching::{evaluate_pair, match_connectors, resolve_conflicts, world_connectors, Candidate, WorldConnector};
pub use params::{euler_matrix, euler_zyx, extract_params, quantize_euler, realize_params, reverse_params, validate_params, MatchTolerances};
pub use sample::{
    collision_free_prefix, sample_corpus_paths, sample_path, select_graphs, BuildPath, CorpusSampling, PathStep, DEFAULT_MAX_PARTS,
};

/// A connector on a placed part, serialized as `[node, "index"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: NodeId,
    pub conn: ConnIndex,
}

impl Endpoint {
    pub fn new(node: NodeId, conn: ConnIndex) -> Self {
        Endpoint { node, conn }
    }
}

/// A realized connection. `params` describe `b` relative to `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnEdge {
    pub a: Endpoint,
    pub b: Endpoint,
    pub family: ConnectorFamily,
    pub params: QuantizedParams,
}

impl ConnEdge {
    pub fn touches(&self, n: NodeId) -> bool {
        self.a.node == n || self.b.node == n
    }

    pub fn other(&self, n: NodeId) -> NodeId {
        if self.a.node == n {
            self.b.node
        } else {
            self.a.node
        }
    }

    /// The same connection with `a` and `b` swapped.
    pub fn reversed(&self) -> Result<ConnEdge> {
        Ok(ConnEdge {
            a: self.b,
            b: self.a,
            family: self.family,
            params: reverse_params(&self.params, self.family)?,
        })
    }

    /// The edge oriented so that `a` lies on `existing`.
    pub fn oriented_from(&self, existing: NodeId) -> Result<ConnEdge> {
        if self.a.node == existing {
            Ok(self.clone())
        } else {
            self.reversed()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    a: (NodeId, ConnIndex),
    b: (NodeId, ConnIndex),
    family: ConnectorFamily,
    params: QuantizedParams,
}

impl Serialize for ConnEdge {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EdgeJson {
            a: (self.a.node, self.a.conn),
            b: (self.b.node, self.b.conn),
            family: self.family,
            params: self.params,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConnEdge {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let e = EdgeJson::deserialize(d)?;
        Ok(ConnEdge {
            a: Endpoint::new(e.a.0, e.a.1),
            b: Endpoint::new(e.b.0, e.b.1),
            family: e.family,
            params: e.params,
        })
    }
}

/// Nodes are placed parts, edges realized connector pairings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConnectivityGraph {
    pub nodes: BTreeMap<NodeId, PartInstance>,
    pub edges: Vec<ConnEdge>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<PartInstance>,
    edges: Vec<ConnEdge>,
}

impl Serialize for ConnectivityGraph {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphJson {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConnectivityGraph {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let g = GraphJson::deserialize(d)?;
        Ok(ConnectivityGraph::new(g.nodes, g.edges))
    }
}

impl ConnectivityGraph {
    pub fn new(nodes: Vec<PartInstance>, edges: Vec<ConnEdge>) -> Self {
        ConnectivityGraph {
            nodes: nodes.into_iter().map(|n| (n.node_id, n)).collect(),
            edges,
        }
    }

    /// Nodes reachable from `root`, sorted.
    pub fn component_of(&self, root: NodeId) -> Vec<NodeId> {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for e in &self.edges {
            adj.entry(e.a.node).or_default().push(e.b.node);
            adj.entry(e.b.node).or_default().push(e.a.node);
        }
        let mut seen = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Connected components, each sorted, ordered by smallest node id.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let mut done = BTreeSet::new();
        let mut out = Vec::new();
        for &n in self.nodes.keys() {
            if !done.contains(&n) {
                let c = self.component_of(n);
                done.extend(c.iter().copied());
                out.push(c);
            }
        }
        out
    }

    /// Node degrees counting multi-edges.
    pub fn degrees(&self) -> BTreeMap<NodeId, usize> {
        let mut d: BTreeMap<NodeId, usize> = self.nodes.keys().map(|&k| (k, 0)).collect();
        for e in &self.edges {
            *d.entry(e.a.node).or_default() += 1;
            *d.entry(e.b.node).or_default() += 1;
        }
        d
    }
}
