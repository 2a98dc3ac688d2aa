use std::collections::HashMap;

use rayon::prelude::*;

use crate::catalog::Catalog;
use crate::connectors::{dof_spec, CompatTable, ConnectorFamily, Subtype};
use crate::error::Result;
use crate::geometry::{ConnectorFrame, QuantizedParams};
use crate::ldraw::PartInstance;

use super::params::{extract_params, MatchTolerances};
use super::{ConnEdge, ConnectivityGraph, Endpoint};

/// A connector carried into world coordinates by its instance pose.
#[derive(Debug, Clone)]
pub struct WorldConnector {
    pub at: Endpoint,
    pub subtype: Subtype,
    pub frame: ConnectorFrame,
    pub length: f64,
}

/// World connectors of all rigid instances, ordered by (node, index).
pub fn world_connectors(instances: &[PartInstance], catalog: &Catalog) -> Result<Vec<WorldConnector>> {
    let mut out = Vec::new();
    for inst in instances.iter().filter(|i| !i.nonrigid) {
        for c in catalog.connectors(&inst.part_id)?.iter() {
            out.push(WorldConnector {
                at: Endpoint {
                    node: inst.node_id,
                    conn: c.index,
                },
                subtype: c.subtype.clone(),
                frame: c.frame.transformed(&inst.pose),
                length: c.length(),
            });
        }
    }
    out.sort_by_key(|c| c.at);
    Ok(out)
}

/// A pairing that passed the predicate, before conflict resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub a: Endpoint,
    pub b: Endpoint,
    pub family: ConnectorFamily,
    pub params: QuantizedParams,
    /// Residual misalignment on a 1e-6 grid; lower is better.
    pub score: i64,
}

/// The matching predicate for an ordered pair (`x.at < y.at`). `x` is the
/// existing side of the resulting edge.
pub fn evaluate_pair(x: &WorldConnector, y: &WorldConnector, compat: &CompatTable, tol: &MatchTolerances) -> Option<Candidate> {
    if x.at.node == y.at.node || !compat.compatible(&x.subtype, &y.subtype) {
        return None;
    }
    let family = x.subtype.family();
    let params = extract_params(&x.frame, &y.frame, family, tol).ok()?;
    let (a, b) = (&x.frame, &y.frame);
    let delta = b.origin - a.origin;
    if dof_spec(family).has_slide {
        let s = delta.dot(&a.principal);
        // y's extent along x's axis, measured from x's origin
        let (lo, hi) = if params.flip { (s, s + y.length) } else { (s - y.length, s) };
        if lo.max(0.0) > hi.min(x.length) + tol.position {
            return None;
        }
    }
    let axis_cos = a.principal.dot(&b.principal).abs().min(1.0);
    let perp = if dof_spec(family).has_slide {
        (delta - a.principal * delta.dot(&a.principal)).norm()
    } else {
        delta.norm()
    };
    let residual = perp + (1.0 - axis_cos);
    Some(Candidate {
        a: x.at,
        b: y.at,
        family,
        params,
        score: (residual * 1e6).round() as i64,
    })
}

/// Greedy acceptance by ascending score (ties by endpoint ids): a
/// single-accept connector ends up in at most one edge. Output is sorted by
/// (a, b).
pub fn resolve_conflicts(mut cands: Vec<Candidate>, connectors: &[WorldConnector]) -> Vec<ConnEdge> {
    let multi: HashMap<Endpoint, bool> = connectors.iter().map(|c| (c.at, c.subtype.multi_accept())).collect();
    cands.sort_by_key(|c| (c.score, c.a, c.b));
    cands.dedup_by(|p, q| p.a == q.a && p.b == q.b);
    let mut used: HashMap<Endpoint, ()> = HashMap::new();
    let mut edges = Vec::new();
    for c in cands {
        let free = |e: &Endpoint, used: &HashMap<Endpoint, ()>| multi.get(e).copied().unwrap_or(false) || !used.contains_key(e);
        if free(&c.a, &used) && free(&c.b, &used) {
            used.insert(c.a, ());
            used.insert(c.b, ());
            edges.push(ConnEdge {
                a: c.a,
                b: c.b,
                family: c.family,
                params: c.params,
            });
        }
    }
    edges.sort_by_key(|e| (e.a, e.b));
    edges
}

type Cell = [i64; 3];

fn cell_of(p: &crate::geometry::Vec3, size: f64) -> Cell {
    [0, 1, 2].map(|i| (p[i] / size).floor() as i64)
}

/// Infers the connectivity graph of a set of posed instances.
///
/// Connector origins are bucketed in a uniform grid; each connector queries
/// the neighbouring cells (along its whole reachable axis segment for
/// sliding families), and every discovered pair is run through
/// [`evaluate_pair`] and [`resolve_conflicts`].
pub fn match_connectors(instances: &[PartInstance], catalog: &Catalog, tol: &MatchTolerances) -> Result<ConnectivityGraph> {
    let conns = world_connectors(instances, catalog)?;
    let cell = (2.0 * tol.position).max(4.0);
    let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, c) in conns.iter().enumerate() {
        grid.entry(cell_of(&c.frame.origin, cell)).or_default().push(i);
    }
    let max_len = conns
        .iter()
        .filter(|c| c.subtype.family().slides())
        .map(|c| c.length)
        .fold(0.0f64, f64::max);
    let compat = catalog.compat();

    let cands: Vec<Candidate> = (0..conns.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = &conns[i];
            let mut cells: Vec<Cell> = Vec::new();
            let mut push_around = |c: Cell| {
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            cells.push([c[0] + dx, c[1] + dy, c[2] + dz]);
                        }
                    }
                }
            };
            if x.subtype.family().slides() {
                let lo = -max_len - tol.position;
                let hi = x.length + max_len + tol.position;
                let steps = ((hi - lo) / cell).ceil().max(0.0) as usize;
                for k in 0..=steps {
                    let t = (lo + k as f64 * cell).min(hi);
                    push_around(cell_of(&(x.frame.origin + x.frame.principal * t), cell));
                }
            } else {
                push_around(cell_of(&x.frame.origin, cell));
            }
            cells.sort_unstable();
            cells.dedup();
            let mut found = Vec::new();
            for c in cells {
                for &j in grid.get(&c).map(Vec::as_slice).unwrap_or(&[]) {
                    if j == i {
                        continue;
                    }
                    let (p, q) = if i < j { (i, j) } else { (j, i) };
                    if let Some(cand) = evaluate_pair(&conns[p], &conns[q], compat, tol) {
                        found.push(cand);
                    }
                }
            }
            found
        })
        .collect();

    let edges = resolve_conflicts(cands, &conns);
    Ok(ConnectivityGraph::new(instances.to_vec(), edges))
}
