//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use brickir::catalog::Catalog;
use brickir::collision::CollisionMesh;
use brickir::connectors::{index_letters, parse_index_letters, ConnIndex, ConnectorFamily, Subtype};
use brickir::geometry::{Mat3, QuantizedParams, RigidTransform, Vec3};
use brickir::graph::{ConnEdge, Endpoint, MatchTolerances};
use brickir::ldraw::{PartInstance, RawMesh};
use brickir::program::ErrorCode;
use rand::seq::IndexedRandom;
use rand::Rng;

// ---------------------------------------------------------------- matching

struct OracleConn {
    at: Endpoint,
    subtype: Subtype,
    origin: Vec3,
    p: Vec3,
    r: Vec3,
    len: f64,
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

fn wrap360(x: f64) -> i32 {
    (round_half_up(x).rem_euclid(360)) as i32
}

/// Intrinsic Z-Y-X decomposition of `m` into rounded degrees, with the
/// roll folded into the yaw when the rounded pitch is ±90.
fn euler_oracle(m: &Mat3) -> [i32; 3] {
    let deg = f64::to_degrees;
    let pitch = deg((-m[(2, 0)]).atan2(m[(0, 0)].hypot(m[(1, 0)])));
    let p = round_half_up(pitch).clamp(-90, 90) as i32;
    if p.abs() == 90 {
        return [wrap360(deg((-m[(0, 1)]).atan2(m[(1, 1)]))), p, 0];
    }
    [wrap360(deg(m[(1, 0)].atan2(m[(0, 0)]))), p, wrap360(deg(m[(2, 1)].atan2(m[(2, 2)])))]
}

/// Parameters and score of the pair, or `None` if it does not mate.
fn oracle_pair(x: &OracleConn, y: &OracleConn, family: ConnectorFamily, tol: &MatchTolerances) -> Option<(QuantizedParams, i64)> {
    let delta = y.origin - x.origin;
    let cos_tol = tol.axis_deg.to_radians().cos();
    let axis_dot = x.p.dot(&y.p);
    let sx = x.p.cross(&x.r);
    if family == ConnectorFamily::Ball {
        if delta.norm() > tol.position {
            return None;
        }
        // relative rotation: columns of y's frame, with y's p and s negated
        let sy = y.p.cross(&y.r);
        let ax = Mat3::from_columns(&[x.r, sx, x.p]);
        let by = Mat3::from_columns(&[y.r, -sy, -y.p]);
        let rel = ax.transpose() * by;
        let score = ((delta.norm() + 1.0 - axis_dot.abs().min(1.0)) * 1e6).round() as i64;
        return Some((
            QuantizedParams {
                euler: euler_oracle(&rel),
                ..Default::default()
            },
            score,
        ));
    }
    let flips = matches!(family, ConnectorFamily::Hinge | ConnectorFamily::Axle);
    let slides = family == ConnectorFamily::Axle;
    let flip = if -axis_dot >= cos_tol {
        false
    } else if flips && axis_dot >= cos_tol {
        true
    } else {
        return None;
    };
    let axial = delta.dot(&x.p);
    let perp = if slides { (delta - x.p * axial).norm() } else { delta.norm() };
    if perp > tol.position {
        return None;
    }
    let yaw_deg = sx.dot(&y.r).atan2(x.r.dot(&y.r)).to_degrees();
    let yaw = if family == ConnectorFamily::Fixed {
        if yaw_deg.abs() > tol.axis_deg {
            return None;
        }
        0
    } else {
        wrap360(yaw_deg)
    };
    if slides {
        let (lo, hi) = if flip { (axial, axial + y.len) } else { (axial - y.len, axial) };
        if lo.max(0.0) > hi.min(x.len) + tol.position {
            return None;
        }
    }
    let score = ((perp + 1.0 - axis_dot.abs().min(1.0)) * 1e6).round() as i64;
    Some((
        QuantizedParams {
            yaw,
            flip,
            slide: if slides { round_half_up(axial) as i32 } else { 0 },
            euler: [0; 3],
        },
        score,
    ))
}

/// All-pairs matcher: every connector pair is tested, then pairings are
/// accepted greedily by (score, a, b).
pub fn exhaustive_match(instances: &[PartInstance], catalog: &Catalog, tol: &MatchTolerances) -> Vec<ConnEdge> {
    let mut conns = Vec::new();
    for inst in instances.iter().filter(|i| !i.nonrigid) {
        let rot = inst.pose.rotation;
        for c in catalog.connectors(&inst.part_id).unwrap().iter() {
            conns.push(OracleConn {
                at: Endpoint::new(inst.node_id, c.index),
                subtype: c.subtype.clone(),
                origin: rot * c.frame.origin + inst.pose.translation,
                p: rot * c.frame.principal,
                r: rot * c.frame.reference,
                len: c.axle_length.unwrap_or(0.0),
            });
        }
    }
    conns.sort_by_key(|c| c.at);
    let mut cands = Vec::new();
    for i in 0..conns.len() {
        for j in i + 1..conns.len() {
            let (x, y) = (&conns[i], &conns[j]);
            if x.at.node == y.at.node || !catalog.compat().compatible(&x.subtype, &y.subtype) {
                continue;
            }
            if let Some((params, score)) = oracle_pair(x, y, x.subtype.family(), tol) {
                cands.push((score, i, j, params));
            }
        }
    }
    cands.sort_by(|p, q| (p.0, conns[p.1].at, conns[p.2].at).cmp(&(q.0, conns[q.1].at, conns[q.2].at)));
    let mut used = HashSet::new();
    let mut edges = Vec::new();
    for (_, i, j, params) in cands {
        let free = |k: usize, used: &HashSet<usize>| matches!(conns[k].subtype, Subtype::Bar | Subtype::Axle) || !used.contains(&k);
        if free(i, &used) && free(j, &used) {
            used.insert(i);
            used.insert(j);
            edges.push(ConnEdge {
                a: conns[i].at,
                b: conns[j].at,
                family: conns[i].subtype.family(),
                params,
            });
        }
    }
    edges.sort_by_key(|e| (e.a, e.b));
    edges
}

// ----------------------------------------------------------- spanning trees

/// Every spanning tree of a connected multigraph, as sorted edge-index sets.
pub fn spanning_trees(nodes: usize, edges: &[(usize, usize)]) -> Vec<BTreeSet<usize>> {
    let mut out = Vec::new();
    let m = edges.len();
    for mask in 0u64..(1u64 << m) {
        if mask.count_ones() as usize != nodes - 1 {
            continue;
        }
        let mut parent: Vec<usize> = (0..nodes).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        let mut ok = true;
        for (k, &(u, v)) in edges.iter().enumerate() {
            if mask >> k & 1 == 1 {
                let (a, b) = (find(&mut parent, u), find(&mut parent, v));
                if a == b {
                    ok = false;
                    break;
                }
                parent[a] = b;
            }
        }
        if ok {
            out.push((0..m).filter(|k| mask >> k & 1 == 1).collect());
        }
    }
    out
}

// ---------------------------------------------------------------- collision

pub fn world_triangles(mesh: &CollisionMesh, pose: &RigidTransform) -> Vec<[Vec3; 3]> {
    (0..mesh.triangles.len())
        .map(|i| mesh.triangle(i).map(|v| pose.rotation * v + pose.translation))
        .collect()
}

/// Whether the open segment `p → q` crosses the interior of triangle `t`.
fn segment_pierces(p: &Vec3, q: &Vec3, t: &[Vec3; 3]) -> bool {
    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
    let dp = n.dot(&(p - t[0]));
    let dq = n.dot(&(q - t[0]));
    if dp * dq >= 0.0 {
        return false;
    }
    let x = p + (q - p) * (dp / (dp - dq));
    // same-side test against each edge
    let s0 = (t[1] - t[0]).cross(&(x - t[0])).dot(&n);
    let s1 = (t[2] - t[1]).cross(&(x - t[1])).dot(&n);
    let s2 = (t[0] - t[2]).cross(&(x - t[2])).dot(&n);
    (s0 > 0.0 && s1 > 0.0 && s2 > 0.0) || (s0 < 0.0 && s1 < 0.0 && s2 < 0.0)
}

/// Two triangles in general position intersect iff an edge of one pierces
/// the other.
pub fn triangles_cross(a: &[Vec3; 3], b: &[Vec3; 3]) -> bool {
    (0..3).any(|i| segment_pierces(&a[i], &a[(i + 1) % 3], b) || segment_pierces(&b[i], &b[(i + 1) % 3], a))
}

pub fn surfaces_oracle(a: &CollisionMesh, pa: &RigidTransform, b: &CollisionMesh, pb: &RigidTransform) -> bool {
    let (ta, tb) = (world_triangles(a, pa), world_triangles(b, pb));
    ta.iter().any(|x| tb.iter().any(|y| triangles_cross(x, y)))
}

/// Generalized winding number of a closed triangle soup around `p`.
pub fn winding_number(tris: &[[Vec3; 3]], p: &Vec3) -> f64 {
    let mut total = 0.0;
    for t in tris {
        let (a, b, c) = (t[0] - p, t[1] - p, t[2] - p);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Surface crossing, or a vertex of one closed mesh enclosed by the other.
pub fn intersects_oracle(a: &CollisionMesh, pa: &RigidTransform, b: &CollisionMesh, pb: &RigidTransform) -> bool {
    if surfaces_oracle(a, pa, b, pb) {
        return true;
    }
    if !(a.closed && b.closed) {
        return false;
    }
    let (ta, tb) = (world_triangles(a, pa), world_triangles(b, pb));
    winding_number(&tb, &ta[0][0]).abs() > 0.5 || winding_number(&ta, &tb[0][0]).abs() > 0.5
}

/// Closed n-gon prism around the y axis from `y0` to `y1`. The first vertex
/// sits at angle `phase` (degrees, in the x-z plane).
pub fn prism(center: Vec3, radius: f64, y0: f64, y1: f64, n: usize, phase: f64) -> RawMesh {
    let ring = |y: f64| -> Vec<Vec3> {
        (0..n)
            .map(|k| {
                let a = (phase + 360.0 * k as f64 / n as f64).to_radians();
                center + Vec3::new(radius * a.cos(), y, radius * a.sin())
            })
            .collect()
    };
    let (lo, hi) = (ring(y0), ring(y1));
    let (c0, c1) = (center + Vec3::new(0.0, y0, 0.0), center + Vec3::new(0.0, y1, 0.0));
    let mut t = Vec::new();
    for k in 0..n {
        let j = (k + 1) % n;
        t.push(orient([lo[k], lo[j], hi[j]], (lo[k] + lo[j]) / 2.0 - c0));
        t.push(orient([lo[k], hi[j], hi[k]], (lo[k] + lo[j]) / 2.0 - c0));
        t.push(orient([c0, lo[k], lo[j]], Vec3::new(0.0, y0 - y1, 0.0)));
        t.push(orient([c1, hi[k], hi[j]], Vec3::new(0.0, y1 - y0, 0.0)));
    }
    RawMesh { triangles: t }
}

/// Closed annular tube around the y axis.
pub fn tube(center: Vec3, inner: f64, outer: f64, y0: f64, y1: f64, n: usize, phase: f64) -> RawMesh {
    let ring = |r: f64, y: f64| -> Vec<Vec3> {
        (0..n)
            .map(|k| {
                let a = (phase + 360.0 * k as f64 / n as f64).to_radians();
                center + Vec3::new(r * a.cos(), y, r * a.sin())
            })
            .collect()
    };
    let (ol, oh, il, ih) = (ring(outer, y0), ring(outer, y1), ring(inner, y0), ring(inner, y1));
    let c = center + Vec3::new(0.0, (y0 + y1) / 2.0, 0.0);
    let mut t = Vec::new();
    for k in 0..n {
        let j = (k + 1) % n;
        let out_n = (ol[k] + ol[j]) / 2.0 - Vec3::new(c.x, y0, c.z);
        t.push(orient([ol[k], ol[j], oh[j]], out_n));
        t.push(orient([ol[k], oh[j], oh[k]], out_n));
        t.push(orient([il[k], il[j], ih[j]], -out_n));
        t.push(orient([il[k], ih[j], ih[k]], -out_n));
        let down = Vec3::new(0.0, y0 - y1, 0.0);
        t.push(orient([ol[k], ol[j], il[j]], down));
        t.push(orient([ol[k], il[j], il[k]], down));
        t.push(orient([oh[k], oh[j], ih[j]], -down));
        t.push(orient([oh[k], ih[j], ih[k]], -down));
    }
    RawMesh { triangles: t }
}

fn orient(t: [Vec3; 3], outward: Vec3) -> [Vec3; 3] {
    if (t[1] - t[0]).cross(&(t[2] - t[0])).dot(&outward) >= 0.0 {
        t
    } else {
        [t[0], t[2], t[1]]
    }
}

pub fn merge(meshes: &[RawMesh]) -> RawMesh {
    RawMesh {
        triangles: meshes.iter().flat_map(|m| m.triangles.iter().copied()).collect(),
    }
}

/// Rotation angle between two rotations in degrees, accurate near zero.
pub fn rotation_error_deg(a: &Mat3, b: &Mat3) -> f64 {
    let f = (a - b).norm();
    (2.0 * (f / (2.0 * std::f64::consts::SQRT_2)).min(1.0).asin()).to_degrees()
}

// --------------------------------------------------------------- corruption

/// Corruption classes, one per program error code.
pub const CLASSES: [ErrorCode; 14] = ErrorCode::ALL;

/// Expected diagnosis of a corrupted program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expected {
    pub code: ErrorCode,
    /// 1-based line of the first invalid line.
    pub line: usize,
    /// Placement actions before it.
    pub steps: usize,
}

struct Action {
    intro: usize,
    attach: Option<usize>,
}

fn actions(lines: &[String]) -> Vec<Action> {
    let mut v = vec![Action { intro: 0, attach: None }];
    let mut i = 1;
    while i < lines.len() {
        v.push(Action {
            intro: i,
            attach: Some(i + 1),
        });
        i += 2;
    }
    v
}

fn intro_fields(line: &str) -> (String, String, String) {
    let (head, color) = line.split_once('|').unwrap();
    let head = head.trim();
    let (id, name) = head.split_once(' ').unwrap();
    (id.to_string(), name.trim().to_string(), color.trim().to_string())
}

fn tokens(line: &str) -> Vec<String> {
    line.split_whitespace().map(String::from).collect()
}

fn connectors_of(lines: &[String], node: &str, catalog: &Catalog) -> Vec<brickir::connectors::AnnotatedConnector> {
    let line = lines
        .iter()
        .find(|l| l.contains('|') && intro_fields(l).0 == node)
        .expect("node introduced");
    let part = catalog.part_by_name(&intro_fields(line).1).expect("known part");
    catalog.connectors(&part.id).unwrap().to_vec()
}

/// Applies one single-token corruption of `class` to a random applicable
/// action of a valid program, returning the text and the diagnosis the
/// validator has to produce. `None` when no action admits the class.
pub fn corrupt(text: &str, class: ErrorCode, catalog: &Catalog, rng: &mut impl Rng) -> Option<(String, Expected)> {
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let acts = actions(&lines);
    let n = acts.len();
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);
    for k in order {
        let act = &acts[k];
        // k is 0-based: k actions precede this one
        let intro_line = act.intro + 1;
        let attach_line = act.attach.map(|a| a + 1);
        let exp = |code, line| Expected { code, line, steps: k };
        match class {
            ErrorCode::UnknownPart | ErrorCode::UnknownColor => {
                let (id, name, color) = intro_fields(&lines[act.intro]);
                lines[act.intro] = if class == ErrorCode::UnknownPart {
                    format!("{id} no such part {} | {color}", name.len())
                } else {
                    format!("{id} {name} | no such color")
                };
                return Some((join(&lines), exp(class, intro_line)));
            }
            ErrorCode::DuplicateNode if k > 0 => {
                let (_, name, color) = intro_fields(&lines[act.intro]);
                lines[act.intro] = format!("a {name} | {color}");
                return Some((join(&lines), exp(class, intro_line)));
            }
            ErrorCode::MissingAttach if k > 0 => {
                lines.remove(act.attach.unwrap());
                return Some((join(&lines), exp(class, intro_line)));
            }
            ErrorCode::UnexpectedAttach if k > 0 => {
                let a = act.attach.unwrap();
                let dup = lines[a].clone();
                lines.insert(a + 1, dup);
                return Some((
                    join(&lines),
                    Expected {
                        code: class,
                        line: a + 2,
                        steps: k + 1,
                    },
                ));
            }
            _ if k == 0 => continue,
            _ => {}
        }
        let a = act.attach.unwrap();
        let mut t = tokens(&lines[a]);
        let family: ConnectorFamily = t[1].parse().unwrap();
        let line = attach_line.unwrap();
        let ok = match class {
            ErrorCode::MalformedLine => {
                t[0] = "Q".into();
                true
            }
            ErrorCode::TargetNotIntroduced => {
                t[0] = "zzz".into();
                true
            }
            ErrorCode::IncompatibleSubtypes => {
                t[4] = t[2].clone();
                true
            }
            ErrorCode::BadParamArity => {
                t.push("0".into());
                true
            }
            ErrorCode::ParamOutOfRange => match family {
                ConnectorFamily::Fixed => false,
                ConnectorFamily::Ball => {
                    t[7] = "91".into();
                    true
                }
                _ => {
                    let yaw = if t[6] == "flip" { 7 } else { 6 };
                    t[yaw] = "360".into();
                    true
                }
            },
            ErrorCode::UnknownConnector => {
                t[5] = "zz".into();
                true
            }
            ErrorCode::SubtypeMismatch => {
                let new_node = intro_fields(&lines[act.intro]).0;
                let conns = connectors_of(&lines, &new_node, catalog);
                match conns.iter().find(|c| c.subtype.token() != t[4]) {
                    Some(c) => {
                        t[5] = c.index.to_string();
                        true
                    }
                    None => false,
                }
            }
            ErrorCode::ConnectorOccupied => {
                let tc = parse_index_letters(&t[3]).unwrap();
                let consumed = consumed_before(&lines, act.intro);
                let mut found = None;
                for (node, conn) in &consumed {
                    if *conn != tc || *node == t[0] {
                        continue;
                    }
                    let c = &connectors_of(&lines, node, catalog)[*conn];
                    if c.subtype.token() == t[2] && c.subtype.family() == family && !c.subtype.multi_accept() {
                        found = Some(node.clone());
                        break;
                    }
                }
                match found {
                    Some(node) => {
                        t[0] = node;
                        true
                    }
                    None => false,
                }
            }
            ErrorCode::SlideOutOfRange => {
                if family != ConnectorFamily::Axle {
                    false
                } else {
                    let new_node = intro_fields(&lines[act.intro]).0;
                    let lt = connectors_of(&lines, &t[0], catalog)[parse_index_letters(&t[3]).unwrap()].length();
                    let ln = connectors_of(&lines, &new_node, catalog)[parse_index_letters(&t[5]).unwrap()].length();
                    let last = t.len() - 1;
                    t[last] = format!("{}", (lt + ln) as i64 + 10);
                    true
                }
            }
            _ => unreachable!("handled above"),
        };
        if ok {
            lines[a] = t.join(" ");
            return Some((join(&lines), exp(class, line)));
        }
    }
    None
}

/// (node, connector) pairs consumed by attach lines before line index `end`.
fn consumed_before(lines: &[String], end: usize) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    let mut last_intro = String::new();
    for l in &lines[..end] {
        if l.contains('|') {
            last_intro = intro_fields(l).0;
        } else {
            let t = tokens(l);
            out.push((t[0].clone(), parse_index_letters(&t[3]).unwrap()));
            out.push((last_intro.clone(), parse_index_letters(&t[5]).unwrap()));
        }
    }
    out
}

fn join(lines: &[String]) -> String {
    lines.iter().map(|l| format!("{l}\n")).collect()
}

/// Random pick helper for tests.
pub fn pick<'a, T>(v: &'a [T], rng: &mut impl Rng) -> &'a T {
    v.choose(rng).expect("non-empty")
}

pub fn letters(k: usize) -> String {
    index_letters(k)
}

pub fn conn(k: u32) -> ConnIndex {
    ConnIndex(k)
}
