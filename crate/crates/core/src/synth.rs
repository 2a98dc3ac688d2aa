//! Synthetic part library and random structure generator.
//!
//! The parts are simple boxes (with axle tunnels where needed) carrying
//! connectors of every family. Structures are random spanning trees with
//! integer parameters; part poses are computed here by rotating connector
//! axes directly, without going through the graph module.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::{Rotation3, Unit, UnitQuaternion};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::catalog::{Catalog, PartDef};
use crate::collision::intersects;
use crate::connectors::{AnnotatedConnector, ConnIndex, ConnectorFamily, Subtype};
use crate::error::{Error, Result};
use crate::geometry::{ConnectorFrame, Mat3, QuantizedParams, RigidTransform, Vec3};
use crate::graph::{BuildPath, ConnEdge, ConnectivityGraph, Endpoint, PathStep};
use crate::ldraw::{NodeId, PartInstance, RawMesh};

/// Color codes used for generated parts.
pub const PALETTE: [u32; 10] = [0, 1, 2, 4, 7, 14, 15, 19, 22, 25];

fn push_quad(out: &mut Vec<[Vec3; 3]>, q: [Vec3; 4], outward: Vec3) {
    let n = (q[1] - q[0]).cross(&(q[2] - q[0]));
    if n.dot(&outward) >= 0.0 {
        out.push([q[0], q[1], q[2]]);
        out.push([q[0], q[2], q[3]]);
    } else {
        out.push([q[0], q[2], q[1]]);
        out.push([q[0], q[3], q[2]]);
    }
}

/// Axis-aligned closed box, outward winding.
pub fn cuboid(lo: Vec3, hi: Vec3) -> RawMesh {
    let p = |x: bool, y: bool, z: bool| Vec3::new(if x { hi.x } else { lo.x }, if y { hi.y } else { lo.y }, if z { hi.z } else { lo.z });
    let mut t = Vec::with_capacity(12);
    for axis in 0..3 {
        for side in [false, true] {
            let corner = |u: bool, v: bool| match axis {
                0 => p(side, u, v),
                1 => p(u, side, v),
                _ => p(u, v, side),
            };
            let mut n = Vec3::zeros();
            n[axis] = if side { 1.0 } else { -1.0 };
            push_quad(&mut t, [corner(false, false), corner(true, false), corner(true, true), corner(false, true)], n);
        }
    }
    RawMesh { triangles: t }
}

/// Box with a rectangular tunnel along z through `[hx0, hx1] × [hy0, hy1]`.
pub fn cuboid_with_tunnel(lo: Vec3, hi: Vec3, hole_lo: [f64; 2], hole_hi: [f64; 2]) -> RawMesh {
    let mut t = Vec::new();
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    // outer sides
    push_quad(&mut t, [v(lo.x, lo.y, lo.z), v(lo.x, hi.y, lo.z), v(lo.x, hi.y, hi.z), v(lo.x, lo.y, hi.z)], -Vec3::x());
    push_quad(&mut t, [v(hi.x, lo.y, lo.z), v(hi.x, hi.y, lo.z), v(hi.x, hi.y, hi.z), v(hi.x, lo.y, hi.z)], Vec3::x());
    push_quad(&mut t, [v(lo.x, lo.y, lo.z), v(hi.x, lo.y, lo.z), v(hi.x, lo.y, hi.z), v(lo.x, lo.y, hi.z)], -Vec3::y());
    push_quad(&mut t, [v(lo.x, hi.y, lo.z), v(hi.x, hi.y, lo.z), v(hi.x, hi.y, hi.z), v(lo.x, hi.y, hi.z)], Vec3::y());
    let outer = [(lo.x, lo.y), (hi.x, lo.y), (hi.x, hi.y), (lo.x, hi.y)];
    let inner = [
        (hole_lo[0], hole_lo[1]),
        (hole_hi[0], hole_lo[1]),
        (hole_hi[0], hole_hi[1]),
        (hole_lo[0], hole_hi[1]),
    ];
    for (z, n) in [(lo.z, -Vec3::z()), (hi.z, Vec3::z())] {
        for i in 0..4 {
            let j = (i + 1) % 4;
            push_quad(
                &mut t,
                [v(outer[i].0, outer[i].1, z), v(outer[j].0, outer[j].1, z), v(inner[j].0, inner[j].1, z), v(inner[i].0, inner[i].1, z)],
                n,
            );
        }
    }
    // tunnel walls face the hole axis
    let c = Vec3::new((hole_lo[0] + hole_hi[0]) / 2.0, (hole_lo[1] + hole_hi[1]) / 2.0, 0.0);
    for i in 0..4 {
        let j = (i + 1) % 4;
        let a = v(inner[i].0, inner[i].1, lo.z);
        let b = v(inner[j].0, inner[j].1, lo.z);
        let mid = (a + b) / 2.0;
        let n = Vec3::new(c.x - mid.x, c.y - mid.y, 0.0);
        push_quad(&mut t, [a, b, v(b.x, b.y, hi.z), v(a.x, a.y, hi.z)], n);
    }
    RawMesh { triangles: t }
}

struct Conn(Subtype, [f64; 3], [f64; 3], [f64; 3], Option<f64>);

fn connectors(list: Vec<Conn>) -> Vec<AnnotatedConnector> {
    list.into_iter()
        .enumerate()
        .map(|(i, Conn(subtype, o, p, r, len))| AnnotatedConnector {
            index: ConnIndex(i as u32),
            subtype,
            frame: ConnectorFrame::new(Vec3::from(o), Vec3::from(p), Vec3::from(r)).expect("valid synthetic frame"),
            axle_length: len,
        })
        .collect()
}

const UP: [f64; 3] = [0.0, -1.0, 0.0];
const DOWN: [f64; 3] = [0.0, 1.0, 0.0];
const X: [f64; 3] = [1.0, 0.0, 0.0];

/// Studs on top (y = 0) and holes underneath (y = `h`) at the given x/z.
fn stud_grid(cells: &[(f64, f64)], h: f64) -> Vec<Conn> {
    let mut v: Vec<Conn> = cells.iter().map(|&(x, z)| Conn(Subtype::Stud, [x, 0.0, z], UP, X, None)).collect();
    v.extend(cells.iter().map(|&(x, z)| Conn(Subtype::Hole, [x, h, z], DOWN, X, None)));
    v
}

fn boxed(x: f64, y: f64, z: f64) -> RawMesh {
    cuboid(Vec3::new(-x, 0.0, -z), Vec3::new(x, y, z))
}

/// The synthetic parts: `(id, description, connectors, mesh)`.
fn synthetic_parts() -> Vec<(&'static str, &'static str, Vec<Conn>, RawMesh)> {
    let one = [(0.0, 0.0)];
    let two = [(-10.0, 0.0), (10.0, 0.0)];
    let four = [(-10.0, -10.0), (10.0, -10.0), (-10.0, 10.0), (10.0, 10.0)];
    let tunnel = |hx: f64, z: f64| cuboid_with_tunnel(Vec3::new(-hx, 0.0, -z), Vec3::new(hx, 24.0, z), [-3.0, 9.0], [3.0, 15.0]);
    let mut parts = vec![
        ("b11.dat", "Brick 1 x 1", stud_grid(&one, 24.0), boxed(10.0, 24.0, 10.0)),
        ("b12.dat", "Brick 1 x 2", stud_grid(&two, 24.0), boxed(20.0, 24.0, 10.0)),
        ("p12.dat", "Plate 1 x 2", stud_grid(&two, 8.0), boxed(20.0, 8.0, 10.0)),
        ("p22.dat", "Plate 2 x 2", stud_grid(&four, 8.0), boxed(20.0, 8.0, 20.0)),
    ];
    let mut b22 = stud_grid(&four, 24.0);
    b22.push(Conn(Subtype::Tube, [0.0, 24.0, 0.0], DOWN, X, None));
    parts.push(("b22.dat", "Brick 2 x 2", b22, boxed(20.0, 24.0, 20.0)));

    let mut hin = stud_grid(&one, 8.0);
    hin.push(Conn(Subtype::HingeIn(String::new()), [10.0, 4.0, 0.0], X, UP, None));
    parts.push(("hin.dat", "Hinge Plate 1 x 1 Base", hin, boxed(10.0, 8.0, 10.0)));
    let mut hon = stud_grid(&one, 8.0);
    hon.push(Conn(Subtype::HingeOn(String::new()), [-10.0, 4.0, 0.0], [-1.0, 0.0, 0.0], UP, None));
    parts.push(("hon.dat", "Hinge Plate 1 x 1 Top", hon, boxed(10.0, 8.0, 10.0)));

    let mut tb12 = stud_grid(&two, 24.0);
    tb12.push(Conn(Subtype::AxleSocket, [0.0, 12.0, -10.0], [0.0, 0.0, 1.0], X, Some(20.0)));
    parts.push(("tb12.dat", "Technic Brick 1 x 2 with Axle Hole", tb12, tunnel(20.0, 10.0)));
    let mut tp11 = stud_grid(&one, 24.0);
    tp11.push(Conn(Subtype::PinSocket, [0.0, 12.0, -10.0], [0.0, 0.0, 1.0], X, Some(20.0)));
    parts.push(("tp11.dat", "Technic Brick 1 x 1 with Hole", tp11, tunnel(10.0, 10.0)));

    parts.push((
        "ax4.dat",
        "Technic Axle 4",
        vec![Conn(Subtype::Axle, [0.0, 0.0, 0.0], X, DOWN, Some(80.0))],
        cuboid(Vec3::new(0.0, -2.0, -2.0), Vec3::new(80.0, 2.0, 2.0)),
    ));
    parts.push((
        "pin.dat",
        "Technic Pin",
        vec![Conn(Subtype::Pin, [0.0, 0.0, 0.0], X, DOWN, Some(40.0))],
        cuboid(Vec3::new(0.0, -2.0, -2.0), Vec3::new(40.0, 2.0, 2.0)),
    ));
    parts.push((
        "bar3.dat",
        "Bar 3L",
        vec![Conn(Subtype::Bar, [0.0, 0.0, 0.0], X, DOWN, Some(60.0))],
        cuboid(Vec3::new(0.0, -1.0, -1.0), Vec3::new(60.0, 1.0, 1.0)),
    ));
    let mut clip = stud_grid(&one, 8.0);
    clip.push(Conn(Subtype::Clip, [0.0, -8.0, -2.0], [0.0, 0.0, 1.0], X, Some(4.0)));
    parts.push(("clp.dat", "Plate 1 x 1 with Clip", clip, boxed(10.0, 8.0, 10.0)));

    let mut ball = stud_grid(&one, 8.0);
    ball.push(Conn(Subtype::Towball, [0.0, -12.0, 0.0], UP, X, None));
    parts.push(("tbl.dat", "Plate 1 x 1 with Towball", ball, boxed(10.0, 8.0, 10.0)));
    let mut socket = stud_grid(&one, 8.0);
    socket.push(Conn(Subtype::TowballSocket, [0.0, -12.0, 0.0], UP, X, None));
    parts.push(("tbs.dat", "Plate 1 x 1 with Towball Socket", socket, boxed(10.0, 8.0, 10.0)));

    let mut holder = stud_grid(&one, 8.0);
    holder.push(Conn(Subtype::FixedIn, [0.0, 4.0, 10.0], [0.0, 0.0, 1.0], X, None));
    parts.push(("whh.dat", "Wheel Holder", holder, boxed(10.0, 8.0, 10.0)));
    parts.push((
        "whl.dat",
        "Wheel",
        vec![Conn(Subtype::FixedOn, [0.0, 0.0, 0.0], [0.0, 0.0, -1.0], X, None)],
        cuboid(Vec3::new(-8.0, -8.0, 0.0), Vec3::new(8.0, 8.0, 6.0)),
    ));
    parts
}

/// Catalog of the synthetic parts with builtin colors and pairing table.
pub fn synthetic_catalog() -> Catalog {
    let mut c = Catalog::new();
    for (id, desc, conns, mesh) in synthetic_parts() {
        c.add_part(PartDef::inline(id, desc, connectors(conns), Some(mesh)))
            .expect("synthetic part ids are unique");
    }
    c
}

/// Uniformly random rotation and a translation within `±extent`.
pub fn random_rigid(rng: &mut impl Rng, extent: f64) -> RigidTransform {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    let t = Vec3::from_fn(|_, _| rng.random_range(-extent..=extent));
    RigidTransform::new(q.to_rotation_matrix().into_inner(), t)
}

fn turn(axis: &Vec3, deg: i32, v: &Vec3) -> Vec3 {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), (deg as f64).to_radians()) * v
}

/// World frame `(origin, principal, reference)` of a connector attached to
/// `target` with `params`, built by turning the target axes one at a time.
pub fn attached_frame(target: &ConnectorFrame, family: ConnectorFamily, p: &QuantizedParams) -> (Vec3, Vec3, Vec3) {
    let (o, z0, x0) = (target.origin, target.principal, target.reference);
    match family {
        ConnectorFamily::Ball => {
            let (mut x, mut y, mut z) = (x0, z0.cross(&x0), z0);
            let [e1, e2, e3] = p.euler;
            (x, y) = (turn(&z, e1, &x), turn(&z, e1, &y));
            (x, z) = (turn(&y, e2, &x), turn(&y, e2, &z));
            (y, z) = (turn(&x, e3, &y), turn(&x, e3, &z));
            let _ = y;
            (o, -z, x)
        }
        _ => {
            let x = turn(&z0, p.yaw, &x0);
            let origin = o + z0 * p.slide as f64;
            (origin, if p.flip { z0 } else { -z0 }, x)
        }
    }
}

/// Part pose putting local connector `local` onto the world frame.
pub fn pose_for(local: &ConnectorFrame, world: (Vec3, Vec3, Vec3)) -> RigidTransform {
    let cols = |p: Vec3, r: Vec3| Mat3::from_columns(&[r, p.cross(&r), p]);
    let rot = cols(world.1, world.2) * cols(local.principal, local.reference).transpose();
    let mut t = RigidTransform::new(rot, world.0 - rot * local.origin);
    t.restore_orthonormality();
    t
}

fn random_params(family: ConnectorFamily, target_len: f64, new_len: f64, rng: &mut impl Rng) -> QuantizedParams {
    let yaw = rng.random_range(0..360);
    match family {
        ConnectorFamily::Stud => QuantizedParams::yaw(yaw),
        ConnectorFamily::Hinge => QuantizedParams {
            yaw,
            flip: rng.random_bool(0.5),
            ..Default::default()
        },
        ConnectorFamily::Axle => {
            let flip = rng.random_bool(0.5);
            let (lt, ln) = (target_len as i32, new_len as i32);
            let slide = if flip { rng.random_range(-ln..=lt) } else { rng.random_range(0..=lt + ln) };
            QuantizedParams {
                yaw,
                flip,
                slide,
                ..Default::default()
            }
        }
        ConnectorFamily::Ball => QuantizedParams {
            euler: [rng.random_range(0..360), rng.random_range(-89..=89), rng.random_range(0..360)],
            ..Default::default()
        },
        ConnectorFamily::Fixed => QuantizedParams::default(),
    }
}

/// A generated structure and the spanning tree it was built along.
#[derive(Debug, Clone)]
pub struct SynthStructure {
    pub instances: Vec<PartInstance>,
    /// Edges oriented from the existing part to the new one.
    pub path: BuildPath,
}

impl SynthStructure {
    /// Graph holding only the generator's tree edges.
    pub fn tree_graph(&self) -> ConnectivityGraph {
        ConnectivityGraph::new(self.instances.clone(), self.path.steps.iter().map(|s| s.edge.clone()).collect())
    }

    /// Applies `t` to every instance pose.
    pub fn transformed(&self, t: &RigidTransform) -> SynthStructure {
        let mut out = self.clone();
        for i in &mut out.instances {
            i.pose = t.compose(&i.pose);
            i.pose.restore_orthonormality();
        }
        out
    }
}

/// Random tree structure of `parts` parts from `catalog`. The root gets a
/// random pose; each further part attaches through a uniformly chosen
/// family, open connector, partner connector and integer parameters.
pub fn random_structure(catalog: &Catalog, parts: usize, rng: &mut impl Rng) -> Result<SynthStructure> {
    generate(catalog, parts, rng, false)
}

/// Like [`random_structure`], but a candidate part that would interpenetrate
/// an already placed one is redrawn. Gives up early, returning fewer parts,
/// after 200 consecutive rejections.
pub fn random_clear_structure(catalog: &Catalog, parts: usize, rng: &mut impl Rng) -> Result<SynthStructure> {
    generate(catalog, parts, rng, true)
}

fn generate(catalog: &Catalog, parts: usize, rng: &mut impl Rng, clear: bool) -> Result<SynthStructure> {
    if parts == 0 {
        return Err(Error::Empty("parts"));
    }
    let ids: Vec<String> = catalog.part_ids().map(String::from).collect();
    if ids.is_empty() {
        return Err(Error::Empty("catalog"));
    }
    let mut conns: HashMap<String, Arc<Vec<AnnotatedConnector>>> = HashMap::new();
    for id in &ids {
        conns.insert(id.clone(), catalog.connectors(id)?);
    }
    // partners by subtype
    let mut partners: HashMap<Subtype, Vec<(String, usize)>> = HashMap::new();
    for a in ids.iter().flat_map(|id| conns[id].iter()) {
        if partners.contains_key(&a.subtype) {
            continue;
        }
        let list = ids
            .iter()
            .flat_map(|id| conns[id].iter().enumerate().map(move |(k, c)| (id, k, c)))
            .filter(|(_, _, c)| catalog.compat().compatible(&a.subtype, &c.subtype))
            .map(|(id, k, _)| (id.clone(), k))
            .collect();
        partners.insert(a.subtype.clone(), list);
    }

    let mut instances: Vec<PartInstance> = Vec::with_capacity(parts);
    let mut open: Vec<(usize, usize)> = Vec::new();
    let place = |id: &str, pose: RigidTransform, instances: &mut Vec<PartInstance>, open: &mut Vec<(usize, usize)>, skip: Option<usize>, rng: &mut dyn rand::RngCore| {
        let n = instances.len();
        instances.push(PartInstance {
            node_id: NodeId(n as u32),
            part_id: id.to_string(),
            color: *PALETTE.choose(rng).expect("non-empty palette"),
            pose,
            nonrigid: false,
        });
        for (k, c) in conns[id].iter().enumerate() {
            if Some(k) != skip || c.subtype.multi_accept() {
                open.push((n, k));
            }
        }
    };

    let root_id = ids.choose(rng).expect("non-empty").clone();
    place(&root_id, random_rigid(rng, 500.0), &mut instances, &mut open, None, rng);
    let mut steps = Vec::with_capacity(parts - 1);
    let mut rejected = 0;
    while instances.len() < parts {
        let usable: Vec<usize> = (0..open.len())
            .filter(|&i| {
                let (n, k) = open[i];
                !partners[&conns[&instances[n].part_id][k].subtype].is_empty()
            })
            .collect();
        if usable.is_empty() {
            break;
        }
        let mut families: Vec<ConnectorFamily> = usable
            .iter()
            .map(|&i| conns[&instances[open[i].0].part_id][open[i].1].family())
            .collect();
        families.sort();
        families.dedup();
        let family = *families.choose(rng).expect("non-empty");
        let of_family: Vec<usize> = usable
            .into_iter()
            .filter(|&i| conns[&instances[open[i].0].part_id][open[i].1].family() == family)
            .collect();
        let slot = *of_family.choose(rng).expect("non-empty");
        let (tn, tk) = open[slot];
        let target = conns[&instances[tn].part_id][tk].clone();
        let (new_id, nk) = partners[&target.subtype].choose(rng).expect("non-empty").clone();
        let new_conn = conns[&new_id][nk].clone();
        let params = random_params(family, target.length(), new_conn.length(), rng);

        let world_target = target.frame.transformed(&instances[tn].pose);
        let pose = pose_for(&new_conn.frame, attached_frame(&world_target, family, &params));
        if clear && collides(catalog, &instances, &new_id, &pose)? {
            rejected += 1;
            if rejected == 200 {
                break;
            }
            continue;
        }
        rejected = 0;
        if !target.subtype.multi_accept() {
            open.swap_remove(slot);
        }
        let new_node = NodeId(instances.len() as u32);
        place(&new_id, pose, &mut instances, &mut open, Some(nk), rng);
        steps.push(PathStep {
            new_node,
            edge: ConnEdge {
                a: Endpoint::new(NodeId(tn as u32), target.index),
                b: Endpoint::new(new_node, new_conn.index),
                family,
                params,
            },
        });
    }
    Ok(SynthStructure {
        instances,
        path: BuildPath { root: NodeId(0), steps },
    })
}

fn collides(catalog: &Catalog, placed: &[PartInstance], id: &str, pose: &RigidTransform) -> Result<bool> {
    let Some(mesh) = catalog.collision_mesh(id)? else {
        return Ok(false);
    };
    for other in placed {
        if let Some(m) = catalog.collision_mesh(&other.part_id)? {
            if intersects(&mesh, pose, &m, &other.pose) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Tree-edge counts per family.
pub fn family_counts(s: &SynthStructure) -> BTreeMap<ConnectorFamily, usize> {
    let mut m = BTreeMap::new();
    for st in &s.path.steps {
        *m.entry(st.edge.family).or_default() += 1;
    }
    m
}
