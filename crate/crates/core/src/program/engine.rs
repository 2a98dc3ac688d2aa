use std::collections::{HashMap, HashSet};

use crate::catalog::Catalog;
use crate::collision::{IncrementalChecker, Placed};
use crate::connectors::{AnnotatedConnector, ConnIndex};
use crate::geometry::RigidTransform;
use crate::graph::realize_params;
use crate::ldraw::NodeId;

use super::syntax::{parse_line, LineKind};
use super::{BuildProgram, BuildStep, ErrorCode, ProgramError, ValidityReport};

/// Allowed axial gap (LDU) between slid connectors: the matching position
/// tolerance plus half a quantization step.
const SLIDE_SLACK: f64 = 1.5;

/// A placed part after execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutedNode {
    pub id: String,
    pub part_id: String,
    pub color: u32,
    pub pose: RigidTransform,
}

/// Poses of all introduced nodes, in introduction order; the root sits at
/// the identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Execution {
    pub nodes: Vec<ExecutedNode>,
}

impl Execution {
    pub fn pose_of(&self, id: &str) -> Option<&RigidTransform> {
        self.nodes.iter().find(|n| n.id == id).map(|n| &n.pose)
    }
}

/// Result of prefix parsing: the steps of every action before the first
/// invalid one, plus the diagnosis of that line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParseOutcome {
    pub program: BuildProgram,
    pub error: Option<ProgramError>,
}

struct Item {
    line: usize,
    kind: LineKind,
    parsed: Result<BuildStep, (ErrorCode, String)>,
}

fn items_from_text(text: &str, catalog: &Catalog) -> Vec<Item> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let l = l.trim_end_matches('\r');
            Item {
                line: i + 1,
                kind: LineKind::of(l),
                parsed: parse_line(l, catalog.compat()),
            }
        })
        .collect()
}

fn items_from_program(p: &BuildProgram) -> Vec<Item> {
    p.steps
        .iter()
        .enumerate()
        .map(|(i, s)| Item {
            line: i + 1,
            kind: match s {
                BuildStep::Intro { .. } => LineKind::Intro,
                BuildStep::Attach { .. } => LineKind::Attach,
            },
            parsed: Ok(s.clone()),
        })
        .collect()
}

struct Engine<'c> {
    catalog: &'c Catalog,
    execute: bool,
    index: HashMap<String, usize>,
    placed: Vec<ExecutedNode>,
    consumed: HashSet<(String, ConnIndex)>,
}

struct Pending {
    node: ExecutedNode,
    consumes: Vec<(String, ConnIndex)>,
}

impl<'c> Engine<'c> {
    fn new(catalog: &'c Catalog, execute: bool) -> Self {
        Engine {
            catalog,
            execute,
            index: HashMap::new(),
            placed: Vec::new(),
            consumed: HashSet::new(),
        }
    }

    fn intro(&self, step: &BuildStep, line: usize) -> Result<ExecutedNode, ProgramError> {
        let BuildStep::Intro {
            node,
            part_name,
            color_name,
        } = step
        else {
            return Err(ProgramError::new(line, ErrorCode::UnexpectedAttach, "expected a part introduction"));
        };
        if self.index.contains_key(node) {
            return Err(ProgramError::new(line, ErrorCode::DuplicateNode, format!("node `{node}` already introduced")));
        }
        let part = self
            .catalog
            .part_by_name(part_name)
            .ok_or_else(|| ProgramError::new(line, ErrorCode::UnknownPart, format!("no part named `{part_name}`")))?;
        let color = self
            .catalog
            .colors()
            .code(color_name)
            .ok_or_else(|| ProgramError::new(line, ErrorCode::UnknownColor, format!("no color named `{color_name}`")))?;
        Ok(ExecutedNode {
            id: node.clone(),
            part_id: part.id.clone(),
            color,
            pose: RigidTransform::identity(),
        })
    }

    fn connector(&self, part_id: &str, c: ConnIndex, line: usize) -> Result<AnnotatedConnector, ProgramError> {
        let missing = || ProgramError::new(line, ErrorCode::UnknownConnector, format!("{part_id} has no connector `{c}`"));
        match self.catalog.connector(part_id, c) {
            Ok(Some(k)) => Ok(k),
            _ => Err(missing()),
        }
    }

    fn attach(&self, mut new: ExecutedNode, step: &BuildStep, line: usize) -> Result<Pending, ProgramError> {
        let BuildStep::Attach {
            target,
            family,
            target_subtype,
            target_conn,
            new_subtype,
            new_conn,
            params,
        } = step
        else {
            return Err(ProgramError::new(line, ErrorCode::MissingAttach, "expected an attach line"));
        };
        let Some(&ti) = self.index.get(target) else {
            return Err(ProgramError::new(line, ErrorCode::TargetNotIntroduced, format!("node `{target}` has not been introduced")));
        };
        let tnode = &self.placed[ti];
        let tc = self.connector(&tnode.part_id, *target_conn, line)?;
        let nc = self.connector(&new.part_id, *new_conn, line)?;
        if tc.subtype != *target_subtype || nc.subtype != *new_subtype {
            return Err(ProgramError::new(
                line,
                ErrorCode::SubtypeMismatch,
                format!(
                    "connectors are {} {} and {} {}, not {target_subtype} and {new_subtype}",
                    tnode.id, tc.subtype, new.id, nc.subtype
                ),
            ));
        }
        let consumes = vec![(target.clone(), *target_conn), (new.id.clone(), *new_conn)];
        if !self.execute {
            return Ok(Pending { node: new, consumes });
        }
        if !tc.subtype.multi_accept() && self.consumed.contains(&(target.clone(), *target_conn)) {
            return Err(ProgramError::new(line, ErrorCode::ConnectorOccupied, format!("connector {target_conn} of `{target}` is already used")));
        }
        if family.slides() {
            let s = params.slide as f64;
            let (lo, hi) = if params.flip { (s, s + nc.length()) } else { (s - nc.length(), s) };
            if lo.max(0.0) > hi.min(tc.length()) + SLIDE_SLACK {
                return Err(ProgramError::new(line, ErrorCode::SlideOutOfRange, format!("slide {} leaves the connectors disengaged", params.slide)));
            }
        }
        let world_t = tc.frame.transformed(&tnode.pose);
        let world_n = realize_params(&world_t, params, *family).map_err(|e| ProgramError::new(line, ErrorCode::ParamOutOfRange, e.to_string()))?;
        let mut pose = world_n.to_transform().compose(&nc.frame.to_transform().inverse());
        pose.restore_orthonormality();
        new.pose = pose;
        Ok(Pending { node: new, consumes })
    }

    fn commit(&mut self, p: Pending) {
        for c in p.consumes {
            self.consumed.insert(c);
        }
        self.index.insert(p.node.id.clone(), self.placed.len());
        self.placed.push(p.node);
    }
}

struct RunOutput {
    steps: Vec<BuildStep>,
    first_error: Option<ProgramError>,
    placements: Vec<bool>,
    placed: Vec<ExecutedNode>,
    /// Per valid action, in order: index into `placed`.
    valid_order: Vec<usize>,
}

/// Walks the program action by action. A failed action leaves the state
/// untouched, so later actions are still judged (for per-action validity)
/// when `stop_at_first` is false.
fn run(items: &[Item], catalog: &Catalog, execute: bool, stop_at_first: bool) -> RunOutput {
    let mut eng = Engine::new(catalog, execute);
    let mut out = RunOutput {
        steps: Vec::new(),
        first_error: None,
        placements: Vec::new(),
        placed: Vec::new(),
        valid_order: Vec::new(),
    };
    let mut seen_intro = false;
    let mut i = 0;
    while i < items.len() {
        let it = &items[i];
        let (result, steps): (Result<Pending, ProgramError>, Vec<BuildStep>) = if it.kind == LineKind::Attach {
            i += 1;
            let e = match &it.parsed {
                Ok(_) => ProgramError::new(it.line, ErrorCode::UnexpectedAttach, "attach line without a preceding part introduction"),
                Err((code, msg)) => ProgramError::new(it.line, *code, msg.clone()),
            };
            (Err(e), vec![])
        } else {
            let is_root = !seen_intro;
            seen_intro = true;
            let intro = match &it.parsed {
                Ok(step) => eng.intro(step, it.line).map(|n| (n, step.clone())),
                Err((code, msg)) => Err(ProgramError::new(it.line, *code, msg.clone())),
            };
            if is_root {
                i += 1;
                (intro.map(|(node, _)| Pending { node, consumes: vec![] }), intro_steps(&items[i - 1]))
            } else {
                let attach = items.get(i + 1).filter(|n| n.kind == LineKind::Attach);
                match attach {
                    None => {
                        i += 1;
                        let e = intro.err().unwrap_or_else(|| ProgramError::new(it.line, ErrorCode::MissingAttach, "part introduction without an attach line"));
                        (Err(e), vec![])
                    }
                    Some(a) => {
                        i += 2;
                        let r = intro.and_then(|(node, istep)| {
                            let astep = a.parsed.clone().map_err(|(code, msg)| ProgramError::new(a.line, code, msg))?;
                            let p = eng.attach(node, &astep, a.line)?;
                            Ok((p, vec![istep, astep]))
                        });
                        match r {
                            Ok((p, s)) => (Ok(p), s),
                            Err(e) => (Err(e), vec![]),
                        }
                    }
                }
            }
        };
        match result {
            Ok(p) => {
                out.placements.push(true);
                if out.first_error.is_none() {
                    out.steps.extend(steps);
                    out.valid_order.push(eng.placed.len());
                }
                eng.commit(p);
            }
            Err(e) => {
                out.placements.push(false);
                if out.first_error.is_none() {
                    out.first_error = Some(e);
                }
                if stop_at_first {
                    break;
                }
            }
        }
    }
    out.placed = eng.placed;
    out
}

fn intro_steps(it: &Item) -> Vec<BuildStep> {
    it.parsed.clone().into_iter().collect()
}

/// Prefix parse: all actions before the first unparseable one, with the
/// diagnosis of that line. Execution-only checks are not applied.
pub fn parse_program(text: &str, catalog: &Catalog) -> ParseOutcome {
    let out = run(&items_from_text(text, catalog), catalog, false, true);
    ParseOutcome {
        program: BuildProgram { steps: out.steps },
        error: out.first_error,
    }
}

/// Fails on the first invalid line.
pub fn parse_program_strict(text: &str, catalog: &Catalog) -> Result<BuildProgram, ProgramError> {
    let o = parse_program(text, catalog);
    match o.error {
        Some(e) => Err(e),
        None => Ok(o.program),
    }
}

/// Executes a program, placing the root at the identity.
pub fn execute(p: &BuildProgram, catalog: &Catalog) -> Result<Execution, ProgramError> {
    let out = run(&items_from_program(p), catalog, true, true);
    match out.first_error {
        Some(e) => Err(e),
        None => Ok(Execution { nodes: out.placed }),
    }
}

fn report(items: &[Item], catalog: &Catalog, collisions: bool) -> ValidityReport {
    let out = run(items, catalog, true, false);
    let connectivity_steps = out.placements.iter().take_while(|&&v| v).count();
    let mut collision_steps = connectivity_steps;
    if collisions {
        let mut checker = IncrementalChecker::new();
        for (k, &pi) in out.valid_order.iter().take(connectivity_steps).enumerate() {
            let n = &out.placed[pi];
            let Ok(Some(mesh)) = catalog.collision_mesh(&n.part_id) else {
                continue;
            };
            let hit = checker.add(Placed {
                node: NodeId(pi as u32),
                mesh,
                pose: n.pose,
            });
            if !hit.is_empty() {
                collision_steps = k;
                break;
            }
        }
    }
    ValidityReport {
        connectivity_steps,
        collision_steps,
        first_error: out.first_error,
        placements: out.placements,
    }
}

/// Step validity of program text: the executable prefix length and the
/// collision-free part of it (when `collisions` is set).
pub fn validate_prefix(text: &str, catalog: &Catalog, collisions: bool) -> ValidityReport {
    report(&items_from_text(text, catalog), catalog, collisions)
}

pub fn validate_program(p: &BuildProgram, catalog: &Catalog, collisions: bool) -> ValidityReport {
    report(&items_from_program(p), catalog, collisions)
}
