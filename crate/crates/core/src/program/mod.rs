//! Build-sequence programs: text grammar, serializer, parser and executor.
//!
//! One step per line. A part introduction reads
//! `<node> <part name> | <color name>`; every non-root introduction is
//! followed by exactly one attach line
//! `<target> <family> <target subtype> <target index> <new subtype> <new index> <params…>`
//! whose new endpoint is the node just introduced. Parameters by family:
//! stud `yaw`, hinge `[flip] yaw`, axle `[flip] yaw slide`, ball `e1 e2 e3`,
//! fixed none.

mod engine;
mod syntax;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::connectors::{index_letters, ConnIndex, ConnectorFamily, Subtype};
use crate::error::{Error, Result};
use crate::geometry::QuantizedParams;
use crate::graph::{BuildPath, ConnectivityGraph};
use crate::ldraw::NodeId;

pub use engine::{execute, parse_program, parse_program_strict, validate_prefix, validate_program, ExecutedNode, Execution, ParseOutcome};
pub use syntax::{parse_line, LineKind};

/// Stable error codes of program diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    MalformedLine,
    UnknownPart,
    UnknownColor,
    DuplicateNode,
    TargetNotIntroduced,
    IncompatibleSubtypes,
    BadParamArity,
    ParamOutOfRange,
    UnknownConnector,
    SubtypeMismatch,
    MissingAttach,
    UnexpectedAttach,
    ConnectorOccupied,
    SlideOutOfRange,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 14] = [
        ErrorCode::MalformedLine,
        ErrorCode::UnknownPart,
        ErrorCode::UnknownColor,
        ErrorCode::DuplicateNode,
        ErrorCode::TargetNotIntroduced,
        ErrorCode::IncompatibleSubtypes,
        ErrorCode::BadParamArity,
        ErrorCode::ParamOutOfRange,
        ErrorCode::UnknownConnector,
        ErrorCode::SubtypeMismatch,
        ErrorCode::MissingAttach,
        ErrorCode::UnexpectedAttach,
        ErrorCode::ConnectorOccupied,
        ErrorCode::SlideOutOfRange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::MalformedLine => "malformed-line",
            ErrorCode::UnknownPart => "unknown-part",
            ErrorCode::UnknownColor => "unknown-color",
            ErrorCode::DuplicateNode => "duplicate-node",
            ErrorCode::TargetNotIntroduced => "target-not-introduced",
            ErrorCode::IncompatibleSubtypes => "incompatible-subtypes",
            ErrorCode::BadParamArity => "bad-param-arity",
            ErrorCode::ParamOutOfRange => "param-out-of-range",
            ErrorCode::UnknownConnector => "unknown-connector",
            ErrorCode::SubtypeMismatch => "subtype-mismatch",
            ErrorCode::MissingAttach => "missing-attach",
            ErrorCode::UnexpectedAttach => "unexpected-attach",
            ErrorCode::ConnectorOccupied => "connector-occupied",
            ErrorCode::SlideOutOfRange => "slide-out-of-range",
        }
    }

    /// Codes raised while executing rather than parsing.
    pub fn is_execution(self) -> bool {
        matches!(self, ErrorCode::ConnectorOccupied | ErrorCode::SlideOutOfRange)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Diagnosis of the first invalid line (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramError {
    pub line: usize,
    pub code: ErrorCode,
    pub message: String,
}

impl ProgramError {
    pub fn new(line: usize, code: ErrorCode, message: impl Into<String>) -> Self {
        ProgramError {
            line,
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for ProgramError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.code, self.message)
    }
}

impl std::error::Error for ProgramError {}

impl From<ProgramError> for Error {
    fn from(e: ProgramError) -> Self {
        Error::Program(e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildStep {
    Intro {
        node: String,
        part_name: String,
        color_name: String,
    },
    Attach {
        target: String,
        family: ConnectorFamily,
        target_subtype: Subtype,
        target_conn: ConnIndex,
        new_subtype: Subtype,
        new_conn: ConnIndex,
        params: QuantizedParams,
    },
}

impl fmt::Display for BuildStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildStep::Intro {
                node,
                part_name,
                color_name,
            } => write!(f, "{node} {part_name} | {color_name}"),
            BuildStep::Attach {
                target,
                family,
                target_subtype,
                target_conn,
                new_subtype,
                new_conn,
                params,
            } => {
                write!(f, "{target} {family} {target_subtype} {target_conn} {new_subtype} {new_conn}")?;
                match family {
                    ConnectorFamily::Stud => write!(f, " {}", params.yaw),
                    ConnectorFamily::Hinge | ConnectorFamily::Axle => {
                        if params.flip {
                            f.write_str(" flip")?;
                        }
                        write!(f, " {}", params.yaw)?;
                        if *family == ConnectorFamily::Axle {
                            write!(f, " {}", params.slide)?;
                        }
                        Ok(())
                    }
                    ConnectorFamily::Ball => write!(f, " {} {} {}", params.euler[0], params.euler[1], params.euler[2]),
                    ConnectorFamily::Fixed => Ok(()),
                }
            }
        }
    }
}

/// An ordered list of build steps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BuildProgram {
    pub steps: Vec<BuildStep>,
}

impl BuildProgram {
    /// Text form, one LF-terminated line per step.
    pub fn to_text(&self) -> String {
        self.steps.iter().map(|s| format!("{s}\n")).collect()
    }

    /// Number of part introductions (placement actions).
    pub fn placements(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, BuildStep::Intro { .. })).count()
    }
}

/// Program steps for a path. Node ids are assigned `a, b, …` in
/// introduction order.
pub fn program_from_path(path: &BuildPath, g: &ConnectivityGraph, catalog: &Catalog) -> Result<BuildProgram> {
    let mut ids = std::collections::HashMap::new();
    let mut steps = Vec::new();
    let intro = |node: NodeId, k: usize| -> Result<BuildStep> {
        let inst = g.nodes.get(&node).ok_or(Error::UnknownNode(node.0))?;
        Ok(BuildStep::Intro {
            node: index_letters(k),
            part_name: catalog.part_name(&inst.part_id)?.to_string(),
            color_name: catalog.color_name(inst.color)?.to_string(),
        })
    };
    ids.insert(path.root, index_letters(0));
    steps.push(intro(path.root, 0)?);
    for (k, step) in path.steps.iter().enumerate() {
        let e = &step.edge;
        let target = ids.get(&e.a.node).ok_or(Error::UnknownNode(e.a.node.0))?.clone();
        ids.insert(step.new_node, index_letters(k + 1));
        steps.push(intro(step.new_node, k + 1)?);
        let subtype_of = |n: NodeId, c: ConnIndex| -> Result<Subtype> {
            let inst = g.nodes.get(&n).ok_or(Error::UnknownNode(n.0))?;
            catalog
                .connector(&inst.part_id, c)?
                .map(|k| k.subtype)
                .ok_or_else(|| Error::Annotation {
                    part: inst.part_id.clone(),
                    message: format!("no connector {c}"),
                })
        };
        steps.push(BuildStep::Attach {
            target,
            family: e.family,
            target_subtype: subtype_of(e.a.node, e.a.conn)?,
            target_conn: e.a.conn,
            new_subtype: subtype_of(e.b.node, e.b.conn)?,
            new_conn: e.b.conn,
            params: e.params,
        });
    }
    Ok(BuildProgram { steps })
}

/// Serializes a path as program text.
pub fn serialize(path: &BuildPath, g: &ConnectivityGraph, catalog: &Catalog) -> Result<String> {
    Ok(program_from_path(path, g, catalog)?.to_text())
}

/// Step-validity of one program.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidityReport {
    /// Leading placement actions that parse and execute.
    pub connectivity_steps: usize,
    /// Leading actions of that prefix that are also collision-free.
    pub collision_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_error: Option<ProgramError>,
    /// Per attempted action: parsed and executed against the state built by
    /// the earlier valid actions.
    #[serde(default)]
    pub placements: Vec<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_y, RigidTransform, Vec3};
    use crate::synth::synthetic_catalog;

    const BASE: &str = "a brick 1 x 1 | red\nb brick 1 x 1 | blue\na stud stud a hole b 90\nc plate 1 x 2 | white\nb stud stud a hole c 0\n";

    fn with_line(n: usize, line: &str) -> String {
        let mut v: Vec<&str> = BASE.lines().collect();
        v[n - 1] = line;
        v.join("\n") + "\n"
    }

    fn diag(text: &str) -> (Option<ErrorCode>, Option<usize>, usize) {
        let r = validate_prefix(text, &synthetic_catalog(), false);
        (r.first_error.as_ref().map(|e| e.code), r.first_error.as_ref().map(|e| e.line), r.connectivity_steps)
    }

    #[test]
    fn parse_serialize_execute() {
        let cat = synthetic_catalog();
        let p = parse_program_strict(BASE, &cat).unwrap();
        assert_eq!(p.to_text(), BASE);
        assert_eq!(p.placements(), 3);
        let ex = execute(&p, &cat).unwrap();
        let b = ex.pose_of("b").unwrap();
        let want = RigidTransform::new(rot_y(-90.0), Vec3::new(0.0, -24.0, 0.0));
        assert!(b.max_abs_diff(&want) < 1e-12, "{b:?}");
        let c = ex.pose_of("c").unwrap();
        // the plate's first hole sits on b's stud, plate turned with b
        assert!((c.apply_point(&Vec3::new(-10.0, 8.0, 0.0)) - Vec3::new(0.0, -24.0, 0.0)).norm() < 1e-12);
        let r = validate_prefix(BASE, &cat, true);
        assert_eq!((r.connectivity_steps, r.collision_steps), (3, 3));
        assert_eq!(r.first_error, None);
        assert_eq!(r.placements, vec![true; 3]);
    }

    #[test]
    fn semantic_errors() {
        use ErrorCode::*;
        assert_eq!(diag(&with_line(4, "c plate 9 x 9 | white")), (Some(UnknownPart), Some(4), 2));
        assert_eq!(diag(&with_line(4, "c plate 1 x 2 | chartreuse")), (Some(UnknownColor), Some(4), 2));
        assert_eq!(diag(&with_line(4, "b plate 1 x 2 | white")), (Some(DuplicateNode), Some(4), 2));
        assert_eq!(diag(&with_line(5, "z stud stud a hole c 0")), (Some(TargetNotIntroduced), Some(5), 2));
        assert_eq!(diag(&with_line(5, "b stud stud a hole z 0")), (Some(UnknownConnector), Some(5), 2));
        assert_eq!(diag(&with_line(5, "b stud stud b hole c 0")), (Some(SubtypeMismatch), Some(5), 2));
        assert_eq!(diag(&with_line(5, "b stud stud a hole c 360")), (Some(ParamOutOfRange), Some(5), 2));
        assert_eq!(diag(&with_line(5, "b stud stud a hole c")), (Some(BadParamArity), Some(5), 2));
        assert_eq!(diag(&with_line(5, "b stud stud a stud c 0")), (Some(IncompatibleSubtypes), Some(5), 2));
        assert_eq!(diag(&with_line(5, "b stud stud a hole c 0 !")), (Some(BadParamArity), Some(5), 2));
        assert_eq!(diag(&with_line(5, "b stud stud a hole c x")), (Some(MalformedLine), Some(5), 2));
    }

    #[test]
    fn structural_errors() {
        use ErrorCode::*;
        let missing: String = BASE.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert_eq!(diag(&missing), (Some(MissingAttach), Some(4), 2));
        let extra = format!("{BASE}a stud stud a hole b 0\n");
        assert_eq!(diag(&extra), (Some(UnexpectedAttach), Some(6), 3));
        let r = validate_prefix(&extra, &synthetic_catalog(), false);
        assert_eq!(r.placements, vec![true, true, true, false]);
        assert_eq!(diag(""), (None, None, 0));
    }

    #[test]
    fn execution_errors() {
        let cat = synthetic_catalog();
        let occupied = with_line(5, "a stud stud a hole c 0");
        assert_eq!(diag(&occupied), (Some(ErrorCode::ConnectorOccupied), Some(5), 2));
        assert!(parse_program_strict(&occupied, &cat).is_ok());
        let slide = "a technic brick 1 x 2 with axle hole | red\nb technic axle 4 | black\na axle axle_socket e axle a flip 0 -90\n";
        assert_eq!(diag(slide), (Some(ErrorCode::SlideOutOfRange), Some(3), 1));
        let ok = slide.replace("-90", "-60");
        assert_eq!(diag(&ok), (None, None, 2));
    }

    #[test]
    fn failed_action_leaves_state_untouched() {
        // the bad second action is skipped and the third is judged without it
        let text = "a brick 1 x 1 | red\nb brick 1 x 1 | blue\na stud stud a hole z 0\nb brick 1 x 1 | blue\na stud stud a hole b 0\n";
        let r = validate_prefix(text, &synthetic_catalog(), false);
        assert_eq!(r.placements, vec![true, false, true]);
        assert_eq!(r.connectivity_steps, 1);
    }

    #[test]
    fn overlapping_parts_end_the_collision_prefix() {
        let text = "a technic brick 1 x 2 with axle hole | red\nb technic axle 4 | black\na axle axle_socket e axle a flip 0 0\n\
                    c technic brick 1 x 2 with axle hole | red\nb axle axle a axle_socket e flip 0 5\n";
        let r = validate_prefix(text, &synthetic_catalog(), true);
        assert_eq!(r.first_error, None);
        assert_eq!((r.connectivity_steps, r.collision_steps), (3, 2));
        let spaced = text.replace("flip 0 5", "flip 0 40");
        let r = validate_prefix(&spaced, &synthetic_catalog(), true);
        assert_eq!((r.connectivity_steps, r.collision_steps), (3, 3));
    }

    #[test]
    fn path_serialization_matches_graph() {
        use rand::SeedableRng;
        let cat = synthetic_catalog();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = crate::synth::random_structure(&cat, 12, &mut rng).unwrap();
        let g = s.tree_graph();
        let text = serialize(&s.path, &g, &cat).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 11);
        let p = parse_program_strict(&text, &cat).unwrap();
        assert_eq!(p.to_text(), text);
        assert_eq!(p, program_from_path(&s.path, &g, &cat).unwrap());
    }
}
