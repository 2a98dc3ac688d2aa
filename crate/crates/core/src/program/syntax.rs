use crate::catalog::normalize_display;
use crate::connectors::{dof_spec, CompatTable, ConnIndex, ConnectorFamily, Subtype};
use crate::geometry::QuantizedParams;
use crate::graph::validate_params;

use super::{BuildStep, ErrorCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Intro,
    Attach,
}

impl LineKind {
    /// Introductions are the lines carrying the `|` separator.
    pub fn of(line: &str) -> LineKind {
        if line.contains('|') {
            LineKind::Intro
        } else {
            LineKind::Attach
        }
    }
}

fn is_node_id(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase())
}

type LineError = (ErrorCode, String);

fn err<T>(code: ErrorCode, msg: impl Into<String>) -> Result<T, LineError> {
    Err((code, msg.into()))
}

/// Context-free parse of one line. Checks token shape, subtype pairing,
/// parameter arity and ranges; node and catalog lookups happen later.
pub fn parse_line(line: &str, compat: &CompatTable) -> Result<BuildStep, LineError> {
    match LineKind::of(line) {
        LineKind::Intro => parse_intro(line),
        LineKind::Attach => parse_attach(line, compat),
    }
}

fn parse_intro(line: &str) -> Result<BuildStep, LineError> {
    let (head, color) = line.split_once('|').expect("intro lines contain `|`");
    let head = head.trim();
    let Some((node, name)) = head.split_once(char::is_whitespace) else {
        return err(ErrorCode::MalformedLine, "intro needs `<node> <part name> | <color>`");
    };
    if !is_node_id(node) {
        return err(ErrorCode::MalformedLine, format!("bad node id `{node}`"));
    }
    let part_name = normalize_display(name);
    let color_name = normalize_display(color);
    if part_name.is_empty() || color_name.is_empty() {
        return err(ErrorCode::MalformedLine, "empty part or color name");
    }
    Ok(BuildStep::Intro {
        node: node.to_string(),
        part_name,
        color_name,
    })
}

fn parse_attach(line: &str, compat: &CompatTable) -> Result<BuildStep, LineError> {
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() < 6 {
        return err(ErrorCode::MalformedLine, format!("attach needs at least 6 tokens, found {}", tok.len()));
    }
    if !is_node_id(tok[0]) {
        return err(ErrorCode::MalformedLine, format!("bad node id `{}`", tok[0]));
    }
    let Ok(family) = tok[1].parse::<ConnectorFamily>() else {
        return err(ErrorCode::MalformedLine, format!("unknown family `{}`", tok[1]));
    };
    let Some(target_conn) = ConnIndex::parse(tok[3]) else {
        return err(ErrorCode::MalformedLine, format!("bad connector index `{}`", tok[3]));
    };
    let Some(new_conn) = ConnIndex::parse(tok[5]) else {
        return err(ErrorCode::MalformedLine, format!("bad connector index `{}`", tok[5]));
    };
    let (Some(target_subtype), Some(new_subtype)) = (Subtype::parse(family, tok[2]), Subtype::parse(family, tok[4])) else {
        return err(ErrorCode::IncompatibleSubtypes, format!("`{}`/`{}` are not {family} subtypes", tok[2], tok[4]));
    };
    if !compat.compatible(&target_subtype, &new_subtype) {
        return err(ErrorCode::IncompatibleSubtypes, format!("{target_subtype} cannot mate with {new_subtype}"));
    }

    let dof = dof_spec(family);
    let mut rest = &tok[6..];
    let mut flip = false;
    if dof.has_flip && rest.first() == Some(&"flip") {
        flip = true;
        rest = &rest[1..];
    }
    let arity = match family {
        ConnectorFamily::Stud | ConnectorFamily::Hinge => 1,
        ConnectorFamily::Axle => 2,
        ConnectorFamily::Ball => 3,
        ConnectorFamily::Fixed => 0,
    };
    if rest.len() != arity {
        return err(ErrorCode::BadParamArity, format!("{family} takes {arity} numeric parameter(s), found {}", rest.len()));
    }
    let mut nums = Vec::with_capacity(arity);
    for t in rest {
        match t.parse::<i32>() {
            Ok(v) => nums.push(v),
            Err(_) => return err(ErrorCode::MalformedLine, format!("parameter `{t}` is not an integer")),
        }
    }
    let params = match family {
        ConnectorFamily::Stud | ConnectorFamily::Hinge => QuantizedParams {
            yaw: nums[0],
            flip,
            ..Default::default()
        },
        ConnectorFamily::Axle => QuantizedParams {
            yaw: nums[0],
            flip,
            slide: nums[1],
            ..Default::default()
        },
        ConnectorFamily::Ball => QuantizedParams {
            euler: [nums[0], nums[1], nums[2]],
            ..Default::default()
        },
        ConnectorFamily::Fixed => QuantizedParams::default(),
    };
    if let Err(e) = validate_params(&params, family) {
        return err(ErrorCode::ParamOutOfRange, e.to_string());
    }
    Ok(BuildStep::Attach {
        target: tok[0].to_string(),
        family,
        target_subtype,
        target_conn,
        new_subtype,
        new_conn,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(line: &str) -> ErrorCode {
        parse_line(line, CompatTable::builtin()).unwrap_err().0
    }

    #[test]
    fn figure_lines_parse() {
        let c = CompatTable::builtin();
        assert_eq!(
            parse_line("a plate 1x2 | purple", c).unwrap(),
            BuildStep::Intro {
                node: "a".into(),
                part_name: "plate 1x2".into(),
                color_name: "purple".into()
            }
        );
        let s = parse_line("a stud hole b stud b 90", c).unwrap();
        assert_eq!(s.to_string(), "a stud hole b stud b 90");
        let s = parse_line("z axle bar b clip a flip 270 0", c).unwrap();
        match &s {
            BuildStep::Attach { params, new_subtype, .. } => {
                assert!(params.flip);
                assert_eq!(params.yaw, 270);
                assert_eq!(params.slide, 0);
                assert_eq!(*new_subtype, Subtype::Clip);
            }
            _ => panic!(),
        }
        assert_eq!(s.to_string(), "z axle bar b clip a flip 270 0");
    }

    #[test]
    fn error_classes() {
        assert_eq!(code("a stud hole b"), ErrorCode::MalformedLine);
        assert_eq!(code("A stud hole b stud b 90"), ErrorCode::MalformedLine);
        assert_eq!(code("a studs hole b stud b 90"), ErrorCode::MalformedLine);
        assert_eq!(code("a stud hole 3 stud b 90"), ErrorCode::MalformedLine);
        assert_eq!(code("a stud hole b hole b 90"), ErrorCode::IncompatibleSubtypes);
        assert_eq!(code("a stud hole b pin b 90"), ErrorCode::IncompatibleSubtypes);
        assert_eq!(code("a stud hole b stud b"), ErrorCode::BadParamArity);
        assert_eq!(code("a stud hole b stud b 90 1"), ErrorCode::BadParamArity);
        assert_eq!(code("a stud hole b stud b flip 90"), ErrorCode::BadParamArity);
        assert_eq!(code("a stud hole b stud b 400"), ErrorCode::ParamOutOfRange);
        assert_eq!(code("a ball towball a towball_socket a 0 91 0"), ErrorCode::ParamOutOfRange);
        assert_eq!(code("a stud hole b stud b ninety"), ErrorCode::MalformedLine);
        assert_eq!(code("justone | "), ErrorCode::MalformedLine);
        assert_eq!(code("B brick | red"), ErrorCode::MalformedLine);
    }
}
