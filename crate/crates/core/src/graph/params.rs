use serde::{Deserialize, Serialize};

use crate::connectors::{dof_spec, ConnectorFamily};
use crate::error::{Error, Result};
use crate::geometry::{
    quantize_angle, quantize_slide, rot_x, rot_y, rot_z, round_half_up, ConnectorFrame, Mat3, QuantizedParams, RigidTransform, Vec3,
};

/// Matching tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchTolerances {
    /// Origin distance in LDU (perpendicular to the axis for sliding
    /// families).
    pub position: f64,
    /// Principal-axis deviation in degrees.
    pub axis_deg: f64,
}

impl Default for MatchTolerances {
    fn default() -> Self {
        MatchTolerances {
            position: 1.0,
            axis_deg: 2.0,
        }
    }
}

/// Half-turn about x: maps a connector basis onto the facing one.
fn half_turn() -> Mat3 {
    rot_x(180.0)
}

fn angle_between(u: &Vec3, v: &Vec3) -> f64 {
    u.cross(v).norm().atan2(u.dot(v)).to_degrees()
}

fn invalid<T>(family: ConnectorFamily, msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidPairing(format!("{family}: {}", msg.into())))
}

/// Intrinsic Z–Y–X angles (degrees) of a rotation, pitch in `[-90, 90]`.
pub fn euler_zyx(e: &Mat3) -> [f64; 3] {
    let pitch = (-e[(2, 0)]).atan2((e[(0, 0)].powi(2) + e[(1, 0)].powi(2)).sqrt());
    let yaw = e[(1, 0)].atan2(e[(0, 0)]);
    let roll = e[(2, 1)].atan2(e[(2, 2)]);
    [yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees()]
}

pub fn euler_matrix(e: [i32; 3]) -> Mat3 {
    rot_z(e[0] as f64) * rot_y(e[1] as f64) * rot_x(e[2] as f64)
}

/// Canonical quantized Z–Y–X triple of a rotation. At gimbal lock
/// (pitch ±90) the roll is folded into the yaw.
pub fn quantize_euler(e: &Mat3) -> Result<[i32; 3]> {
    let [_, pitch, _] = euler_zyx(e);
    let p = round_half_up(pitch)?.clamp(-90, 90);
    if p.abs() == 90 {
        let yaw = (-e[(0, 1)]).atan2(e[(1, 1)]).to_degrees();
        return Ok([quantize_angle(yaw)?, p, 0]);
    }
    let [yaw, _, roll] = euler_zyx(e);
    Ok([quantize_angle(yaw)?, p, quantize_angle(roll)?])
}

/// Checks that `p` only uses the family's degrees of freedom and lies in
/// canonical ranges.
pub fn validate_params(p: &QuantizedParams, family: ConnectorFamily) -> Result<()> {
    let bad = |m: &str| {
        Err(Error::InvalidParams {
            family: family.to_string(),
            message: m.to_string(),
        })
    };
    let dof = dof_spec(family);
    if !(0..360).contains(&p.yaw) {
        return bad("yaw outside [0, 360)");
    }
    if p.flip && !dof.has_flip {
        return bad("family has no flip");
    }
    if p.slide != 0 && !dof.has_slide {
        return bad("family has no slide");
    }
    match family {
        ConnectorFamily::Ball => {
            if p.yaw != 0 {
                return bad("ball joints use the euler triple, not yaw");
            }
            let [a, b, c] = p.euler;
            if !(0..360).contains(&a) || !(0..360).contains(&c) || !(-90..=90).contains(&b) {
                return bad("euler angles outside canonical ranges");
            }
            if b.abs() == 90 && c != 0 {
                return bad("roll must be 0 at pitch ±90");
            }
        }
        _ => {
            if p.euler != [0; 3] {
                return bad("euler angles are only used by ball joints");
            }
        }
    }
    if family == ConnectorFamily::Fixed && p.yaw != 0 {
        return bad("fixed connections have no rotation");
    }
    Ok(())
}

/// Quantized parameters of the connection between an existing connector
/// frame `a` and a new one `b`, both in world coordinates.
pub fn extract_params(a: &ConnectorFrame, b: &ConnectorFrame, family: ConnectorFamily, tol: &MatchTolerances) -> Result<QuantizedParams> {
    let delta = b.origin - a.origin;
    let rel = a.basis().transpose() * b.basis() * half_turn();
    if family == ConnectorFamily::Ball {
        if delta.norm() > tol.position {
            return invalid(family, format!("origins {:.3} LDU apart", delta.norm()));
        }
        return Ok(QuantizedParams {
            euler: quantize_euler(&rel)?,
            ..QuantizedParams::default()
        });
    }
    let dof = dof_spec(family);
    let opposed = angle_between(&b.principal, &-a.principal);
    let flip = if opposed <= tol.axis_deg {
        false
    } else if dof.has_flip && 180.0 - opposed <= tol.axis_deg {
        true
    } else {
        return invalid(family, format!("principal axes {opposed:.3}° from opposed"));
    };
    let axial = delta.dot(&a.principal);
    let dist = if dof.has_slide {
        (delta - a.principal * axial).norm()
    } else {
        delta.norm()
    };
    if dist > tol.position {
        return invalid(family, format!("origins {dist:.3} LDU apart"));
    }
    let d = if flip { rel * half_turn() } else { rel };
    let yaw_deg = d[(1, 0)].atan2(d[(0, 0)]).to_degrees();
    let yaw = if family == ConnectorFamily::Fixed {
        if yaw_deg.abs() > tol.axis_deg {
            return invalid(family, format!("fixed connection rotated {yaw_deg:.3}°"));
        }
        0
    } else {
        quantize_angle(yaw_deg)?
    };
    Ok(QuantizedParams {
        yaw,
        flip,
        slide: if dof.has_slide { quantize_slide(axial)? } else { 0 },
        euler: [0; 3],
    })
}

/// World frame of the new connector given the existing one; inverse of
/// [`extract_params`] on quantized values.
pub fn realize_params(a: &ConnectorFrame, p: &QuantizedParams, family: ConnectorFamily) -> Result<ConnectorFrame> {
    validate_params(p, family)?;
    let ra = a.basis();
    let (rot, origin) = if family == ConnectorFamily::Ball {
        (ra * euler_matrix(p.euler) * half_turn(), a.origin)
    } else {
        let mut r = ra * rot_z(p.yaw as f64);
        if !p.flip {
            r *= half_turn();
        }
        (r, a.origin + a.principal * p.slide as f64)
    };
    Ok(ConnectorFrame::from_transform(&RigidTransform::new(rot, origin)))
}

/// Parameters of the same connection seen from the other endpoint.
/// Exact except for ball joints, whose reversed rotation is re-quantized.
pub fn reverse_params(p: &QuantizedParams, family: ConnectorFamily) -> Result<QuantizedParams> {
    if family == ConnectorFamily::Ball {
        let c = half_turn();
        let e = c * euler_matrix(p.euler).transpose() * c;
        return Ok(QuantizedParams {
            euler: quantize_euler(&e)?,
            ..QuantizedParams::default()
        });
    }
    if p.flip {
        Ok(QuantizedParams {
            yaw: (360 - p.yaw).rem_euclid(360),
            slide: -p.slide,
            ..*p
        })
    } else {
        Ok(*p)
    }
}
