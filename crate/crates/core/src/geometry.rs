//! Rigid transforms in LDraw units and the quantization rules used by the
//! build-sequence format.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality residual above which a composed rotation is re-projected
/// onto SO(3).
pub const ORTHO_TOLERANCE: f64 = 1e-9;

/// A proper rigid motion `x -> R x + t`, translation in LDU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Mat3::identity(), translation)
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut out = RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        };
        out.restore_orthonormality();
        out
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self⁻¹ ∘ other`, the pose of `other` expressed in the frame of `self`.
    pub fn relative(&self, other: &RigidTransform) -> RigidTransform {
        self.inverse().compose(other)
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `|RᵀR − I|∞`
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.rotation)
    }

    /// Re-projects the rotation onto SO(3) (polar decomposition) when the
    /// residual exceeds [`ORTHO_TOLERANCE`].
    pub fn restore_orthonormality(&mut self) {
        if orthonormality_error(&self.rotation) > ORTHO_TOLERANCE {
            self.rotation = nearest_rotation(&self.rotation);
        }
    }

    /// Row-major rotation followed by translation, the order used by the
    /// graph interchange JSON.
    pub fn rotation_rows(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn from_rows(rot: [f64; 9], t: [f64; 3]) -> Self {
        Self::new(Mat3::from_row_slice(&rot), Vec3::new(t[0], t[1], t[2]))
    }

    /// Largest absolute difference across rotation and translation entries.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let dr = (self.rotation - other.rotation).abs().max();
        let dt = (self.translation - other.translation).abs().max();
        dr.max(dt)
    }

    /// Geodesic angle between the two rotations, in degrees.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        rotation_angle_deg(&self.rotation, &other.rotation)
    }

    pub fn translation_distance_to(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }
}

pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).abs().max()
}

/// Orthogonal polar factor of `m`, sign-corrected to a proper rotation.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Mat3::identity(),
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        let mut col = u.column_mut(2);
        col *= -1.0;
        r = u * v_t;
    }
    r
}

/// Singular values of a 3×3 linear map.
pub fn singular_values(m: &Mat3) -> Vec3 {
    m.svd(false, false).singular_values
}

/// Angle between two rotations in degrees, accurate near zero.
pub fn rotation_angle_deg(a: &Mat3, b: &Mat3) -> f64 {
    // ‖A − B‖_F = 2√2 · sin(θ/2)
    let frob = (a - b).norm();
    let s = (frob / (2.0 * std::f64::consts::SQRT_2)).min(1.0);
    (2.0 * s.asin()).to_degrees()
}

/// `(cos, sin)` of an angle in degrees, exact at multiples of 90°.
pub fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 {
        (1.0, 0.0)
    } else if r == 90.0 {
        (0.0, 1.0)
    } else if r == 180.0 {
        (-1.0, 0.0)
    } else if r == 270.0 {
        (0.0, -1.0)
    } else {
        let rad = r.to_radians();
        (rad.cos(), rad.sin())
    }
}

pub fn rot_x(deg: f64) -> Mat3 {
    let (c, s) = cos_sin_deg(deg);
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(deg: f64) -> Mat3 {
    let (c, s) = cos_sin_deg(deg);
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(deg: f64) -> Mat3 {
    let (c, s) = cos_sin_deg(deg);
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation by `deg` about a unit `axis` (Rodrigues).
pub fn rot_axis(axis: &Vec3, deg: f64) -> Mat3 {
    let k = axis.normalize();
    let (c, s) = cos_sin_deg(deg);
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() * c + kx * s + (k * k.transpose()) * (1.0 - c)
}

/// Nearest integer degree, half-up, wrapped into `[0, 360)`.
pub fn quantize_angle(theta: f64) -> Result<i32> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    let r = (theta + 0.5).floor().rem_euclid(360.0);
    Ok(r as i32)
}

/// Nearest integer LDU, half-up.
pub fn quantize_slide(s: f64) -> Result<i32> {
    if !s.is_finite() {
        return Err(Error::NonFinite("slide"));
    }
    Ok((s + 0.5).floor() as i32)
}

/// Half-up rounding of a signed angle without wrapping (ball pitch).
pub(crate) fn round_half_up(x: f64) -> Result<i32> {
    if !x.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok((x + 0.5).floor() as i32)
}

/// A connector's local attachment frame.
///
/// `principal` is the rotation / slide axis, pointing out of the part;
/// `reference` is the zero-yaw datum, perpendicular to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectorFrame {
    #[serde(with = "vec3_serde")]
    pub origin: Vec3,
    #[serde(with = "vec3_serde")]
    pub principal: Vec3,
    #[serde(with = "vec3_serde")]
    pub reference: Vec3,
}

impl ConnectorFrame {
    /// Builds a frame, normalizing `principal` and orthogonalizing
    /// `reference` against it.
    pub fn new(origin: Vec3, principal: Vec3, reference: Vec3) -> Result<Self> {
        let pn = principal.norm();
        if !pn.is_finite() || pn < 1e-12 {
            return Err(Error::InvalidPairing("degenerate principal axis".into()));
        }
        let p = principal / pn;
        let r = reference - p * p.dot(&reference);
        let rn = r.norm();
        if !rn.is_finite() || rn < 1e-9 {
            return Err(Error::InvalidPairing(
                "reference axis parallel to principal axis".into(),
            ));
        }
        Ok(Self {
            origin,
            principal: p,
            reference: r / rn,
        })
    }

    /// Columns `(reference, principal × reference, principal)`.
    pub fn basis(&self) -> Mat3 {
        let s = self.principal.cross(&self.reference);
        Mat3::from_columns(&[self.reference, s, self.principal])
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::new(self.basis(), self.origin)
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        Self {
            origin: t.translation,
            principal: t.rotation.column(2).into_owned(),
            reference: t.rotation.column(0).into_owned(),
        }
    }

    /// The frame carried by `pose` (local → world).
    pub fn transformed(&self, pose: &RigidTransform) -> Self {
        Self::from_transform(&pose.compose(&self.to_transform()))
    }
}

/// Integer connection parameters as emitted in build sequences.
///
/// Fields outside the family's degrees of freedom stay zero. `euler` is the
/// intrinsic Z–Y–X triple used by ball joints: the first and last angles lie
/// in `[0, 360)`, the middle (pitch) in `[-90, 90]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct QuantizedParams {
    #[serde(default)]
    pub yaw: i32,
    #[serde(default)]
    pub flip: bool,
    #[serde(default)]
    pub slide: i32,
    #[serde(default)]
    pub euler: [i32; 3],
}

impl QuantizedParams {
    pub fn yaw(yaw: i32) -> Self {
        Self {
            yaw,
            ..Self::default()
        }
    }
}

pub(crate) mod vec3_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}

/// JSON form `{rot:[9], t:[3]}` of a pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub rot: [f64; 9],
    pub t: [f64; 3],
}

impl From<&RigidTransform> for PoseJson {
    fn from(p: &RigidTransform) -> Self {
        PoseJson {
            rot: p.rotation_rows(),
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl From<&PoseJson> for RigidTransform {
    fn from(p: &PoseJson) -> Self {
        RigidTransform::from_rows(p.rot, p.t)
    }
}
