use std::ops::Mul;

use nalgebra::{Matrix4, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// A rigid-body pose: rotation followed by translation.
///
/// Serialized as `{"position": [x, y, z], "quaternion": [w, x, y, z]}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct RigidTransform {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    position: [f64; 3],
    #[serde(default = "identity_quaternion")]
    quaternion: [f64; 4],
}

fn identity_quaternion() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl TryFrom<PoseRepr> for RigidTransform {
    type Error = String;

    fn try_from(repr: PoseRepr) -> Result<Self, String> {
        let [w, x, y, z] = repr.quaternion;
        let quat = Quaternion::new(w, x, y, z);
        let norm = quat.norm();
        if !norm.is_finite() || norm < 1e-6 {
            return Err(format!("quaternion {:?} cannot be normalized", repr.quaternion));
        }
        if repr.position.iter().any(|v| !v.is_finite()) {
            return Err("non-finite position".into());
        }
        // keep bits untouched for already-unit quaternions so records round-trip
        let orientation = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(quat)
        } else {
            UnitQuaternion::new_normalize(quat)
        };
        Ok(RigidTransform {
            position: Vector3::from(repr.position),
            orientation,
        })
    }
}

impl From<RigidTransform> for PoseRepr {
    fn from(t: RigidTransform) -> Self {
        let q = t.orientation.quaternion();
        PoseRepr {
            position: [t.position.x, t.position.y, t.position.z],
            quaternion: [q.w, q.i, q.j, q.k],
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    pub fn from_rotation(orientation: UnitQuaternion<f64>) -> Self {
        Self::new(Vector3::zeros(), orientation)
    }

    /// Rotation of `angle` radians about the world z axis.
    pub fn rotation_z(angle: f64) -> Self {
        Self::from_rotation(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle))
    }

    pub fn inverse(&self) -> Self {
        let inv = self.orientation.inverse();
        Self::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.position
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&(p - self.position))
    }

    pub fn inverse_transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(v)
    }

    pub fn rotation_matrix(&self) -> Rotation3<f64> {
        self.orientation.to_rotation_matrix()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = self.orientation.to_homogeneous();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// Applies a world-frame rotation perturbation `exp([omega]x)` to the
    /// orientation and an additive perturbation to the position.
    pub fn retract(&self, delta_position: &Vector3<f64>, omega: &Vector3<f64>) -> Self {
        let rot = UnitQuaternion::from_scaled_axis(*omega);
        Self::new(self.position + delta_position, rot * self.orientation)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.quaternion().coords.iter().all(|v| v.is_finite())
    }
}

/// Shortest rotation taking direction `from` onto `to`; for opposite
/// directions the half turn is about an axis perpendicular to `from`.
pub fn rotation_onto(from: &Vector3<f64>, to: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(from, to).unwrap_or_else(|| {
        let helper = if from.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let axis = Unit::new_normalize(from.cross(&helper));
        UnitQuaternion::from_axis_angle(&axis, std::f64::consts::PI)
    })
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.orientation * rhs.position + self.position,
            self.orientation * rhs.orientation,
        )
    }
}

impl Mul for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        *self * *rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-2.0f64..2.0),
            prop::array::uniform3(-3.0f64..3.0),
        )
            .prop_map(|(p, w)| {
                RigidTransform::new(
                    Vector3::from(p),
                    UnitQuaternion::from_scaled_axis(Vector3::from(w)),
                )
            })
    }

    fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
        (a.to_homogeneous() - b.to_homogeneous()).amax() < tol
    }

    proptest! {
        #[test]
        fn composition_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            prop_assert!(close(&((a * b) * c), &(a * (b * c)), 1e-12));
        }

        #[test]
        fn inverse_cancels(a in arb_transform()) {
            prop_assert!(close(&(a.inverse() * a), &RigidTransform::identity(), 1e-12));
            prop_assert!((a.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn matches_homogeneous_product(a in arb_transform(), b in arb_transform()) {
            let m = a.to_homogeneous() * b.to_homogeneous();
            prop_assert!(((a * b).to_homogeneous() - m).amax() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let t = RigidTransform::new(
            Vector3::new(0.1, -0.2, 0.3),
            UnitQuaternion::from_scaled_axis(Vector3::new(0.3, 0.1, -0.7)),
        );
        let s = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn unnormalized_quaternion_is_normalized_on_load() {
        let t: RigidTransform =
            serde_json::from_str(r#"{"position":[0,0,0],"quaternion":[2,0,0,0]}"#).unwrap();
        assert_eq!(t.orientation, UnitQuaternion::identity());
        assert!(serde_json::from_str::<RigidTransform>(
            r#"{"position":[0,0,0],"quaternion":[0,0,0,0]}"#
        )
        .is_err());
    }
}
