//! Rigid-body math and the derivative engine shared by every other module.
//!
//! Public types ([`Rotation`], [`Pose`]) are `f64` and nalgebra-backed. The
//! kinematics path is written against [`frame::Transform`] so that it can be
//! evaluated with dual numbers; conversions between the two are lossless.

pub mod diff;
pub mod frame;
pub mod real;

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{hessian_numeric, jacobian_numeric, DiffConfig, DiffError, DiffFunction, DiffMode, EvalError};
pub use frame::{Mat3, Transform, Vec3};
pub use real::{Dual, Real};

/// Angles at or beyond `π − NEAR_PI_MARGIN` have no unique logarithm.
pub const NEAR_PI_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation angle {angle} rad is within {NEAR_PI_MARGIN} of π; logarithm is not unique")]
    RotationNearPi { angle: f64 },
    #[error("quaternion norm {norm} deviates from 1 by more than 1e-9")]
    NonUnitQuaternion { norm: f64 },
    #[error("rotation axis has zero length")]
    ZeroAxis,
    #[error("matrix is not a proper rotation (orthogonality error {ortho_err:.3e}, det {det})")]
    NotARotation { ortho_err: f64, det: f64 },
}

/// A proper rotation stored as a 3×3 orthonormal matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Rotation of `angle` radians about `axis` (normalized here).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self, GeometryError> {
        let n = axis.norm();
        if n < 1e-15 {
            return Err(GeometryError::ZeroAxis);
        }
        let a = axis / n;
        Ok(Self(Matrix3::from(Mat3::<f64>::axis_angle([a.x, a.y, a.z], angle).0).transpose()))
    }

    /// Exponential of a rotation vector.
    pub fn exp(w: &Vector3<f64>) -> Self {
        let angle = w.norm();
        if angle < 1e-15 {
            return Self::identity();
        }
        Self::from_axis_angle(w, angle).expect("nonzero axis")
    }

    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NonUnitQuaternion { norm });
        }
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        Ok(Self(q.to_rotation_matrix().into_inner()))
    }

    /// Validates orthonormality within 1e-9 and then re-projects onto SO(3).
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        let ortho_err = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if ortho_err > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NotARotation { ortho_err, det });
        }
        Ok(Self(nalgebra::Rotation3::from_matrix(m).into_inner()))
    }

    /// Roll-pitch-yaw (extrinsic x, then y, then z) in radians.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self(nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw).into_inner())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn compose(&self, o: &Rotation) -> Self {
        Self(self.0 * o.0)
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rotation angle in `[0, π]`, accurate near zero.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let s = 0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
        let c = 0.5 * (m.trace() - 1.0);
        s.atan2(c)
    }

    /// Axis-angle logarithm. Rejects angles within [`NEAR_PI_MARGIN`] of π.
    pub fn log(&self) -> Result<Vector3<f64>, GeometryError> {
        let angle = self.angle();
        if angle > std::f64::consts::PI - NEAR_PI_MARGIN {
            return Err(GeometryError::RotationNearPi { angle });
        }
        let w = self.to_mat3().log();
        Ok(Vector3::new(w.0[0], w.0[1], w.0[2]))
    }

    pub fn to_mat3(&self) -> Mat3<f64> {
        let m = &self.0;
        Mat3([[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]])
    }

    /// Trusts the caller that `m` is a rotation (used on kinematics output).
    pub fn from_mat3(m: &Mat3<f64>) -> Self {
        Self(Matrix3::from(m.0).transpose())
    }

    /// Frobenius orthogonality defect `‖RᵀR − I‖`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }
}

/// Angle of `R1ᵀR2`: the bi-invariant SO(3) distance, in `[0, π]`.
pub fn geodesic_distance(r1: &Rotation, r2: &Rotation) -> f64 {
    r1.transpose().compose(r2).angle()
}

/// Rigid transform: rotation plus translation in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Rotation::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { rotation: Rotation::identity(), translation: t }
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self { rotation: r, translation: Vector3::zeros() }
    }

    pub fn compose(&self, o: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&o.rotation),
            translation: self.rotation.apply(&o.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt.apply(&self.translation)) }
    }

    /// `self⁻¹ ∘ o`.
    pub fn inverse_compose(&self, o: &Pose) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt.compose(&o.rotation), translation: rt.apply(&(o.translation - self.translation)) }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.apply(p) + self.translation
    }

    pub fn to_transform(&self) -> Transform<f64> {
        Transform {
            rot: self.rotation.to_mat3(),
            trans: Vec3([self.translation.x, self.translation.y, self.translation.z]),
        }
    }

    pub fn from_transform(t: &Transform<f64>) -> Self {
        Self { rotation: Rotation::from_mat3(&t.rot), translation: Vector3::from(t.trans.0) }
    }

    /// Position error (m) and rotation error (rad) between two poses.
    pub fn distance_to(&self, o: &Pose) -> (f64, f64) {
        ((self.translation - o.translation).norm(), geodesic_distance(&self.rotation, &o.rotation))
    }

    /// Pose moved by a local-frame twist: translation by `rotation·v`, rotation
    /// right-multiplied by `exp(w)`.
    pub fn perturbed_local(&self, delta: &Vector6<f64>) -> Pose {
        let v = Vector3::new(delta[0], delta[1], delta[2]);
        let w = Vector3::new(delta[3], delta[4], delta[5]);
        Pose {
            rotation: self.rotation.compose(&Rotation::exp(&w)),
            translation: self.translation + self.rotation.apply(&v),
        }
    }
}

/// Decoupled minimal coordinates `[translation; axis-angle]`.
pub fn pose_log(p: &Pose) -> Result<Vector6<f64>, GeometryError> {
    let w = p.rotation.log()?;
    Ok(Vector6::new(p.translation.x, p.translation.y, p.translation.z, w.x, w.y, w.z))
}

/// Inverse of [`pose_log`].
pub fn pose_exp(v: &Vector6<f64>) -> Pose {
    Pose { rotation: Rotation::exp(&Vector3::new(v[3], v[4], v[5])), translation: Vector3::new(v[0], v[1], v[2]) }
}

/// Serialized pose: translation in meters, roll/pitch/yaw in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub translation: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

impl PoseSpec {
    pub fn to_pose(&self) -> Pose {
        let r = self.rpy_deg.map(f64::to_radians);
        Pose::new(Rotation::from_rpy(r[0], r[1], r[2]), Vector3::from(self.translation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rot(axis: [f64; 3], angle: f64) -> Rotation {
        Rotation::from_axis_angle(&Vector3::from(axis), angle).unwrap()
    }

    fn arb_rotation() -> impl Strategy<Value = Rotation> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..PI)
            .prop_filter_map("axis", |(x, y, z, a)| Rotation::from_axis_angle(&Vector3::new(x, y, z), a).ok())
    }

    #[test]
    fn geodesic_distance_examples() {
        let i = Rotation::identity();
        assert_eq!(geodesic_distance(&i, &i), 0.0);
        assert!((geodesic_distance(&i, &rot([0.0, 0.0, 1.0], FRAC_PI_2)) - FRAC_PI_2).abs() < 1e-15);
        let r = rot([0.3, -0.2, 0.9], 1.7);
        let d = geodesic_distance(&r, &r.compose(&rot([1.0, 0.0, 0.0], 0.3)));
        assert!((d - 0.3).abs() < 1e-14);
    }

    #[test]
    fn pose_log_examples() {
        assert_eq!(pose_log(&Pose::identity()).unwrap(), Vector6::zeros());
        let p = Pose::from_translation(Vector3::new(0.1, 0.0, 0.0));
        assert_eq!(pose_log(&p).unwrap(), Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.0));
        let p = Pose::from_rotation(rot([1.0, 0.0, 0.0], 0.5));
        let v = pose_log(&p).unwrap();
        assert!((v - Vector6::new(0.0, 0.0, 0.0, 0.5, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pose_log_rejects_half_turn() {
        let p = Pose::from_rotation(rot([0.0, 1.0, 0.0], PI));
        assert!(matches!(pose_log(&p), Err(GeometryError::RotationNearPi { .. })));
        let p = Pose::from_rotation(rot([0.0, 1.0, 0.0], PI - 1e-3));
        assert!(pose_log(&p).is_ok());
    }

    #[test]
    fn quaternion_constructor_checks_norm() {
        let r = Rotation::from_quaternion(0.5f64.sqrt(), 0.0, 0.0, 0.5f64.sqrt()).unwrap();
        assert!((r.angle() - FRAC_PI_2).abs() < 1e-12);
        assert!(matches!(Rotation::from_quaternion(1.0, 0.1, 0.0, 0.0), Err(GeometryError::NonUnitQuaternion { .. })));
        assert!(Rotation::from_quaternion(1.0 + 5e-10, 0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn from_matrix_rejects_reflections() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Rotation::from_matrix(&m).is_err());
        assert!(Rotation::from_matrix(rot([1.0, 2.0, 3.0], 0.4).matrix()).is_ok());
    }

    proptest! {
        #[test]
        fn rotations_are_orthonormal(r in arb_rotation()) {
            prop_assert!(r.orthogonality_error() < 1e-12);
            prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn exp_log_round_trip(r in arb_rotation()) {
            prop_assume!(r.angle() <= PI - 1e-6);
            let back = Rotation::exp(&r.log().unwrap());
            prop_assert!((back.matrix() - r.matrix()).norm() < 1e-10);
        }

        #[test]
        fn geodesic_distance_is_a_bi_invariant_metric(a in arb_rotation(), b in arb_rotation(), c in arb_rotation(), q in arb_rotation()) {
            let ab = geodesic_distance(&a, &b);
            prop_assert_eq!(ab, geodesic_distance(&b, &a));
            prop_assert!((0.0..=PI).contains(&ab));
            prop_assert!(ab <= geodesic_distance(&a, &c) + geodesic_distance(&c, &b) + 1e-12);
            prop_assert!((geodesic_distance(&q.compose(&a), &q.compose(&b)) - ab).abs() < 1e-10);
        }

        #[test]
        fn compose_with_inverse_is_identity(r in arb_rotation(), x in -2.0..2.0f64, y in -2.0..2.0f64, z in -2.0..2.0f64) {
            let p = Pose::new(r, Vector3::new(x, y, z));
            let e = p.compose(&p.inverse());
            prop_assert!(e.translation.norm() < 1e-12);
            prop_assert!((e.rotation.matrix() - Matrix3::identity()).norm() < 1e-12);
        }

        #[test]
        fn pose_exp_log_round_trip(v in prop::array::uniform6(-1.0..1.0f64)) {
            let v = Vector6::from(v);
            let w = Vector3::new(v[3], v[4], v[5]);
            prop_assume!(w.norm() < PI - 1e-3);
            let back = pose_log(&pose_exp(&v)).unwrap();
            prop_assert!((back - v).norm() < 1e-9);
        }
    }
}
