//! Two-arm state, the relative end-effector transform and the
//! transform-locking controller.
//!
//! `locked_rel` is stored in the control gripper's frame: the subordinate
//! target is `control_pose ∘ locked_rel`. With right control this equals the
//! relative transform `X = FK_R⁻¹ ∘ FK_L`; with left control it is `X⁻¹`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{geodesic_distance, Pose};
use crate::kinematics::{forward_kinematics, inverse_kinematics, ArmModel, IkBranch, JointConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BimanualError {
    #[error("left and right base poses coincide")]
    CoincidentBases,
    #[error("gripper value {0} outside [0, 1]")]
    GripOutOfRange(f64),
    #[error("tolerances must be positive, got pos {pos}, rot {rot}")]
    InvalidTolerance { pos: f64, rot: f64 },
    #[error("state vector has length {0}, expected 16")]
    BadLength(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmSide {
    Left,
    Right,
}

impl ArmSide {
    pub fn other(self) -> Self {
        match self {
            ArmSide::Left => ArmSide::Right,
            ArmSide::Right => ArmSide::Left,
        }
    }
}

impl std::fmt::Display for ArmSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ArmSide::Left => "left",
            ArmSide::Right => "right",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BimanualModel {
    pub left: ArmModel,
    pub right: ArmModel,
}

impl BimanualModel {
    pub fn new(left: ArmModel, right: ArmModel) -> Result<Self, BimanualError> {
        let (dp, dr) = left.base_pose.distance_to(&right.base_pose);
        if dp < 1e-9 && dr < 1e-9 {
            return Err(BimanualError::CoincidentBases);
        }
        Ok(Self { left, right })
    }

    /// The bundled tabletop cell.
    pub fn default_cell() -> Self {
        Self::new(ArmModel::default_left(), ArmModel::default_right()).expect("bundled bases are distinct")
    }

    pub fn arm(&self, side: ArmSide) -> &ArmModel {
        match side {
            ArmSide::Left => &self.left,
            ArmSide::Right => &self.right,
        }
    }

    /// Both bases moved by the same world transform.
    pub fn moved(&self, world: &Pose) -> Self {
        Self {
            left: self.left.with_base_pose(world.compose(&self.left.base_pose)),
            right: self.right.with_base_pose(world.compose(&self.right.base_pose)),
        }
    }
}

/// Joint angles plus gripper commands (0 open, 1 closed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BimanualState {
    pub q_left: JointConfig,
    pub q_right: JointConfig,
    pub grip_left: f64,
    pub grip_right: f64,
}

impl BimanualState {
    pub fn new(
        q_left: JointConfig,
        q_right: JointConfig,
        grip_left: f64,
        grip_right: f64,
    ) -> Result<Self, BimanualError> {
        for g in [grip_left, grip_right] {
            if !(0.0..=1.0).contains(&g) {
                return Err(BimanualError::GripOutOfRange(g));
            }
        }
        Ok(Self { q_left, q_right, grip_left, grip_right })
    }

    pub fn q(&self, side: ArmSide) -> &JointConfig {
        match side {
            ArmSide::Left => &self.q_left,
            ArmSide::Right => &self.q_right,
        }
    }

    pub fn q_mut(&mut self, side: ArmSide) -> &mut JointConfig {
        match side {
            ArmSide::Left => &mut self.q_left,
            ArmSide::Right => &mut self.q_right,
        }
    }

    pub fn grip(&self, side: ArmSide) -> f64 {
        match side {
            ArmSide::Left => self.grip_left,
            ArmSide::Right => self.grip_right,
        }
    }

    /// `[q_L(7), q_R(7), g_L, g_R]`.
    pub fn to_vector(&self) -> [f64; 16] {
        let mut v = [0.0; 16];
        v[..7].copy_from_slice(&self.q_left.0);
        v[7..14].copy_from_slice(&self.q_right.0);
        v[14] = self.grip_left;
        v[15] = self.grip_right;
        v
    }

    /// Inverse of [`to_vector`](Self::to_vector); gripper entries are clamped to `[0, 1]`.
    pub fn from_slice(v: &[f64]) -> Result<Self, BimanualError> {
        if v.len() != 16 {
            return Err(BimanualError::BadLength(v.len()));
        }
        let mut ql = [0.0; 7];
        let mut qr = [0.0; 7];
        ql.copy_from_slice(&v[..7]);
        qr.copy_from_slice(&v[7..14]);
        Ok(Self {
            q_left: JointConfig(ql),
            q_right: JointConfig(qr),
            grip_left: v[14].clamp(0.0, 1.0),
            grip_right: v[15].clamp(0.0, 1.0),
        })
    }

    pub fn gripper_pose(&self, model: &BimanualModel, side: ArmSide) -> Pose {
        forward_kinematics(model.arm(side), self.q(side))
    }
}

/// Pose of the left gripper in the right gripper frame.
pub fn relative_transform(model: &BimanualModel, state: &BimanualState) -> Pose {
    let l = forward_kinematics(&model.left, &state.q_left);
    let r = forward_kinematics(&model.right, &state.q_right);
    r.inverse_compose(&l)
}

/// Subordinate gripper pose in the control gripper frame.
pub fn relative_in_control_frame(model: &BimanualModel, state: &BimanualState, control: ArmSide) -> Pose {
    let c = state.gripper_pose(model, control);
    let s = state.gripper_pose(model, control.other());
    c.inverse_compose(&s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LockTolerances {
    pub pos_tol: f64,
    pub rot_tol: f64,
}

impl Default for LockTolerances {
    fn default() -> Self {
        Self { pos_tol: 1e-9, rot_tol: 1e-8 }
    }
}

impl LockTolerances {
    pub fn validate(&self) -> Result<(), BimanualError> {
        if self.pos_tol > 0.0 && self.rot_tol > 0.0 {
            Ok(())
        } else {
            Err(BimanualError::InvalidTolerance { pos: self.pos_tol, rot: self.rot_tol })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformLock {
    pub control_arm: ArmSide,
    pub locked_rel: Pose,
    pub pos_tol: f64,
    pub rot_tol: f64,
}

impl TransformLock {
    pub fn subordinate_arm(&self) -> ArmSide {
        self.control_arm.other()
    }

    pub fn subordinate_target(&self, control_pose: &Pose) -> Pose {
        control_pose.compose(&self.locked_rel)
    }

    /// Position and geodesic rotation error of `rel` against the lock.
    pub fn errors(&self, rel: &Pose) -> (f64, f64) {
        (
            (rel.translation - self.locked_rel.translation).norm(),
            geodesic_distance(&rel.rotation, &self.locked_rel.rotation),
        )
    }
}

pub fn engage_lock(
    model: &BimanualModel,
    state: &BimanualState,
    control_arm: ArmSide,
    tolerances: LockTolerances,
) -> Result<TransformLock, BimanualError> {
    tolerances.validate()?;
    Ok(TransformLock {
        control_arm,
        locked_rel: relative_in_control_frame(model, state, control_arm),
        pos_tol: tolerances.pos_tol,
        rot_tol: tolerances.rot_tol,
    })
}

/// IK for the subordinate arm at `control_pose ∘ locked_rel`.
///
/// Returns `prev_sub` unchanged with `held = true` when IK fails or the
/// achieved relative transform misses the lock tolerances.
pub fn subordinate_command(
    model: &BimanualModel,
    lock: &TransformLock,
    control_pose: &Pose,
    psi_sub: f64,
    branch: IkBranch,
    prev_sub: &JointConfig,
) -> (JointConfig, bool) {
    let arm = model.arm(lock.subordinate_arm());
    let target = lock.subordinate_target(control_pose);
    match inverse_kinematics(arm, &target, psi_sub, branch, true) {
        Ok(q) => {
            let achieved = control_pose.inverse_compose(&forward_kinematics(arm, &q));
            let (pe, re) = lock.errors(&achieved);
            if pe <= lock.pos_tol && re <= lock.rot_tol {
                (q, false)
            } else {
                (*prev_sub, true)
            }
        }
        Err(_) => (*prev_sub, true),
    }
}

/// `(pos_err, rot_err, ok)` of the current relative transform against the lock.
pub fn check_preservation(model: &BimanualModel, state: &BimanualState, lock: &TransformLock) -> (f64, f64, bool) {
    let rel = relative_in_control_frame(model, state, lock.control_arm);
    let (pe, re) = lock.errors(&rel);
    (pe, re, pe <= lock.pos_tol && re <= lock.rot_tol)
}
