//! Rule-based kinematic world (box, table, shelf), the scripted demonstration
//! generator and the chunked executor.
//!
//! There is no contact physics. The box is rigidly attached to a carrier
//! gripper once both grippers close around it; the other gripper detaches
//! when it drifts past the retention thresholds, after which the box slips
//! about the carrier's approach axis until the carrier loses it too.

mod episode;
mod exec;
mod script;
mod world;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bimanual::ArmSide;
use crate::geometry::{Pose, PoseSpec, Rotation};
use crate::kinematics::IkBranch;

pub use episode::{
    read_episodes, write_episodes, Episode, EpisodeIoError, EpisodeMetadata, Event, EventKind, Phase, Step,
    EPISODE_SCHEMA,
};
pub use exec::{
    execute_chunked, first_order_hold, replay_events, surrogate_rollout, ActionSource, ChunkConfig, ReplaySource,
};
pub use script::{generate_demonstration, PsiProfile};
pub use world::{step_world, AttachState, TaskWorld};

pub const TASK_WORLD_SCHEMA: &str = "task_world_v1";

#[derive(Debug, Error)]
pub enum WorldsimError {
    #[error("no IK solution for a grasp pose: {0}")]
    UnreachableGrasp(String),
    #[error("waypoint segment infeasible on the fixed branch: {0}")]
    PathInfeasible(String),
    #[error("action stream ended at step {} before the task reached a terminal state", .partial.steps.len())]
    StreamExhausted { partial: Box<Episode> },
    #[error("invalid task world config: {0}")]
    Config(String),
    #[error("empty sampling range {name}: [{lo}, {hi})")]
    EmptyRange { name: &'static str, lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    /// Extent along the box x (grasp width), y and z, meters.
    pub dims: [f64; 3],
    pub table_height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShelfConfig {
    /// Shelf surface center; the box rests with its base on this plane.
    pub pose: PoseSpec,
    /// Box-center tolerance around the resting pose that counts as placed.
    pub region_half_extents: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub grasp_eps_pos: f64,
    pub grasp_eps_rot_deg: f64,
    pub retain_pos: f64,
    pub retain_rot_deg: f64,
    /// Rotation of the box about the carrier's approach axis once held by one gripper.
    pub slip_rate_deg_per_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnotCounts {
    pub approach: usize,
    pub descend: usize,
    pub move_in: usize,
    pub close: usize,
    pub lift: usize,
    pub lateral: usize,
    pub insert: usize,
    pub open: usize,
    pub retreat: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptConfig {
    pub psi_left: f64,
    pub psi_right: f64,
    pub branch: IkBranch,
    pub home_left: [f64; 3],
    pub home_right: [f64; 3],
    pub approach_height: f64,
    pub standoff: f64,
    pub lift_height: f64,
    pub insert_distance: f64,
    pub place_clearance: f64,
    pub retreat_back: f64,
    pub retreat_up: f64,
    /// Relative half-width of the per-segment duration jitter.
    pub jitter: f64,
    pub lock_pos_tol: f64,
    pub lock_rot_tol: f64,
    pub knots: KnotCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskWorldConfig {
    pub schema_version: String,
    pub control_arm: ArmSide,
    /// Knot period, seconds.
    pub dt: f64,
    pub substeps: usize,
    pub grip_threshold: f64,
    #[serde(rename = "box")]
    pub box_: BoxConfig,
    pub shelf: ShelfConfig,
    pub thresholds: Thresholds,
    pub script: ScriptConfig,
}

impl Default for TaskWorldConfig {
    fn default() -> Self {
        Self::from_toml_str(include_str!("../../config/task_world.toml")).expect("bundled task world is valid")
    }
}

impl TaskWorldConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, WorldsimError> {
        let cfg: Self = toml::from_str(s).map_err(|e| WorldsimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), WorldsimError> {
        let bad = |m: &str| Err(WorldsimError::Config(m.to_string()));
        if self.schema_version != TASK_WORLD_SCHEMA {
            return Err(WorldsimError::Config(format!(
                "schema_version {:?}, expected {TASK_WORLD_SCHEMA:?}",
                self.schema_version
            )));
        }
        let t = &self.thresholds;
        if !(t.grasp_eps_pos > 0.0 && t.grasp_eps_rot_deg > 0.0 && t.retain_pos > 0.0 && t.retain_rot_deg > 0.0) {
            return bad("thresholds must be positive");
        }
        if !(t.slip_rate_deg_per_s >= 0.0) {
            return bad("slip rate must be non-negative");
        }
        if !(self.dt > 0.0) || self.substeps == 0 {
            return bad("dt must be positive and substeps at least 1");
        }
        if self.box_.dims.iter().any(|&d| !(d > 0.0)) {
            return bad("box dims must be positive");
        }
        if !(0.0 < self.grip_threshold && self.grip_threshold < 1.0) {
            return bad("grip_threshold must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.script.jitter) {
            return bad("jitter must lie in [0, 1)");
        }
        Ok(())
    }

    /// Nominal gripper pose in the box frame. The approach axis (gripper z)
    /// points into the grasped face; gripper x points down.
    pub fn grasp_in_box(&self, side: ArmSide) -> Pose {
        let half = self.box_.dims[0] / 2.0;
        let (cols, x) = match side {
            ArmSide::Left => ([-Vector3::z(), Vector3::y(), Vector3::x()], -half),
            ArmSide::Right => ([-Vector3::z(), -Vector3::y(), -Vector3::x()], half),
        };
        let r = Rotation::from_matrix(&Matrix3::from_columns(&cols)).expect("grasp frame is a rotation");
        Pose::new(r, Vector3::new(x, 0.0, 0.0))
    }

    /// Box pose resting on the table at a planar pose.
    pub fn box_on_table(&self, init: BoxInit) -> Pose {
        Pose::new(
            Rotation::from_axis_angle(&Vector3::z(), init.theta).expect("z is a unit axis"),
            Vector3::new(init.x, init.y, self.box_.table_height + self.box_.dims[2] / 2.0),
        )
    }

    /// Box pose resting on the shelf.
    pub fn box_on_shelf(&self) -> Pose {
        let shelf = self.shelf.pose.to_pose();
        shelf.compose(&Pose::from_translation(Vector3::new(0.0, 0.0, self.box_.dims[2] / 2.0)))
    }

    pub fn hash(&self) -> String {
        content_hash(self)
    }
}

/// Short SHA-256 digest of the JSON form of `v`.
pub fn content_hash<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("config types serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// Planar box pose on the table: meters and radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxInit {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl BoxInit {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }
}

/// Uniform distribution over half-open boxes in `(x, y, θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxInitDistribution {
    x_range: [f64; 2],
    y_range: [f64; 2],
    theta_range: [f64; 2],
}

impl BoxInitDistribution {
    pub fn new(x_range: [f64; 2], y_range: [f64; 2], theta_range: [f64; 2]) -> Result<Self, WorldsimError> {
        for (name, r) in [("x_range", x_range), ("y_range", y_range), ("theta_range", theta_range)] {
            if !(r[0] < r[1]) {
                return Err(WorldsimError::EmptyRange { name, lo: r[0], hi: r[1] });
            }
        }
        Ok(Self { x_range, y_range, theta_range })
    }

    /// Demonstration-collection distribution.
    pub fn training() -> Self {
        use std::f64::consts::PI;
        Self::new([-0.2, 0.2], [0.55, 0.65], [-PI / 8.0, PI / 8.0]).expect("nonempty")
    }

    /// Narrower evaluation distribution.
    pub fn evaluation() -> Self {
        use std::f64::consts::PI;
        Self::new([-0.1, 0.1], [0.575, 0.625], [-PI / 16.0, PI / 16.0]).expect("nonempty")
    }

    pub fn x_range(&self) -> [f64; 2] {
        self.x_range
    }

    pub fn y_range(&self) -> [f64; 2] {
        self.y_range
    }

    pub fn theta_range(&self) -> [f64; 2] {
        self.theta_range
    }

    pub fn sample(&self, rng: &mut impl Rng) -> BoxInit {
        BoxInit {
            x: rng.random_range(self.x_range[0]..self.x_range[1]),
            y: rng.random_range(self.y_range[0]..self.y_range[1]),
            theta: rng.random_range(self.theta_range[0]..self.theta_range[1]),
        }
    }
}

pub fn sample_box_init(dist: &BoxInitDistribution, seed: u64) -> BoxInit {
    dist.sample(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Per-episode RNG: stream `index` of the master seed, independent of
/// thread count and generation order.
pub fn episode_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Seed recorded for episode `index`.
pub fn episode_seed(master_seed: u64, index: u64) -> u64 {
    episode_rng(master_seed, index).next_u64()
}
