//! Attach/carry/detach rules for the box.

use nalgebra::Vector3;

use super::{BoxInit, EventKind, TaskWorldConfig};
use crate::bimanual::{ArmSide, BimanualModel, BimanualState};
use crate::geometry::{geodesic_distance, Pose, Rotation};

#[derive(Clone, Copy, Debug, PartialEq)]
// kept unboxed so the state stays `Copy`
#[allow(clippy::large_enum_variant)]
pub enum AttachState {
    Free,
    /// Gripper-in-box poses captured at attach time; `None` once detached.
    Grasped {
        rel_left: Option<Pose>,
        rel_right: Option<Pose>,
    },
    Dropped,
    Placed,
}

impl AttachState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, AttachState::Dropped | AttachState::Placed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskWorld {
    pub config: TaskWorldConfig,
    pub box_init: BoxInit,
    pub box_pose: Pose,
    pub attach: AttachState,
    /// Accumulated slip angle about the carrier's approach axis, radians.
    pub slip: f64,
}

impl TaskWorld {
    pub fn new(config: TaskWorldConfig, box_init: BoxInit) -> Self {
        let box_pose = config.box_on_table(box_init);
        Self { config, box_init, box_pose, attach: AttachState::Free, slip: 0.0 }
    }

    pub fn substep_dt(&self) -> f64 {
        self.config.dt / self.config.substeps as f64
    }

    /// Nominal world pose of a gripper grasping the box as it is now.
    pub fn nominal_grasp(&self, side: ArmSide) -> Pose {
        self.box_pose.compose(&self.config.grasp_in_box(side))
    }

    pub fn in_shelf_region(&self) -> bool {
        let rest = self.config.box_on_shelf();
        let d = rest.rotation.inverse().apply(&(self.box_pose.translation - rest.translation));
        (0..3).all(|i| d[i].abs() <= self.config.shelf.region_half_extents[i])
    }
}

fn pose_error(a: &Pose, b: &Pose) -> (f64, f64) {
    ((a.translation - b.translation).norm(), geodesic_distance(&a.rotation, &b.rotation))
}

/// Advance the world by one substep whose commanded state is `cmd`; `prev`
/// is the previous substep's command (used for threshold crossings).
pub fn step_world(
    world: &TaskWorld,
    model: &BimanualModel,
    prev: &BimanualState,
    cmd: &BimanualState,
) -> (TaskWorld, Vec<EventKind>) {
    let mut w = world.clone();
    let mut events = Vec::new();
    let cfg = &world.config;
    let th = &cfg.thresholds;
    let closed = |s: &BimanualState| s.grip_left.min(s.grip_right) >= cfg.grip_threshold;
    let both_open = cmd.grip_left < cfg.grip_threshold && cmd.grip_right < cfg.grip_threshold;
    let pose = |side| cmd.gripper_pose(model, side);

    match world.attach {
        AttachState::Free => {
            if closed(cmd) && !closed(prev) {
                let eps_rot = th.grasp_eps_rot_deg.to_radians();
                let near = [ArmSide::Left, ArmSide::Right].into_iter().all(|side| {
                    let (dp, dr) = pose_error(&pose(side), &world.nominal_grasp(side));
                    dp <= th.grasp_eps_pos && dr <= eps_rot
                });
                if near {
                    let rel = |side| world.box_pose.inverse_compose(&pose(side));
                    w.attach = AttachState::Grasped {
                        rel_left: Some(rel(ArmSide::Left)),
                        rel_right: Some(rel(ArmSide::Right)),
                    };
                    events.push(EventKind::GraspAttach { arm: ArmSide::Left });
                    events.push(EventKind::GraspAttach { arm: ArmSide::Right });
                }
            }
        }
        AttachState::Grasped { rel_left, rel_right } => {
            let rel_of = |side| match side {
                ArmSide::Left => rel_left,
                ArmSide::Right => rel_right,
            };
            let carrier = if rel_of(cfg.control_arm).is_some() { cfg.control_arm } else { cfg.control_arm.other() };
            let carrier_rel = rel_of(carrier).expect("a grasped box has a carrier");
            let single = rel_left.is_none() || rel_right.is_none();
            if single {
                w.slip += th.slip_rate_deg_per_s.to_radians() * world.substep_dt();
            }
            let slip = Pose::from_rotation(Rotation::from_axis_angle(&Vector3::z(), w.slip).expect("unit axis"));
            w.box_pose = pose(carrier).compose(&slip).compose(&carrier_rel.inverse());

            if both_open && w.in_shelf_region() {
                w.attach = AttachState::Placed;
                events.push(EventKind::Placed);
                return (w, events);
            }

            let mut rels = [rel_left, rel_right];
            let retain_rot = th.retain_rot_deg.to_radians();
            for (k, side) in [ArmSide::Left, ArmSide::Right].into_iter().enumerate() {
                let Some(rel) = rels[k] else { continue };
                let lost = if cmd.grip(side) < cfg.grip_threshold {
                    true
                } else if side == carrier {
                    w.slip > retain_rot
                } else {
                    let (dp, dr) = pose_error(&pose(side), &w.box_pose.compose(&rel));
                    dp > th.retain_pos || dr > retain_rot
                };
                if lost {
                    rels[k] = None;
                    events.push(EventKind::GraspDetach { arm: side });
                }
            }
            if rels.iter().all(Option::is_none) {
                w.attach = AttachState::Dropped;
                let rest_z = cfg.box_.table_height + cfg.box_.dims[2] / 2.0;
                w.box_pose.translation.z = w.box_pose.translation.z.min(rest_z);
                events.push(EventKind::BoxDrop);
            } else {
                w.attach = AttachState::Grasped { rel_left: rels[0], rel_right: rels[1] };
            }
        }
        AttachState::Dropped | AttachState::Placed => {}
    }
    (w, events)
}
