//! Parametric waypoint script standing in for the teleoperator.
//!
//! Sequence: approach above and outside the grasp, descend, move in, lock,
//! close, lift, lateral transport to the shelf pre-pose, insert, open,
//! unlock, retreat. Segments are min-jerk Cartesian interpolations solved by
//! IK at constant ψ on one branch; during transport the control arm follows
//! the box path and the subordinate tracks it through the lock.

use nalgebra::Vector3;
use rand::Rng;

use super::{
    episode_rng, BoxInit, Episode, EpisodeMetadata, Phase, Step, TaskWorldConfig, WorldsimError, EPISODE_SCHEMA,
};
use crate::bimanual::{engage_lock, subordinate_command, ArmSide, BimanualModel, BimanualState, LockTolerances};
use crate::geometry::{Pose, Rotation};
use crate::kinematics::{forward_kinematics, inverse_kinematics, JointConfig, KinematicsError};

/// Constant SEW angle per arm for a whole demonstration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiProfile {
    pub left: f64,
    pub right: f64,
}

impl PsiProfile {
    pub fn from_config(cfg: &TaskWorldConfig) -> Self {
        Self { left: cfg.script.psi_left, right: cfg.script.psi_right }
    }

    pub fn get(&self, side: ArmSide) -> f64 {
        match side {
            ArmSide::Left => self.left,
            ArmSide::Right => self.right,
        }
    }
}

fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Geodesic interpolation; `None` if the endpoints are a half turn apart.
fn interpolate(a: &Pose, b: &Pose, s: f64) -> Option<Pose> {
    let w = a.rotation.inverse().compose(&b.rotation).log().ok()?;
    Some(Pose::new(a.rotation.compose(&Rotation::exp(&(w * s))), a.translation + (b.translation - a.translation) * s))
}

/// Pose offset in world coordinates, orientation kept.
fn shifted(p: &Pose, d: Vector3<f64>) -> Pose {
    Pose::new(p.rotation, p.translation + d)
}

struct Builder<'a> {
    model: &'a BimanualModel,
    cfg: &'a TaskWorldConfig,
    psi: PsiProfile,
    states: Vec<BimanualState>,
    phases: Vec<(Phase, bool)>,
}

impl Builder<'_> {
    fn last(&self) -> BimanualState {
        *self.states.last().expect("builder starts with the home state")
    }

    fn solve(&self, side: ArmSide, target: &Pose, what: &str) -> Result<JointConfig, WorldsimError> {
        inverse_kinematics(self.model.arm(side), target, self.psi.get(side), self.cfg.script.branch, true)
            .map_err(|e| WorldsimError::PathInfeasible(format!("{what}, {side} arm: {e}")))
    }

    fn push(&mut self, s: BimanualState, phase: Phase, lock: bool) {
        self.states.push(s);
        self.phases.push((phase, lock));
    }

    /// Both arms to independent targets.
    fn free_segment(&mut self, to_left: &Pose, to_right: &Pose, knots: usize, what: &str) -> Result<(), WorldsimError> {
        let start = self.last();
        let from_left = start.gripper_pose(self.model, ArmSide::Left);
        let from_right = start.gripper_pose(self.model, ArmSide::Right);
        for k in 1..=knots {
            let s = min_jerk(k as f64 / knots as f64);
            let half_turn = || WorldsimError::PathInfeasible(format!("{what}: half-turn reorientation"));
            let l = interpolate(&from_left, to_left, s).ok_or_else(half_turn)?;
            let r = interpolate(&from_right, to_right, s).ok_or_else(half_turn)?;
            let next = BimanualState {
                q_left: self.solve(ArmSide::Left, &l, what)?,
                q_right: self.solve(ArmSide::Right, &r, what)?,
                ..start
            };
            let phase = if what == "retreat" { Phase::Retreat } else { Phase::Approach };
            self.push(next, phase, false);
        }
        Ok(())
    }

    fn grip_ramp(&mut self, from: f64, to: f64, knots: usize, phase: Phase) {
        let start = self.last();
        for k in 1..=knots {
            let g = if k == knots { to } else { from + (to - from) * k as f64 / knots as f64 };
            self.push(BimanualState { grip_left: g, grip_right: g, ..start }, phase, true);
        }
    }
}

fn jittered(rng: &mut impl Rng, nominal: usize, jitter: f64) -> usize {
    let f = if jitter > 0.0 { rng.random_range(1.0 - jitter..1.0 + jitter) } else { 1.0 };
    ((nominal as f64 * f).round() as usize).max(2)
}

/// Scripted demonstration for one box placement.
///
/// Deterministic in `(model, config, init, psi, seed)`; the seed drives the
/// segment-duration jitter only.
pub fn generate_demonstration(
    model: &BimanualModel,
    cfg: &TaskWorldConfig,
    init: BoxInit,
    psi: PsiProfile,
    seed: u64,
) -> Result<Episode, WorldsimError> {
    let sc = &cfg.script;
    let control = cfg.control_arm;
    let sub = control.other();
    let box0 = cfg.box_on_table(init);
    let grasp = |b: &Pose, side| b.compose(&cfg.grasp_in_box(side));

    for side in [ArmSide::Left, ArmSide::Right] {
        inverse_kinematics(model.arm(side), &grasp(&box0, side), psi.get(side), sc.branch, true)
            .map_err(|e: KinematicsError| WorldsimError::UnreachableGrasp(format!("{side} arm: {e}")))?;
    }

    let mut rng = episode_rng(seed, 0);
    let k = &sc.knots;
    let mut n = |nominal| jittered(&mut rng, nominal, sc.jitter);
    let durations = [
        n(k.approach),
        n(k.descend),
        n(k.move_in),
        n(k.close),
        n(k.lift),
        n(k.lateral),
        n(k.insert),
        n(k.open),
        n(k.retreat),
    ];
    let [d_approach, d_descend, d_move_in, d_close, d_lift, d_lateral, d_insert, d_open, d_retreat] = durations;

    // Gripper frame: z is the approach axis, x points down.
    let up = |p: &Pose, h: f64, back: f64| p.compose(&Pose::from_translation(Vector3::new(-h, 0.0, -back)));
    let home = |side: ArmSide| {
        let t = match side {
            ArmSide::Left => sc.home_left,
            ArmSide::Right => sc.home_right,
        };
        Pose::new(cfg.grasp_in_box(side).rotation, Vector3::from(t))
    };

    let home_state = BimanualState {
        q_left: inverse_kinematics(&model.left, &home(ArmSide::Left), psi.left, sc.branch, true)
            .map_err(|e| WorldsimError::PathInfeasible(format!("home, left arm: {e}")))?,
        q_right: inverse_kinematics(&model.right, &home(ArmSide::Right), psi.right, sc.branch, true)
            .map_err(|e| WorldsimError::PathInfeasible(format!("home, right arm: {e}")))?,
        grip_left: 0.0,
        grip_right: 0.0,
    };
    let mut b = Builder { model, cfg, psi, states: vec![home_state], phases: Vec::new() };

    let g_l = grasp(&box0, ArmSide::Left);
    let g_r = grasp(&box0, ArmSide::Right);
    b.free_segment(
        &up(&g_l, sc.approach_height, sc.standoff),
        &up(&g_r, sc.approach_height, sc.standoff),
        d_approach,
        "approach",
    )?;
    b.free_segment(&up(&g_l, 0.0, sc.standoff), &up(&g_r, 0.0, sc.standoff), d_descend, "descend")?;
    b.free_segment(&g_l, &g_r, d_move_in, "move in")?;

    let tol = LockTolerances { pos_tol: sc.lock_pos_tol, rot_tol: sc.lock_rot_tol };
    let lock = engage_lock(model, &b.last(), control, tol).map_err(|e| WorldsimError::Config(e.to_string()))?;
    b.grip_ramp(0.0, 1.0, d_close, Phase::Grasp);

    // Box path: lift, lateral to the shelf pre-pose, insert.
    let place = cfg.box_on_shelf();
    let lifted = shifted(&box0, Vector3::new(0.0, 0.0, sc.lift_height));
    let pre_place = shifted(&place, Vector3::new(0.0, -sc.insert_distance, sc.place_clearance));
    let mut box_pose = box0;
    for (target, knots, what) in
        [(lifted, d_lift, "lift"), (pre_place, d_lateral, "lateral"), (place, d_insert, "insert")]
    {
        let from = box_pose;
        for i in 1..=knots {
            let s = min_jerk(i as f64 / knots as f64);
            box_pose = interpolate(&from, &target, s)
                .ok_or_else(|| WorldsimError::PathInfeasible(format!("{what}: half-turn box rotation")))?;
            let prev = b.last();
            let q_control = b.solve(control, &grasp(&box_pose, control), what)?;
            let control_pose = forward_kinematics(model.arm(control), &q_control);
            let (q_sub, held) = subordinate_command(model, &lock, &control_pose, psi.get(sub), sc.branch, prev.q(sub));
            if held {
                return Err(WorldsimError::PathInfeasible(format!("{what}: subordinate {sub} arm held")));
            }
            let mut next = prev;
            *next.q_mut(control) = q_control;
            *next.q_mut(sub) = q_sub;
            b.push(next, Phase::Transport, true);
        }
    }

    b.grip_ramp(1.0, 0.0, d_open, Phase::Release);
    let last = b.last();
    let at = |side| last.gripper_pose(model, side);
    b.free_segment(
        &up(&at(ArmSide::Left), sc.retreat_up, sc.retreat_back),
        &up(&at(ArmSide::Right), sc.retreat_up, sc.retreat_back),
        d_retreat,
        "retreat",
    )?;

    let steps: Vec<Step> = b
        .phases
        .iter()
        .enumerate()
        .map(|(t, &(phase, lock_active))| Step {
            t_index: t,
            observation: b.states[t].to_vector(),
            action: b.states[t + 1].to_vector(),
            phase,
            lock_active,
        })
        .collect();

    let metadata = EpisodeMetadata {
        seed,
        box_init: init,
        control_arm: control,
        psi: [psi.left, psi.right],
        branch: sc.branch,
        perturbation_level: None,
        eta: 0.0,
        perturbation_seed: None,
        ik_failures: 0,
        truncated: false,
        config_hash: cfg.hash(),
    };
    let model_ref = format!("{}+{}", model.left.name, model.right.name);
    let mut episode = Episode {
        schema_version: EPISODE_SCHEMA.into(),
        model_ref: model_ref.clone(),
        dt: cfg.dt,
        steps,
        events: None,
        metadata: metadata.clone(),
    };

    // Event log from simulating the script in the world.
    episode.events = Some(super::replay_events(model, cfg, &episode)?);
    Ok(episode)
}
