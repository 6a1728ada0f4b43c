//! Ornstein–Uhlenbeck perturbation of the subordinate arm's transport
//! commands, and dataset-level violation summaries.

use nalgebra::Vector6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bimanual::{BimanualModel, BimanualState};
use crate::kinematics::inverse_kinematics;
use crate::metrics::{violation_profile, ErrorStats, MetricsError, WindowConfig};
use crate::worldsim::Episode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("invalid OU parameters: {0}")]
    InvalidParams(String),
    #[error("unknown perturbation level {0}; expected 0..=3")]
    UnknownLevel(u8),
    #[error("episode has no lock-active transport phase")]
    NoTransportPhase,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{failures} of {knots} perturbed knots had no IK solution, above the {limit} limit")]
    ExcessiveIkFailures { failures: usize, knots: usize, limit: f64 },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Euler–Maruyama discretization of `dZ = −αZ dt + η dW` in R⁶.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Mean-reversion rate, per step.
    pub alpha: f64,
    /// Volatility per √step: meters on translation coordinates, radians on rotation coordinates.
    pub eta: f64,
    /// Step length in control steps.
    pub dt: f64,
    pub z0: [f64; 6],
}

impl Default for OuParams {
    fn default() -> Self {
        Self { alpha: 0.01, eta: 0.0, dt: 1.0, z0: [0.0; 6] }
    }
}

impl OuParams {
    pub fn with_eta(eta: f64) -> Result<Self, PerturbError> {
        let p = Self { eta, ..Self::default() };
        p.validate()?;
        Ok(p)
    }

    /// `alpha ≥ 0`, `eta ≥ 0`, `dt > 0` and `alpha·dt < 1`.
    pub fn validate(&self) -> Result<(), PerturbError> {
        let bad = |m: &str| Err(PerturbError::InvalidParams(m.into()));
        if !(self.alpha >= 0.0) || !(self.eta >= 0.0) || !(self.dt > 0.0) {
            return bad("alpha and eta must be non-negative and dt positive");
        }
        if self.alpha * self.dt >= 1.0 {
            return bad("alpha·dt must be below 1");
        }
        if self.z0.iter().any(|v| !v.is_finite()) {
            return bad("z0 must be finite");
        }
        Ok(())
    }

    /// Per-coordinate variance of `Z_k` started from zero:
    /// `η²·dt·(1 − ρ^{2k})/(1 − ρ²)` with `ρ = 1 − α·dt`.
    pub fn variance_at(&self, k: usize) -> f64 {
        let rho = 1.0 - self.alpha * self.dt;
        if rho == 1.0 {
            return self.eta * self.eta * self.dt * k as f64;
        }
        self.eta * self.eta * self.dt * (1.0 - rho.powi(2 * k as i32)) / (1.0 - rho * rho)
    }
}

/// `n_steps` samples `Z_0 = z0, Z_1, …`; deterministic per seed, and linear
/// in `eta` when `z0 = 0` (the unit-noise draw is scaled last).
pub fn ou_path(params: &OuParams, n_steps: usize, seed: u64) -> Vec<Vector6<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = 1.0 - params.alpha * params.dt;
    let sd = params.dt.sqrt();
    let mut z = Vector6::from(params.z0);
    let mut out = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        if k > 0 {
            let xi = Vector6::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let xi: Vector6<f64> = xi * sd;
            z = z * rho + xi * params.eta;
        }
        out.push(z);
    }
    out
}

/// Fixed level-to-volatility table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PerturbationLevel(u8);

impl PerturbationLevel {
    pub const ETAS: [f64; 4] = [0.0, 0.001, 0.0025, 0.005];

    pub fn new(level: u8) -> Result<Self, PerturbError> {
        if (level as usize) < Self::ETAS.len() {
            Ok(Self(level))
        } else {
            Err(PerturbError::UnknownLevel(level))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn eta(self) -> f64 {
        Self::ETAS[self.0 as usize]
    }

    pub fn all() -> [Self; 4] {
        [Self(0), Self(1), Self(2), Self(3)]
    }
}

/// Perturb with a tabulated level.
pub fn perturb_episode(
    model: &BimanualModel,
    episode: &Episode,
    level: PerturbationLevel,
    seed: u64,
) -> Result<Episode, PerturbError> {
    perturb_episode_with(model, episode, OuParams::with_eta(level.eta())?, Some(level.level()), seed)
}

/// Replace each transport knot's subordinate flange command `P` by
/// `P ∘ exp(Z_k)` (local frame) and map it back through IK at the episode's
/// SEW angle and branch. Knots whose perturbed pose has no admissible IK
/// solution stay clean and are counted. Everything else is untouched. With
/// `eta = 0` the steps and events are returned unchanged.
pub fn perturb_episode_with(
    model: &BimanualModel,
    episode: &Episode,
    params: OuParams,
    level: Option<u8>,
    seed: u64,
) -> Result<Episode, PerturbError> {
    params.validate()?;
    let idx: Vec<usize> = episode.transport_indices().into_iter().filter(|&i| episode.steps[i].lock_active).collect();
    if idx.is_empty() {
        return Err(PerturbError::NoTransportPhase);
    }
    let mut out = episode.clone();
    out.metadata.perturbation_level = level;
    out.metadata.eta = params.eta;
    out.metadata.perturbation_seed = Some(seed);
    out.metadata.ik_failures = 0;
    if params.eta == 0.0 && params.z0 == [0.0; 6] {
        return Ok(out);
    }

    let sub = episode.metadata.control_arm.other();
    let arm = model.arm(sub);
    let psi = episode.metadata.psi[sub as usize];
    let branch = episode.metadata.branch;
    let z = ou_path(&params, idx.len(), seed);
    let mut failures = 0;
    for (k, &i) in idx.iter().enumerate() {
        if z[k] == Vector6::zeros() {
            continue;
        }
        let mut cmd: BimanualState = episode.steps[i].commanded_state();
        let target = cmd.gripper_pose(model, sub).perturbed_local(&z[k]);
        match inverse_kinematics(arm, &target, psi, branch, true) {
            Ok(q) => *cmd.q_mut(sub) = q,
            Err(_) => failures += 1,
        }
        out.steps[i].action = cmd.to_vector();
    }
    out.metadata.ik_failures = failures;
    out.events = None;
    Ok(out)
}

/// Perturb every episode with its own counter-derived seed, in parallel,
/// preserving order. Aborts when the IK failure fraction reaches `max_failure_rate`.
pub fn perturb_dataset(
    model: &BimanualModel,
    episodes: &[Episode],
    params: OuParams,
    level: Option<u8>,
    master_seed: u64,
    max_failure_rate: f64,
) -> Result<Vec<Episode>, PerturbError> {
    use rayon::prelude::*;
    let out: Vec<Episode> = episodes
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            perturb_episode_with(model, e, params, level, crate::worldsim::episode_seed(master_seed, i as u64))
        })
        .collect::<Result<_, _>>()?;
    let failures: usize = out.iter().map(|e| e.metadata.ik_failures).sum();
    let knots: usize = out.iter().map(|e| e.transport_indices().len()).sum();
    if knots > 0 && failures as f64 >= max_failure_rate * knots as f64 && failures > 0 {
        return Err(PerturbError::ExcessiveIkFailures { failures, knots, limit: max_failure_rate });
    }
    Ok(out)
}

/// Dataset violation in report units: centimeters and degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationSummary {
    pub n_episodes: usize,
    pub n_knots: usize,
    pub pos_err_cm: ErrorStats,
    pub rot_err_deg: ErrorStats,
}

/// Pooled transport-knot errors of the default windowed profile.
pub fn dataset_violation_summary(
    model: &BimanualModel,
    episodes: &[Episode],
) -> Result<ViolationSummary, PerturbError> {
    use rayon::prelude::*;
    if episodes.is_empty() {
        return Err(PerturbError::EmptyDataset);
    }
    let profiles = episodes
        .par_iter()
        .map(|e| violation_profile(model, e, WindowConfig::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let pos: Vec<f64> = profiles.iter().flat_map(|p| p.pos_errors()).collect();
    let rot: Vec<f64> = profiles.iter().flat_map(|p| p.rot_errors()).collect();
    Ok(ViolationSummary {
        n_episodes: episodes.len(),
        n_knots: pos.len(),
        pos_err_cm: ErrorStats::of(pos).scaled(100.0),
        rot_err_deg: ErrorStats::of(rot).scaled(180.0 / std::f64::consts::PI),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::{generate_demonstration, BoxInit, PsiProfile, TaskWorldConfig};

    fn demo(seed: u64) -> (BimanualModel, Episode) {
        let cfg = TaskWorldConfig::default();
        let m = BimanualModel::default_cell();
        let init = BoxInit::new(0.02 * (seed % 5) as f64 - 0.04, 0.6, 0.05);
        (m.clone(), generate_demonstration(&m, &cfg, init, PsiProfile::from_config(&cfg), seed).unwrap())
    }

    #[test]
    fn zero_eta_path_is_zero() {
        let p = OuParams::with_eta(0.0).unwrap();
        assert!(ou_path(&p, 50, 9).iter().all(|z| *z == Vector6::zeros()));
    }

    #[test]
    fn doubling_eta_doubles_the_path_exactly() {
        let a = ou_path(&OuParams::with_eta(0.003).unwrap(), 200, 4);
        let b = ou_path(&OuParams::with_eta(0.006).unwrap(), 200, 4);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x * 2.0, *y);
        }
        assert_eq!(a, ou_path(&OuParams::with_eta(0.003).unwrap(), 200, 4));
        assert_ne!(a, ou_path(&OuParams::with_eta(0.003).unwrap(), 200, 5));
    }

    #[test]
    fn params_are_validated() {
        assert!(OuParams::with_eta(-1.0).is_err());
        assert!(OuParams { alpha: 2.0, ..OuParams::default() }.validate().is_err());
        assert!(OuParams { dt: 0.0, ..OuParams::default() }.validate().is_err());
        assert!(PerturbationLevel::new(4).is_err());
        let etas: Vec<f64> = PerturbationLevel::all().iter().map(|l| l.eta()).collect();
        assert_eq!(etas, vec![0.0, 0.001, 0.0025, 0.005]);
    }

    #[test]
    fn level_zero_leaves_steps_and_events_unchanged() {
        let (m, e) = demo(1);
        let p = perturb_episode(&m, &e, PerturbationLevel::new(0).unwrap(), 11).unwrap();
        assert_eq!(p.steps, e.steps);
        assert_eq!(p.events, e.events);
        assert_eq!((p.metadata.perturbation_level, p.metadata.perturbation_seed), (Some(0), Some(11)));
    }

    #[test]
    fn perturbation_is_local_to_transport_and_the_subordinate() {
        let (m, e) = demo(2);
        let p = perturb_episode(&m, &e, PerturbationLevel::new(3).unwrap(), 5).unwrap();
        assert!(p.events.is_none());
        let transport = e.transport_indices();
        let mut changed = 0;
        for (i, (a, b)) in e.steps.iter().zip(p.steps.iter()).enumerate() {
            assert_eq!(a.observation, b.observation);
            assert_eq!(a.action[7..], b.action[7..], "control arm and grips untouched");
            if transport.contains(&i) {
                changed += (a.action[..7] != b.action[..7]) as usize;
            } else {
                assert_eq!(a, b);
            }
        }
        assert_eq!(changed + p.metadata.ik_failures, transport.len() - 1, "Z_0 = 0 leaves the first knot clean");
        assert_eq!(p, perturb_episode(&m, &e, PerturbationLevel::new(3).unwrap(), 5).unwrap());
    }

    #[test]
    fn displacement_scales_with_level() {
        let (m, e) = demo(3);
        let sub = e.metadata.control_arm.other();
        let disp = |lvl| {
            let p = perturb_episode(&m, &e, PerturbationLevel::new(lvl).unwrap(), 8).unwrap();
            assert_eq!(p.metadata.ik_failures, 0);
            e.transport_indices()
                .iter()
                .map(|&i| {
                    let a = e.steps[i].commanded_state().gripper_pose(&m, sub);
                    let b = p.steps[i].commanded_state().gripper_pose(&m, sub);
                    (a.translation - b.translation).norm()
                })
                .collect::<Vec<_>>()
        };
        let (d1, d3) = (disp(1), disp(3));
        for (a, b) in d1.iter().zip(d3.iter()) {
            assert!((b - 5.0 * a).abs() <= 1e-9 * b.max(1e-12), "{a} {b}");
        }
    }

    #[test]
    fn summaries_of_clean_and_single_datasets() {
        let (m, e) = demo(4);
        let s = dataset_violation_summary(&m, &[e.clone(), e.clone()]).unwrap();
        assert!(s.pos_err_cm.max <= 1e-8 && s.rot_err_deg.max <= 1e-4);
        let p = perturb_episode(&m, &e, PerturbationLevel::new(2).unwrap(), 1).unwrap();
        let one = dataset_violation_summary(&m, std::slice::from_ref(&p)).unwrap();
        let prof = violation_profile(&m, &p, WindowConfig::default()).unwrap();
        assert!((one.pos_err_cm.mean - 100.0 * prof.pos.mean).abs() < 1e-12);
        assert_eq!(dataset_violation_summary(&m, &[]), Err(PerturbError::EmptyDataset));
    }
}
