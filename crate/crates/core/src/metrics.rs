//! Constraint-violation profiles, outcome categories, Wilson intervals and
//! the aggregate evaluation report.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::bimanual::{relative_transform, BimanualModel};
use crate::geometry::Pose;
use crate::worldsim::{Episode, EventKind};

pub const EVAL_REPORT_SCHEMA: &str = "eval_report_v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("episode has no transport-phase knots")]
    NoTransportPhase,
    #[error("episode carries no event log")]
    MissingEventLog,
    #[error("invalid counts: {successes} successes out of {trials} trials")]
    InvalidCounts { successes: usize, trials: usize },
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("window and stride must be at least 1, got window {window}, stride {stride}")]
    InvalidWindow { window: usize, stride: usize },
}

/// Chunk cadence used for scoring: windows of `window` knots starting every
/// `stride` transport knots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { window: 16, stride: 8 }
    }
}

impl WindowConfig {
    pub fn new(window: usize, stride: usize) -> Result<Self, MetricsError> {
        if window == 0 || stride == 0 {
            return Err(MetricsError::InvalidWindow { window, stride });
        }
        Ok(Self { window, stride })
    }
}

/// Mean, population standard deviation and maximum of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

impl ErrorStats {
    /// Zeros for an empty sample.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self { mean: 0.0, std: 0.0, max: 0.0 };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt(), max: v.iter().copied().fold(0.0, f64::max) }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { mean: self.mean * k, std: self.std * k, max: self.max * k }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowRecord {
    /// `t_index` of the first knot in the window.
    pub window_start_t: usize,
    pub reference_rel: Pose,
    /// Meters, one per knot in the window.
    pub pos_err: Vec<f64>,
    /// Radians, one per knot in the window.
    pub rot_err: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViolationProfile {
    pub windows: Vec<WindowRecord>,
    /// Meters, over every (window, knot) record.
    pub pos: ErrorStats,
    /// Radians, over every (window, knot) record.
    pub rot: ErrorStats,
}

impl ViolationProfile {
    pub fn pos_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.windows.iter().flat_map(|w| w.pos_err.iter().copied())
    }

    pub fn rot_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.windows.iter().flat_map(|w| w.rot_err.iter().copied())
    }
}

/// Relative-transform errors of commanded transport knots against the
/// relative transform observed just before each window.
pub fn violation_profile(
    model: &BimanualModel,
    episode: &Episode,
    cfg: WindowConfig,
) -> Result<ViolationProfile, MetricsError> {
    let idx = episode.transport_indices();
    if idx.is_empty() {
        return Err(MetricsError::NoTransportPhase);
    }
    let cmd_rel: Vec<Pose> =
        idx.iter().map(|&i| relative_transform(model, &episode.steps[i].commanded_state())).collect();
    let mut windows = Vec::new();
    for start in (0..idx.len()).step_by(cfg.stride) {
        let first = &episode.steps[idx[start]];
        let reference_rel = relative_transform(model, &first.observed_state());
        let end = (start + cfg.window).min(idx.len());
        let (pos_err, rot_err) = cmd_rel[start..end].iter().map(|r| r.distance_to(&reference_rel)).unzip();
        windows.push(WindowRecord { window_start_t: first.t_index, reference_rel, pos_err, rot_err });
    }
    let mut p = ViolationProfile { windows, pos: ErrorStats::of([]), rot: ErrorStats::of([]) };
    p.pos = ErrorStats::of(p.pos_errors());
    p.rot = ErrorStats::of(p.rot_errors());
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Placed with both grippers attached throughout transport.
    FullSuccess,
    /// Placed after at least one gripper detached.
    SingleGripper,
    /// Grasped by both, then dropped.
    BoxDrop,
    FullFailure,
}

impl Outcome {
    pub const ALL: [Outcome; 4] =
        [Outcome::FullSuccess, Outcome::SingleGripper, Outcome::BoxDrop, Outcome::FullFailure];

    /// Category number 1..=4.
    pub fn category(self) -> usize {
        Self::ALL.iter().position(|&o| o == self).expect("listed") + 1
    }

    pub fn is_success(self) -> bool {
        matches!(self, Outcome::FullSuccess | Outcome::SingleGripper)
    }
}

/// Pure function of the event log order.
pub fn classify_outcome(episode: &Episode) -> Result<Outcome, MetricsError> {
    let events = episode.events.as_ref().ok_or(MetricsError::MissingEventLog)?;
    let mut attached = 0;
    let mut detached = false;
    for e in events {
        match e.kind {
            EventKind::GraspAttach { .. } => attached += 1,
            EventKind::GraspDetach { .. } => detached = true,
            EventKind::Placed => {
                return Ok(if detached { Outcome::SingleGripper } else { Outcome::FullSuccess });
            }
            EventKind::BoxDrop if attached >= 2 => return Ok(Outcome::BoxDrop),
            EventKind::BoxDrop => return Ok(Outcome::FullFailure),
        }
    }
    Ok(Outcome::FullFailure)
}

/// Wilson score interval; `lo` is exactly 0 when there are no successes and
/// `hi` exactly 1 when every trial succeeds.
pub fn wilson_interval(successes: usize, trials: usize, confidence: f64) -> Result<(f64, f64), MetricsError> {
    if trials == 0 || successes > trials {
        return Err(MetricsError::InvalidCounts { successes, trials });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(MetricsError::InvalidConfidence(confidence));
    }
    let z = Normal::standard().inverse_cdf((1.0 + confidence) / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2n = z * z / n;
    let center = (p + z2n / 2.0) / (1.0 + z2n);
    let half = z / (1.0 + z2n) * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: String,
    pub n_episodes: usize,
    /// Counts for categories I..IV.
    pub category_counts: [usize; 4],
    pub successes: usize,
    pub success_rate: Option<f64>,
    /// 95% Wilson interval; `None` when there are no episodes.
    pub wilson_95: Option<(f64, f64)>,
    pub ci_undefined: bool,
    /// Pooled over every scored transport knot.
    pub n_knots: usize,
    pub pos_err_cm: ErrorStats,
    pub rot_err_deg: ErrorStats,
}

pub fn aggregate_report(profiles: &[ViolationProfile], outcomes: &[Outcome]) -> EvaluationReport {
    let mut counts = [0; 4];
    for o in outcomes {
        counts[o.category() - 1] += 1;
    }
    let n = outcomes.len();
    let successes = counts[0] + counts[1];
    let wilson_95 = if n > 0 { Some(wilson_interval(successes, n, 0.95).expect("valid counts")) } else { None };
    let pos: Vec<f64> = profiles.iter().flat_map(ViolationProfile::pos_errors).collect();
    let rot: Vec<f64> = profiles.iter().flat_map(ViolationProfile::rot_errors).collect();
    EvaluationReport {
        schema_version: EVAL_REPORT_SCHEMA.into(),
        n_episodes: n,
        category_counts: counts,
        successes,
        success_rate: (n > 0).then(|| successes as f64 / n as f64),
        wilson_95,
        ci_undefined: n == 0,
        n_knots: pos.len(),
        pos_err_cm: ErrorStats::of(pos).scaled(100.0),
        rot_err_deg: ErrorStats::of(rot).scaled(180.0 / std::f64::consts::PI),
    }
}
