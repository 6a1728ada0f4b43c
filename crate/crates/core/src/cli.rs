//! Batch pipeline behind the command-line tool: generation, perturbation,
//! evaluation and curvature analysis. Every command is a pure function of
//! its configuration and input files; parallel work is collected in episode
//! order so output bytes do not depend on the worker count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bimanual::BimanualModel;
use crate::geometry::{DiffConfig, DiffMode};
use crate::kinematics::ArmModel;
use crate::manifold::{rollout_curvature_series, CurvatureConfig, CurvatureSeries, ManifoldError};
use crate::metrics::{
    aggregate_report, classify_outcome, violation_profile, EvaluationReport, Outcome, ViolationProfile, WindowConfig,
};
use crate::perturb::{
    dataset_violation_summary, perturb_dataset, OuParams, PerturbError, PerturbationLevel, ViolationSummary,
};
use crate::stats::{outcome_conditioned_js, pearson, spearman, SeriesStatistic};
use crate::worldsim::{
    content_hash, episode_seed, generate_demonstration, read_episodes, replay_events, sample_box_init, write_episodes,
    BoxInitDistribution, Episode, EpisodeIoError, PsiProfile, TaskWorldConfig, WorldsimError,
};

pub const PIPELINE_SCHEMA: &str = "pipeline_v1";
pub const MANIFEST_SCHEMA: &str = "manifest_v1";
pub const SUMMARY_SCHEMA: &str = "violation_summary_v1";
pub const CURVATURE_SCHEMA: &str = "curvature_series_v1";
pub const ANALYSIS_SCHEMA: &str = "analysis_v1";
/// Environment variable naming the default pipeline config file.
pub const CONFIG_ENV: &str = "BIMANUAL_CONFIG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// 2 for configuration, 3 for data, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<EpisodeIoError> for CliError {
    fn from(e: EpisodeIoError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionChoice {
    #[default]
    Training,
    Evaluation,
}

impl DistributionChoice {
    pub fn distribution(self) -> BoxInitDistribution {
        match self {
            DistributionChoice::Training => BoxInitDistribution::training(),
            DistributionChoice::Evaluation => BoxInitDistribution::evaluation(),
        }
    }
}

/// Unset paths select the bundled models and task world.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelPaths {
    pub left: Option<PathBuf>,
    pub right: Option<PathBuf>,
    pub task_world: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub n_episodes: usize,
    pub master_seed: u64,
    pub distribution: DistributionChoice,
    /// Upper bound on sampled inits per requested episode before giving up.
    pub max_attempts_per_episode: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_episodes: 200,
            master_seed: 0,
            distribution: DistributionChoice::Training,
            max_attempts_per_episode: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub level: u8,
    /// Overrides the level's tabulated volatility when set.
    pub eta: Option<f64>,
    pub alpha: f64,
    pub seed: u64,
    /// Abort when this fraction of transport knots has no IK solution.
    pub max_ik_failure_rate: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self { level: 1, eta: None, alpha: 0.01, seed: 0, max_ik_failure_rate: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureSettings {
    pub mode: DiffMode,
    pub fd_step: f64,
    pub rank_tol: f64,
    /// Abort when more than this fraction of knots is rank deficient.
    pub max_gap_fraction: f64,
}

impl Default for CurvatureSettings {
    fn default() -> Self {
        let c = CurvatureConfig::default();
        Self { mode: c.diff.mode, fd_step: c.diff.fd_step, rank_tol: c.rank_tol, max_gap_fraction: 0.5 }
    }
}

impl CurvatureSettings {
    pub fn config(&self) -> CurvatureConfig {
        CurvatureConfig { diff: DiffConfig { mode: self.mode, fd_step: self.fd_step }, rank_tol: self.rank_tol }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: String,
    pub models: ModelPaths,
    pub generation: GenerationConfig,
    pub perturbation: PerturbationConfig,
    pub metrics: WindowConfig,
    pub curvature: CurvatureSettings,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core. Never affects output bytes.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: PIPELINE_SCHEMA.into(),
            models: ModelPaths::default(),
            generation: GenerationConfig::default(),
            perturbation: PerturbationConfig::default(),
            metrics: WindowConfig::default(),
            curvature: CurvatureSettings::default(),
            output_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read pipeline config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != PIPELINE_SCHEMA {
            return bad(format!("schema_version {:?}, expected {PIPELINE_SCHEMA:?}", self.schema_version));
        }
        if self.generation.n_episodes == 0 {
            return bad("generation.n_episodes must be at least 1".into());
        }
        if self.generation.max_attempts_per_episode == 0 {
            return bad("generation.max_attempts_per_episode must be at least 1".into());
        }
        PerturbationLevel::new(self.perturbation.level).map_err(|e| CliError::Config(e.to_string()))?;
        self.ou_params().map_err(|e| CliError::Config(e.to_string()))?;
        WindowConfig::new(self.metrics.window, self.metrics.stride).map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.curvature.fd_step > 0.0) || !(self.curvature.rank_tol > 0.0) {
            return bad("curvature.fd_step and curvature.rank_tol must be positive".into());
        }
        for p in [&self.models.left, &self.models.right, &self.models.task_world].into_iter().flatten() {
            if !p.is_file() {
                return bad(format!("file not found: {}", p.display()));
            }
        }
        Ok(())
    }

    /// Short digest of the resolved configuration; output location and
    /// worker count do not affect results and are excluded.
    pub fn hash(&self) -> String {
        content_hash(&Self { output_dir: PathBuf::new(), ..self.clone() })
    }

    pub fn ou_params(&self) -> Result<OuParams, PerturbError> {
        let eta = match self.perturbation.eta {
            Some(eta) => eta,
            None => PerturbationLevel::new(self.perturbation.level)?.eta(),
        };
        let p = OuParams { alpha: self.perturbation.alpha, eta, ..OuParams::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn load_model(&self) -> Result<BimanualModel, CliError> {
        let load = |p: &Option<PathBuf>, bundled: fn() -> ArmModel| match p {
            None => Ok(bundled()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read arm model {}: {e}", path.display())))?;
                ArmModel::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            }
        };
        let left = load(&self.models.left, ArmModel::default_left)?;
        let right = load(&self.models.right, ArmModel::default_right)?;
        BimanualModel::new(left, right).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load_task_world(&self) -> Result<TaskWorldConfig, CliError> {
        match &self.models.task_world {
            None => Ok(TaskWorldConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read task world {}: {e}", path.display())))?;
                TaskWorldConfig::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            }
        }
    }

    fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }

    fn out_path(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| io_err(&self.output_dir, e))?;
        Ok(self.output_dir.join(name))
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).expect("report types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_dataset(path: &Path) -> Result<Vec<Episode>, CliError> {
    let eps = read_episodes(path)?;
    if eps.is_empty() {
        return Err(CliError::Data(format!("{}: EmptyDataset", path.display())));
    }
    Ok(eps)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    /// Sampling attempt that produced the episode.
    pub attempt: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub config_hash: String,
    pub task_world_hash: String,
    pub master_seed: u64,
    pub distribution: DistributionChoice,
    pub n_episodes: usize,
    /// Sampled box inits rejected as infeasible for the scripted grasp.
    pub rejected_inits: usize,
    pub episodes: Vec<ManifestEntry>,
}

#[derive(Clone, Debug)]
pub struct GenOutput {
    pub dataset: PathBuf,
    pub manifest: PathBuf,
    pub manifest_record: Manifest,
}

/// Demonstrations from consecutive sampling attempts `0, 1, …`; attempt `a`
/// uses seed `episode_seed(master_seed, a)` for both its box init and its
/// timing jitter. Infeasible inits are skipped and counted.
pub fn generate_dataset(
    model: &BimanualModel,
    world: &TaskWorldConfig,
    gen: &GenerationConfig,
) -> Result<(Vec<Episode>, Vec<ManifestEntry>, usize), CliError> {
    use rayon::prelude::*;
    let dist = gen.distribution.distribution();
    let psi = PsiProfile::from_config(world);
    let budget = (gen.n_episodes * gen.max_attempts_per_episode) as u64;
    let (mut episodes, mut entries, mut rejected) = (Vec::new(), Vec::new(), 0);
    let mut next = 0u64;
    while episodes.len() < gen.n_episodes {
        if next >= budget {
            return Err(CliError::Data(format!(
                "only {} feasible inits in {budget} attempts; the task layout rejects this distribution",
                episodes.len()
            )));
        }
        let batch: Vec<u64> = (next..(next + 64).min(budget)).collect();
        next += batch.len() as u64;
        let results: Vec<(u64, u64, Result<Episode, WorldsimError>)> = batch
            .into_par_iter()
            .map(|a| {
                let seed = episode_seed(gen.master_seed, a);
                (a, seed, generate_demonstration(model, world, sample_box_init(&dist, seed), psi, seed))
            })
            .collect();
        for (attempt, seed, r) in results {
            if episodes.len() == gen.n_episodes {
                break;
            }
            match r {
                Ok(e) => {
                    entries.push(ManifestEntry { index: episodes.len(), attempt, seed });
                    episodes.push(e);
                }
                Err(WorldsimError::UnreachableGrasp(_) | WorldsimError::PathInfeasible(_)) => rejected += 1,
                Err(e) => return Err(CliError::Data(e.to_string())),
            }
        }
    }
    Ok((episodes, entries, rejected))
}

pub fn cmd_gen(cfg: &PipelineConfig) -> Result<GenOutput, CliError> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let world = cfg.load_task_world()?;
    let (episodes, entries, rejected) = cfg.run(|| generate_dataset(&model, &world, &cfg.generation))??;
    let dataset = cfg.out_path("episodes.jsonl")?;
    write_episodes(&dataset, &episodes)?;
    let manifest_record = Manifest {
        schema_version: MANIFEST_SCHEMA.into(),
        config_hash: cfg.hash(),
        task_world_hash: world.hash(),
        master_seed: cfg.generation.master_seed,
        distribution: cfg.generation.distribution,
        n_episodes: episodes.len(),
        rejected_inits: rejected,
        episodes: entries,
    };
    let manifest = cfg.out_path("manifest.json")?;
    write_json(&manifest, &manifest_record)?;
    Ok(GenOutput { dataset, manifest, manifest_record })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSummary {
    pub schema_version: String,
    pub config_hash: String,
    pub input: String,
    pub level: Option<u8>,
    pub eta: f64,
    pub alpha: f64,
    pub seed: u64,
    pub ik_failures: usize,
    #[serde(flatten)]
    pub summary: ViolationSummary,
}

#[derive(Clone, Debug)]
pub struct PerturbOutput {
    pub dataset: PathBuf,
    pub summary_path: PathBuf,
    pub summary: PerturbSummary,
}

pub fn cmd_perturb(cfg: &PipelineConfig, input: &Path) -> Result<PerturbOutput, CliError> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let episodes = read_dataset(input)?;
    let p = &cfg.perturbation;
    let params = cfg.ou_params().map_err(|e| CliError::Config(e.to_string()))?;
    // a raw η has no table level
    let level = if p.eta.is_some() { None } else { Some(p.level) };
    let perturbed = cfg
        .run(|| perturb_dataset(&model, &episodes, params, level, p.seed, p.max_ik_failure_rate))?
        .map_err(|e| match e {
            PerturbError::ExcessiveIkFailures { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Data(other.to_string()),
        })?;
    let summary =
        cfg.run(|| dataset_violation_summary(&model, &perturbed))?.map_err(|e| CliError::Data(e.to_string()))?;
    let tag = match level {
        Some(l) => format!("level{l}"),
        None => format!("eta{}", params.eta),
    };
    let dataset = cfg.out_path(&format!("{}_{tag}.jsonl", stem(input)))?;
    write_episodes(&dataset, &perturbed)?;
    let record = PerturbSummary {
        schema_version: SUMMARY_SCHEMA.into(),
        config_hash: cfg.hash(),
        input: input.display().to_string(),
        level,
        eta: params.eta,
        alpha: params.alpha,
        seed: p.seed,
        ik_failures: perturbed.iter().map(|e| e.metadata.ik_failures).sum(),
        summary,
    };
    let summary_path = cfg.out_path(&format!("{}_{tag}.summary.json", stem(input)))?;
    write_json(&summary_path, &record)?;
    Ok(PerturbOutput { dataset, summary_path, summary: record })
}

/// Outcome of each episode, replaying actions through the task world when
/// the stored log is absent. Rejects episodes produced under another world.
pub fn episode_outcomes(
    model: &BimanualModel,
    world: &TaskWorldConfig,
    episodes: &[Episode],
) -> Result<Vec<Outcome>, CliError> {
    use rayon::prelude::*;
    let hash = world.hash();
    episodes
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            if e.metadata.config_hash != hash {
                return Err(CliError::Data(format!(
                    "episode {i} was produced under task world {} but the configured world is {hash}",
                    e.metadata.config_hash
                )));
            }
            let outcome = match &e.events {
                Some(_) => classify_outcome(e),
                None => {
                    let mut replayed = e.clone();
                    replayed.events = Some(replay_events(model, world, e).map_err(|e| CliError::Data(e.to_string()))?);
                    classify_outcome(&replayed)
                }
            };
            outcome.map_err(|err| CliError::Data(format!("episode {i}: {err}")))
        })
        .collect()
}

fn profiles(
    model: &BimanualModel,
    episodes: &[Episode],
    window: WindowConfig,
) -> Result<Vec<ViolationProfile>, CliError> {
    use rayon::prelude::*;
    episodes
        .par_iter()
        .enumerate()
        .map(|(i, e)| violation_profile(model, e, window).map_err(|err| CliError::Data(format!("episode {i}: {err}"))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub config_hash: String,
    pub input: String,
    pub window: WindowConfig,
    #[serde(flatten)]
    pub report: EvaluationReport,
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub report_path: PathBuf,
    pub record: EvalRecord,
}

pub fn cmd_eval(cfg: &PipelineConfig, input: &Path) -> Result<EvalOutput, CliError> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let world = cfg.load_task_world()?;
    let episodes = read_dataset(input)?;
    let (profs, outcomes) = cfg.run(|| {
        Ok::<_, CliError>((profiles(&model, &episodes, cfg.metrics)?, episode_outcomes(&model, &world, &episodes)?))
    })??;
    let record = EvalRecord {
        config_hash: cfg.hash(),
        input: input.display().to_string(),
        window: cfg.metrics,
        report: aggregate_report(&profs, &outcomes),
    };
    let report_path = cfg.out_path(&format!("{}.eval.json", stem(input)))?;
    write_json(&report_path, &record)?;
    Ok(EvalOutput { report_path, record })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureRow {
    pub schema_version: String,
    pub episode: usize,
    pub outcome: Outcome,
    #[serde(flatten)]
    pub series: CurvatureSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub schema_version: String,
    pub config_hash: String,
    pub input: String,
    /// Pairs are (position error in the latest window, Kretschmann scalar) per scored knot.
    pub n_pairs: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub js_mean: Option<f64>,
    pub js_max: Option<f64>,
    /// Why a statistic is absent.
    pub notes: BTreeMap<String, String>,
    pub category_counts: [usize; 4],
    pub n_points: usize,
    pub n_gaps: usize,
    pub max_residual: f64,
}

#[derive(Clone, Debug)]
pub struct CurvatureOutput {
    pub series_path: PathBuf,
    pub analysis_path: PathBuf,
    pub analysis: AnalysisRecord,
}

/// Position error of each transport knot against its most recent reference.
fn latest_window_errors(profile: &ViolationProfile) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for w in &profile.windows {
        for (k, e) in w.pos_err.iter().enumerate() {
            out.insert(w.window_start_t + k, *e);
        }
    }
    out
}

pub fn cmd_curvature(cfg: &PipelineConfig, input: &Path) -> Result<CurvatureOutput, CliError> {
    use rayon::prelude::*;
    cfg.validate()?;
    let model = cfg.load_model()?;
    let world = cfg.load_task_world()?;
    let episodes = read_dataset(input)?;
    let ccfg = cfg.curvature.config();
    let (series, outcomes, profs) = cfg.run(|| {
        let series = episodes
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                rollout_curvature_series(&model, e, &ccfg).map_err(|err| match err {
                    ManifoldError::NoTransportPhase => CliError::Data(format!("episode {i}: {err}")),
                    other => CliError::Numerical(format!("episode {i}: {other}")),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok::<_, CliError>((
            series,
            episode_outcomes(&model, &world, &episodes)?,
            profiles(&model, &episodes, cfg.metrics)?,
        ))
    })??;

    let n_points: usize = series.iter().map(|s| s.points.len()).sum();
    let n_gaps: usize = series.iter().map(|s| s.gaps.len()).sum();
    if n_gaps as f64 > cfg.curvature.max_gap_fraction * (n_points + n_gaps) as f64 {
        return Err(CliError::Numerical(format!("{n_gaps} of {} knots are rank deficient", n_points + n_gaps)));
    }

    let rows: Vec<CurvatureRow> = series
        .iter()
        .zip(&outcomes)
        .enumerate()
        .map(|(i, (s, o))| CurvatureRow {
            schema_version: CURVATURE_SCHEMA.into(),
            episode: i,
            outcome: *o,
            series: s.clone(),
        })
        .collect();
    let series_path = cfg.out_path(&format!("{}.curvature.jsonl", stem(input)))?;
    write_json_lines(&series_path, &rows)?;

    let (mut errs, mut ks) = (Vec::new(), Vec::new());
    for (s, p) in series.iter().zip(&profs) {
        let e = latest_window_errors(p);
        for pt in &s.points {
            if let Some(v) = e.get(&pt.t) {
                errs.push(*v);
                ks.push(pt.kretschmann);
            }
        }
    }
    let mut notes = BTreeMap::new();
    let mut keep = |name: &str, r: Result<f64, crate::stats::StatsError>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.insert(name.to_string(), e.to_string());
            None
        }
    };
    let pearson = keep("pearson", pearson(&errs, &ks));
    let spearman = keep("spearman", spearman(&errs, &ks));
    let js_mean = keep("js_mean", outcome_conditioned_js(&series, &outcomes, SeriesStatistic::Mean));
    let js_max = keep("js_max", outcome_conditioned_js(&series, &outcomes, SeriesStatistic::Max));
    let mut category_counts = [0; 4];
    for o in &outcomes {
        category_counts[o.category() - 1] += 1;
    }
    let analysis = AnalysisRecord {
        schema_version: ANALYSIS_SCHEMA.into(),
        config_hash: cfg.hash(),
        input: input.display().to_string(),
        n_pairs: errs.len(),
        pearson,
        spearman,
        js_mean,
        js_max,
        notes,
        category_counts,
        n_points,
        n_gaps,
        max_residual: series.iter().flat_map(|s| s.points.iter().map(|p| p.residual)).fold(0.0, f64::max),
    };
    let analysis_path = cfg.out_path(&format!("{}.analysis.json", stem(input)))?;
    write_json(&analysis_path, &analysis)?;
    Ok(CurvatureOutput { series_path, analysis_path, analysis })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path, n: usize) -> PipelineConfig {
        let generation = GenerationConfig { n_episodes: n, master_seed: 17, ..Default::default() };
        PipelineConfig { output_dir: dir.to_path_buf(), generation, ..Default::default() }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = PipelineConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), c);
        assert!(PipelineConfig::from_toml_str("bogus = 1").is_err());
        let mut bad = c.clone();
        bad.generation.n_episodes = 0;
        assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
        let mut missing = c;
        missing.models.left = Some("no/such/arm.toml".into());
        let err = missing.validate().unwrap_err();
        assert!(err.to_string().contains("no/such/arm.toml") && err.exit_code() == 2);
    }

    #[test]
    fn gen_eval_pipeline_on_a_small_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(dir.path(), 4);
        let g = cmd_gen(&c).unwrap();
        assert_eq!(g.manifest_record.n_episodes, 4);
        let e = cmd_eval(&c, &g.dataset).unwrap();
        assert_eq!(e.record.report.category_counts, [4, 0, 0, 0]);
        assert_eq!(e.record.report.wilson_95.unwrap().1, 1.0);
        let empty = dir.path().join("empty.jsonl");
        std::fs::write(&empty, "").unwrap();
        assert_eq!(cmd_eval(&c, &empty).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn raw_eta_overrides_level() {
        let mut c = PipelineConfig::default();
        c.perturbation.level = 3;
        c.perturbation.eta = Some(0.0004);
        assert_eq!(c.ou_params().unwrap().eta, 0.0004);
        c.perturbation.eta = None;
        assert_eq!(c.ou_params().unwrap().eta, 0.005);
    }
}
