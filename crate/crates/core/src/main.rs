use std::path::PathBuf;
use std::process::ExitCode;

use bimanual_constraint::cli::{cmd_curvature, cmd_eval, cmd_gen, cmd_perturb, CliError, PipelineConfig, CONFIG_ENV};
use bimanual_constraint::geometry::DiffMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Bimanual transport: demonstrations, constraint perturbation, evaluation
/// and constraint-manifold curvature. Flags override the config file, which
/// overrides built-in defaults.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    left_model: Option<PathBuf>,
    #[arg(long, global = true)]
    right_model: Option<PathBuf>,
    #[arg(long, global = true)]
    task_world: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted demonstrations.
    Gen {
        #[arg(long)]
        n_episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        distribution: Option<Distribution>,
    },
    /// Inject constraint-violating noise into a dataset.
    Perturb {
        input: PathBuf,
        #[arg(long, conflicts_with = "eta")]
        level: Option<u8>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score constraint violation and task outcomes of a dataset.
    Eval {
        input: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Curvature series along each rollout and their association with violation and outcome.
    Curvature {
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        fd_step: Option<f64>,
        #[command(flatten)]
        window: WindowArgs,
    },
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Distribution {
    Training,
    Evaluation,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    ForwardDual,
    CentralFd,
}

fn resolve(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::from_path(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &cli.output_dir {
        c.output_dir = v.clone();
    }
    if let Some(v) = cli.workers {
        c.workers = v;
    }
    for (dst, src) in [
        (&mut c.models.left, &cli.left_model),
        (&mut c.models.right, &cli.right_model),
        (&mut c.models.task_world, &cli.task_world),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    let set_window = |c: &mut PipelineConfig, w: &WindowArgs| {
        c.metrics.window = w.window.unwrap_or(c.metrics.window);
        c.metrics.stride = w.stride.unwrap_or(c.metrics.stride);
    };
    match &cli.command {
        Command::Gen { n_episodes, seed, distribution } => {
            let g = &mut c.generation;
            g.n_episodes = n_episodes.unwrap_or(g.n_episodes);
            g.master_seed = seed.unwrap_or(g.master_seed);
            if let Some(d) = distribution {
                g.distribution = match d {
                    Distribution::Training => bimanual_constraint::cli::DistributionChoice::Training,
                    Distribution::Evaluation => bimanual_constraint::cli::DistributionChoice::Evaluation,
                };
            }
        }
        Command::Perturb { level, eta, seed, .. } => {
            let p = &mut c.perturbation;
            if let Some(l) = level {
                p.level = *l;
                p.eta = None;
            }
            if eta.is_some() {
                p.eta = *eta;
            }
            p.seed = seed.unwrap_or(p.seed);
        }
        Command::Eval { window, .. } => set_window(&mut c, window),
        Command::Curvature { mode, fd_step, window, .. } => {
            set_window(&mut c, window);
            if let Some(m) = mode {
                c.curvature.mode = match m {
                    Mode::ForwardDual => DiffMode::ForwardDual,
                    Mode::CentralFd => DiffMode::CentralFd,
                };
            }
            c.curvature.fd_step = fd_step.unwrap_or(c.curvature.fd_step);
        }
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Gen { .. } => {
            let o = cmd_gen(&cfg)?;
            println!("{} episodes -> {}", o.manifest_record.n_episodes, o.dataset.display());
        }
        Command::Perturb { input, .. } => {
            let o = cmd_perturb(&cfg, input)?;
            println!("{} (ik failures {}) -> {}", o.summary.eta, o.summary.ik_failures, o.dataset.display());
        }
        Command::Eval { input, .. } => {
            let o = cmd_eval(&cfg, input)?;
            let r = &o.record.report;
            println!("success {}/{} -> {}", r.successes, r.n_episodes, o.report_path.display());
        }
        Command::Curvature { input, .. } => {
            let o = cmd_curvature(&cfg, input)?;
            println!("{} points, {} gaps -> {}", o.analysis.n_points, o.analysis.n_gaps, o.analysis_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
