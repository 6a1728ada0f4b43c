//! Replays perturbed demonstrations through the rule-based task world and
//! reports outcome categories with Wilson intervals on the success rate.

use bimanual_constraint::bimanual::BimanualModel;
use bimanual_constraint::cli::{episode_outcomes, generate_dataset, GenerationConfig};
use bimanual_constraint::metrics::{wilson_interval, Outcome};
use bimanual_constraint::perturb::{perturb_dataset, OuParams, PerturbationLevel};
use bimanual_constraint::worldsim::TaskWorldConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = BimanualModel::default_cell();
    let world = TaskWorldConfig::default();
    let (clean, _, _) = generate_dataset(&model, &world, &GenerationConfig { n_episodes: 60, ..Default::default() })?;
    for level in PerturbationLevel::all() {
        let eps = perturb_dataset(&model, &clean, OuParams::with_eta(level.eta())?, Some(level.level()), 5, 1e-3)?;
        let outcomes = episode_outcomes(&model, &world, &eps)?;
        let counts = Outcome::ALL.map(|c| outcomes.iter().filter(|o| **o == c).count());
        let s = outcomes.iter().filter(|o| o.is_success()).count();
        let (lo, hi) = wilson_interval(s, outcomes.len(), 0.95)?;
        println!(
            "level {}: I/II/III/IV = {counts:?}  success {s}/{}  95% CI [{lo:.3}, {hi:.3}]",
            level.level(),
            outcomes.len()
        );
    }
    Ok(())
}
