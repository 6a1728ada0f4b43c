//! Ornstein-Uhlenbeck perturbation of the subordinate flange at each table
//! level, with the resulting constraint-violation magnitudes.

use bimanual_constraint::bimanual::BimanualModel;
use bimanual_constraint::cli::generate_dataset;
use bimanual_constraint::perturb::{dataset_violation_summary, perturb_dataset, OuParams, PerturbationLevel};
use bimanual_constraint::worldsim::TaskWorldConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = BimanualModel::default_cell();
    let world = TaskWorldConfig::default();
    let generation = bimanual_constraint::cli::GenerationConfig { n_episodes: 40, ..Default::default() };
    let (clean, _, _) = generate_dataset(&model, &world, &generation)?;
    println!("level   eta      pos mean [cm]  rot mean [deg]  deg/cm");
    for level in PerturbationLevel::all() {
        let params = OuParams::with_eta(level.eta())?;
        let eps = perturb_dataset(&model, &clean, params, Some(level.level()), 11, 1e-3)?;
        let s = dataset_violation_summary(&model, &eps)?;
        let ratio = if s.pos_err_cm.mean > 1e-9 { s.rot_err_deg.mean / s.pos_err_cm.mean } else { f64::NAN };
        println!(
            "{:>5}   {:<7}  {:>13.4}  {:>14.4}  {ratio:>6.3}",
            level.level(),
            level.eta(),
            s.pos_err_cm.mean,
            s.rot_err_deg.mean
        );
    }
    Ok(())
}
