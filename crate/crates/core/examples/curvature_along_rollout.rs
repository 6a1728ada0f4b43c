//! Riemann curvature of the grasp constraint manifold: one frame in detail,
//! then the Kretschmann scalar along a clean and a perturbed transport.

use bimanual_constraint::bimanual::BimanualModel;
use bimanual_constraint::manifold::{
    frame_at, grasp_configuration, make_constraint, riemann_and_kretschmann, rollout_curvature_series, CurvatureConfig,
};
use bimanual_constraint::perturb::{perturb_episode, PerturbationLevel};
use bimanual_constraint::worldsim::{generate_demonstration, BoxInit, PsiProfile, TaskWorldConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = BimanualModel::default_cell();
    let world = TaskWorldConfig::default();
    let cfg = CurvatureConfig::default();
    let ep = generate_demonstration(&model, &world, BoxInit::new(0.05, 0.55, 0.2), PsiProfile::from_config(&world), 1)?;
    let q0 = grasp_configuration(&ep)?;
    let f = make_constraint(&model, &q0);
    let frame = frame_at(&f, &q0, &cfg)?;
    let c = riemann_and_kretschmann(&f, &q0, &cfg)?;
    println!(
        "manifold dimension {} (codimension {}), cond(J) = {:.1}",
        frame.tangent_dim(),
        frame.normal_dim(),
        frame.cond_j
    );
    println!(
        "at grasp: Kretschmann {:.4}, max |R| {:.4}, symmetry violation {:.1e}",
        c.kretschmann,
        c.max_abs(),
        c.symmetry_violation()
    );
    for (name, e) in [("clean", ep.clone()), ("level 3", perturb_episode(&model, &ep, PerturbationLevel::new(3)?, 9)?)]
    {
        let s = rollout_curvature_series(&model, &e, &cfg)?;
        let k: Vec<f64> = s.points.iter().map(|p| p.kretschmann).collect();
        let mean = k.iter().sum::<f64>() / k.len() as f64;
        let res = s.points.iter().map(|p| p.residual).fold(0.0, f64::max);
        println!("{name:>8}: {} knots, mean K {mean:.4}, max residual {res:.2e}, gaps {}", k.len(), s.gaps.len());
    }
    Ok(())
}
