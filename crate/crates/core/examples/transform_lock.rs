//! Scripted demonstration under transform locking: the right (control) arm
//! carries the box while the left arm tracks the locked relative pose.

use bimanual_constraint::bimanual::{relative_transform, BimanualModel};
use bimanual_constraint::metrics::classify_outcome;
use bimanual_constraint::worldsim::{generate_demonstration, BoxInit, Phase, PsiProfile, TaskWorldConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = BimanualModel::default_cell();
    let world = TaskWorldConfig::default();
    let ep = generate_demonstration(&model, &world, BoxInit::new(0.0, 0.6, 0.0), PsiProfile::from_config(&world), 3)?;
    let transport = ep.transport_indices();
    let reference = relative_transform(&model, &ep.steps[transport[0]].observed_state());
    let (mut pos, mut rot) = (0.0f64, 0.0f64);
    for &i in &transport {
        let (p, r) = relative_transform(&model, &ep.steps[i].commanded_state()).distance_to(&reference);
        pos = pos.max(p);
        rot = rot.max(r);
    }
    let count = |ph| ep.steps.iter().filter(|s| s.phase == ph).count();
    println!("{} knots, {} in transport, {} in approach", ep.steps.len(), transport.len(), count(Phase::Approach));
    println!("locked relative transform drift: {pos:.2e} m, {rot:.2e} rad");
    println!("events: {:?}", ep.events.as_deref().unwrap_or_default());
    println!("outcome: {:?}", classify_outcome(&ep)?);
    Ok(())
}
