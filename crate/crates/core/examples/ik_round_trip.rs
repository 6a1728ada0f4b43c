//! Analytic S-R-S inverse kinematics: sample joint configurations, recover
//! them from their flange pose, SEW angle and branch, and report the error.

use bimanual_constraint::kinematics::{
    branch_of, forward_kinematics, inverse_kinematics, sew_angle, ArmModel, JointConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let arm = ArmModel::default_left();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_pos, mut worst_rot, mut worst_psi, mut solved) = (0.0f64, 0.0f64, 0.0f64, 0);
    for _ in 0..1000 {
        let q = JointConfig(std::array::from_fn(|i| rng.random_range(-0.8..0.8) + if i == 3 { -1.2 } else { 0.0 }));
        let (Ok(psi), Ok(branch)) = (sew_angle(&arm, &q), branch_of(&arm, &q)) else { continue };
        let target = forward_kinematics(&arm, &q);
        let Ok(sol) = inverse_kinematics(&arm, &target, psi, branch, false) else { continue };
        let back = forward_kinematics(&arm, &sol);
        let (p, r) = back.distance_to(&target);
        worst_pos = worst_pos.max(p);
        worst_rot = worst_rot.max(r);
        worst_psi = worst_psi.max((sew_angle(&arm, &sol).unwrap() - psi).sin().abs());
        solved += 1;
    }
    println!("{solved} round trips");
    println!("max pose error   {worst_pos:.2e} m, {worst_rot:.2e} rad");
    println!("max SEW mismatch {worst_psi:.2e} rad");
}
