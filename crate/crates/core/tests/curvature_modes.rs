//! Kretschmann scalar of the bimanual grasp manifold agrees between exact
//! dual-number and central-difference derivatives.

use bimanual_constraint::bimanual::BimanualModel;
use bimanual_constraint::geometry::DiffConfig;
use bimanual_constraint::manifold::{grasp_configuration, make_constraint, riemann_and_kretschmann, CurvatureConfig};
use bimanual_constraint::worldsim::{generate_demonstration, BoxInit, PsiProfile, TaskWorldConfig};

#[test]
fn dual_and_finite_difference_agree_along_transport() {
    let model = BimanualModel::default_cell();
    let world = TaskWorldConfig::default();
    let ep =
        generate_demonstration(&model, &world, BoxInit::new(-0.05, 0.62, -0.3), PsiProfile::from_config(&world), 2)
            .unwrap();
    let f = make_constraint(&model, &grasp_configuration(&ep).unwrap());
    let dual = CurvatureConfig::default();
    let fd = CurvatureConfig { diff: DiffConfig::central_fd(1e-4), ..dual };
    for i in ep.transport_indices().into_iter().step_by(6) {
        let q = ep.steps[i].action[..14].to_vec();
        let a = riemann_and_kretschmann(&f, &q, &dual).unwrap();
        let b = riemann_and_kretschmann(&f, &q, &fd).unwrap();
        let rel = (a.kretschmann - b.kretschmann).abs() / a.kretschmann;
        assert!(rel < 1e-4, "knot {i}: {} vs {} ({rel:.1e})", a.kretschmann, b.kretschmann);
        assert!(a.residual_norm < 1e-9);
    }
}
