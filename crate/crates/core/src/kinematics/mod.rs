//! Single-arm 7-DoF S-R-S kinematics: forward kinematics, geometric Jacobian,
//! the stereographic SEW redundancy angle and analytic inverse kinematics.
//!
//! The solver works in product-of-exponentials form. Joint axes and points are
//! taken at the zero configuration in the world frame; the shoulder point `S`
//! is fixed under joints 1–3, the wrist point `W` under joints 5–7 and the
//! elbow point `E` lies on joint 4. For a flange target and a SEW angle ψ the
//! elbow is placed on its circle about `S→W`, which fixes the shoulder
//! rotation; joint 4 is set from `|SW|`, and the wrist from the remaining
//! orientation. The eight discrete solutions come from the two roots of each
//! of those three steps.

mod model;
mod subproblem;

use nalgebra::{Matrix3, Matrix6x1, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Mat3, Pose, Real, Transform, Vec3};
pub use model::{ArmModel, ArmModelFile, SrsGeometry, ARM_MODEL_SCHEMA};
use subproblem::{rot, rotate_to_distance, three_axis};

/// Distances below this between `S` and `W` leave the SEW angle undefined.
pub const SEW_DEGENERACY: f64 = 1e-6;
/// Elbow interior angles within this of 0 or π are rejected by IK.
pub const ELBOW_SINGULAR_MARGIN: f64 = 1e-6;

pub type Jacobian6x7 = SMatrix<f64, 6, 7>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("target unreachable: {0}")]
    Unreachable(String),
    #[error("elbow singular: interior angle {angle} rad within {ELBOW_SINGULAR_MARGIN} of 0 or π")]
    ElbowSingular { angle: f64 },
    #[error("joint limits violated at joints {joints:?}")]
    JointLimitViolation { joints: Vec<usize>, q: JointConfig },
    #[error("SEW angle undefined: {0}")]
    DegenerateSew(String),
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
}

/// Joint angles in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointConfig(pub [f64; 7]);

impl JointConfig {
    pub fn zeros() -> Self {
        Self([0.0; 7])
    }

    pub fn max_abs_diff(&self, o: &JointConfig) -> f64 {
        self.0.iter().zip(o.0.iter()).map(|(a, b)| wrap_angle(a - b).abs()).fold(0.0, f64::max)
    }
}

/// Discrete IK solution selector. Without flips the solver returns the
/// root with the larger joint-2 angle, the smaller joint-4 angle and the
/// smaller joint-6 angle; each flag selects the other root of that step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IkBranch {
    pub shoulder_flip: bool,
    pub elbow_flip: bool,
    pub wrist_flip: bool,
}

impl IkBranch {
    pub fn all() -> [IkBranch; 8] {
        let mut out = [IkBranch::default(); 8];
        for (i, b) in out.iter_mut().enumerate() {
            *b = IkBranch { shoulder_flip: i & 1 != 0, elbow_flip: i & 2 != 0, wrist_flip: i & 4 != 0 };
        }
        out
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}

/// Forward kinematics on any scalar; returns the flange pose in the world frame.
pub fn forward_kinematics_generic<T: Real>(model: &ArmModel, q: &[T]) -> Transform<T> {
    let frames = joint_frames_generic(model, q);
    frames[6].compose(&Transform::lift(&model.offset_transforms()[7]))
}

/// World frames of joints 1–7, each after its own rotation.
pub fn joint_frames_generic<T: Real>(model: &ArmModel, q: &[T]) -> [Transform<T>; 7] {
    assert_eq!(q.len(), 7, "an arm has 7 joints");
    let offsets = model.offset_transforms();
    let mut acc = Transform::lift(&model.base_pose.to_transform()).compose(&Transform::lift(&offsets[0]));
    let mut frames = [Transform::identity(); 7];
    for i in 0..7 {
        let a = model.joint_axes[i];
        acc = acc.compose(&Transform::rotation(Mat3::axis_angle([a.x, a.y, a.z], q[i])));
        frames[i] = acc;
        if i < 6 {
            acc = acc.compose(&Transform::lift(&offsets[i + 1]));
        }
    }
    frames
}

pub fn forward_kinematics(model: &ArmModel, q: &JointConfig) -> Pose {
    Pose::from_transform(&forward_kinematics_generic(model, &q.0))
}

/// Geometric Jacobian at the flange: rows 0–2 linear velocity, rows 3–5
/// angular velocity, per unit joint rate.
pub fn geometric_jacobian(model: &ArmModel, q: &JointConfig) -> Jacobian6x7 {
    let frames = joint_frames_generic(model, &q.0);
    let flange = frames[6].compose(&model.offset_transforms()[7]);
    let p = Vector3::from(flange.trans.0);
    let mut jac = Jacobian6x7::zeros();
    for (i, f) in frames.iter().enumerate() {
        let a = model.joint_axes[i];
        let z = Vector3::from(f.rot.apply(&Vec3([a.x, a.y, a.z])).0);
        let o = Vector3::from(f.trans.0);
        let lin = z.cross(&(p - o));
        jac.set_column(i, &Matrix6x1::new(lin.x, lin.y, lin.z, z.x, z.y, z.z));
    }
    jac
}

/// Shoulder, elbow and wrist points in the world frame.
pub fn sew_points(model: &ArmModel, q: &JointConfig) -> Result<[Vector3<f64>; 3], KinematicsError> {
    let frames = joint_frames_generic(model, &q.0);
    let g = model.srs()?;
    let e = frames[3].apply(&Vec3(g.elbow_local.into()));
    let w = frames[6].apply(&Vec3(g.wrist_local.into()));
    Ok([g.shoulder, Vector3::from(e.0), Vector3::from(w.0)])
}

/// Stereographic reference direction for the unit shoulder→wrist direction.
///
/// The configured reference vector is carried from the workspace direction
/// `t = −pole` to `p̂` by the minimal rotation, which is smooth everywhere
/// except `p̂ = −t`. The result is unit length and orthogonal to `p̂`.
fn sew_reference(model: &ArmModel, p_hat: &Vector3<f64>) -> Result<Vector3<f64>, KinematicsError> {
    let g = model.srs()?;
    let t = -g.pole;
    let c = t.dot(p_hat);
    if 1.0 + c < 1e-9 {
        return Err(KinematicsError::DegenerateSew("shoulder→wrist direction is on the singular ray".into()));
    }
    let w = t.cross(p_hat);
    let r = g.reference;
    let wr = w.cross(&r);
    Ok((r + wr + w.cross(&wr) / (1.0 + c)).normalize())
}

fn sew_from_points(
    model: &ArmModel,
    s: &Vector3<f64>,
    e: &Vector3<f64>,
    w: &Vector3<f64>,
) -> Result<f64, KinematicsError> {
    let sw = w - s;
    let d = sw.norm();
    if d < SEW_DEGENERACY {
        return Err(KinematicsError::DegenerateSew(format!("|W − S| = {d:.3e} m")));
    }
    let p_hat = sw / d;
    let e_ref = sew_reference(model, &p_hat)?;
    let se = e - s;
    let perp = se - p_hat * se.dot(&p_hat);
    if perp.norm() < 1e-12 {
        return Err(KinematicsError::DegenerateSew("elbow on the shoulder–wrist line".into()));
    }
    Ok(p_hat.dot(&e_ref.cross(&perp)).atan2(e_ref.dot(&perp)))
}

/// SEW angle ψ ∈ (−π, π] of the elbow about the shoulder–wrist line.
pub fn sew_angle(model: &ArmModel, q: &JointConfig) -> Result<f64, KinematicsError> {
    let [s, e, w] = sew_points(model, q)?;
    let psi = sew_from_points(model, &s, &e, &w)?;
    Ok(if psi == -std::f64::consts::PI { std::f64::consts::PI } else { psi })
}

/// Analytic IK for one branch.
pub fn inverse_kinematics(
    model: &ArmModel,
    target: &Pose,
    psi: f64,
    branch: IkBranch,
    enforce_limits: bool,
) -> Result<JointConfig, KinematicsError> {
    let q = solve_branch(model, target, psi, branch)?;
    if enforce_limits {
        let joints = model.limit_violations(&q);
        if !joints.is_empty() {
            return Err(KinematicsError::JointLimitViolation { joints, q });
        }
    }
    Ok(q)
}

/// All eight branches for one target, without limit filtering.
pub fn inverse_kinematics_all(
    model: &ArmModel,
    target: &Pose,
    psi: f64,
) -> Vec<(IkBranch, Result<JointConfig, KinematicsError>)> {
    IkBranch::all().into_iter().map(|b| (b, solve_branch(model, target, psi, b))).collect()
}

/// The branch whose IK solution reproduces `q` at its own pose and SEW angle.
pub fn branch_of(model: &ArmModel, q: &JointConfig) -> Result<IkBranch, KinematicsError> {
    let target = forward_kinematics(model, q);
    let psi = sew_angle(model, q)?;
    let mut best: Option<(f64, IkBranch)> = None;
    for (b, sol) in inverse_kinematics_all(model, &target, psi) {
        if let Ok(s) = sol {
            let d = s.max_abs_diff(q);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, b));
            }
        }
    }
    best.map(|(_, b)| b).ok_or_else(|| KinematicsError::Unreachable("no branch reproduces the configuration".into()))
}

fn frame_from_pair(a: &Vector3<f64>, b: &Vector3<f64>) -> Option<Matrix3<f64>> {
    let f1 = a.normalize();
    let n = a.cross(b);
    if n.norm() < 1e-12 * a.norm() * b.norm() {
        return None;
    }
    let f3 = n.normalize();
    let f2 = f3.cross(&f1);
    Some(Matrix3::from_columns(&[f1, f2, f3]))
}

/// The solution with the larger middle angle when `larger`, else the smaller.
fn pick(sols: [[f64; 3]; 2], larger: bool) -> [f64; 3] {
    let [a, b] = sols.map(|s| s.map(wrap_angle));
    if (a[1] >= b[1]) == larger {
        a
    } else {
        b
    }
}

fn solve_branch(model: &ArmModel, target: &Pose, psi: f64, branch: IkBranch) -> Result<JointConfig, KinematicsError> {
    let g = model.srs()?;
    let w_pos = target.apply(&g.wrist_in_flange);
    let sw = w_pos - g.shoulder;
    let d = sw.norm();
    if d < SEW_DEGENERACY {
        return Err(KinematicsError::DegenerateSew(format!("|W − S| = {d:.3e} m")));
    }

    // Joint 4 from the shoulder–wrist distance.
    let (theta0, phi) = rotate_to_distance(&g.axes[3], &(g.wrist0 - g.elbow0), &(g.shoulder - g.elbow0), d)
        .ok_or_else(|| {
            KinematicsError::Unreachable(format!(
                "|S→W| = {d:.6} m outside the reachable annulus [{:.6}, {:.6}]",
                g.reach_min, g.reach_max
            ))
        })?;
    if !(ELBOW_SINGULAR_MARGIN..=std::f64::consts::PI - ELBOW_SINGULAR_MARGIN).contains(&phi) {
        return Err(KinematicsError::ElbowSingular { angle: phi });
    }
    let (a4, b4) = (wrap_angle(theta0 - phi), wrap_angle(theta0 + phi));
    let q4 = if branch.elbow_flip { a4.max(b4) } else { a4.min(b4) };
    let r4 = rot(&g.axes[3], q4);
    let w_after4 = g.elbow0 + r4 * (g.wrist0 - g.elbow0);

    // Elbow on its circle at angle ψ.
    let a_loc = g.elbow0 - g.shoulder;
    let b_loc = w_after4 - g.shoulder;
    let p_hat = sw / d;
    let along = a_loc.dot(&b_loc) / d;
    let radius = (a_loc.norm_squared() - along * along).max(0.0).sqrt();
    let e_ref = sew_reference(model, &p_hat)?;
    let e_dir = e_ref * psi.cos() + p_hat.cross(&e_ref) * psi.sin();
    let e_world = p_hat * along + e_dir * radius;

    let world = frame_from_pair(&e_world, &sw).ok_or(KinematicsError::ElbowSingular { angle: phi })?;
    let local = frame_from_pair(&a_loc, &b_loc).ok_or(KinematicsError::ElbowSingular { angle: phi })?;
    let r123 = world * local.transpose();

    let shoulder = three_axis(&r123, &g.axes[0], &g.axes[1], &g.axes[2])
        .ok_or_else(|| KinematicsError::Unreachable("shoulder rotation not decomposable".into()))?;
    let [q1, q2, q3] = pick(shoulder, !branch.shoulder_flip);

    let r_target = target.rotation.matrix();
    let r567 = (r123 * r4).transpose() * r_target * g.home_flange_rot.transpose();
    let wrist = three_axis(&r567, &g.axes[4], &g.axes[5], &g.axes[6])
        .ok_or_else(|| KinematicsError::Unreachable("wrist orientation not attainable".into()))?;
    let [q5, q6, q7] = pick(wrist, branch.wrist_flip);

    let q = JointConfig([q1, q2, q3, q4, q5, q6, q7].map(wrap_angle));
    let (dp, dr) = forward_kinematics(model, &q).distance_to(target);
    if dp > 1e-8 || dr > 1e-8 {
        return Err(KinematicsError::Unreachable(format!(
            "closed-form solution misses target by {dp:.2e} m / {dr:.2e} rad"
        )));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{jacobian_numeric, DiffConfig, DiffFunction, EvalError, Rotation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arm() -> ArmModel {
        ArmModel::default_left()
    }

    fn random_q(model: &ArmModel, rng: &mut impl Rng) -> JointConfig {
        let mut q = [0.0; 7];
        for (i, v) in q.iter_mut().enumerate() {
            let (lo, hi) = model.joint_limits[i];
            *v = rng.random_range(lo..hi);
        }
        JointConfig(q)
    }

    #[test]
    fn zero_chain_returns_base_pose() {
        let base = Pose::new(Rotation::from_rpy(0.1, -0.2, 0.3), Vector3::new(0.5, -1.0, 0.25));
        let m = ArmModel::new(
            "flat",
            base,
            [Pose::identity(); 8],
            [Vector3::z(); 7],
            [(-1.0, 1.0); 7],
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::x(),
        )
        .unwrap();
        let p = forward_kinematics(&m, &JointConfig::zeros());
        assert!(p.distance_to(&base).0 < 1e-15 && p.distance_to(&base).1 < 1e-15);
        let mut q = JointConfig::zeros();
        q.0[0] = 0.7;
        let p = forward_kinematics(&m, &q);
        let expect = base.compose(&Pose::from_rotation(Rotation::from_axis_angle(&Vector3::z(), 0.7).unwrap()));
        assert!(p.distance_to(&expect).1 < 1e-15);
    }

    #[test]
    fn single_joint_lever_arm() {
        let mut offsets = [Pose::identity(); 8];
        offsets[7] = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let m = ArmModel::new(
            "lever",
            Pose::identity(),
            offsets,
            [Vector3::z(); 7],
            [(-1.0, 1.0); 7],
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::x(),
        )
        .unwrap();
        let j = geometric_jacobian(&m, &JointConfig::zeros());
        let col = j.column(0);
        assert!((col - Matrix6x1::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    struct FkPosition<'a>(&'a ArmModel);
    impl DiffFunction for FkPosition<'_> {
        fn input_dim(&self) -> usize {
            7
        }
        fn output_dim(&self) -> usize {
            3
        }
        fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
            Ok(forward_kinematics_generic(self.0, x).trans.0.to_vec())
        }
    }

    #[test]
    fn dual_and_fd_jacobians_of_fk_agree() {
        let m = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let q = random_q(&m, &mut rng);
            let jd = jacobian_numeric(&FkPosition(&m), &q.0, &DiffConfig::dual()).unwrap();
            let jf = jacobian_numeric(&FkPosition(&m), &q.0, &DiffConfig::central_fd(1e-5)).unwrap();
            assert!((&jd - &jf).amax() <= 1e-6 * jd.amax());
            // linear rows of the geometric Jacobian are the position Jacobian
            let jg = geometric_jacobian(&m, &q);
            for r in 0..3 {
                for c in 0..7 {
                    assert!((jg[(r, c)] - jd[(r, c)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn angular_columns_are_unit() {
        let m = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let j = geometric_jacobian(&m, &random_q(&m, &mut rng));
        for c in 0..7 {
            let n = (j[(3, c)].powi(2) + j[(4, c)].powi(2) + j[(5, c)].powi(2)).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_recovers_configuration() {
        let m = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let q = random_q(&m, &mut rng);
            let psi = sew_angle(&m, &q).unwrap();
            let b = branch_of(&m, &q).unwrap();
            let target = forward_kinematics(&m, &q);
            let back = inverse_kinematics(&m, &target, psi, b, true).unwrap();
            assert!(back.max_abs_diff(&q) < 1e-9, "{q:?} vs {back:?}");
            let (dp, dr) = forward_kinematics(&m, &back).distance_to(&target);
            assert!(dp < 1e-10 && dr < 1e-10);
            assert!((sew_angle(&m, &back).unwrap() - psi).abs() < 1e-9);
        }
    }

    #[test]
    fn eight_distinct_branches() {
        let m = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = random_q(&m, &mut rng);
        let target = forward_kinematics(&m, &q);
        let psi = sew_angle(&m, &q).unwrap();
        let sols: Vec<JointConfig> =
            inverse_kinematics_all(&m, &target, psi).into_iter().map(|(_, s)| s.unwrap()).collect();
        for i in 0..8 {
            let (dp, dr) = forward_kinematics(&m, &sols[i]).distance_to(&target);
            assert!(dp < 1e-10 && dr < 1e-10);
            for j in (i + 1)..8 {
                assert!(sols[i].max_abs_diff(&sols[j]) > 1e-6);
            }
        }
    }

    #[test]
    fn self_motion_shifts_psi() {
        let m = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_q(&m, &mut rng);
        let target = forward_kinematics(&m, &q);
        let psi = sew_angle(&m, &q).unwrap();
        let b = branch_of(&m, &q).unwrap();
        for k in 1..12 {
            let delta = 0.5 * k as f64;
            let moved = inverse_kinematics(&m, &target, wrap_angle(psi + delta), b, false).unwrap();
            let got = sew_angle(&m, &moved).unwrap();
            assert!(wrap_angle(got - psi - delta).abs() < 1e-9);
            let (dp, dr) = forward_kinematics(&m, &moved).distance_to(&target);
            assert!(dp < 1e-10 && dr < 1e-10);
        }
    }

    #[test]
    fn flange_roll_leaves_psi_unchanged() {
        let m = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = random_q(&m, &mut rng);
        let mut rolled = q;
        rolled.0[6] += 0.37;
        assert!((sew_angle(&m, &q).unwrap() - sew_angle(&m, &rolled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn reference_configuration_has_zero_psi() {
        // Wrist straight ahead of the shoulder (opposite the pole), elbow
        // below the shoulder-wrist line in the arm's x-z plane.
        let m = arm();
        let g = m.srs().unwrap();
        let l1 = (g.elbow0 - g.shoulder).norm();
        let l2 = (g.wrist0 - g.elbow0).norm();
        let d = 0.6;
        let a = ((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)).acos();
        let q2 = std::f64::consts::FRAC_PI_2 + a;
        let elbow = Vector3::new(l1 * a.cos(), 0.0, -l1 * a.sin());
        let fore = Vector3::new(d, 0.0, 0.0) - elbow;
        let q4 = q2 - fore.x.atan2(fore.z);
        let q = JointConfig([0.0, q2, 0.0, q4, 0.0, 0.0, 0.0]);
        let [s, _, w] = sew_points(&m, &q).unwrap();
        assert!(((w - s).normalize() + g.pole).norm() < 1e-12);
        assert!(sew_angle(&m, &q).unwrap().abs() < 1e-12);
    }

    #[test]
    fn unreachable_and_limit_errors() {
        let m = arm();
        let q = JointConfig([0.2, 0.5, -0.1, -1.0, 0.3, 0.8, 0.1]);
        let mut far = forward_kinematics(&m, &q);
        far.translation += Vector3::new(10.0, 0.0, 0.0);
        assert!(matches!(
            inverse_kinematics(&m, &far, 0.0, IkBranch::default(), false),
            Err(KinematicsError::Unreachable(_))
        ));

        let target = forward_kinematics(&m, &q);
        let psi = sew_angle(&m, &q).unwrap();
        let b = branch_of(&m, &q).unwrap();
        let mut tight = m.clone();
        tight.joint_limits[1] = (-0.1, 0.1);
        tight.joint_limits[5] = (-0.2, 0.2);
        match inverse_kinematics(&tight, &target, psi, b, true) {
            Err(KinematicsError::JointLimitViolation { joints, .. }) => assert_eq!(joints, vec![1, 5]),
            other => panic!("expected limit violation, got {other:?}"),
        }
    }

    #[test]
    fn straight_arm_is_elbow_singular() {
        let m = arm();
        let target = forward_kinematics(&m, &JointConfig([0.3, 0.4, 0.0, 0.0, 0.0, 0.2, 0.0]));
        let r = inverse_kinematics(&m, &target, 0.0, IkBranch::default(), false);
        assert!(matches!(r, Err(KinematicsError::ElbowSingular { .. }) | Err(KinematicsError::Unreachable(_))));
    }
}
