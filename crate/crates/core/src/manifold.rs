//! Constraint manifold of the transform lock: tangent/normal frames, second
//! fundamental form, Riemann tensor by the Gauss equation in flat joint
//! space, and the Kretschmann scalar.
//!
//! Everything except [`ConstraintFunction`] works for any level-set map
//! `f: Rⁿ → Rᵐ`; curvature is that of the level set through the query
//! point, so off-manifold points are handled without projection.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bimanual::{relative_transform, BimanualModel, BimanualState};
use crate::geometry::{
    hessian_numeric, jacobian_numeric, DiffConfig, DiffError, DiffFunction, EvalError, Mat3, Pose, Real, Transform,
    Vec3, NEAR_PI_MARGIN,
};
use crate::kinematics::forward_kinematics_generic;
use crate::worldsim::Episode;

/// Smallest singular value of `J` accepted as full row rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("constraint Jacobian is rank deficient: sigma_min = {sigma_min:e}, cond = {cond_j:e}")]
    RankDeficient { sigma_min: f64, cond_j: f64 },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("episode has no transport-phase knots")]
    NoTransportPhase,
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("constraint needs more inputs ({inputs}) than outputs ({outputs})")]
    NoTangentSpace { inputs: usize, outputs: usize },
    #[error("joint weights must be positive and finite")]
    InvalidWeights,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureConfig {
    pub diff: DiffConfig,
    pub rank_tol: f64,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        Self { diff: DiffConfig::default(), rank_tol: RANK_TOLERANCE }
    }
}

/// Chart for the rotation part of the residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationResidual {
    /// `log(R₀ᵀ R)`.
    #[default]
    FixedReference,
    /// `log(R R₀ᵀ)`; same level sets, different chart.
    Left,
}

/// `e(q) = [p_rel(q) − p_rel(q₀); log(R_rel(q₀)ᵀ R_rel(q))]` for
/// `q = [q_L; q_R] ∈ R¹⁴` and the right-to-left relative transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintFunction {
    pub model: BimanualModel,
    pub q0: [f64; 14],
    pub reference_rel: Pose,
    pub residual: RotationResidual,
}

/// Constraint anchored at the grasp configuration `q0`.
pub fn make_constraint(model: &BimanualModel, q0: &[f64; 14]) -> ConstraintFunction {
    let s = state_of(q0);
    ConstraintFunction {
        model: model.clone(),
        q0: *q0,
        reference_rel: relative_transform(model, &s),
        residual: RotationResidual::FixedReference,
    }
}

fn state_of(q: &[f64; 14]) -> BimanualState {
    let mut v = [0.0; 16];
    v[..14].copy_from_slice(q);
    BimanualState::from_slice(&v).expect("16 entries")
}

impl ConstraintFunction {
    pub fn with_residual(mut self, residual: RotationResidual) -> Self {
        self.residual = residual;
        self
    }

    /// Residual at `q` in plain floats.
    pub fn residual_at(&self, q: &[f64]) -> Result<DVector<f64>, ManifoldError> {
        if q.len() != 14 {
            return Err(ManifoldError::DimensionMismatch { expected: 14, got: q.len() });
        }
        let e = self.eval(q).map_err(|e| DiffError::EvaluationFailure(e.0))?;
        Ok(DVector::from_vec(e))
    }
}

impl DiffFunction for ConstraintFunction {
    fn input_dim(&self) -> usize {
        14
    }

    fn output_dim(&self) -> usize {
        6
    }

    fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
        if x.len() != 14 {
            return Err(EvalError(format!("expected 14 joint values, got {}", x.len())));
        }
        let left = forward_kinematics_generic(&self.model.left, &x[..7]);
        let right = forward_kinematics_generic(&self.model.right, &x[7..]);
        let rel = right.inverse().compose(&left);
        let r0: Transform<T> = Transform::lift(&self.reference_rel.to_transform());
        let dp = rel.trans.sub(&r0.trans);
        let dr: Mat3<T> = match self.residual {
            RotationResidual::FixedReference => r0.rot.transpose().mul(&rel.rot),
            RotationResidual::Left => rel.rot.mul(&r0.rot.transpose()),
        };
        // angle near π: the log chart is not smooth
        let cos = (dr.trace().value() - 1.0) / 2.0;
        if cos < (std::f64::consts::PI - NEAR_PI_MARGIN).cos() {
            return Err(EvalError("rotation residual within 1e-6 of pi".into()));
        }
        let w: Vec3<T> = dr.log();
        Ok(vec![dp.0[0], dp.0[1], dp.0[2], w.0[0], w.0[1], w.0[2]])
    }
}

/// `f` in coordinates `y = W^{1/2} q`, so the flat metric in `y` is the
/// diagonal joint metric `W` in `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointWeighted<F> {
    pub inner: F,
    sqrt_w: Vec<f64>,
}

impl<F: DiffFunction> JointWeighted<F> {
    pub fn new(inner: F, weights: &[f64]) -> Result<Self, ManifoldError> {
        if weights.len() != inner.input_dim() {
            return Err(ManifoldError::DimensionMismatch { expected: inner.input_dim(), got: weights.len() });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(ManifoldError::InvalidWeights);
        }
        Ok(Self { inner, sqrt_w: weights.iter().map(|w| w.sqrt()).collect() })
    }

    /// Weighted coordinates of a joint vector.
    pub fn to_weighted(&self, q: &[f64]) -> Vec<f64> {
        q.iter().zip(&self.sqrt_w).map(|(q, s)| q * s).collect()
    }
}

impl<F: DiffFunction> DiffFunction for JointWeighted<F> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn eval<T: Real>(&self, y: &[T]) -> Result<Vec<T>, EvalError> {
        let q: Vec<T> = y.iter().zip(&self.sqrt_w).map(|(y, s)| y.scale(1.0 / s)).collect();
        self.inner.eval(&q)
    }
}

/// Orthonormal splitting of `Rⁿ` at `q` into `null(J)` and `row(J)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldFrame {
    pub q: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// `n × (n − m)`, orthonormal columns spanning `null(J)`.
    pub tangent_basis: DMatrix<f64>,
    /// `n × m`, orthonormal columns spanning `row(J)`; column `k` is oriented
    /// so that the largest entry of `J·n_k` is positive.
    pub normal_basis: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub cond_j: f64,
}

impl ManifoldFrame {
    pub fn tangent_dim(&self) -> usize {
        self.tangent_basis.ncols()
    }

    pub fn normal_dim(&self) -> usize {
        self.normal_basis.ncols()
    }

    /// Same frame with the tangent basis replaced by `tangent_basis · rot`;
    /// `rot` must be orthogonal.
    pub fn rotated_tangent(&self, rot: &DMatrix<f64>) -> Self {
        Self { tangent_basis: &self.tangent_basis * rot, ..self.clone() }
    }
}

/// SVD-based frame; fails with `RankDeficient` below `cfg.rank_tol`.
pub fn frame_at<F: DiffFunction>(f: &F, q: &[f64], cfg: &CurvatureConfig) -> Result<ManifoldFrame, ManifoldError> {
    let (n, m) = (f.input_dim(), f.output_dim());
    if m >= n {
        return Err(ManifoldError::NoTangentSpace { inputs: n, outputs: m });
    }
    let jac = jacobian_numeric(f, q, &cfg.diff)?;
    frame_from_jacobian(DVector::from_column_slice(q), jac, cfg.rank_tol)
}

fn frame_from_jacobian(q: DVector<f64>, jac: DMatrix<f64>, rank_tol: f64) -> Result<ManifoldFrame, ManifoldError> {
    let (m, n) = jac.shape();
    let svd = jac.transpose().svd(true, true);
    let sv = svd.singular_values.clone();
    let (smax, smin) = (sv.max(), sv.min());
    let cond_j = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(smin > rank_tol) {
        return Err(ManifoldError::RankDeficient { sigma_min: smin, cond_j });
    }
    // Jᵀ = U Σ Vᵀ: the columns of U span row(J)
    let mut normal = svd.u.expect("requested");
    for k in 0..m {
        let jn = &jac * normal.column(k);
        let imax = jn.iamax();
        if jn[imax] < 0.0 {
            normal.column_mut(k).neg_mut();
        }
    }
    // null(J) from the eigenvectors of the complementary projector (eigenvalues 1 and 0)
    let proj = DMatrix::identity(n, n) - &normal * normal.transpose();
    let eig = SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut tangent = DMatrix::zeros(n, n - m);
    for (c, &k) in order.iter().take(n - m).enumerate() {
        tangent.set_column(c, &eig.eigenvectors.column(k));
    }
    // re-orthogonalize against the normal space to machine precision
    let t = &tangent - &normal * (normal.transpose() * &tangent);
    let tangent = t.qr().q();
    Ok(ManifoldFrame { q, jacobian: jac, tangent_basis: tangent, normal_basis: normal, singular_values: sv, cond_j })
}

/// Second fundamental form in normal coordinates, `d × d` entries of
/// `m`-vectors, `II[i][j] = −(J N)⁻¹ (u_iᵀ H_k u_j)_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondFundamentalForm {
    pub dim: usize,
    pub codim: usize,
    entries: Vec<DVector<f64>>,
}

impl SecondFundamentalForm {
    pub fn get(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.entries[i * self.dim + j]
    }

    /// Largest asymmetry `|II[i][j] − II[j][i]|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).amax());
            }
        }
        worst
    }
}

pub fn second_fundamental_form(
    frame: &ManifoldFrame,
    hessian: &[DMatrix<f64>],
) -> Result<SecondFundamentalForm, ManifoldError> {
    let (m, d) = (frame.normal_dim(), frame.tangent_dim());
    if hessian.len() != m {
        return Err(ManifoldError::DimensionMismatch { expected: m, got: hessian.len() });
    }
    let jn = &frame.jacobian * &frame.normal_basis;
    let lu = jn.clone().lu();
    let projected: Vec<DMatrix<f64>> =
        hessian.iter().map(|h| frame.tangent_basis.transpose() * h * &frame.tangent_basis).collect();
    let mut entries = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let h = DVector::from_fn(m, |k, _| projected[k][(i, j)]);
            let a = lu.solve(&(-h)).ok_or_else(|| {
                let s = jn.singular_values();
                ManifoldError::RankDeficient { sigma_min: s.min(), cond_j: s.max() / s.min() }
            })?;
            entries.push(a);
        }
    }
    Ok(SecondFundamentalForm { dim: d, codim: m, entries })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureResult {
    /// `Σ R_ijkl²` in the orthonormal tangent basis.
    pub kretschmann: f64,
    /// Tangent dimension `d`; `riemann` has `d⁴` entries.
    pub dim: usize,
    pub riemann: Vec<f64>,
    /// `|f(q)|`; nonzero means the level set through `q` was measured.
    pub residual_norm: f64,
    pub cond_j: f64,
}

impl CurvatureResult {
    pub fn r(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.dim;
        self.riemann[((i * d + j) * d + k) * d + l]
    }

    pub fn max_abs(&self) -> f64 {
        self.riemann.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest violation of the pair symmetries and the first Bianchi identity.
    pub fn symmetry_violation(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let r = self.r(i, j, k, l);
                        worst = worst
                            .max((r + self.r(j, i, k, l)).abs())
                            .max((r + self.r(i, j, l, k)).abs())
                            .max((r - self.r(k, l, i, j)).abs())
                            .max((r + self.r(i, k, l, j) + self.r(i, l, j, k)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Gauss equation `R_ijkl = ⟨II_ik, II_jl⟩ − ⟨II_il, II_jk⟩`.
pub fn riemann_from_form(ii: &SecondFundamentalForm) -> (Vec<f64>, f64) {
    let d = ii.dim;
    let mut dots = vec![0.0; d * d * d * d];
    for a in 0..d * d {
        for b in 0..d * d {
            dots[a * d * d + b] = ii.entries[a].dot(&ii.entries[b]);
        }
    }
    let dot = |i: usize, k: usize, j: usize, l: usize| dots[(i * d + k) * d * d + j * d + l];
    let mut riemann = vec![0.0; d * d * d * d];
    let mut kretschmann = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let r = dot(i, k, j, l) - dot(i, l, j, k);
                    riemann[((i * d + j) * d + k) * d + l] = r;
                    kretschmann += r * r;
                }
            }
        }
    }
    (riemann, kretschmann)
}

/// Curvature of a given frame with the Hessian of `f` at the frame's point.
pub fn curvature_of_frame(
    frame: &ManifoldFrame,
    hessian: &[DMatrix<f64>],
    residual_norm: f64,
) -> Result<CurvatureResult, ManifoldError> {
    let ii = second_fundamental_form(frame, hessian)?;
    let (riemann, kretschmann) = riemann_from_form(&ii);
    Ok(CurvatureResult { kretschmann, dim: ii.dim, riemann, residual_norm, cond_j: frame.cond_j })
}

/// Riemann tensor and Kretschmann scalar of the level set of `f` through `q`.
pub fn riemann_and_kretschmann<F: DiffFunction>(
    f: &F,
    q: &[f64],
    cfg: &CurvatureConfig,
) -> Result<CurvatureResult, ManifoldError> {
    let frame = frame_at(f, q, cfg)?;
    let hessian = hessian_numeric(f, q, &cfg.diff)?;
    let residual = f.eval(q).map_err(|e| DiffError::EvaluationFailure(e.0))?;
    let residual_norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
    curvature_of_frame(&frame, &hessian, residual_norm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvaturePoint {
    pub t: usize,
    pub kretschmann: f64,
    pub residual: f64,
    pub cond_j: f64,
}

/// Knot skipped because the constrained system was singular there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureGap {
    pub t: usize,
    pub sigma_min: f64,
    pub cond_j: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct CurvatureSeries {
    pub points: Vec<CurvaturePoint>,
    pub gaps: Vec<CurvatureGap>,
}

/// Grasp configuration: the observation at the first transport knot.
pub fn grasp_configuration(episode: &Episode) -> Result<[f64; 14], ManifoldError> {
    let i = *episode.transport_indices().first().ok_or(ManifoldError::NoTransportPhase)?;
    let mut q = [0.0; 14];
    q.copy_from_slice(&episode.steps[i].observation[..14]);
    Ok(q)
}

/// Near-manifold Kretschmann scalar and residual at each commanded transport
/// knot, with the constraint anchored at the grasp configuration.
pub fn rollout_curvature_series(
    model: &BimanualModel,
    episode: &Episode,
    cfg: &CurvatureConfig,
) -> Result<CurvatureSeries, ManifoldError> {
    use rayon::prelude::*;
    let f = make_constraint(model, &grasp_configuration(episode)?);
    let idx = episode.transport_indices();
    let evaluated: Vec<Result<CurvaturePoint, CurvatureGap>> = idx
        .par_iter()
        .map(|&i| {
            let step = &episode.steps[i];
            match riemann_and_kretschmann(&f, &step.action[..14], cfg) {
                Ok(c) => Ok(CurvaturePoint {
                    t: step.t_index,
                    kretschmann: c.kretschmann,
                    residual: c.residual_norm,
                    cond_j: c.cond_j,
                }),
                Err(ManifoldError::RankDeficient { sigma_min, cond_j }) => {
                    Err(CurvatureGap { t: step.t_index, sigma_min, cond_j })
                }
                Err(e) => panic!("curvature evaluation failed at knot {}: {e}", step.t_index),
            }
        })
        .collect();
    let mut series = CurvatureSeries::default();
    for r in evaluated {
        match r {
            Ok(p) => series.points.push(p),
            Err(g) => series.gaps.push(g),
        }
    }
    Ok(series)
}

/// Diagnostic for how the level-set Kretschmann scalar varies off the
/// manifold: `(ε, |K(q + ε n) − K(q)|)` along the unit normal `n = normal_basis[:, k]`
/// and the least-squares log-log slope. No particular slope is implied.
pub fn near_manifold_probe<F: DiffFunction>(
    f: &F,
    q: &[f64],
    normal_index: usize,
    eps: &[f64],
    cfg: &CurvatureConfig,
) -> Result<(Vec<(f64, f64)>, f64), ManifoldError> {
    let frame = frame_at(f, q, cfg)?;
    let k0 = riemann_and_kretschmann(f, q, cfg)?.kretschmann;
    let n = frame.normal_basis.column(normal_index).into_owned();
    let mut pts = Vec::with_capacity(eps.len());
    for &e in eps {
        let qe: Vec<f64> = q.iter().zip(n.iter()).map(|(a, b)| a + e * b).collect();
        pts.push((e, (riemann_and_kretschmann(f, &qe, cfg)?.kretschmann - k0).abs()));
    }
    let logs: Vec<(f64, f64)> = pts.iter().filter(|p| p.1 > 0.0).map(|&(e, d)| (e.ln(), d.ln())).collect();
    let slope = if logs.len() >= 2 {
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok((pts, slope))
}

/// Random orthogonal `d × d` matrix from a QR factorization of `a`.
pub fn orthogonal_from(a: DMatrix<f64>) -> DMatrix<f64> {
    a.qr().q()
}

/// Left-arm flange displaced by `offset` in the world frame, via IK at `psi`.
pub fn displaced_left(
    model: &BimanualModel,
    q: &[f64; 14],
    offset: Vector3<f64>,
    psi: f64,
    branch: crate::kinematics::IkBranch,
) -> Option<[f64; 14]> {
    let s = state_of(q);
    let mut p = s.gripper_pose(model, crate::bimanual::ArmSide::Left);
    p.translation += offset;
    let ql = crate::kinematics::inverse_kinematics(&model.left, &p, psi, branch, false).ok()?;
    let mut out = *q;
    out[..7].copy_from_slice(&ql.0);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Real;
    use crate::kinematics::{branch_of, inverse_kinematics, sew_angle, JointConfig};
    use rand::{Rng, SeedableRng};

    /// `|q|² − r²`.
    struct Sphere {
        n: usize,
        r: f64,
    }
    impl DiffFunction for Sphere {
        fn input_dim(&self) -> usize {
            self.n
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
            let mut s = T::from_f64(-self.r * self.r);
            for v in x {
                s += *v * *v;
            }
            Ok(vec![s])
        }
    }

    /// `x² + y² − r²` in R³.
    struct Cylinder(f64);
    impl DiffFunction for Cylinder {
        fn input_dim(&self) -> usize {
            3
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
            Ok(vec![x[0] * x[0] + x[1] * x[1] - T::from_f64(self.0 * self.0)])
        }
    }

    /// Fixed affine map `A q − b` with `A` 2 × 5.
    struct Affine;
    impl DiffFunction for Affine {
        fn input_dim(&self) -> usize {
            5
        }
        fn output_dim(&self) -> usize {
            2
        }
        fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
            let a = [[1.0, -2.0, 0.5, 0.0, 3.0], [0.0, 1.0, 1.0, -1.0, 0.25]];
            Ok(a.iter().map(|row| row.iter().zip(x).fold(T::from_f64(-0.7), |acc, (c, v)| acc + v.scale(*c))).collect())
        }
    }

    fn grasp_q(seed: u64) -> [f64; 14] {
        let m = BimanualModel::default_cell();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut q = [0.0; 14];
        for (k, side) in [m.left.clone(), m.right.clone()].iter().enumerate() {
            for j in 0..7 {
                let (lo, hi) = side.joint_limits[j];
                q[7 * k + j] = rng.random_range(0.8 * lo..0.8 * hi);
            }
        }
        q
    }

    #[test]
    fn sphere_frame_and_form() {
        let f = Sphere { n: 3, r: 1.0 };
        let cfg = CurvatureConfig::default();
        let fr = frame_at(&f, &[1.0, 0.0, 0.0], &cfg).unwrap();
        assert!((fr.normal_basis[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(fr.tangent_basis.row(0).amax() < 1e-12 && fr.tangent_dim() == 2);
        let ii = second_fundamental_form(&fr, &hessian_numeric(&f, &[1.0, 0.0, 0.0], &cfg.diff).unwrap()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { -1.0 } else { 0.0 };
                assert!((ii.get(i, j)[0] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cylinder_form_has_one_principal_curvature() {
        let r = 0.7;
        let q = [r * 0.6, r * 0.8, 0.3];
        let cfg = CurvatureConfig::default();
        let fr = frame_at(&Cylinder(r), &q, &cfg).unwrap();
        let ii = second_fundamental_form(&fr, &hessian_numeric(&Cylinder(r), &q, &cfg.diff).unwrap()).unwrap();
        let s = DMatrix::from_fn(2, 2, |i, j| ii.get(i, j)[0]);
        let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 1.0 / r).abs() < 1e-10 && ev[1].abs() < 1e-10, "{ev:?}");
        assert!(riemann_and_kretschmann(&Cylinder(r), &q, &cfg).unwrap().kretschmann < 1e-10);
    }

    #[test]
    fn affine_level_sets_are_flat() {
        let cfg = CurvatureConfig::default();
        let a = frame_at(&Affine, &[0.1, 0.2, 0.3, 0.4, 0.5], &cfg).unwrap();
        let b = frame_at(&Affine, &[-3.0, 1.0, 7.0, 0.0, 2.0], &cfg).unwrap();
        let pa = &a.tangent_basis * a.tangent_basis.transpose();
        let pb = &b.tangent_basis * b.tangent_basis.transpose();
        assert!((pa - pb).amax() < 1e-12);
        assert!(riemann_and_kretschmann(&Affine, &[0.1, 0.2, 0.3, 0.4, 0.5], &cfg).unwrap().kretschmann <= 1e-10);
    }

    #[test]
    fn sphere_kretschmann_closed_form() {
        let cfg = CurvatureConfig::default();
        for n in 3..=6 {
            for r in [0.25, 0.5, 1.0, 2.0] {
                let mut q = vec![0.0; n];
                q[0] = r * 0.6;
                q[n - 1] = r * 0.8;
                let m = (n - 1) as f64;
                let k = riemann_and_kretschmann(&Sphere { n, r }, &q, &cfg).unwrap().kretschmann;
                let want = 2.0 * m * (m - 1.0) / r.powi(4);
                assert!((k - want).abs() <= 1e-6 * want, "n {n} r {r}: {k} vs {want}");
            }
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let f = Sphere { n: 3, r: 1.0 };
        assert!(matches!(
            frame_at(&f, &[0.0, 0.0, 0.0], &CurvatureConfig::default()),
            Err(ManifoldError::RankDeficient { .. })
        ));
    }

    #[test]
    fn constraint_vanishes_at_anchor_and_along_self_motion() {
        let m = BimanualModel::default_cell();
        let q0 = grasp_q(1);
        let f = make_constraint(&m, &q0);
        assert!(f.residual_at(&q0).unwrap().amax() <= 1e-12);
        // left self-motion: same flange pose, different SEW angle
        let ql = JointConfig(q0[..7].try_into().unwrap());
        let pose = crate::kinematics::forward_kinematics(&m.left, &ql);
        let psi = sew_angle(&m.left, &ql).unwrap();
        let moved = inverse_kinematics(&m.left, &pose, psi + 0.2, branch_of(&m.left, &ql).unwrap(), false).unwrap();
        let mut q = q0;
        q[..7].copy_from_slice(&moved.0);
        assert!(q[..7] != q0[..7]);
        assert!(f.residual_at(&q).unwrap().amax() <= 1e-9);
        // 1 mm flange translation
        let q1 = displaced_left(&m, &q0, Vector3::new(0.0, 0.0, 0.001), psi, branch_of(&m.left, &ql).unwrap()).unwrap();
        let e = f.residual_at(&q1).unwrap();
        assert!((e.fixed_rows::<3>(0).norm() - 0.001).abs() < 1e-9 && e.fixed_rows::<3>(3).norm() < 1e-9);
    }

    #[test]
    fn bimanual_frame_dimensions_and_orthogonality() {
        let m = BimanualModel::default_cell();
        let q0 = grasp_q(2);
        let f = make_constraint(&m, &q0);
        let fr = frame_at(&f, &q0, &CurvatureConfig::default()).unwrap();
        assert_eq!((fr.tangent_dim(), fr.normal_dim()), (8, 6));
        assert!((&fr.jacobian * &fr.tangent_basis).amax() < 1e-8);
        assert!((fr.tangent_basis.transpose() * &fr.tangent_basis - DMatrix::identity(8, 8)).amax() < 1e-10);
        assert!((fr.normal_basis.transpose() * &fr.normal_basis - DMatrix::identity(6, 6)).amax() < 1e-10);
        assert!((fr.tangent_basis.transpose() * &fr.normal_basis).amax() < 1e-10);
    }

    #[test]
    fn bimanual_curvature_is_consistent() {
        let m = BimanualModel::default_cell();
        let q0 = grasp_q(3);
        let f = make_constraint(&m, &q0);
        let cfg = CurvatureConfig::default();
        let c = riemann_and_kretschmann(&f, &q0, &cfg).unwrap();
        assert!(c.kretschmann > 0.0 && c.residual_norm < 1e-12);
        let sum: f64 = c.riemann.iter().map(|r| r * r).sum();
        assert!((sum - c.kretschmann).abs() <= 1e-10 * c.kretschmann);
        assert!(c.symmetry_violation() <= 1e-8 * c.max_abs());
        // basis independence
        let fr = frame_at(&f, &q0, &cfg).unwrap();
        let h = hessian_numeric(&f, &q0, &cfg.diff).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rot = orthogonal_from(DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0)));
        let k2 = curvature_of_frame(&fr.rotated_tangent(&rot), &h, 0.0).unwrap().kretschmann;
        assert!((k2 - c.kretschmann).abs() <= 1e-9 * c.kretschmann);
        // alternative rotation chart measures the same level set
        let alt = f.clone().with_residual(RotationResidual::Left);
        let ka = riemann_and_kretschmann(&alt, &q0, &cfg).unwrap().kretschmann;
        assert!((ka - c.kretschmann).abs() <= 1e-3 * c.kretschmann, "{ka} vs {}", c.kretschmann);
        // identity joint weights change nothing
        let w = JointWeighted::new(f.clone(), &[1.0; 14]).unwrap();
        let kw = riemann_and_kretschmann(&w, &w.to_weighted(&q0), &cfg).unwrap().kretschmann;
        assert!((kw - c.kretschmann).abs() <= 1e-12 * c.kretschmann);
        assert!(JointWeighted::new(f, &[0.0; 14]).is_err());
    }
}
