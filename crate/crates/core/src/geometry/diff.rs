//! Jacobians and Hessians of vector functions, by forward-mode dual numbers
//! or by central finite differences.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::real::{Dual, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DiffMode {
    #[default]
    ForwardDual,
    CentralFd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffConfig {
    pub mode: DiffMode,
    /// Finite-difference step in input units (radians for joint inputs).
    pub fd_step: f64,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self { mode: DiffMode::ForwardDual, fd_step: 1e-5 }
    }
}

impl DiffConfig {
    pub fn dual() -> Self {
        Self::default()
    }

    pub fn central_fd(fd_step: f64) -> Self {
        Self { mode: DiffMode::CentralFd, fd_step }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct EvalError(pub String);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("function evaluation failed at a probe point: {0}")]
    EvaluationFailure(String),
    #[error("fd_step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("input has length {got}, function expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A map `Rⁿ → Rᵐ` that can be evaluated on any [`Real`] scalar.
pub trait DiffFunction: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError>;
}

fn checked_eval<F: DiffFunction, T: Real>(f: &F, x: &[T]) -> Result<Vec<T>, DiffError> {
    let y = f.eval(x).map_err(|e| DiffError::EvaluationFailure(e.0))?;
    if y.len() != f.output_dim() {
        return Err(DiffError::EvaluationFailure(format!(
            "output has length {}, expected {}",
            y.len(),
            f.output_dim()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(DiffError::EvaluationFailure(format!("output component {i} is not finite")));
    }
    Ok(y)
}

fn check_input<F: DiffFunction>(f: &F, x: &[f64], cfg: &DiffConfig) -> Result<(), DiffError> {
    if x.len() != f.input_dim() {
        return Err(DiffError::DimensionMismatch { expected: f.input_dim(), got: x.len() });
    }
    if !(cfg.fd_step > 0.0) {
        return Err(DiffError::InvalidStep(cfg.fd_step));
    }
    Ok(())
}

/// `m × n` Jacobian of `f` at `x`.
pub fn jacobian_numeric<F: DiffFunction>(f: &F, x: &[f64], cfg: &DiffConfig) -> Result<DMatrix<f64>, DiffError> {
    check_input(f, x, cfg)?;
    let (n, m) = (f.input_dim(), f.output_dim());
    let mut jac = DMatrix::zeros(m, n);
    match cfg.mode {
        DiffMode::ForwardDual => {
            let mut probe: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
            for j in 0..n {
                probe[j].du = 1.0;
                let y = checked_eval(f, &probe)?;
                probe[j].du = 0.0;
                for (i, yi) in y.iter().enumerate() {
                    jac[(i, j)] = yi.du;
                }
            }
        }
        DiffMode::CentralFd => {
            let h = cfg.fd_step;
            let mut probe = x.to_vec();
            for j in 0..n {
                probe[j] = x[j] + h;
                let plus = checked_eval(f, &probe)?;
                probe[j] = x[j] - h;
                let minus = checked_eval(f, &probe)?;
                probe[j] = x[j];
                for i in 0..m {
                    jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
                }
            }
        }
    }
    Ok(jac)
}

/// Hessian of each output component: `m` symmetric `n × n` slices.
///
/// Dual mode seeds a nested dual per index pair `(i ≤ j)` and mirrors, so the
/// result is exactly symmetric. FD mode uses the four-point central stencil
/// on the off-diagonal and the three-point stencil on the diagonal, then
/// averages each slice with its transpose.
pub fn hessian_numeric<F: DiffFunction>(f: &F, x: &[f64], cfg: &DiffConfig) -> Result<Vec<DMatrix<f64>>, DiffError> {
    check_input(f, x, cfg)?;
    let (n, m) = (f.input_dim(), f.output_dim());
    let mut out = vec![DMatrix::zeros(n, n); m];
    match cfg.mode {
        DiffMode::ForwardDual => {
            let mut probe: Vec<Dual<Dual<f64>>> = x.iter().map(|&v| Dual::constant(Dual::constant(v))).collect();
            for i in 0..n {
                probe[i].du.re = 1.0;
                for j in i..n {
                    probe[j].re.du = 1.0;
                    let y = checked_eval(f, &probe)?;
                    probe[j].re.du = 0.0;
                    for (k, yk) in y.iter().enumerate() {
                        out[k][(i, j)] = yk.du.du;
                        out[k][(j, i)] = yk.du.du;
                    }
                }
                probe[i].du.re = 0.0;
            }
        }
        DiffMode::CentralFd => {
            let h = cfg.fd_step;
            let f0 = checked_eval(f, x)?;
            let mut probe = x.to_vec();
            let mut eval_at = |di: (usize, f64), dj: (usize, f64)| -> Result<Vec<f64>, DiffError> {
                probe.copy_from_slice(x);
                probe[di.0] += di.1;
                probe[dj.0] += dj.1;
                checked_eval(f, &probe)
            };
            for i in 0..n {
                let pp = eval_at((i, h), (i, 0.0))?;
                let mm = eval_at((i, -h), (i, 0.0))?;
                for k in 0..m {
                    out[k][(i, i)] = (pp[k] - 2.0 * f0[k] + mm[k]) / (h * h);
                }
                for j in (i + 1)..n {
                    let pp = eval_at((i, h), (j, h))?;
                    let pm = eval_at((i, h), (j, -h))?;
                    let mp = eval_at((i, -h), (j, h))?;
                    let mm = eval_at((i, -h), (j, -h))?;
                    for k in 0..m {
                        let v = (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h * h);
                        out[k][(i, j)] = v;
                        out[k][(j, i)] = v;
                    }
                }
            }
            for s in out.iter_mut() {
                *s = (&*s + s.transpose()) * 0.5;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Identity(usize);
    impl DiffFunction for Identity {
        fn input_dim(&self) -> usize {
            self.0
        }
        fn output_dim(&self) -> usize {
            self.0
        }
        fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
            Ok(x.to_vec())
        }
    }

    struct SquaredNorm(usize);
    impl DiffFunction for SquaredNorm {
        fn input_dim(&self) -> usize {
            self.0
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
            Ok(vec![x.iter().fold(T::zero(), |acc, &v| acc + v * v)])
        }
    }

    struct Linear;
    impl DiffFunction for Linear {
        fn input_dim(&self) -> usize {
            3
        }
        fn output_dim(&self) -> usize {
            2
        }
        fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
            Ok(vec![x[0].scale(2.0) - x[2], x[1].scale(-0.5) + T::from_f64(3.0)])
        }
    }

    struct Failing;
    impl DiffFunction for Failing {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
            if x[0].value() > 0.0 {
                Err(EvalError("outside domain".into()))
            } else {
                Ok(vec![x[0]])
            }
        }
    }

    fn both_modes() -> [DiffConfig; 2] {
        [DiffConfig::dual(), DiffConfig::central_fd(1e-5)]
    }

    #[test]
    fn jacobian_of_identity_is_identity() {
        let x = [0.3, -1.2, 4.0];
        let j = jacobian_numeric(&Identity(3), &x, &DiffConfig::dual()).unwrap();
        assert_eq!(j, DMatrix::identity(3, 3));
        let j = jacobian_numeric(&Identity(3), &x, &DiffConfig::central_fd(1e-5)).unwrap();
        assert!((j - DMatrix::<f64>::identity(3, 3)).amax() < 1e-9);
    }

    #[test]
    fn gradient_of_squared_norm() {
        for cfg in both_modes() {
            let j = jacobian_numeric(&SquaredNorm(2), &[1.0, 2.0], &cfg).unwrap();
            assert!((j[(0, 0)] - 2.0).abs() < 1e-9 && (j[(0, 1)] - 4.0).abs() < 1e-9);
        }
        let j = jacobian_numeric(&SquaredNorm(2), &[1.0, 2.0], &DiffConfig::dual()).unwrap();
        assert_eq!((j[(0, 0)], j[(0, 1)]), (2.0, 4.0));
    }

    #[test]
    fn hessian_examples() {
        for cfg in both_modes() {
            let h = hessian_numeric(&Linear, &[0.1, 0.2, 0.3], &cfg).unwrap();
            assert_eq!(h.len(), 2);
            assert!(h.iter().all(|s| s.amax() < 1e-4));
            let h = hessian_numeric(&SquaredNorm(3), &[0.4, -0.7, 1.3], &cfg).unwrap();
            // FD stencil roundoff is ~ε·|f|/h², about 1e-5 here
            assert!((&h[0] - DMatrix::<f64>::identity(3, 3) * 2.0).amax() < 1e-4);
        }
        let h = hessian_numeric(&Linear, &[0.1, 0.2, 0.3], &DiffConfig::dual()).unwrap();
        assert!(h.iter().all(|s| s.amax() == 0.0));
    }

    #[test]
    fn failures_propagate() {
        for cfg in both_modes() {
            let r = jacobian_numeric(&Failing, &[0.0], &cfg);
            if cfg.mode == DiffMode::CentralFd {
                assert!(matches!(r, Err(DiffError::EvaluationFailure(_))));
            }
            assert!(matches!(jacobian_numeric(&Failing, &[1.0], &cfg), Err(DiffError::EvaluationFailure(_))));
        }
        assert!(matches!(
            jacobian_numeric(&Identity(2), &[0.0], &DiffConfig::dual()),
            Err(DiffError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            jacobian_numeric(&Identity(1), &[0.0], &DiffConfig::central_fd(0.0)),
            Err(DiffError::InvalidStep(_))
        ));
    }
}
