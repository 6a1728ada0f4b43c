//! Transform-locked bimanual manipulation: analytic arm kinematics, a
//! scripted box-transport world, Ornstein-Uhlenbeck constraint perturbation,
//! violation and outcome metrics, Riemann curvature of the grasp constraint
//! manifold, and the statistics that relate them.

// NaN must fail range validation, so checks are written as `!(x > lo)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the tensor and matrix formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod bimanual;
pub mod cli;
pub mod geometry;
pub mod kinematics;
pub mod manifold;
pub mod metrics;
pub mod perturb;
pub mod stats;
pub mod worldsim;
