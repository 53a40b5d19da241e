//! Differentiable stopping times for optimizers viewed as discretized
//! dynamical systems.
//!
//! An optimizer `x_{k+1} = x_k - h A(theta, x_k, t_k)` is run until a
//! criterion `J(x_k) <= eps` first holds. The crate computes that stopping
//! index, its sensitivity to `theta` and `x0` with a reverse-mode adjoint,
//! the continuous-time counterpart via an adaptive ODE solve, and builds
//! an online learning-rate adapter and a meta-training loop on top.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod bench;
pub mod continuous;
pub mod criterion;
pub mod error;
pub mod euler;
pub mod fd;
pub mod field;
pub mod meta;
pub mod ola;
pub mod trajectory;
pub mod zoo;

pub use adjoint::{discrete_adjoint, stopping_time_sensitivity};
pub use continuous::{solve_continuous_stop, solve_with_forward_sensitivity, ContinuousStopResult, SolverOptions};
pub use criterion::{GradNormSquared, ObjectiveValue, ProgressDecrease, SquaredNorm, StoppingCriterion};
pub use error::{Result, StopTimeError};
pub use euler::{integrate_fixed, integrate_until_stop};
pub use field::{check_vjp_consistency, DynamicsField, ParamVector, State};
pub use trajectory::{Sensitivities, StopReport, Trajectory};
