//! Discrete adjoint sensitivities of the stopping index and the two
//! independent oracles used to check them.

use nalgebra::DMatrix;

use crate::criterion::StoppingCriterion;
use crate::error::{Result, StopTimeError};
use crate::euler::{check_dims, integrate_fixed};
use crate::field::{DynamicsField, ParamVector, State};
use crate::trajectory::{Sensitivities, Trajectory};

/// Denominators `J(x_N) - J(x_{N-1})` smaller than this in magnitude are
/// rejected.
pub const MIN_DENOMINATOR: f64 = 1e-14;

/// Largest `d * p` (and `d * d`) the dense forward oracle will propagate.
pub const DENSE_ORACLE_CAP: usize = 1_000_000;

/// Backward sweep over a stored trajectory.
///
/// Returns `(s_theta, s_x0)` with `s_theta = grad J(x_N)^T dx_N/dtheta` and
/// `s_x0 = grad J(x_N)^T dx_N/dx_0`. Only one co-state and one parameter
/// accumulator are live beyond the trajectory itself.
pub fn discrete_adjoint(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    traj: &Trajectory,
    criterion: &dyn StoppingCriterion,
) -> Result<(ParamVector, State)> {
    if traj.steps() < 1 {
        return Err(StopTimeError::contract("adjoint needs at least one step"));
    }
    for x in &traj.states {
        check_dims(field, theta, x)?;
    }
    let lambda = criterion.grad(traj.last());
    if lambda.len() != field.state_dim() {
        return Err(StopTimeError::contract("criterion gradient has wrong length"));
    }
    Ok(backward_sweep(field, theta, traj, lambda, |_| None))
}

/// Backward sweep with an optional co-state source injected after passing
/// each step `k` (running-cost objectives). The source for the final state
/// must already be folded into `lambda`.
pub(crate) fn backward_sweep<S>(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    traj: &Trajectory,
    mut lambda: State,
    source: S,
) -> (ParamVector, State)
where
    S: Fn(usize) -> Option<State>,
{
    let h = traj.h;
    let mut s_theta = ParamVector::zeros(field.param_dim());
    for k in (0..traj.steps()).rev() {
        let x = &traj.states[k];
        let t = traj.time(k);
        s_theta.axpy(-h, &field.vjp_param(theta, x, t, &lambda), 1.0);
        let back = field.vjp_state(theta, x, t, &lambda);
        lambda.axpy(-h, &back, 1.0);
        if let Some(extra) = source(k) {
            lambda += extra;
        }
    }
    (s_theta, lambda)
}

/// Assemble `dN/dtheta = -h s_theta / (J(x_N) - J(x_{N-1}))` and likewise
/// for `x0`.
pub fn assemble_sensitivity(
    traj: &Trajectory,
    s_theta: &ParamVector,
    s_x0: &State,
    h: f64,
) -> Result<Sensitivities> {
    let n = traj.steps();
    if n == 0 {
        return Err(StopTimeError::StoppedAtInit);
    }
    if traj.j_values.len() != traj.states.len() {
        return Err(StopTimeError::contract("trajectory carries no criterion values"));
    }
    let denom = traj.j_values[n] - traj.j_values[n - 1];
    if !(denom < 0.0) || denom.abs() < MIN_DENOMINATOR {
        return Err(StopTimeError::contract(format!(
            "J(x_N) - J(x_N-1) = {denom:e} must be negative and not vanish"
        )));
    }
    let scale = -h / denom;
    Ok(Sensitivities {
        s_theta: s_theta.clone(),
        s_x0: s_x0.clone(),
        dn_dtheta: s_theta * scale,
        dn_dx0: s_x0 * scale,
    })
}

/// Full pipeline on a criterion-driven trajectory: adjoint plus assembly.
pub fn stopping_time_sensitivity(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    traj: &Trajectory,
    criterion: &dyn StoppingCriterion,
) -> Result<Sensitivities> {
    if traj.steps() == 0 {
        return Err(StopTimeError::StoppedAtInit);
    }
    let (s_theta, s_x0) = discrete_adjoint(field, theta, traj, criterion)?;
    assemble_sensitivity(traj, &s_theta, &s_x0, traj.h)
}

/// Dense Jacobians of the `n`-th Euler iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledJacobians {
    /// `dx_n/dtheta`, d x p
    pub wrt_theta: DMatrix<f64>,
    /// `dx_n/dx_0`, d x d
    pub wrt_x0: DMatrix<f64>,
    /// `dx_k/dtheta` for every `k = 0..=n`, kept when requested.
    pub history: Vec<DMatrix<f64>>,
}

/// Forward-mode propagation of the full Jacobians through `n` Euler steps:
/// `U_{k+1} = (I - h A_x) U_k - h A_theta`, `V_{k+1} = (I - h A_x) V_k`.
pub fn unrolled_forward_sensitivity(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    h: f64,
    n: usize,
) -> Result<UnrolledJacobians> {
    unrolled_impl(field, theta, x0, t0, h, n, false)
}

/// Like [`unrolled_forward_sensitivity`] but keeps `dx_k/dtheta` for all `k`.
pub fn unrolled_sensitivity_history(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    h: f64,
    n: usize,
) -> Result<UnrolledJacobians> {
    unrolled_impl(field, theta, x0, t0, h, n, true)
}

fn unrolled_impl(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    h: f64,
    n: usize,
    keep: bool,
) -> Result<UnrolledJacobians> {
    check_dims(field, theta, x0)?;
    let d = field.state_dim();
    let p = field.param_dim();
    if d * p > DENSE_ORACLE_CAP || d * d > DENSE_ORACLE_CAP {
        return Err(StopTimeError::SizeCap { rows: d, cols: p.max(d) });
    }
    let traj = integrate_fixed(field, theta, x0, t0, h, n)?;
    let mut u = DMatrix::<f64>::zeros(d, p);
    let mut v = DMatrix::<f64>::identity(d, d);
    let mut history = Vec::new();
    if keep {
        history.push(u.clone());
    }
    for k in 0..n {
        let x = &traj.states[k];
        let t = traj.time(k);
        let a_x = field.jacobian_state(theta, x, t);
        let a_theta = field.jacobian_param(theta, x, t);
        let u_next = &u - (&a_x * &u + a_theta) * h;
        let v_next = &v - (&a_x * &v) * h;
        u = u_next;
        v = v_next;
        if keep {
            history.push(u.clone());
        }
    }
    Ok(UnrolledJacobians {
        wrt_theta: u,
        wrt_x0: v,
        history,
    })
}

/// Fixed-`n` central finite differences of `J(x_n(theta))`, one component at
/// a time with step `1e-6 max(1, |theta_j|)`.
pub fn finite_difference_s_theta(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    h: f64,
    n: usize,
    criterion: &dyn StoppingCriterion,
) -> Result<ParamVector> {
    finite_difference_s_theta_with_step(field, theta, x0, t0, h, n, criterion, 1e-6)
}

/// [`finite_difference_s_theta`] with a custom relative step.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_s_theta_with_step(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    h: f64,
    n: usize,
    criterion: &dyn StoppingCriterion,
    rel_step: f64,
) -> Result<ParamVector> {
    if !(rel_step > 0.0) {
        return Err(StopTimeError::contract("finite-difference step must be positive"));
    }
    check_dims(field, theta, x0)?;
    let end_value = |th: &ParamVector, j: usize| -> Result<f64> {
        let traj = integrate_fixed(field, th, x0, t0, h, n)
            .map_err(|_| StopTimeError::OracleFailure { component: j })?;
        let v = criterion.eval(traj.last());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(StopTimeError::OracleFailure { component: j })
        }
    };
    let mut out = ParamVector::zeros(theta.len());
    let mut probe = theta.clone();
    for j in 0..theta.len() {
        let step = rel_step * theta[j].abs().max(1.0);
        probe[j] = theta[j] + step;
        let plus = end_value(&probe, j)?;
        probe[j] = theta[j] - step;
        let minus = end_value(&probe, j)?;
        probe[j] = theta[j];
        out[j] = (plus - minus) / (2.0 * step);
    }
    Ok(out)
}
