//! Continuous stopping time `T_J` of `x' = -A(theta, x, t)` and its gradient
//! via forward sensitivities.
//!
//! Integration uses the Dormand-Prince 5(4) pair with a PI step-size
//! controller. The first accepted step across `J(x) = eps` is bracketed,
//! the crossing is located by bisection on the step's cubic Hermite
//! interpolant and then polished with Newton iterations on genuine
//! Runge-Kutta sub-steps from the bracket start.

use nalgebra::{DMatrix, DVector};

use crate::criterion::StoppingCriterion;
use crate::error::{Result, StopTimeError};
use crate::euler::check_dims;
use crate::field::{DynamicsField, ParamVector, State};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const PI_BETA: f64 = 0.04;
const BISECTION_CAP: usize = 60;
const NEWTON_CAP: usize = 10;
/// Relative threshold on `|grad J . x'|` below which the event is grazing.
pub const GRAZING_REL: f64 = 1e-12;

/// Tolerances and limits for the adaptive solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    pub event_tol: f64,
    pub t_max: f64,
    /// Largest parameter count accepted by the forward-sensitivity solve.
    pub max_params: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rtol: 1e-9,
            atol: 1e-9,
            event_tol: 1e-10,
            t_max: 1e6,
            max_params: 64,
        }
    }
}

/// The located stopping event.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStopResult {
    pub t_stop: f64,
    pub x_at_stop: State,
    /// `x'(T) = -A(theta, x(T), T)`
    pub xdot_at_stop: State,
    /// `dx(T)/dtheta` (d x p), forward-sensitivity solves only
    pub dxdtheta_at_stop: Option<DMatrix<f64>>,
    /// `grad_theta T_J`, forward-sensitivity solves only
    pub grad_theta_t: Option<ParamVector>,
    pub nfe_forward: usize,
    pub nfe_sensitivity: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

struct EventHit {
    t: f64,
    y: DVector<f64>,
    ydot: DVector<f64>,
    accepted: usize,
    rejected: usize,
}

/// One Dormand-Prince step of size `h` from `(t, y)` with `k1 = f(t, y)`.
/// Returns the 5th-order solution, `f` at the new point, and the embedded
/// error estimate.
fn dopri_step<F>(rhs: &mut F, t: f64, y: &DVector<f64>, k1: &DVector<f64>, h: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>)
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let k2 = rhs(t + C2 * h, &(y + k1 * (h * A21)));
    let k3 = rhs(t + C3 * h, &(y + (k1 * A31 + &k2 * A32) * h));
    let k4 = rhs(t + C4 * h, &(y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h));
    let k5 = rhs(t + C5 * h, &(y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
    let k6 = rhs(
        t + h,
        &(y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h),
    );
    let y_new = y + (k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h;
    let k7 = rhs(t + h, &y_new);
    let err = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
    (y_new, k7, err)
}

fn error_norm(err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, len: usize, rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..len {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    let norm = (acc / len as f64).sqrt();
    if norm.is_finite() {
        norm
    } else {
        f64::INFINITY
    }
}

fn hermite(y0: &DVector<f64>, f0: &DVector<f64>, y1: &DVector<f64>, f1: &DVector<f64>, h: f64, s: f64, len: usize) -> DVector<f64> {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    DVector::from_fn(len, |i, _| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
}

/// Integrate until `event(x) <= 0` where `x` is the leading `x_len` block
/// of the state. `rate(x, xdot)` is `d event / dt`.
#[allow(clippy::too_many_arguments)]
fn integrate_to_event<F, G, R>(
    rhs: &mut F,
    t0: f64,
    y0: DVector<f64>,
    x_len: usize,
    event: G,
    rate: R,
    opts: &SolverOptions,
) -> Result<EventHit>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    G: Fn(&State) -> f64,
    R: Fn(&State, &State) -> f64,
{
    let head = |v: &DVector<f64>| v.rows(0, x_len).into_owned();

    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    let x0 = head(&y);
    let a0 = head(&k1);
    let mut h = 1e-3 * (1.0 + x0.norm()) / (1.0 + a0.norm());
    let mut err_prev: f64 = 1.0;
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    loop {
        if t >= opts.t_max {
            return Err(StopTimeError::NoStop { t_max: opts.t_max });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(StopTimeError::StepUnderflow { t, h });
        }
        let h_try = h.min(opts.t_max - t);
        let (y_new, k7, err) = dopri_step(rhs, t, &y, &k1, h_try);
        let en = error_norm(&err, &y, &y_new, x_len, opts.rtol, opts.atol);

        if en <= 1.0 {
            accepted += 1;
            let x_new = head(&y_new);
            let g_new = event(&x_new);
            if g_new <= 0.0 {
                return locate(rhs, t, &y, &k1, &y_new, &k7, h_try, x_len, &event, &rate, opts, accepted, rejected);
            }
            let en_c = en.max(1e-10);
            let fac = SAFETY * en_c.powf(-(0.2 - 0.75 * PI_BETA)) * err_prev.powf(PI_BETA);
            err_prev = en_c;
            t += h_try;
            y = y_new;
            k1 = k7;
            h = h_try * fac.clamp(FAC_MIN, FAC_MAX);
        } else {
            rejected += 1;
            let fac = if en.is_finite() {
                (SAFETY * en.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            h = h_try * fac;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn locate<F, G, R>(
    rhs: &mut F,
    t: f64,
    y: &DVector<f64>,
    k1: &DVector<f64>,
    y_end: &DVector<f64>,
    k_end: &DVector<f64>,
    h: f64,
    x_len: usize,
    event: &G,
    rate: &R,
    opts: &SolverOptions,
    accepted: usize,
    rejected: usize,
) -> Result<EventHit>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    G: Fn(&State) -> f64,
    R: Fn(&State, &State) -> f64,
{
    let head = |v: &DVector<f64>| v.rows(0, x_len).into_owned();

    // bisection on the Hermite interpolant of the bracketing step
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_CAP {
        if (hi - lo) * h <= opts.event_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let xm = hermite(y, k1, y_end, k_end, h, mid, x_len);
        if event(&xm) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut tau = hi * h;
    let mut best = if hi >= 1.0 {
        (y_end.clone(), k_end.clone())
    } else {
        let (y_tau, k_tau, _) = dopri_step(rhs, t, y, k1, tau);
        (y_tau, k_tau)
    };

    // Newton polish using genuine sub-steps from the bracket start
    for _ in 0..NEWTON_CAP {
        let x_tau = head(&best.0);
        let g = event(&x_tau);
        let r = rate(&x_tau, &head(&best.1));
        if !(r.is_finite() && r != 0.0) {
            break;
        }
        let delta = g / r;
        if delta.abs() <= opts.event_tol {
            break;
        }
        let next = tau - delta;
        if !(next > 0.0 && next <= h) {
            break;
        }
        tau = next;
        let (y_tau, k_tau, _) = dopri_step(rhs, t, y, k1, tau);
        best = (y_tau, k_tau);
    }

    Ok(EventHit {
        t: t + tau,
        y: best.0,
        ydot: best.1,
        accepted,
        rejected,
    })
}

fn validate(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    criterion: &dyn StoppingCriterion,
    opts: &SolverOptions,
) -> Result<()> {
    check_dims(field, theta, x0)?;
    if !(opts.rtol > 0.0 && opts.atol > 0.0 && opts.event_tol > 0.0) {
        return Err(StopTimeError::contract("solver tolerances must be positive"));
    }
    if !(opts.t_max > t0) {
        return Err(StopTimeError::contract("t_max must exceed t0"));
    }
    if criterion.reached(x0) {
        return Err(StopTimeError::contract("criterion already met at x0"));
    }
    Ok(())
}

/// Locate `T_J`, the first time `J(x(t)) = eps`.
pub fn solve_continuous_stop(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    criterion: &dyn StoppingCriterion,
    opts: &SolverOptions,
) -> Result<ContinuousStopResult> {
    validate(field, theta, x0, t0, criterion, opts)?;
    let d = field.state_dim();
    let eps = criterion.target();
    let mut nfe = 0usize;
    let mut rhs = |t: f64, y: &DVector<f64>| {
        nfe += 1;
        -field.eval(theta, y, t)
    };
    let hit = integrate_to_event(
        &mut rhs,
        t0,
        x0.clone(),
        d,
        |x| criterion.eval(x) - eps,
        |x, xdot| criterion.grad(x).dot(xdot),
        opts,
    )?;
    Ok(ContinuousStopResult {
        t_stop: hit.t,
        x_at_stop: hit.y,
        xdot_at_stop: hit.ydot,
        dxdtheta_at_stop: None,
        grad_theta_t: None,
        nfe_forward: nfe,
        nfe_sensitivity: 0,
        accepted_steps: hit.accepted,
        rejected_steps: hit.rejected,
    })
}

/// Locate `T_J` while integrating the variational equation
/// `U' = -A_theta - A_x U`, `U(t0) = 0`, then form
/// `grad T = -grad J^T U(T) / (grad J^T x'(T))`.
pub fn solve_with_forward_sensitivity(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    criterion: &dyn StoppingCriterion,
    opts: &SolverOptions,
) -> Result<ContinuousStopResult> {
    validate(field, theta, x0, t0, criterion, opts)?;
    let d = field.state_dim();
    let p = field.param_dim();
    if p > opts.max_params {
        return Err(StopTimeError::contract(format!(
            "forward sensitivity limited to {} parameters, got {p}",
            opts.max_params
        )));
    }
    let eps = criterion.target();
    let mut nfe_fwd = 0usize;
    let mut nfe_sens = 0usize;
    let mut rhs = |t: f64, y: &DVector<f64>| {
        let x = y.rows(0, d).into_owned();
        let u = DMatrix::from_column_slice(d, p, &y.as_slice()[d..]);
        nfe_fwd += 1;
        nfe_sens += 1;
        let a = field.eval(theta, &x, t);
        let mut du = field.jvp_state_columns(theta, &x, t, &u);
        du += field.jacobian_param(theta, &x, t);
        let mut out = DVector::zeros(d + d * p);
        out.rows_mut(0, d).copy_from(&(-a));
        for (dst, src) in out.as_mut_slice()[d..].iter_mut().zip(du.as_slice()) {
            *dst = -src;
        }
        out
    };
    let mut y0 = DVector::zeros(d + d * p);
    y0.rows_mut(0, d).copy_from(x0);
    let hit = integrate_to_event(
        &mut rhs,
        t0,
        y0,
        d,
        |x| criterion.eval(x) - eps,
        |x, xdot| criterion.grad(x).dot(xdot),
        opts,
    )?;

    let x_t = hit.y.rows(0, d).into_owned();
    let xdot = hit.ydot.rows(0, d).into_owned();
    let u_t = DMatrix::from_column_slice(d, p, &hit.y.as_slice()[d..]);
    let grad_j = criterion.grad(&x_t);
    let rate_t = grad_j.dot(&xdot);
    let threshold = GRAZING_REL * grad_j.norm() * xdot.norm();
    if !(rate_t.abs() > threshold) {
        return Err(StopTimeError::Grazing { rate: rate_t.abs(), threshold });
    }
    let grad_t = -(u_t.tr_mul(&grad_j)) / rate_t;

    Ok(ContinuousStopResult {
        t_stop: hit.t,
        x_at_stop: x_t,
        xdot_at_stop: xdot,
        dxdtheta_at_stop: Some(u_t),
        grad_theta_t: Some(grad_t),
        nfe_forward: nfe_fwd,
        nfe_sensitivity: nfe_sens,
        accepted_steps: hit.accepted,
        rejected_steps: hit.rejected,
    })
}
