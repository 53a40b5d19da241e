//! Forward-Euler iteration `x_{k+1} = x_k - h A(theta, x_k, t0 + k h)` with
//! first-hit stopping detection.

use crate::criterion::StoppingCriterion;
use crate::error::{Result, StopTimeError};
use crate::field::{DynamicsField, ParamVector, State};
use crate::trajectory::{StopReport, Trajectory};

pub const DEFAULT_N_MAX: usize = 1_000_000;

pub(crate) fn check_dims(field: &dyn DynamicsField, theta: &ParamVector, x0: &State) -> Result<()> {
    if theta.len() != field.param_dim() {
        return Err(StopTimeError::contract(format!(
            "theta has length {}, field expects {}",
            theta.len(),
            field.param_dim()
        )));
    }
    if x0.len() != field.state_dim() {
        return Err(StopTimeError::contract(format!(
            "state has length {}, field expects {}",
            x0.len(),
            field.state_dim()
        )));
    }
    Ok(())
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(StopTimeError::contract(format!("step size must be positive, got {h}")));
    }
    Ok(())
}

fn all_finite(x: &State) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Iterate until the first `k` with `J(x_k) <= eps` or until `n_max` steps.
pub fn integrate_until_stop(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    h: f64,
    criterion: &dyn StoppingCriterion,
    n_max: usize,
) -> Result<(Trajectory, StopReport)> {
    check_dims(field, theta, x0)?;
    check_step(h)?;
    if n_max < 1 {
        return Err(StopTimeError::contract("n_max must be at least 1"));
    }
    if !all_finite(x0) || !all_finite(theta) || !t0.is_finite() {
        return Err(StopTimeError::contract("non-finite inputs"));
    }

    let eps = criterion.target();
    let j0 = criterion.eval(x0);
    let mut traj = Trajectory {
        t0,
        h,
        states: vec![x0.clone()],
        j_values: vec![j0],
        nfe: 0,
    };
    if !j0.is_finite() {
        return Err(StopTimeError::Diverged {
            last_finite: 0,
            partial: Box::new(traj),
        });
    }
    if j0 <= eps {
        return Ok((traj, StopReport { stopped: true, n: 0, n_max }));
    }

    for k in 0..n_max {
        let x = &traj.states[k];
        let a = field.eval(theta, x, traj.time(k));
        traj.nfe += 1;
        let next = x - a * h;
        let j = criterion.eval(&next);
        if !all_finite(&next) || !j.is_finite() {
            return Err(StopTimeError::Diverged {
                last_finite: k,
                partial: Box::new(traj),
            });
        }
        traj.states.push(next);
        traj.j_values.push(j);
        if j <= eps {
            return Ok((traj, StopReport { stopped: true, n: k + 1, n_max }));
        }
    }

    Ok((traj, StopReport { stopped: false, n: n_max, n_max }))
}

/// Exactly `k_steps` Euler steps, ignoring any criterion.
pub fn integrate_fixed(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x0: &State,
    t0: f64,
    h: f64,
    k_steps: usize,
) -> Result<Trajectory> {
    check_dims(field, theta, x0)?;
    check_step(h)?;
    let mut traj = Trajectory {
        t0,
        h,
        states: Vec::with_capacity(k_steps + 1),
        j_values: Vec::new(),
        nfe: 0,
    };
    traj.states.push(x0.clone());
    for k in 0..k_steps {
        let x = &traj.states[k];
        let a = field.eval(theta, x, traj.time(k));
        traj.nfe += 1;
        let next = x - a * h;
        if !all_finite(&next) {
            return Err(StopTimeError::Diverged {
                last_finite: k,
                partial: Box::new(traj),
            });
        }
        traj.states.push(next);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::SquaredNorm;
    use crate::zoo::{linear_scalar_field, make_quadratic, rescaled_gradient_field, ScheduleFamily};
    use nalgebra::DVector;
    use std::sync::Arc;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn linear_field_stops_at_22() {
        let field = linear_scalar_field();
        let crit = SquaredNorm { eps: 0.01 };
        let (traj, report) =
            integrate_until_stop(&field, &scalar(1.0), &scalar(1.0), 0.0, 0.1, &crit, 1000).unwrap();
        assert_eq!(report, StopReport { stopped: true, n: 22, n_max: 1000 });
        assert_eq!(traj.nfe, 22);
        for (k, x) in traj.states.iter().enumerate() {
            assert!((x[0] - 0.9f64.powi(k as i32)).abs() < 1e-14);
        }
        // closed form N = ceil(ln(eps / x0^2) / (2 ln(1 - h theta)))
        let closed = ((0.01f64).ln() / (2.0 * 0.9f64.ln())).ceil() as usize;
        assert_eq!(closed, 22);
        assert!(traj.j_values[21] > 0.01 && traj.j_values[22] <= 0.01);
    }

    #[test]
    fn already_at_target() {
        let field = linear_scalar_field();
        let crit = SquaredNorm { eps: 2.0 };
        let (traj, report) =
            integrate_until_stop(&field, &scalar(1.0), &scalar(1.0), 0.0, 0.1, &crit, 10).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(report, StopReport { stopped: true, n: 0, n_max: 10 });
    }

    #[test]
    fn stationary_never_stops() {
        let field = linear_scalar_field();
        let crit = SquaredNorm { eps: 0.5 };
        let (traj, report) =
            integrate_until_stop(&field, &scalar(0.0), &scalar(1.0), 0.0, 0.1, &crit, 50).unwrap();
        assert!(!report.stopped);
        assert_eq!(report.n, 50);
        assert_eq!(traj.states.len(), 51);
        assert!(traj.j_values.iter().all(|&j| j > 0.5));
    }

    #[test]
    fn tie_counts_as_stopped() {
        let field = linear_scalar_field();
        // x_1 = 0.5 exactly with theta = 1, h = 0.5; J = 0.25
        let crit = SquaredNorm { eps: 0.25 };
        let (_, report) =
            integrate_until_stop(&field, &scalar(1.0), &scalar(1.0), 0.0, 0.5, &crit, 10).unwrap();
        assert_eq!(report.n, 1);
    }

    #[test]
    fn divergence_keeps_partial_trajectory() {
        let field = linear_scalar_field();
        let crit = SquaredNorm { eps: 1e-3 };
        // factor (1 - h theta) = -1e200 blows up in two steps
        let err = integrate_until_stop(&field, &scalar(1e201), &scalar(1.0), 0.0, 1.0, &crit, 10)
            .unwrap_err();
        match err {
            StopTimeError::Diverged { last_finite, partial } => {
                assert_eq!(partial.states.len(), last_finite + 1);
                assert!(partial.states.iter().all(|x| x[0].is_finite()));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fixed_horizon() {
        let field = linear_scalar_field();
        let traj = integrate_fixed(&field, &scalar(1.0), &scalar(1.0), 0.0, 0.1, 0).unwrap();
        assert_eq!(traj.states, vec![scalar(1.0)]);
        let traj = integrate_fixed(&field, &scalar(1.0), &scalar(1.0), 0.0, 0.1, 3).unwrap();
        let want = [1.0, 0.9, 0.81, 0.729];
        for (x, w) in traj.states.iter().zip(want) {
            assert!((x[0] - w).abs() < 1e-15);
        }
        let quad = Arc::new(make_quadratic(3, 5.0, true, 1).unwrap());
        let field = rescaled_gradient_field(quad, ScheduleFamily::ExpDecay).unwrap();
        let theta = DVector::from_column_slice(&[1.0, 0.3]);
        let x0 = DVector::from_column_slice(&[1.0, -1.0, 0.5]);
        let traj = integrate_fixed(&field, &theta, &x0, 0.0, 0.1, 5).unwrap();
        assert_eq!(traj.nfe, 5);
    }

    #[test]
    fn wrong_theta_length_is_contract_violation() {
        let field = linear_scalar_field();
        let err = integrate_fixed(&field, &DVector::zeros(2), &scalar(1.0), 0.0, 0.1, 1).unwrap_err();
        assert!(matches!(err, StopTimeError::Contract(_)));
        let err = integrate_fixed(&field, &scalar(1.0), &scalar(1.0), 0.0, -0.1, 1).unwrap_err();
        assert!(matches!(err, StopTimeError::Contract(_)));
    }

    #[test]
    fn global_error_is_first_order() {
        let field = linear_scalar_field();
        let errs: Vec<f64> = [0.1f64, 0.05, 0.025]
            .iter()
            .map(|&h| {
                let steps = (2.0 / h).round() as usize;
                let traj = integrate_fixed(&field, &scalar(1.0), &scalar(1.0), 0.0, h, steps).unwrap();
                traj.states
                    .iter()
                    .enumerate()
                    .map(|(k, x)| (x[0] - (-(k as f64) * h).exp()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
        }
    }
}
