//! Discrete-versus-continuous stopping-time gradient sweep.

use std::sync::Arc;

use rayon::prelude::*;

use crate::adjoint::stopping_time_sensitivity;
use crate::bench::config::ValidateConfig;
use crate::continuous::{solve_with_forward_sensitivity, SolverOptions};
use crate::criterion::GradNormSquared;
use crate::error::{Result, StopTimeError};
use crate::euler::integrate_until_stop;
use crate::field::{ParamVector, State};
use crate::meta::FieldFamily;
use crate::zoo::{make_quadratic, Problem, ScheduleFamily};

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateRow {
    pub d: usize,
    pub eps: f64,
    pub h: f64,
    pub rel_error: Option<f64>,
    pub euler_nfe: Option<usize>,
    pub ode_nfe: Option<usize>,
    pub nfe_ratio: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub d: usize,
    pub eps: f64,
    pub slope: Option<f64>,
    /// steps along decreasing `h` where the error grew
    pub inversions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateReport {
    pub rows: Vec<ValidateRow>,
    pub slopes: Vec<SlopeRow>,
}

/// `|g_N - g_T| / (|g_T| + |g_N|)`, zero when both vanish.
pub fn relative_error(g_n: &ParamVector, g_t: &ParamVector) -> f64 {
    let den = g_t.norm() + g_n.norm();
    if den == 0.0 {
        0.0
    } else {
        (g_n - g_t).norm() / den
    }
}

/// Least-squares slope of `ln err` against `ln h` over positive finite
/// pairs; `None` with fewer than two.
pub fn loglog_slope(hs: &[f64], errs: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Number of steps where the error increases as `h` decreases.
pub fn count_inversions(hs: &[f64], errs: &[f64]) -> usize {
    let mut pairs: Vec<(f64, f64)> = hs.iter().copied().zip(errs.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.windows(2).filter(|w| w[1].1 > w[0].1).count()
}

pub fn status_of(err: &StopTimeError) -> String {
    match err {
        StopTimeError::Grazing { .. } => "grazing".into(),
        StopTimeError::NoStop { .. } => "no-stop".into(),
        StopTimeError::Diverged { .. } => "diverged".into(),
        StopTimeError::StoppedAtInit => "stopped-at-init".into(),
        StopTimeError::StepUnderflow { .. } => "step-underflow".into(),
        StopTimeError::HypothesisViolated(_) => "hypothesis-violated".into(),
        StopTimeError::OracleFailure { .. } => "oracle-failure".into(),
        other => format!("error: {other}"),
    }
}

pub fn default_theta(family: FieldFamily, d: usize) -> ParamVector {
    match family {
        FieldFamily::DiagPreconditioner => ParamVector::zeros(family.param_dim(d)),
        FieldFamily::Schedule(ScheduleFamily::ExpDecay) => ParamVector::from_column_slice(&[1.0, 0.01]),
        FieldFamily::Schedule(_) => ParamVector::from_element(1, 1.0),
    }
}

fn sweep_cell(cfg: &ValidateConfig, family: FieldFamily, d: usize, eps: f64) -> Result<Vec<ValidateRow>> {
    let quad = make_quadratic(d, cfg.cond, cfg.rotated, cfg.seed)?.scaled(cfg.spectrum_max / cfg.cond);
    let problem: Arc<dyn Problem> = Arc::new(quad);
    let field = family.build(problem.clone())?;
    let theta = if cfg.theta.is_empty() {
        default_theta(family, d)
    } else {
        ParamVector::from_column_slice(&cfg.theta)
    };
    if theta.len() != field.param_dim() {
        return Err(StopTimeError::Config(format!(
            "theta has {} entries, family {family} at d = {d} needs {}",
            theta.len(),
            field.param_dim()
        )));
    }
    let x0 = State::from_element(d, cfg.x0);
    let crit = GradNormSquared { problem, eps };
    let opts = SolverOptions {
        rtol: cfg.rtol,
        atol: cfg.atol,
        event_tol: cfg.event_tol,
        t_max: cfg.t_max,
        max_params: field.param_dim(),
    };

    let failed = |h: f64, status: String| ValidateRow {
        d,
        eps,
        h,
        rel_error: None,
        euler_nfe: None,
        ode_nfe: None,
        nfe_ratio: None,
        status,
    };

    let cont = solve_with_forward_sensitivity(field.as_ref(), &theta, &x0, 0.0, &crit, &opts);
    let (grad_t, ode_nfe) = match cont {
        Ok(res) => (res.grad_theta_t.expect("sensitivity solve returns a gradient"), res.nfe_forward),
        Err(e) if e.is_numerical() => {
            let status = format!("ode {}", status_of(&e));
            return Ok(cfg.h.iter().map(|&h| failed(h, status.clone())).collect());
        }
        Err(e) => return Err(e),
    };

    let rows = cfg
        .h
        .par_iter()
        .map(|&h| {
            let run = integrate_until_stop(field.as_ref(), &theta, &x0, 0.0, h, &crit, cfg.n_max).and_then(|(traj, rep)| {
                if !rep.stopped {
                    return Err(StopTimeError::NoStop { t_max: h * rep.n_max as f64 });
                }
                stopping_time_sensitivity(field.as_ref(), &theta, &traj, &crit).map(|s| (s.dn_dtheta, traj.nfe))
            });
            match run {
                Ok((grad_n, euler_nfe)) => Ok(ValidateRow {
                    d,
                    eps,
                    h,
                    rel_error: Some(relative_error(&grad_n, &grad_t)),
                    euler_nfe: Some(euler_nfe),
                    ode_nfe: Some(ode_nfe),
                    nfe_ratio: Some(euler_nfe as f64 / ode_nfe as f64),
                    status: "ok".into(),
                }),
                Err(e) if e.is_numerical() => Ok(failed(h, format!("euler {}", status_of(&e)))),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows)
}

/// Run every `(d, eps, h)` cell. Numerical failures become row statuses.
pub fn run_validate(cfg: &ValidateConfig) -> Result<ValidateReport> {
    let family: FieldFamily = cfg.family.parse().map_err(|e: StopTimeError| StopTimeError::Config(e.to_string()))?;
    if cfg.dims.is_empty() || cfg.eps.is_empty() || cfg.h.is_empty() {
        return Err(StopTimeError::Config("dims, eps and h must be non-empty".into()));
    }
    if !(cfg.cond >= 1.0 && cfg.spectrum_max > 0.0) {
        return Err(StopTimeError::Config("need cond >= 1 and spectrum_max > 0".into()));
    }
    let cells: Vec<(usize, f64)> = cfg.dims.iter().flat_map(|&d| cfg.eps.iter().map(move |&e| (d, e))).collect();
    let per_cell = cells
        .par_iter()
        .map(|&(d, eps)| sweep_cell(cfg, family, d, eps))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for ((d, eps), cell_rows) in cells.into_iter().zip(per_cell) {
        let ok: Vec<&ValidateRow> = cell_rows.iter().filter(|r| r.rel_error.is_some()).collect();
        let hs: Vec<f64> = ok.iter().map(|r| r.h).collect();
        let errs: Vec<f64> = ok.iter().map(|r| r.rel_error.unwrap()).collect();
        slopes.push(SlopeRow {
            d,
            eps,
            slope: loglog_slope(&hs, &errs),
            inversions: count_inversions(&hs, &errs),
        });
        rows.extend(cell_rows);
    }
    Ok(ValidateReport { rows, slopes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn identical_gradients_have_zero_error() {
        let g = DVector::from_column_slice(&[1.0, -2.0]);
        assert_eq!(relative_error(&g, &g), 0.0);
        assert_eq!(relative_error(&DVector::zeros(2), &DVector::zeros(2)), 0.0);
    }

    #[test]
    fn linear_field_closed_form_error() {
        let g_n = DVector::from_element(1, -2.0842105263157893);
        let g_t = DVector::from_element(1, -(100f64).ln() / 2.0);
        assert!((relative_error(&g_n, &g_t) - 0.0498).abs() < 1e-4);
    }

    #[test]
    fn slope_of_power_law() {
        let hs = [0.2, 0.1, 0.05];
        let errs: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powf(1.5)).collect();
        assert!((loglog_slope(&hs, &errs).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&[0.1], &[1.0]), None);
    }

    #[test]
    fn inversions_counted_along_decreasing_h() {
        assert_eq!(count_inversions(&[0.1, 0.2, 0.05], &[2.0, 4.0, 1.0]), 0);
        assert_eq!(count_inversions(&[0.2, 0.1, 0.05], &[4.0, 5.0, 1.0]), 1);
    }

    #[test]
    fn small_sweep_runs() {
        let cfg = ValidateConfig {
            dims: vec![3],
            eps: vec![1e-3],
            h: vec![0.1, 0.05],
            ..ValidateConfig::default()
        };
        let rep = run_validate(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows.iter().all(|r| r.status == "ok"));
        assert_eq!(rep.rows[0].ode_nfe, rep.rows[1].ode_nfe);
        assert!(rep.slopes[0].slope.is_some());
    }

    #[test]
    fn no_stop_is_a_row_status() {
        let cfg = ValidateConfig {
            dims: vec![2],
            eps: vec![1e-3],
            h: vec![0.1],
            n_max: 3,
            ..ValidateConfig::default()
        };
        let rep = run_validate(&cfg).unwrap();
        assert_eq!(rep.rows[0].status, "euler no-stop");
    }

    #[test]
    fn bad_family_is_config_error() {
        let cfg = ValidateConfig { family: "lstm".into(), ..ValidateConfig::default() };
        assert!(matches!(run_validate(&cfg).unwrap_err(), StopTimeError::Config(_)));
    }
}
