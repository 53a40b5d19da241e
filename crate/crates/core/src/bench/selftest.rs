//! Fast end-to-end checks against closed forms and independent oracles.

use std::sync::Arc;

use crate::adjoint::{stopping_time_sensitivity, unrolled_forward_sensitivity};
use crate::bench::config::IdentityConfig;
use crate::bench::runs::run_identity;
use crate::continuous::{solve_with_forward_sensitivity, SolverOptions};
use crate::criterion::{GradNormSquared, SquaredNorm, StoppingCriterion};
use crate::error::Result;
use crate::euler::integrate_until_stop;
use crate::field::{DynamicsField, ParamVector, State};
use crate::ola::{ola_run, OlaHyper};
use crate::zoo::{diag_preconditioner_field, linear_scalar_field, make_quadratic, Hyper, Method, Problem, Stepper};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub reference: f64,
    pub tol: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        (self.value - self.reference).abs() <= self.tol
    }
}

fn linear_checks(out: &mut Vec<Check>) -> Result<()> {
    let field = linear_scalar_field();
    let (h, th) = (0.1, 1.0);
    let theta = ParamVector::from_element(1, th);
    let x0 = State::from_element(1, 1.0);
    let crit = SquaredNorm { eps: 1e-2 };
    let (traj, rep) = integrate_until_stop(&field, &theta, &x0, 0.0, h, &crit, 1000)?;
    let n = rep.n as f64;
    out.push(Check { name: "linear stopping index", value: n, reference: 22.0, tol: 0.0 });
    let sens = stopping_time_sensitivity(&field, &theta, &traj, &crit)?;
    let closed = 2.0 * h * n * (1.0 - h * th) / (th * (h * th - 2.0));
    out.push(Check { name: "linear dN/dtheta", value: sens.dn_dtheta[0], reference: closed, tol: 1e-10 });

    let opts = SolverOptions { max_params: 1, ..SolverOptions::default() };
    let cont = solve_with_forward_sensitivity(&field, &theta, &x0, 0.0, &SquaredNorm { eps: 1e-2 }, &opts)?;
    let t_ref = 100f64.ln() / 2.0;
    out.push(Check { name: "linear T", value: cont.t_stop, reference: t_ref, tol: 1e-7 });
    let g = cont.grad_theta_t.map_or(f64::NAN, |g| g[0]);
    out.push(Check { name: "linear dT/dtheta", value: g, reference: -t_ref, tol: 1e-4 });
    Ok(())
}

fn adjoint_check(out: &mut Vec<Check>) -> Result<()> {
    let problem: Arc<dyn Problem> = Arc::new(make_quadratic(4, 10.0, true, 0)?);
    let field = diag_preconditioner_field(problem.clone());
    let theta = ParamVector::from_fn(field.param_dim(), |i, _| 0.05 * ((i as f64) * 0.7).sin());
    let x0 = State::from_element(4, 1.0);
    let crit = GradNormSquared { problem, eps: 1e-4 };
    let (traj, rep) = integrate_until_stop(&field, &theta, &x0, 0.0, 0.1, &crit, 100_000)?;
    let sens = stopping_time_sensitivity(&field, &theta, &traj, &crit)?;
    let jac = unrolled_forward_sensitivity(&field, &theta, &x0, 0.0, 0.1, rep.n)?;
    let unrolled = jac.wrt_theta.transpose() * crit.grad(traj.last());
    let gap = (&sens.s_theta - &unrolled).norm() / unrolled.norm().max(1e-300);
    out.push(Check { name: "adjoint vs unrolled", value: gap, reference: 0.0, tol: 1e-10 });
    Ok(())
}

fn ola_check(out: &mut Vec<Check>) -> Result<()> {
    let problem = make_quadratic(5, 20.0, true, 1)?;
    let x0 = State::from_element(5, 1.0);
    let hyper = OlaHyper { eta_adapt: 0.0, ..OlaHyper::default() };
    let run = ola_run(&problem, &x0, 0.05, &hyper, 50, 0.0)?;
    let mut adam = Stepper::new(Method::Adam, Hyper { lr: 0.05, ..Hyper::default() }, 5);
    let mut x = x0;
    let mut worst: f64 = 0.0;
    for it in &run.iterates[1..] {
        x = adam.step(&x, &problem);
        worst = worst.max((it - &x).amax());
    }
    out.push(Check { name: "ola with eta 0 equals adam", value: worst, reference: 0.0, tol: 0.0 });
    Ok(())
}

fn identity_check(out: &mut Vec<Check>) -> Result<()> {
    let rows = run_identity(&IdentityConfig { seeds: vec![0, 1, 2], ..IdentityConfig::default() })?;
    let worst = rows.iter().map(|r| r.abs_diff.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    out.push(Check { name: "meta identity", value: worst, reference: 0.0, tol: 1e-8 });
    Ok(())
}

pub fn run_selftest() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    linear_checks(&mut out)?;
    adjoint_check(&mut out)?;
    ola_check(&mut out)?;
    identity_check(&mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_selftest().unwrap() {
            assert!(c.passed(), "{c:?}");
        }
    }
}
