//! Optimizer comparisons, single Adam-OLA runs and the identity check.

use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bench::config::{CompareConfig, IdentityConfig, OlaConfig, ProblemConfig, RunSpec};
use crate::bench::validate::status_of;
use crate::error::{Result, StopTimeError};
use crate::field::{ParamVector, State};
use crate::meta::verify_decrease_identity;
use crate::ola::{ola_run, OlaHyper, OlaRun};
use crate::zoo::{
    diag_preconditioner_field, estimate_lipschitz, make_logistic, make_quadratic, parse_libsvm, smooth_svm,
    synthetic_classification, Hyper, Logistic, Method, Problem, Stepper, PRECOND_FEATURES,
};

/// Build the configured problem. Synthetic SVM data gets the intercept
/// column like parsed files do.
pub fn build_problem(cfg: &ProblemConfig) -> Result<Arc<dyn Problem>> {
    let from_file = || -> Result<_> {
        let file = File::open(&cfg.data).map_err(|e| StopTimeError::io(&cfg.data, e))?;
        parse_libsvm(BufReader::new(file), None)
    };
    match cfg.kind.as_str() {
        "svm" => {
            let data = if cfg.data.is_empty() {
                synthetic_classification(cfg.d, cfg.n, cfg.sparsity, cfg.flip_prob, cfg.seed)?.with_intercept()
            } else {
                from_file()?
            };
            Ok(Arc::new(smooth_svm(data, cfg.reg)?))
        }
        "logistic" => {
            if cfg.data.is_empty() {
                Ok(Arc::new(make_logistic(cfg.d, cfg.n, cfg.sparsity, cfg.flip_prob, cfg.seed)?.0))
            } else {
                Ok(Arc::new(Logistic::new(from_file()?)))
            }
        }
        "quadratic" => Ok(Arc::new(make_quadratic(cfg.d, cfg.cond, false, cfg.seed)?)),
        other => Err(StopTimeError::Config(format!("unknown problem kind `{other}`"))),
    }
}

/// One optimizer's objective trace, `f(x_0), f(x_1), ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub f: Vec<f64>,
    pub status: String,
}

impl Curve {
    /// The optimizer's own minimum over its iterations.
    pub fn f_min(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn ola_hyper(spec: &RunSpec) -> OlaHyper {
    let base = OlaHyper::default();
    OlaHyper {
        beta1: spec.beta1.unwrap_or(base.beta1),
        beta2: spec.beta2.unwrap_or(base.beta2),
        eps_stab: spec.eps_stab.unwrap_or(base.eps_stab),
        eta_adapt: spec.eta_adapt.unwrap_or(base.eta_adapt),
        eps_desc: spec.eps_desc.unwrap_or(base.eps_desc),
    }
}

fn run_one(spec: &RunSpec, problem: &dyn Problem, x0: &State, lr_default: f64, iters: usize, grad_tol: f64) -> Result<Curve> {
    let lr = spec.lr.unwrap_or(lr_default);
    if spec.optimizer == "adam-ola" {
        let f = match ola_run(problem, x0, lr, &ola_hyper(spec), iters, grad_tol) {
            Ok(run) => (run.f_history, "ok".to_string()),
            Err(StopTimeError::Diverged { partial, .. }) => (partial.j_values, "diverged".to_string()),
            Err(e) => return Err(e),
        };
        return Ok(Curve { label: spec.label(), f: f.0, status: f.1 });
    }
    let method: Method = spec.optimizer.parse().map_err(|e: StopTimeError| StopTimeError::Config(e.to_string()))?;
    let base = Hyper::default();
    let hyper = Hyper {
        lr,
        momentum: spec.momentum.unwrap_or(base.momentum),
        beta1: spec.beta1.unwrap_or(base.beta1),
        beta2: spec.beta2.unwrap_or(base.beta2),
        eps_stab: spec.eps_stab.unwrap_or(base.eps_stab),
        hyper_lr: spec.hyper_lr.unwrap_or(base.hyper_lr),
    };
    let mut stepper = Stepper::new(method, hyper, x0.len());
    let mut x = x0.clone();
    let mut f = vec![problem.value(&x)];
    for _ in 0..iters {
        if problem.gradient(&x).norm() <= grad_tol {
            break;
        }
        x = stepper.step(&x, problem);
        let fx = problem.value(&x);
        if !fx.is_finite() {
            return Ok(Curve { label: spec.label(), f, status: "diverged".into() });
        }
        f.push(fx);
    }
    Ok(Curve { label: spec.label(), f, status: "ok".into() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub lipschitz: f64,
    pub curves: Vec<Curve>,
}

/// Run every configured optimizer from `x0 = 0` with `lr` defaulting to
/// `1/L`, `L` estimated at `x0`.
pub fn run_compare(cfg: &CompareConfig) -> Result<CompareReport> {
    if cfg.runs.is_empty() {
        return Err(StopTimeError::Config("compare needs at least one run".into()));
    }
    let problem = build_problem(&cfg.problem)?;
    let x0 = State::zeros(problem.dim());
    let lipschitz = estimate_lipschitz(problem.as_ref(), &x0);
    let curves = cfg
        .runs
        .par_iter()
        .map(|spec| run_one(spec, problem.as_ref(), &x0, 1.0 / lipschitz, cfg.iters, cfg.grad_tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareReport { lipschitz, curves })
}

/// A single Adam-OLA run on the configured problem.
pub fn run_ola(cfg: &OlaConfig) -> Result<(f64, OlaRun)> {
    let problem = build_problem(&cfg.problem)?;
    let x0 = State::zeros(problem.dim());
    let alpha0 = cfg.alpha0.unwrap_or_else(|| 1.0 / estimate_lipschitz(problem.as_ref(), &x0));
    let hyper = OlaHyper {
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps_stab: cfg.eps_stab,
        eta_adapt: cfg.eta_adapt,
        eps_desc: cfg.eps_desc,
    };
    let run = ola_run(problem.as_ref(), &x0, alpha0, &hyper, cfg.max_iters, cfg.grad_tol)?;
    Ok((alpha0, run))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub seed: u64,
    pub lhs_norm: Option<f64>,
    pub rhs_norm: Option<f64>,
    pub abs_diff: Option<f64>,
    pub status: String,
}

/// Seeded identity instance: rotated quadratic, Gaussian `theta` and `x0`.
pub fn identity_instance(cfg: &IdentityConfig, seed: u64) -> Result<(Arc<dyn Problem>, ParamVector, State)> {
    let quad = make_quadratic(cfg.d, cfg.cond, true, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = ParamVector::from_fn(PRECOND_FEATURES * cfg.d, |_, _| {
        cfg.theta_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)
    });
    let x0 = State::from_fn(cfg.d, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
    Ok((Arc::new(quad), theta, x0))
}

pub fn run_identity(cfg: &IdentityConfig) -> Result<Vec<IdentityRow>> {
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let (problem, theta, x0) = identity_instance(cfg, seed)?;
            let field = diag_preconditioner_field(problem.clone());
            match verify_decrease_identity(&field, &theta, problem.as_ref(), &x0, 0.0, cfg.h, cfg.k_max) {
                Ok(r) => Ok(IdentityRow {
                    seed,
                    lhs_norm: Some(r.lhs.norm()),
                    rhs_norm: Some(r.rhs.norm()),
                    abs_diff: Some(r.abs_diff),
                    status: "ok".into(),
                }),
                Err(e) if e.is_numerical() => Ok(IdentityRow {
                    seed,
                    lhs_norm: None,
                    rhs_norm: None,
                    abs_diff: None,
                    status: status_of(&e),
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}
