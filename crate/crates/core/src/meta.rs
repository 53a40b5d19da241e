//! Meta-training of a parametric dynamics field against
//! `sum_k w_k f(x_k) + lambda N_J`.
//!
//! The weighted-sum gradient comes from a running-cost discrete adjoint;
//! the stopping-time term from the discrete adjoint at the stopping index.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adjoint::{assemble_sensitivity, backward_sweep, discrete_adjoint, unrolled_sensitivity_history};
use crate::criterion::{GradNormSquared, ProgressDecrease};
use crate::error::{Result, StopTimeError};
use crate::euler::{check_dims, integrate_fixed, integrate_until_stop};
use crate::field::{DynamicsField, ParamVector, State};
use crate::zoo::{
    adam_direction, diag_preconditioner_field, make_logistic, rescaled_gradient_field, Problem, ScheduleFamily,
    PRECOND_FEATURES,
};

/// Which stopping criterion defines `N_J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaCriterion {
    /// `|grad f(x)|^2 <= eps`
    GradNorm,
    /// `f(x_{k-1}) - f(x_k) <= eps`, on the augmented state
    Progress,
}

impl FromStr for MetaCriterion {
    type Err = StopTimeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grad-norm" => Ok(MetaCriterion::GradNorm),
            "progress" => Ok(MetaCriterion::Progress),
            other => Err(StopTimeError::contract(format!("unknown criterion `{other}`"))),
        }
    }
}

impl fmt::Display for MetaCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetaCriterion::GradNorm => "grad-norm",
            MetaCriterion::Progress => "progress",
        })
    }
}

/// Update rule applied to `theta` after each meta-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaOptimizer {
    Gd,
    Adam,
}

impl FromStr for MetaOptimizer {
    type Err = StopTimeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(MetaOptimizer::Gd),
            "adam" => Ok(MetaOptimizer::Adam),
            other => Err(StopTimeError::contract(format!("unknown meta-optimizer `{other}`"))),
        }
    }
}

impl fmt::Display for MetaOptimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetaOptimizer::Gd => "gd",
            MetaOptimizer::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    pub k_max: usize,
    /// `w_0 ..= w_{k_max}`
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    pub h: f64,
    pub t0: f64,
    pub n_max: usize,
    pub criterion: MetaCriterion,
    pub optimizer: MetaOptimizer,
}

impl MetaConfig {
    /// Defaults with uniform weights `1 / k_max`.
    pub fn with_horizon(k_max: usize) -> Self {
        MetaConfig {
            k_max,
            weights: uniform_weights(k_max),
            lambda: 1.0,
            epsilon: 1e-5,
            eta: 1e-2,
            batch: 8,
            steps: 200,
            seed: 0,
            h: 1.0,
            t0: 0.0,
            n_max: 100_000,
            criterion: MetaCriterion::Progress,
            optimizer: MetaOptimizer::Gd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 {
            return Err(StopTimeError::contract("k_max must be at least 1"));
        }
        if self.weights.len() != self.k_max + 1 {
            return Err(StopTimeError::contract(format!(
                "need {} weights, got {}",
                self.k_max + 1,
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(StopTimeError::contract("weights must be finite and non-negative"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(StopTimeError::contract("lambda must be finite and non-negative"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(StopTimeError::contract("h must be positive"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(StopTimeError::contract("eta must be finite and non-negative"));
        }
        if self.batch < 1 || self.n_max < 2 {
            return Err(StopTimeError::contract("batch >= 1 and n_max >= 2 required"));
        }
        Ok(())
    }
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig::with_horizon(100)
    }
}

pub fn uniform_weights(k_max: usize) -> Vec<f64> {
    vec![1.0 / k_max.max(1) as f64; k_max + 1]
}

/// The field on `z = (x_k, x_{k-1})` whose Euler step reproduces the
/// underlying iteration: `A~(z) = (A(x), (z_2 - z_1) / h)`.
pub struct AugmentedProgressField<'a> {
    pub inner: &'a dyn DynamicsField,
    pub h: f64,
}

impl AugmentedProgressField<'_> {
    fn split(&self, z: &State) -> (State, State) {
        let d = self.inner.state_dim();
        (z.rows(0, d).into_owned(), z.rows(d, d).into_owned())
    }
}

impl DynamicsField for AugmentedProgressField<'_> {
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn state_dim(&self) -> usize {
        2 * self.inner.state_dim()
    }
    fn eval(&self, theta: &ParamVector, z: &State, t: f64) -> State {
        let d = self.inner.state_dim();
        let (cur, prev) = self.split(z);
        let mut out = State::zeros(2 * d);
        out.rows_mut(0, d).copy_from(&self.inner.eval(theta, &cur, t));
        out.rows_mut(d, d).copy_from(&((prev - &cur) / self.h));
        out
    }
    fn vjp_state(&self, theta: &ParamVector, z: &State, t: f64, lambda: &State) -> State {
        let d = self.inner.state_dim();
        let (cur, _) = self.split(z);
        let (l1, l2) = self.split(lambda);
        let mut out = State::zeros(2 * d);
        out.rows_mut(0, d).copy_from(&(self.inner.vjp_state(theta, &cur, t, &l1) - &l2 / self.h));
        out.rows_mut(d, d).copy_from(&(l2 / self.h));
        out
    }
    fn vjp_param(&self, theta: &ParamVector, z: &State, t: f64, lambda: &State) -> ParamVector {
        let (cur, _) = self.split(z);
        let (l1, _) = self.split(lambda);
        self.inner.vjp_param(theta, &cur, t, &l1)
    }
}

/// Components of the meta objective for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaLoss {
    /// `+inf` when either run diverged
    pub loss: f64,
    pub weighted_sum: f64,
    pub n_j: usize,
    pub stopped: bool,
    pub diverged: bool,
}

struct StopOutcome {
    n_j: usize,
    stopped: bool,
    dn_dtheta: Option<ParamVector>,
}

fn stopping_outcome(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    problem: &Arc<dyn Problem>,
    x0: &State,
    cfg: &MetaConfig,
    want_grad: bool,
) -> Result<StopOutcome> {
    let h = cfg.h;
    match cfg.criterion {
        MetaCriterion::GradNorm => {
            let crit = GradNormSquared { problem: problem.clone(), eps: cfg.epsilon };
            let (traj, report) = integrate_until_stop(field, theta, x0, cfg.t0, h, &crit, cfg.n_max)?;
            if !report.stopped {
                return Ok(StopOutcome { n_j: cfg.n_max, stopped: false, dn_dtheta: None });
            }
            let dn = if want_grad && report.n > 0 {
                let (s_theta, s_x0) = discrete_adjoint(field, theta, &traj, &crit)?;
                Some(assemble_sensitivity(&traj, &s_theta, &s_x0, h)?.dn_dtheta)
            } else {
                None
            };
            Ok(StopOutcome { n_j: report.n, stopped: true, dn_dtheta: dn })
        }
        MetaCriterion::Progress => {
            let d = field.state_dim();
            let x1 = x0 - field.eval(theta, x0, cfg.t0) * h;
            let aug = AugmentedProgressField { inner: field, h };
            let mut z1 = State::zeros(2 * d);
            z1.rows_mut(0, d).copy_from(&x1);
            z1.rows_mut(d, d).copy_from(x0);
            let crit = ProgressDecrease { problem: problem.clone(), eps: cfg.epsilon };
            let (traj, report) = integrate_until_stop(&aug, theta, &z1, cfg.t0 + h, h, &crit, cfg.n_max - 1)?;
            if !report.stopped {
                return Ok(StopOutcome { n_j: cfg.n_max, stopped: false, dn_dtheta: None });
            }
            let dn = if want_grad && report.n > 0 {
                let (s_theta_tail, s_z1) = discrete_adjoint(&aug, theta, &traj, &crit)?;
                // x_1 = x_0 - h A(theta, x_0, t0) also depends on theta
                let head = s_z1.rows(0, d).into_owned();
                let s_theta = s_theta_tail - field.vjp_param(theta, x0, cfg.t0, &head) * h;
                Some(assemble_sensitivity(&traj, &s_theta, &s_z1, h)?.dn_dtheta)
            } else {
                None
            };
            Ok(StopOutcome { n_j: report.n + 1, stopped: true, dn_dtheta: dn })
        }
    }
}

fn validate_inputs(field: &dyn DynamicsField, theta: &ParamVector, problem: &Arc<dyn Problem>, x0: &State, cfg: &MetaConfig) -> Result<()> {
    cfg.validate()?;
    check_dims(field, theta, x0)?;
    if problem.dim() != x0.len() {
        return Err(StopTimeError::contract("problem and x0 dimensions differ"));
    }
    Ok(())
}

fn diverged_loss(n_max: usize) -> MetaLoss {
    MetaLoss {
        loss: f64::INFINITY,
        weighted_sum: f64::INFINITY,
        n_j: n_max,
        stopped: false,
        diverged: true,
    }
}

/// Evaluate `sum_k w_k f(x_k) + lambda N_J`. Divergence gives an infinite
/// loss rather than an error.
pub fn meta_loss(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    problem: &Arc<dyn Problem>,
    x0: &State,
    cfg: &MetaConfig,
) -> Result<MetaLoss> {
    validate_inputs(field, theta, problem, x0, cfg)?;
    let traj = match integrate_fixed(field, theta, x0, cfg.t0, cfg.h, cfg.k_max) {
        Ok(t) => t,
        Err(StopTimeError::Diverged { .. }) => return Ok(diverged_loss(cfg.n_max)),
        Err(e) => return Err(e),
    };
    let weighted_sum = weighted_sum(problem.as_ref(), &traj.states, &cfg.weights);
    let stop = if cfg.lambda > 0.0 || cfg.criterion == MetaCriterion::Progress {
        match stopping_outcome(field, theta, problem, x0, cfg, false) {
            Ok(s) => s,
            Err(StopTimeError::Diverged { .. }) => return Ok(diverged_loss(cfg.n_max)),
            Err(e) => return Err(e),
        }
    } else {
        StopOutcome { n_j: 0, stopped: false, dn_dtheta: None }
    };
    if !weighted_sum.is_finite() {
        return Ok(diverged_loss(cfg.n_max));
    }
    Ok(MetaLoss {
        loss: weighted_sum + cfg.lambda * stop.n_j as f64,
        weighted_sum,
        n_j: stop.n_j,
        stopped: stop.stopped,
        diverged: false,
    })
}

fn weighted_sum(problem: &dyn Problem, states: &[State], weights: &[f64]) -> f64 {
    states
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w != 0.0)
        .map(|(x, &w)| w * problem.value(x))
        .sum()
}

/// The meta gradient split into its two terms, with the loss it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaGradient {
    pub total: ParamVector,
    pub weighted: ParamVector,
    /// `dN_J/dtheta`, zero when the run did not stop or stopped at once
    pub stopping: ParamVector,
    pub loss: MetaLoss,
}

/// Gradient of the meta objective; divergence propagates as an error.
pub fn meta_value_and_gradient(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    problem: &Arc<dyn Problem>,
    x0: &State,
    cfg: &MetaConfig,
) -> Result<MetaGradient> {
    validate_inputs(field, theta, problem, x0, cfg)?;
    let traj = integrate_fixed(field, theta, x0, cfg.t0, cfg.h, cfg.k_max)?;
    let ws = weighted_sum(problem.as_ref(), &traj.states, &cfg.weights);
    if !ws.is_finite() {
        return Err(StopTimeError::Diverged { last_finite: 0, partial: Box::new(traj) });
    }
    let k_max = cfg.k_max;
    let seed = problem.gradient(&traj.states[k_max]) * cfg.weights[k_max];
    let (weighted, _) = backward_sweep(field, theta, &traj, seed, |k| {
        let w = cfg.weights[k];
        (w != 0.0).then(|| problem.gradient(&traj.states[k]) * w)
    });

    let p = field.param_dim();
    let (stopping, n_j, stopped) = if cfg.lambda > 0.0 || cfg.criterion == MetaCriterion::Progress {
        let out = stopping_outcome(field, theta, problem, x0, cfg, cfg.lambda > 0.0)?;
        (out.dn_dtheta.unwrap_or_else(|| ParamVector::zeros(p)), out.n_j, out.stopped)
    } else {
        (ParamVector::zeros(p), 0, false)
    };
    let total = &weighted + &stopping * cfg.lambda;
    Ok(MetaGradient {
        total,
        weighted,
        stopping,
        loss: MetaLoss {
            loss: ws + cfg.lambda * n_j as f64,
            weighted_sum: ws,
            n_j,
            stopped,
            diverged: false,
        },
    })
}

/// `grad_theta [sum_k w_k f(x_k)] + lambda dN_J/dtheta`.
pub fn meta_gradient(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    problem: &Arc<dyn Problem>,
    x0: &State,
    cfg: &MetaConfig,
) -> Result<ParamVector> {
    meta_value_and_gradient(field, theta, problem, x0, cfg).map(|g| g.total)
}

/// Parametric field families available to meta-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFamily {
    DiagPreconditioner,
    Schedule(ScheduleFamily),
}

impl FieldFamily {
    pub fn param_dim(&self, d: usize) -> usize {
        match self {
            FieldFamily::DiagPreconditioner => PRECOND_FEATURES * d,
            FieldFamily::Schedule(s) => s.param_dim(),
        }
    }

    pub fn build(&self, problem: Arc<dyn Problem>) -> Result<Box<dyn DynamicsField>> {
        Ok(match self {
            FieldFamily::DiagPreconditioner => Box::new(diag_preconditioner_field(problem)),
            FieldFamily::Schedule(s) => Box::new(rescaled_gradient_field(problem, *s)?),
        })
    }
}

impl FromStr for FieldFamily {
    type Err = StopTimeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag-preconditioner" => Ok(FieldFamily::DiagPreconditioner),
            other => other.parse().map(FieldFamily::Schedule),
        }
    }
}

impl fmt::Display for FieldFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldFamily::DiagPreconditioner => f.write_str("diag-preconditioner"),
            FieldFamily::Schedule(s) => s.fmt(f),
        }
    }
}

/// Seeded synthetic logistic-regression instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticSampler {
    pub d: usize,
    pub n: usize,
    pub sparsity: f64,
    pub flip_prob: f64,
}

impl LogisticSampler {
    pub fn sample(&self, seed: u64) -> Result<Arc<dyn Problem>> {
        let (p, _) = make_logistic(self.d, self.n, self.sparsity, self.flip_prob, seed)?;
        Ok(Arc::new(p))
    }
}

/// Instance seeds drawn from an independent stream of the run seed.
pub fn instance_seeds(seed: u64, stream: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count).map(|_| rng.random()).collect()
}

pub const TRAIN_STREAM: u64 = 1;
pub const HELD_OUT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaLogRow {
    pub step: usize,
    pub mean_loss: f64,
    pub mean_n: f64,
    pub grad_norm: f64,
    /// instances that did not diverge
    pub valid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTrainResult {
    pub theta: ParamVector,
    pub log: Vec<MetaLogRow>,
    /// meta-step at which every instance in the batch diverged
    pub aborted_at: Option<usize>,
}

/// Average the meta gradient over seeded batches and update `theta`.
/// Instances start from `x0 = 0`.
pub fn meta_train<B, S>(build: B, theta_init: &ParamVector, cfg: &MetaConfig, sampler: S) -> Result<MetaTrainResult>
where
    B: Fn(Arc<dyn Problem>) -> Result<Box<dyn DynamicsField>> + Sync,
    S: Fn(u64) -> Result<Arc<dyn Problem>> + Sync,
{
    cfg.validate()?;
    let seeds = instance_seeds(cfg.seed, TRAIN_STREAM, cfg.steps * cfg.batch);
    let mut theta = theta_init.clone();
    let p = theta.len();
    let (mut m, mut v) = (ParamVector::zeros(p), ParamVector::zeros(p));
    let mut log = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let batch_seeds = &seeds[step * cfg.batch..(step + 1) * cfg.batch];
        let results: Vec<Result<MetaGradient>> = batch_seeds
            .par_iter()
            .map(|&s| {
                let problem = sampler(s)?;
                let field = build(problem.clone())?;
                let x0 = State::zeros(problem.dim());
                meta_value_and_gradient(field.as_ref(), &theta, &problem, &x0, cfg)
            })
            .collect();

        let mut grad = ParamVector::zeros(p);
        let (mut loss_sum, mut n_sum, mut valid) = (0.0, 0.0, 0usize);
        for r in results {
            match r {
                Ok(g) => {
                    grad += &g.total;
                    loss_sum += g.loss.loss;
                    n_sum += g.loss.n_j as f64;
                    valid += 1;
                }
                Err(e) if e.is_numerical() => {}
                Err(e) => return Err(e),
            }
        }
        if valid == 0 {
            log.push(MetaLogRow {
                step,
                mean_loss: f64::INFINITY,
                mean_n: f64::NAN,
                grad_norm: f64::NAN,
                valid,
            });
            return Ok(MetaTrainResult { theta, log, aborted_at: Some(step) });
        }
        grad /= valid as f64;
        log.push(MetaLogRow {
            step,
            mean_loss: loss_sum / valid as f64,
            mean_n: n_sum / valid as f64,
            grad_norm: grad.norm(),
            valid,
        });
        if cfg.eta == 0.0 {
            continue;
        }
        match cfg.optimizer {
            MetaOptimizer::Gd => theta.axpy(-cfg.eta, &grad, 1.0),
            MetaOptimizer::Adam => {
                let dir = adam_direction(&mut m, &mut v, &grad, step, 0.9, 0.999, 1e-8);
                theta.axpy(-cfg.eta, &dir, 1.0);
            }
        }
    }
    Ok(MetaTrainResult { theta, log, aborted_at: None })
}

/// Per-instance stopping index under `theta`, from `x0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeldOutResult {
    pub seed: u64,
    pub n_j: usize,
    pub stopped: bool,
    pub diverged: bool,
}

pub fn evaluate_stopping<B, S>(build: B, theta: &ParamVector, cfg: &MetaConfig, sampler: S, seeds: &[u64]) -> Result<Vec<HeldOutResult>>
where
    B: Fn(Arc<dyn Problem>) -> Result<Box<dyn DynamicsField>> + Sync,
    S: Fn(u64) -> Result<Arc<dyn Problem>> + Sync,
{
    cfg.validate()?;
    seeds
        .par_iter()
        .map(|&seed| {
            let problem = sampler(seed)?;
            let field = build(problem.clone())?;
            let x0 = State::zeros(problem.dim());
            check_dims(field.as_ref(), theta, &x0)?;
            match stopping_outcome(field.as_ref(), theta, &problem, &x0, cfg, false) {
                Ok(out) => Ok(HeldOutResult { seed, n_j: out.n_j, stopped: out.stopped, diverged: false }),
                Err(StopTimeError::Diverged { .. }) => Ok(HeldOutResult { seed, n_j: cfg.n_max, stopped: false, diverged: true }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Map diagonal-preconditioner weights trained at dimension `d_from` to
/// dimension `d_to` by broadcasting the mean per-coordinate weight vector.
pub fn broadcast_preconditioner(theta: &ParamVector, d_to: usize) -> Result<ParamVector> {
    if theta.is_empty() || !theta.len().is_multiple_of(PRECOND_FEATURES) {
        return Err(StopTimeError::contract("theta length must be a positive multiple of the feature count"));
    }
    let d_from = theta.len() / PRECOND_FEATURES;
    let mut mean = [0.0; PRECOND_FEATURES];
    for i in 0..d_from {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += theta[i * PRECOND_FEATURES + j] / d_from as f64;
        }
    }
    Ok(ParamVector::from_fn(d_to * PRECOND_FEATURES, |r, _| mean[r % PRECOND_FEATURES]))
}

/// Both sides of `d/dtheta sum_k f(x_k) = sum_k grad f(x_k)^T dx_k/dtheta`
/// written with natural weights `f(x_k) - f(x_{k-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub lhs: ParamVector,
    pub rhs: ParamVector,
    pub abs_diff: f64,
}

/// Compare the running-cost adjoint (`lhs`) against the sum of one-step
/// stopping-time sensitivities `dN_k = s_k / (f(x_{k-1}) - f(x_k))`, each
/// from forward-mode Jacobians and weighted by its decrease (`rhs`), on a
/// monotone run.
pub fn verify_decrease_identity(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    problem: &dyn Problem,
    x0: &State,
    t0: f64,
    h: f64,
    k_max: usize,
) -> Result<IdentityReport> {
    if k_max < 1 {
        return Err(StopTimeError::contract("k_max must be at least 1"));
    }
    let traj = integrate_fixed(field, theta, x0, t0, h, k_max)?;
    let f: Vec<f64> = traj.states.iter().map(|x| problem.value(x)).collect();
    if let Some(k) = (1..=k_max).find(|&k| !(f[k] < f[k - 1])) {
        return Err(StopTimeError::HypothesisViolated(format!(
            "objective not strictly decreasing at step {k}: {} -> {}",
            f[k - 1],
            f[k]
        )));
    }

    let seed = problem.gradient(&traj.states[k_max]);
    let (lhs, _) = backward_sweep(field, theta, &traj, seed, |k| Some(problem.gradient(&traj.states[k])));

    let hist = unrolled_sensitivity_history(field, theta, x0, t0, h, k_max)?.history;
    let mut rhs = ParamVector::zeros(field.param_dim());
    for k in 1..=k_max {
        let weight = f[k - 1] - f[k];
        let u: &DMatrix<f64> = &hist[k];
        let s_k = u.tr_mul(&problem.gradient(&traj.states[k]));
        let dn_k = s_k / weight;
        rhs += dn_k * weight;
    }
    let abs_diff = (&lhs - &rhs).norm();
    Ok(IdentityReport { lhs, rhs, abs_diff })
}
