//! Meta-training driver with held-out and scaled-up evaluation.

use std::sync::Arc;

use rayon::prelude::*;

use crate::bench::config::L2oConfig;
use crate::bench::validate::default_theta;
use crate::error::{Result, StopTimeError};
use crate::euler::integrate_fixed;
use crate::field::{ParamVector, State};
use crate::meta::{
    broadcast_preconditioner, evaluate_stopping, instance_seeds, meta_train, uniform_weights, FieldFamily,
    HeldOutResult, LogisticSampler, MetaConfig, MetaLogRow, HELD_OUT_STREAM,
};
use crate::zoo::Problem;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `same` or `scaled`
    pub split: String,
    /// `init` or `final`
    pub which: String,
    pub results: Vec<HeldOutResult>,
    /// `f(x_k)` for `k = 0..=curve_len`, per instance
    pub curves: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn mean_n(&self) -> f64 {
        self.results.iter().map(|r| r.n_j as f64).sum::<f64>() / self.results.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2oReport {
    pub theta_init: ParamVector,
    pub theta_final: ParamVector,
    pub log: Vec<MetaLogRow>,
    pub aborted_at: Option<usize>,
    pub evaluations: Vec<Evaluation>,
}

impl L2oReport {
    pub fn evaluation(&self, split: &str, which: &str) -> Option<&Evaluation> {
        self.evaluations.iter().find(|e| e.split == split && e.which == which)
    }
}

pub fn meta_config(cfg: &L2oConfig) -> Result<MetaConfig> {
    let config_err = |e: StopTimeError| StopTimeError::Config(e.to_string());
    let weights = if cfg.weights.is_empty() { uniform_weights(cfg.k_max) } else { cfg.weights.clone() };
    let meta = MetaConfig {
        k_max: cfg.k_max,
        weights,
        lambda: cfg.lambda,
        epsilon: cfg.epsilon,
        eta: cfg.eta,
        batch: cfg.batch,
        steps: cfg.steps,
        seed: cfg.seed,
        h: cfg.h,
        t0: 0.0,
        n_max: cfg.n_max,
        criterion: cfg.criterion.parse().map_err(config_err)?,
        optimizer: cfg.optimizer.parse().map_err(config_err)?,
    };
    meta.validate().map_err(config_err)?;
    Ok(meta)
}

fn curves(family: FieldFamily, theta: &ParamVector, sampler: &LogisticSampler, seeds: &[u64], meta: &MetaConfig, len: usize) -> Result<Vec<Vec<f64>>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let problem = sampler.sample(seed)?;
            let field = family.build(problem.clone())?;
            let x0 = State::zeros(problem.dim());
            let states = match integrate_fixed(field.as_ref(), theta, &x0, meta.t0, meta.h, len) {
                Ok(traj) => traj.states,
                Err(StopTimeError::Diverged { partial, .. }) => partial.states,
                Err(e) => return Err(e),
            };
            Ok(states.iter().map(|x| problem.value(x)).collect())
        })
        .collect()
}

fn transfer(family: FieldFamily, theta: &ParamVector, d_to: usize) -> Result<ParamVector> {
    match family {
        FieldFamily::DiagPreconditioner => broadcast_preconditioner(theta, d_to),
        FieldFamily::Schedule(_) => Ok(theta.clone()),
    }
}

pub fn run_l2o(cfg: &L2oConfig) -> Result<L2oReport> {
    let meta = meta_config(cfg)?;
    let family: FieldFamily = cfg.family.parse().map_err(|e: StopTimeError| StopTimeError::Config(e.to_string()))?;
    let sampler = LogisticSampler { d: cfg.d, n: cfg.n, sparsity: cfg.sparsity, flip_prob: cfg.flip_prob };
    let build = |p: Arc<dyn Problem>| family.build(p);
    let theta_init = default_theta(family, cfg.d);

    let trained = meta_train(build, &theta_init, &meta, |s| sampler.sample(s))?;
    let held = instance_seeds(cfg.seed, HELD_OUT_STREAM, cfg.held_out);

    let mut splits = vec![("same", sampler)];
    if cfg.scale_up > 0 {
        let big = LogisticSampler { d: cfg.d * cfg.scale_up, n: cfg.n * cfg.scale_up, ..sampler };
        splits.push(("scaled", big));
    }
    let mut evaluations = Vec::new();
    for (split, s) in splits {
        for (which, theta) in [("init", &theta_init), ("final", &trained.theta)] {
            let theta = transfer(family, theta, s.d)?;
            let results = evaluate_stopping(build, &theta, &meta, |seed| s.sample(seed), &held)?;
            let curves = curves(family, &theta, &s, &held, &meta, cfg.curve_len)?;
            evaluations.push(Evaluation { split: split.into(), which: which.into(), results, curves });
        }
    }
    Ok(L2oReport {
        theta_init,
        theta_final: trained.theta,
        log: trained.log,
        aborted_at: trained.aborted_at,
        evaluations,
    })
}
