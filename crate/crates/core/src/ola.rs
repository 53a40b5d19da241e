//! Adam with online learning-rate adaptation driven by the one-step
//! truncated stopping-time sensitivity
//! `S_k = grad f(x_{k+1}) . d_k / (f(x_{k+1}) - f(x_k))`.

use crate::error::{Result, StopTimeError};
use crate::field::State;
use crate::trajectory::Trajectory;
use crate::zoo::{adam_direction, Problem};

/// Lower bound applied to the adapted learning rate.
pub const ALPHA_FLOOR: f64 = 1e-12;
pub const DEFAULT_MAX_ITERS: usize = 1000;
pub const DEFAULT_GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlaHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
    pub eta_adapt: f64,
    pub eps_desc: f64,
}

impl Default for OlaHyper {
    fn default() -> Self {
        OlaHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps_stab: 1e-8,
            eta_adapt: 1e-2,
            eps_desc: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlaState {
    pub x: State,
    pub m: State,
    pub v: State,
    pub k: usize,
    pub alpha_curr: f64,
    pub x_ref: State,
    pub f_ref: f64,
    pub n_updates: usize,
    f_curr: f64,
    g_curr: Option<State>,
}

impl OlaState {
    pub fn new(problem: &dyn Problem, x0: &State, alpha0: f64) -> Result<Self> {
        if x0.len() != problem.dim() {
            return Err(StopTimeError::contract(format!(
                "x0 has length {}, problem expects {}",
                x0.len(),
                problem.dim()
            )));
        }
        if !alpha0.is_finite() {
            return Err(StopTimeError::contract("initial learning rate must be finite"));
        }
        let f0 = problem.value(x0);
        let d = x0.len();
        Ok(OlaState {
            x: x0.clone(),
            m: State::zeros(d),
            v: State::zeros(d),
            k: 0,
            alpha_curr: alpha0,
            x_ref: x0.clone(),
            f_ref: f0,
            n_updates: 0,
            f_curr: f0,
            g_curr: None,
        })
    }

    /// `f(x_k)` as cached from the previous step.
    pub fn f_current(&self) -> f64 {
        self.f_curr
    }

    fn gradient(&mut self, problem: &dyn Problem) -> State {
        match self.g_curr.take() {
            Some(g) => g,
            None => problem.gradient(&self.x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub f_prev: f64,
    pub f_next: f64,
    pub alpha_before: f64,
    pub alpha_after: f64,
    pub triggered: bool,
    /// `grad f(x_{k+1}) . d_k`, present when the trigger fired
    pub grad_dot_dir: Option<f64>,
    pub s_k: Option<f64>,
}

fn snapshot(state: &OlaState) -> StopTimeError {
    StopTimeError::Diverged {
        last_finite: state.k,
        partial: Box::new(Trajectory {
            t0: 0.0,
            h: 1.0,
            states: vec![state.x.clone()],
            j_values: vec![state.f_curr],
            nfe: 0,
        }),
    }
}

/// One iteration of Adam-OLA, advancing `state` in place.
pub fn ola_step(state: &mut OlaState, problem: &dyn Problem, hyper: &OlaHyper) -> Result<StepRecord> {
    let k = state.k;
    let g = state.gradient(problem);
    if !g.iter().all(|v| v.is_finite()) {
        return Err(snapshot(state));
    }
    let dir = adam_direction(&mut state.m, &mut state.v, &g, k, hyper.beta1, hyper.beta2, hyper.eps_stab);
    let f_prev = state.f_curr;
    let x_next = &state.x - &dir * state.alpha_curr;
    let f_next = problem.value(&x_next);
    if !f_next.is_finite() {
        return Err(snapshot(state));
    }
    let alpha_before = state.alpha_curr;

    let mut record = StepRecord {
        k,
        f_prev,
        f_next,
        alpha_before,
        alpha_after: alpha_before,
        triggered: false,
        grad_dot_dir: None,
        s_k: None,
    };

    let threshold = if state.n_updates == 0 {
        0.0
    } else {
        hyper.eps_desc * state.n_updates as f64
    };
    if state.f_ref - f_next > threshold {
        record.triggered = true;
        let g_new = problem.gradient(&x_next);
        let delta_f = f_next - f_prev;
        let gd = g_new.dot(&dir);
        record.grad_dot_dir = Some(gd);
        if delta_f != 0.0 {
            let s = gd / delta_f;
            state.alpha_curr = (state.alpha_curr - hyper.eta_adapt * s).max(ALPHA_FLOOR);
            record.s_k = Some(s);
        }
        state.x_ref = x_next.clone();
        state.f_ref = f_next;
        state.n_updates += 1;
        state.g_curr = Some(g_new);
    }
    record.alpha_after = state.alpha_curr;

    state.x = x_next;
    state.f_curr = f_next;
    state.k += 1;
    Ok(record)
}

#[derive(Debug, Clone)]
pub struct OlaRun {
    /// `x_0, x_1, ...`, one entry per visited iterate
    pub iterates: Vec<State>,
    pub f_history: Vec<f64>,
    /// learning rate in force when each iterate was reached
    pub alpha_history: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub converged: bool,
}

/// Run Adam-OLA until `|grad f(x_k)| <= grad_tol` or `max_iters` steps.
///
/// A non-finite objective or gradient yields `Diverged` whose partial
/// trajectory holds the iterates and, in `j_values`, the objective values.
pub fn ola_run(
    problem: &dyn Problem,
    x0: &State,
    alpha0: f64,
    hyper: &OlaHyper,
    max_iters: usize,
    grad_tol: f64,
) -> Result<OlaRun> {
    if max_iters == 0 {
        return Err(StopTimeError::contract("max_iters must be at least 1"));
    }
    let mut state = OlaState::new(problem, x0, alpha0)?;
    let mut run = OlaRun {
        iterates: vec![x0.clone()],
        f_history: vec![state.f_curr],
        alpha_history: vec![alpha0],
        records: Vec::new(),
        converged: false,
    };
    let diverged = |run: &OlaRun| StopTimeError::Diverged {
        last_finite: run.iterates.len() - 1,
        partial: Box::new(Trajectory {
            t0: 0.0,
            h: 1.0,
            states: run.iterates.clone(),
            j_values: run.f_history.clone(),
            nfe: run.iterates.len(),
        }),
    };
    if !state.f_curr.is_finite() {
        return Err(diverged(&run));
    }

    for _ in 0..max_iters {
        let g = state.gradient(problem);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(diverged(&run));
        }
        if g.norm() <= grad_tol {
            run.converged = true;
            break;
        }
        state.g_curr = Some(g);
        let rec = match ola_step(&mut state, problem, hyper) {
            Ok(rec) => rec,
            Err(StopTimeError::Diverged { .. }) => return Err(diverged(&run)),
            Err(e) => return Err(e),
        };
        run.iterates.push(state.x.clone());
        run.f_history.push(rec.f_next);
        run.alpha_history.push(rec.alpha_after);
        run.records.push(rec);
    }
    Ok(run)
}
