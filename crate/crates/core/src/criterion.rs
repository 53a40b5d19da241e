//! Stopping criteria `J(x) <= eps`.

use std::sync::Arc;

use crate::field::State;
use crate::zoo::Problem;

/// A differentiable scalar progress measure with its target level.
pub trait StoppingCriterion: Send + Sync {
    fn eval(&self, x: &State) -> f64;
    fn grad(&self, x: &State) -> State;
    fn target(&self) -> f64;

    fn reached(&self, x: &State) -> bool {
        self.eval(x) <= self.target()
    }
}

/// `J(x) = ||x||^2`.
#[derive(Debug, Clone, Copy)]
pub struct SquaredNorm {
    pub eps: f64,
}

impl StoppingCriterion for SquaredNorm {
    fn eval(&self, x: &State) -> f64 {
        x.norm_squared()
    }
    fn grad(&self, x: &State) -> State {
        x * 2.0
    }
    fn target(&self) -> f64 {
        self.eps
    }
}

/// `J(x) = f(x)`.
#[derive(Clone)]
pub struct ObjectiveValue {
    pub problem: Arc<dyn Problem>,
    pub eps: f64,
}

impl StoppingCriterion for ObjectiveValue {
    fn eval(&self, x: &State) -> f64 {
        self.problem.value(x)
    }
    fn grad(&self, x: &State) -> State {
        self.problem.gradient(x)
    }
    fn target(&self) -> f64 {
        self.eps
    }
}

/// `J(x) = ||grad f(x)||^2`, with `grad J = 2 H grad f`.
#[derive(Clone)]
pub struct GradNormSquared {
    pub problem: Arc<dyn Problem>,
    pub eps: f64,
}

impl StoppingCriterion for GradNormSquared {
    fn eval(&self, x: &State) -> f64 {
        self.problem.gradient(x).norm_squared()
    }
    fn grad(&self, x: &State) -> State {
        let g = self.problem.gradient(x);
        self.problem.hvp(x, &g) * 2.0
    }
    fn target(&self) -> f64 {
        self.eps
    }
}

/// Per-step decrease on the augmented state `z = (x_k, x_{k-1})`:
/// `J(z) = f(x_{k-1}) - f(x_k)`.
#[derive(Clone)]
pub struct ProgressDecrease {
    pub problem: Arc<dyn Problem>,
    pub eps: f64,
}

impl ProgressDecrease {
    fn halves(&self, z: &State) -> (State, State) {
        let d = self.problem.dim();
        assert_eq!(z.len(), 2 * d, "augmented state must have length 2d");
        (z.rows(0, d).into_owned(), z.rows(d, d).into_owned())
    }
}

impl StoppingCriterion for ProgressDecrease {
    fn eval(&self, z: &State) -> f64 {
        let (cur, prev) = self.halves(z);
        self.problem.value(&prev) - self.problem.value(&cur)
    }
    fn grad(&self, z: &State) -> State {
        let d = self.problem.dim();
        let (cur, prev) = self.halves(z);
        let mut g = State::zeros(2 * d);
        g.rows_mut(0, d).copy_from(&(-self.problem.gradient(&cur)));
        g.rows_mut(d, d).copy_from(&self.problem.gradient(&prev));
        g
    }
    fn target(&self) -> f64 {
        self.eps
    }
}
