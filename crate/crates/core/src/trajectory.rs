use crate::criterion::StoppingCriterion;
use crate::field::{ParamVector, State};

/// A stored forward-Euler run `x_0 .. x_N` on the grid `t_k = t0 + k h`.
///
/// `j_values` holds `J(x_k)` for every stored state when the run was driven
/// by a criterion; horizon runs leave it empty until [`Trajectory::evaluate`]
/// is called.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub h: f64,
    pub states: Vec<State>,
    pub j_values: Vec<f64>,
    pub nfe: usize,
}

impl Trajectory {
    /// Number of steps `N` (states minus one).
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds at least x_0")
    }

    /// Fill `j_values` from a criterion.
    pub fn evaluate(&mut self, criterion: &dyn StoppingCriterion) {
        self.j_values = self.states.iter().map(|x| criterion.eval(x)).collect();
    }
}

/// Where (and whether) a run first met its stopping criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopReport {
    pub stopped: bool,
    pub n: usize,
    pub n_max: usize,
}

/// Stopping-time sensitivities: the adjoint numerators and the assembled
/// derivatives of `N` (in time units, i.e. scaled by `h`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivities {
    pub s_theta: ParamVector,
    pub s_x0: State,
    pub dn_dtheta: ParamVector,
    pub dn_dx0: State,
}
