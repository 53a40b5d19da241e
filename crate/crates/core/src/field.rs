//! The dynamics field `A(theta, x, t)` driving `x' = -A` and its
//! discretization `x_{k+1} = x_k - h A(theta, x_k, t_k)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Algorithm parameters `theta` (length `p`).
pub type ParamVector = DVector<f64>;
/// Optimization variable `x` (length `d`).
pub type State = DVector<f64>;

/// A parametric vector field with analytic vector-Jacobian products.
///
/// Implementations must be stateless: any dependence on time or state comes
/// through the arguments, so a field can be shared across threads.
pub trait DynamicsField: Send + Sync {
    fn param_dim(&self) -> usize;
    fn state_dim(&self) -> usize;

    fn eval(&self, theta: &ParamVector, x: &State, t: f64) -> State;

    /// `(dA/dx)^T lambda`
    fn vjp_state(&self, theta: &ParamVector, x: &State, t: f64, lambda: &State) -> State;

    /// `(dA/dtheta)^T lambda`
    fn vjp_param(&self, theta: &ParamVector, x: &State, t: f64, lambda: &State) -> ParamVector;

    /// Dense `dA/dx` (d x d). Default assembles rows from basis co-states.
    fn jacobian_state(&self, theta: &ParamVector, x: &State, t: f64) -> DMatrix<f64> {
        let d = self.state_dim();
        let mut jac = DMatrix::zeros(d, d);
        let mut e = State::zeros(d);
        for i in 0..d {
            e[i] = 1.0;
            let row = self.vjp_state(theta, x, t, &e);
            jac.row_mut(i).copy_from(&row.transpose());
            e[i] = 0.0;
        }
        jac
    }

    /// Dense `dA/dtheta` (d x p). Default assembles rows from basis co-states.
    fn jacobian_param(&self, theta: &ParamVector, x: &State, t: f64) -> DMatrix<f64> {
        let d = self.state_dim();
        let mut jac = DMatrix::zeros(d, self.param_dim());
        let mut e = State::zeros(d);
        for i in 0..d {
            e[i] = 1.0;
            let row = self.vjp_param(theta, x, t, &e);
            jac.row_mut(i).copy_from(&row.transpose());
            e[i] = 0.0;
        }
        jac
    }

    /// `(dA/dx) V` for a block of tangent columns.
    fn jvp_state_columns(
        &self,
        theta: &ParamVector,
        x: &State,
        t: f64,
        tangents: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        self.jacobian_state(theta, x, t) * tangents
    }
}

/// Guarded relative discrepancy `|a - b| / (|a| + |b| + 1e-12)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs() + 1e-12)
}

/// Guarded relative discrepancy of two vectors in the L2 norm.
pub fn relative_gap_norm(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (a.norm() + b.norm() + 1e-12)
}

/// Outcome of [`check_vjp_consistency`] with the worst observed gaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VjpReport {
    pub passed: bool,
    pub worst_state_gap: f64,
    pub worst_param_gap: f64,
}

/// Compares both VJPs against central differences of `eval` along random
/// directions. Non-finite outputs count as failures.
pub fn check_vjp_consistency(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x: &State,
    t: f64,
    trials: usize,
    tol: f64,
) -> bool {
    vjp_consistency_report(field, theta, x, t, trials, tol).passed
}

/// Same as [`check_vjp_consistency`] but reports the gaps.
pub fn vjp_consistency_report(
    field: &dyn DynamicsField,
    theta: &ParamVector,
    x: &State,
    t: f64,
    trials: usize,
    tol: f64,
) -> VjpReport {
    assert!(trials >= 1 && tol > 0.0, "trials >= 1 and tol > 0 required");
    let mut rng = ChaCha8Rng::seed_from_u64(0x0005_eed0_fa11);
    let d = field.state_dim();
    let p = field.param_dim();
    let mut worst_state: f64 = 0.0;
    let mut worst_param: f64 = 0.0;
    let mut finite = true;

    let gaussian = |n: usize, rng: &mut ChaCha8Rng| -> DVector<f64> {
        DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
    };

    for _ in 0..trials {
        let lambda = gaussian(d, &mut rng);

        let dir_x = gaussian(d, &mut rng);
        let step = 1e-6 * (1.0 + x.norm()) / dir_x.norm().max(1e-300);
        let plus = field.eval(theta, &(x + &dir_x * step), t);
        let minus = field.eval(theta, &(x - &dir_x * step), t);
        let fd = lambda.dot(&((plus - minus) / (2.0 * step)));
        let adj = field.vjp_state(theta, x, t, &lambda).dot(&dir_x);
        finite &= fd.is_finite() && adj.is_finite();
        worst_state = worst_state.max(relative_gap(fd, adj));

        if p > 0 {
            let dir_p = gaussian(p, &mut rng);
            let step = 1e-6 * (1.0 + theta.norm()) / dir_p.norm().max(1e-300);
            let plus = field.eval(&(theta + &dir_p * step), x, t);
            let minus = field.eval(&(theta - &dir_p * step), x, t);
            let fd = lambda.dot(&((plus - minus) / (2.0 * step)));
            let adj = field.vjp_param(theta, x, t, &lambda).dot(&dir_p);
            finite &= fd.is_finite() && adj.is_finite();
            worst_param = worst_param.max(relative_gap(fd, adj));
        }
    }

    VjpReport {
        passed: finite && worst_state <= tol && worst_param <= tol,
        worst_state_gap: if finite { worst_state } else { f64::INFINITY },
        worst_param_gap: if finite { worst_param } else { f64::INFINITY },
    }
}
