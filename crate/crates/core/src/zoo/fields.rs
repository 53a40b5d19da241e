//! Parametric dynamics fields built on top of a [`Problem`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StopTimeError};
use crate::field::{DynamicsField, ParamVector, State};
use crate::zoo::problems::{make_quadratic, Problem, Quadratic};

/// Step-size schedules `alpha(theta, t)` for the rescaled gradient flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleFamily {
    /// `alpha = theta_1`
    Constant,
    /// `alpha = theta_1 exp(-theta_2 (t - t0))`
    ExpDecay,
    /// `A = diag(1, theta) grad f`, two-dimensional problems only.
    DiagPair,
}

impl ScheduleFamily {
    pub fn param_dim(self) -> usize {
        match self {
            ScheduleFamily::Constant | ScheduleFamily::DiagPair => 1,
            ScheduleFamily::ExpDecay => 2,
        }
    }
}

impl FromStr for ScheduleFamily {
    type Err = StopTimeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleFamily::Constant),
            "exp-decay" => Ok(ScheduleFamily::ExpDecay),
            "diag-pair" => Ok(ScheduleFamily::DiagPair),
            other => Err(StopTimeError::contract(format!("unknown schedule family `{other}`"))),
        }
    }
}

impl fmt::Display for ScheduleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleFamily::Constant => "constant",
            ScheduleFamily::ExpDecay => "exp-decay",
            ScheduleFamily::DiagPair => "diag-pair",
        })
    }
}

/// `A(theta, x, t) = alpha(theta, t) grad f(x)` (or the two-dimensional
/// diagonal variant).
#[derive(Clone)]
pub struct RescaledGradientField {
    problem: Arc<dyn Problem>,
    family: ScheduleFamily,
    t_origin: f64,
}

pub fn rescaled_gradient_field(problem: Arc<dyn Problem>, family: ScheduleFamily) -> Result<RescaledGradientField> {
    if family == ScheduleFamily::DiagPair && problem.dim() != 2 {
        return Err(StopTimeError::contract("diag-pair family needs a two-dimensional problem"));
    }
    Ok(RescaledGradientField {
        problem,
        family,
        t_origin: 0.0,
    })
}

/// `A = theta x` on the real line (gradient flow of `x^2 / 2`).
pub fn linear_scalar_field() -> RescaledGradientField {
    let unit: Quadratic = make_quadratic(1, 1.0, false, 0).expect("valid quadratic");
    RescaledGradientField {
        problem: Arc::new(unit),
        family: ScheduleFamily::Constant,
        t_origin: 0.0,
    }
}

impl RescaledGradientField {
    /// Reference time `t0` used by the exp-decay schedule.
    pub fn with_origin(mut self, t0: f64) -> Self {
        self.t_origin = t0;
        self
    }

    pub fn family(&self) -> ScheduleFamily {
        self.family
    }

    fn alpha(&self, theta: &ParamVector, t: f64) -> f64 {
        match self.family {
            ScheduleFamily::Constant => theta[0],
            ScheduleFamily::ExpDecay => theta[0] * (-theta[1] * (t - self.t_origin)).exp(),
            ScheduleFamily::DiagPair => unreachable!("diagonal family has no scalar alpha"),
        }
    }

    fn pair_scale(theta: &ParamVector, v: &State) -> State {
        DVector::from_column_slice(&[v[0], theta[0] * v[1]])
    }
}

impl DynamicsField for RescaledGradientField {
    fn param_dim(&self) -> usize {
        self.family.param_dim()
    }

    fn state_dim(&self) -> usize {
        self.problem.dim()
    }

    fn eval(&self, theta: &ParamVector, x: &State, t: f64) -> State {
        let g = self.problem.gradient(x);
        match self.family {
            ScheduleFamily::DiagPair => Self::pair_scale(theta, &g),
            _ => g * self.alpha(theta, t),
        }
    }

    fn vjp_state(&self, theta: &ParamVector, x: &State, t: f64, lambda: &State) -> State {
        match self.family {
            ScheduleFamily::DiagPair => self.problem.hvp(x, &Self::pair_scale(theta, lambda)),
            _ => self.problem.hvp(x, lambda) * self.alpha(theta, t),
        }
    }

    fn vjp_param(&self, theta: &ParamVector, x: &State, t: f64, lambda: &State) -> ParamVector {
        let g = self.problem.gradient(x);
        match self.family {
            ScheduleFamily::Constant => DVector::from_element(1, lambda.dot(&g)),
            ScheduleFamily::ExpDecay => {
                let dt = t - self.t_origin;
                let decay = (-theta[1] * dt).exp();
                let lg = lambda.dot(&g);
                DVector::from_column_slice(&[decay * lg, -theta[0] * dt * decay * lg])
            }
            ScheduleFamily::DiagPair => DVector::from_element(1, lambda[1] * g[1]),
        }
    }

    fn jvp_state_columns(&self, theta: &ParamVector, x: &State, t: f64, tangents: &DMatrix<f64>) -> DMatrix<f64> {
        let hv = self.problem.hvp_columns(x, tangents);
        match self.family {
            ScheduleFamily::DiagPair => {
                let mut out = hv;
                out.row_mut(1).scale_mut(theta[0]);
                out
            }
            _ => hv * self.alpha(theta, t),
        }
    }
}

/// Number of per-coordinate features (and weights) of the preconditioner.
pub const PRECOND_FEATURES: usize = 10;

/// Learned diagonal preconditioner `A = diag(p(x, grad f, t)) grad f` with
/// `p_i = softplus(w_i . phi(x_i, g_i, t))` and `w_i = theta[10 i .. 10 i + 10]`.
#[derive(Clone)]
pub struct DiagPreconditionerField {
    problem: Arc<dyn Problem>,
}

pub fn diag_preconditioner_field(problem: Arc<dyn Problem>) -> DiagPreconditionerField {
    DiagPreconditionerField { problem }
}

fn sech2(u: f64) -> f64 {
    let c = u.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Feature map and its partials in `x_i` and `g_i`.
pub(crate) fn preconditioner_features(x: f64, g: f64, t: f64) -> ([f64; 10], [f64; 10], [f64; 10]) {
    let phi = [
        1.0,
        x.tanh(),
        g.tanh(),
        (x * g).tanh(),
        g.abs().tanh(),
        (-t).exp(),
        t / (1.0 + t),
        (x * x).tanh(),
        (g * g).tanh(),
        (x + g).tanh(),
    ];
    let s_xg = sech2(x * g);
    let s_sum = sech2(x + g);
    let dx = [
        0.0,
        sech2(x),
        0.0,
        g * s_xg,
        0.0,
        0.0,
        0.0,
        2.0 * x * sech2(x * x),
        0.0,
        s_sum,
    ];
    let dg = [
        0.0,
        0.0,
        sech2(g),
        x * s_xg,
        if g == 0.0 { 0.0 } else { g.signum() * sech2(g) },
        0.0,
        0.0,
        0.0,
        2.0 * g * sech2(g * g),
        s_sum,
    ];
    (phi, dx, dg)
}

/// Per-coordinate linearization of the preconditioned field.
struct Local {
    g: State,
    scale: DVector<f64>,
    /// `d p_i / d s_i`
    slope: DVector<f64>,
    /// direct `dA_i/dx_i` (through the features' x-dependence)
    direct: DVector<f64>,
    /// `dA_i/dg_i`
    through_grad: DVector<f64>,
    phi: Vec<[f64; 10]>,
}

impl DiagPreconditionerField {
    fn check_theta(&self, theta: &ParamVector) {
        assert_eq!(
            theta.len(),
            PRECOND_FEATURES * self.problem.dim(),
            "diag preconditioner expects theta of length 10 d"
        );
    }

    fn local(&self, theta: &ParamVector, x: &State, t: f64) -> Local {
        self.check_theta(theta);
        let d = self.problem.dim();
        let g = self.problem.gradient(x);
        let mut scale = DVector::zeros(d);
        let mut slope = DVector::zeros(d);
        let mut direct = DVector::zeros(d);
        let mut through_grad = DVector::zeros(d);
        let mut phis = Vec::with_capacity(d);
        for i in 0..d {
            let w = theta.rows(PRECOND_FEATURES * i, PRECOND_FEATURES);
            let (phi, dx, dg) = preconditioner_features(x[i], g[i], t);
            let s: f64 = (0..PRECOND_FEATURES).map(|j| w[j] * phi[j]).sum();
            let ws_dx: f64 = (0..PRECOND_FEATURES).map(|j| w[j] * dx[j]).sum();
            let ws_dg: f64 = (0..PRECOND_FEATURES).map(|j| w[j] * dg[j]).sum();
            let sig = logistic(s);
            scale[i] = softplus(s);
            slope[i] = sig;
            direct[i] = sig * ws_dx * g[i];
            through_grad[i] = sig * ws_dg * g[i] + scale[i];
            phis.push(phi);
        }
        Local {
            g,
            scale,
            slope,
            direct,
            through_grad,
            phi: phis,
        }
    }

    /// Preconditioner values `p_i` at a point.
    pub fn scales(&self, theta: &ParamVector, x: &State, t: f64) -> DVector<f64> {
        self.local(theta, x, t).scale
    }
}

impl DynamicsField for DiagPreconditionerField {
    fn param_dim(&self) -> usize {
        PRECOND_FEATURES * self.problem.dim()
    }

    fn state_dim(&self) -> usize {
        self.problem.dim()
    }

    fn eval(&self, theta: &ParamVector, x: &State, t: f64) -> State {
        self.check_theta(theta);
        let g = self.problem.gradient(x);
        DVector::from_fn(g.len(), |i, _| {
            let w = theta.rows(PRECOND_FEATURES * i, PRECOND_FEATURES);
            let (phi, _, _) = preconditioner_features(x[i], g[i], t);
            let s: f64 = (0..PRECOND_FEATURES).map(|j| w[j] * phi[j]).sum();
            softplus(s) * g[i]
        })
    }

    fn vjp_state(&self, theta: &ParamVector, x: &State, t: f64, lambda: &State) -> State {
        let loc = self.local(theta, x, t);
        let weighted = loc.through_grad.component_mul(lambda);
        loc.direct.component_mul(lambda) + self.problem.hvp(x, &weighted)
    }

    fn vjp_param(&self, theta: &ParamVector, x: &State, t: f64, lambda: &State) -> ParamVector {
        let loc = self.local(theta, x, t);
        let mut out = ParamVector::zeros(self.param_dim());
        for i in 0..loc.g.len() {
            let c = lambda[i] * loc.slope[i] * loc.g[i];
            for j in 0..PRECOND_FEATURES {
                out[PRECOND_FEATURES * i + j] = c * loc.phi[i][j];
            }
        }
        out
    }

    fn jacobian_param(&self, theta: &ParamVector, x: &State, t: f64) -> DMatrix<f64> {
        let loc = self.local(theta, x, t);
        let d = loc.g.len();
        let mut jac = DMatrix::zeros(d, self.param_dim());
        for i in 0..d {
            let c = loc.slope[i] * loc.g[i];
            for j in 0..PRECOND_FEATURES {
                jac[(i, PRECOND_FEATURES * i + j)] = c * loc.phi[i][j];
            }
        }
        jac
    }

    fn jacobian_state(&self, theta: &ParamVector, x: &State, t: f64) -> DMatrix<f64> {
        let loc = self.local(theta, x, t);
        let d = loc.g.len();
        let hess = self.problem.hvp_columns(x, &DMatrix::identity(d, d));
        let mut jac = hess;
        for i in 0..d {
            jac.row_mut(i).scale_mut(loc.through_grad[i]);
            jac[(i, i)] += loc.direct[i];
        }
        jac
    }

    fn jvp_state_columns(&self, theta: &ParamVector, x: &State, t: f64, tangents: &DMatrix<f64>) -> DMatrix<f64> {
        let loc = self.local(theta, x, t);
        let mut out = self.problem.hvp_columns(x, tangents);
        for i in 0..loc.g.len() {
            let b = loc.through_grad[i];
            let a = loc.direct[i];
            for j in 0..out.ncols() {
                out[(i, j)] = b * out[(i, j)] + a * tangents[(i, j)];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{check_vjp_consistency, vjp_consistency_report};
    use crate::zoo::problems::{make_logistic, make_quadratic, smooth_svm, synthetic_classification};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, rng: &mut ChaCha8Rng, scale: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| scale * Distribution::<f64>::sample(&StandardNormal, rng))
    }

    #[test]
    fn constant_family_is_gradient_flow() {
        let quad: Arc<dyn Problem> = Arc::new(make_quadratic(3, 9.0, true, 1).unwrap());
        let field = rescaled_gradient_field(quad.clone(), ScheduleFamily::Constant).unwrap();
        let x = DVector::from_column_slice(&[0.2, -1.0, 3.0]);
        assert_eq!(field.eval(&DVector::from_element(1, 1.0), &x, 0.7), quad.gradient(&x));
    }

    #[test]
    fn exp_decay_at_origin() {
        let quad: Arc<dyn Problem> = Arc::new(make_quadratic(2, 4.0, false, 0).unwrap());
        let field = rescaled_gradient_field(quad.clone(), ScheduleFamily::ExpDecay).unwrap().with_origin(0.5);
        let x = DVector::from_column_slice(&[1.0, 1.0]);
        for theta2 in [0.0, 3.0, -7.0] {
            let theta = DVector::from_column_slice(&[2.0, theta2]);
            assert_eq!(field.eval(&theta, &x, 0.5), quad.gradient(&x) * 2.0);
        }
    }

    #[test]
    fn exp_decay_param_vjp_by_hand() {
        let quad: Arc<dyn Problem> = Arc::new(make_quadratic(2, 4.0, false, 0).unwrap());
        let field = rescaled_gradient_field(quad.clone(), ScheduleFamily::ExpDecay).unwrap();
        let x = DVector::from_column_slice(&[1.0, -0.5]);
        let lam = DVector::from_column_slice(&[0.3, 0.7]);
        let theta = DVector::from_column_slice(&[1.5, 0.4]);
        let t = 1.25;
        let lg = lam.dot(&quad.gradient(&x));
        let e = (-0.4f64 * t).exp();
        let got = field.vjp_param(&theta, &x, t, &lam);
        assert!((got[0] - e * lg).abs() < 1e-15);
        assert!((got[1] + 1.5 * t * e * lg).abs() < 1e-15);
        assert!(check_vjp_consistency(&field, &theta, &x, t, 10, 1e-6));
    }

    #[test]
    fn unknown_family_tag() {
        assert!("cosine".parse::<ScheduleFamily>().is_err());
        assert_eq!("exp-decay".parse::<ScheduleFamily>().unwrap(), ScheduleFamily::ExpDecay);
        let quad: Arc<dyn Problem> = Arc::new(make_quadratic(3, 4.0, false, 0).unwrap());
        assert!(rescaled_gradient_field(quad, ScheduleFamily::DiagPair).is_err());
    }

    #[test]
    fn preconditioner_at_zero_theta_is_ln2() {
        let quad: Arc<dyn Problem> = Arc::new(make_quadratic(5, 10.0, true, 0).unwrap());
        let field = diag_preconditioner_field(quad);
        let x = DVector::from_column_slice(&[1.0, -2.0, 0.5, 0.0, 3.0]);
        let p = field.scales(&DVector::zeros(50), &x, 0.3);
        for v in p.iter() {
            assert_eq!(*v, std::f64::consts::LN_2);
        }
    }

    #[test]
    fn preconditioner_is_a_descent_field() {
        let quad: Arc<dyn Problem> = Arc::new(make_quadratic(6, 50.0, true, 4).unwrap());
        let field = diag_preconditioner_field(quad.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let theta = gaussian(60, &mut rng, 3.0);
            let x = gaussian(6, &mut rng, 1.0);
            let p = field.scales(&theta, &x, 0.5);
            assert!(p.iter().all(|v| *v > 0.0));
            assert!(field.eval(&theta, &x, 0.5).dot(&quad.gradient(&x)) > 0.0);
        }
    }

    #[test]
    fn preconditioner_jacobians_match_vjps() {
        let quad: Arc<dyn Problem> = Arc::new(make_quadratic(4, 10.0, true, 5).unwrap());
        let field = diag_preconditioner_field(quad);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = gaussian(40, &mut rng, 0.5);
        let x = gaussian(4, &mut rng, 1.0);
        let lam = gaussian(4, &mut rng, 1.0);
        let jx = field.jacobian_state(&theta, &x, 0.2);
        let jt = field.jacobian_param(&theta, &x, 0.2);
        assert!((jx.transpose() * &lam - field.vjp_state(&theta, &x, 0.2, &lam)).norm() < 1e-12);
        assert!((jt.transpose() * &lam - field.vjp_param(&theta, &x, 0.2, &lam)).norm() < 1e-12);
        let v = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0));
        assert!((&jx * &v - field.jvp_state_columns(&theta, &x, 0.2, &v)).norm() < 1e-12);
    }

    #[test]
    fn every_field_passes_vjp_suite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let quad: Arc<dyn Problem> = Arc::new(make_quadratic(10, 10.0, true, 0).unwrap());
        let (logi, _) = make_logistic(6, 30, 0.5, 0.05, 2).unwrap();
        let logi: Arc<dyn Problem> = Arc::new(logi);
        let svm: Arc<dyn Problem> =
            Arc::new(smooth_svm(synthetic_classification(5, 20, 0.5, 0.05, 1).unwrap(), 0.01).unwrap());
        let pair: Arc<dyn Problem> = Arc::new(Quadratic::from_diagonal(DVector::from_column_slice(&[1.0, 4.0])));

        let mut fields: Vec<Box<dyn DynamicsField>> = Vec::new();
        for p in [&quad, &logi, &svm] {
            fields.push(Box::new(diag_preconditioner_field(p.clone())));
            fields.push(Box::new(rescaled_gradient_field(p.clone(), ScheduleFamily::Constant).unwrap()));
            fields.push(Box::new(rescaled_gradient_field(p.clone(), ScheduleFamily::ExpDecay).unwrap()));
        }
        fields.push(Box::new(rescaled_gradient_field(pair, ScheduleFamily::DiagPair).unwrap()));

        for field in &fields {
            for _ in 0..20 {
                let theta = gaussian(field.param_dim(), &mut rng, 0.5);
                let x = gaussian(field.state_dim(), &mut rng, 1.0);
                let t: f64 = StandardNormal.sample(&mut rng);
                let report = vjp_consistency_report(field.as_ref(), &theta, &x, t.abs(), 3, 1e-5);
                assert!(report.passed, "{report:?}");
            }
        }
    }
}
