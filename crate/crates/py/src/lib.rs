//! Python bindings. Vectors cross the boundary as lists of floats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stoptime::meta::FieldFamily;
use stoptime::ola::OlaHyper;
use stoptime::zoo::{self, Problem as CoreProblem};
use stoptime::{
    DynamicsField, GradNormSquared, ObjectiveValue, ParamVector, SolverOptions, SquaredNorm, State, StopTimeError,
    StoppingCriterion,
};

fn to_py(err: StopTimeError) -> PyErr {
    match err {
        StopTimeError::Io { .. } | StopTimeError::Parse { .. } | StopTimeError::EmptyDataset => {
            PyOSError::new_err(err.to_string())
        }
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn vector(v: Vec<f64>) -> State {
    State::from_vec(v)
}

fn list(v: &State) -> Vec<f64> {
    v.as_slice().to_vec()
}

fn check_len(name: &str, v: &[f64], want: usize) -> PyResult<()> {
    if v.len() == want {
        Ok(())
    } else {
        Err(PyValueError::new_err(format!("{name} has length {}, expected {want}", v.len())))
    }
}

/// A smooth objective with gradient and Hessian-vector products.
#[pyclass(frozen, module = "pystoptime")]
struct Problem {
    inner: Arc<dyn CoreProblem>,
}

#[pymethods]
impl Problem {
    /// `0.5 x^T Q x` with spectrum in `[1, cond]`.
    #[staticmethod]
    #[pyo3(signature = (d, cond, rotated = false, seed = 0))]
    fn quadratic(d: usize, cond: f64, rotated: bool, seed: u64) -> PyResult<Self> {
        let q = zoo::make_quadratic(d, cond, rotated, seed).map_err(to_py)?;
        Ok(Problem { inner: Arc::new(q) })
    }

    /// Logistic regression on seeded synthetic data.
    #[staticmethod]
    #[pyo3(signature = (d, n, sparsity = 0.1, flip_prob = 0.05, seed = 0))]
    fn logistic(d: usize, n: usize, sparsity: f64, flip_prob: f64, seed: u64) -> PyResult<Self> {
        let (p, _) = zoo::make_logistic(d, n, sparsity, flip_prob, seed).map_err(to_py)?;
        Ok(Problem { inner: Arc::new(p) })
    }

    /// Smooth-hinge SVM on seeded synthetic data with an intercept column.
    #[staticmethod]
    #[pyo3(signature = (d, n, sparsity = 0.1, flip_prob = 0.05, reg = 1e-2, seed = 0))]
    fn smooth_svm(d: usize, n: usize, sparsity: f64, flip_prob: f64, reg: f64, seed: u64) -> PyResult<Self> {
        let data = zoo::synthetic_classification(d, n, sparsity, flip_prob, seed).map_err(to_py)?;
        let p = zoo::smooth_svm(data.with_intercept(), reg).map_err(to_py)?;
        Ok(Problem { inner: Arc::new(p) })
    }

    /// Smooth-hinge SVM on a LIBSVM text file.
    #[staticmethod]
    #[pyo3(signature = (path, reg = 1e-2))]
    fn smooth_svm_file(path: &str, reg: f64) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        let data = zoo::parse_libsvm(BufReader::new(file), None).map_err(to_py)?;
        let p = zoo::smooth_svm(data, reg).map_err(to_py)?;
        Ok(Problem { inner: Arc::new(p) })
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        check_len("x", &x, self.inner.dim())?;
        Ok(self.inner.value(&vector(x)))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        check_len("x", &x, self.inner.dim())?;
        Ok(list(&self.inner.gradient(&vector(x))))
    }

    fn hvp(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        check_len("x", &x, self.inner.dim())?;
        check_len("v", &v, self.inner.dim())?;
        Ok(list(&self.inner.hvp(&vector(x), &vector(v))))
    }

    /// Power-iteration estimate of the largest Hessian eigenvalue at `x`.
    fn lipschitz(&self, x: Vec<f64>) -> PyResult<f64> {
        check_len("x", &x, self.inner.dim())?;
        Ok(zoo::estimate_lipschitz(self.inner.as_ref(), &vector(x)))
    }
}

/// A parametric dynamics field `A(theta, x, t)`.
#[pyclass(frozen, module = "pystoptime")]
struct Field {
    inner: Arc<dyn DynamicsField>,
}

impl Field {
    fn args(&self, theta: Vec<f64>, x: Vec<f64>) -> PyResult<(ParamVector, State)> {
        check_len("theta", &theta, self.inner.param_dim())?;
        check_len("x", &x, self.inner.state_dim())?;
        Ok((vector(theta), vector(x)))
    }
}

#[pymethods]
impl Field {
    /// Field by family name: `diag-preconditioner`, `constant`, `exp-decay`
    /// or `diag-pair`.
    #[staticmethod]
    fn build(family: &str, problem: &Problem) -> PyResult<Self> {
        let family: FieldFamily = family.parse().map_err(to_py)?;
        let field = family.build(problem.inner.clone()).map_err(to_py)?;
        Ok(Field { inner: Arc::from(field) })
    }

    /// `A = theta x` on the real line.
    #[staticmethod]
    fn linear_scalar() -> Self {
        Field { inner: Arc::new(zoo::linear_scalar_field()) }
    }

    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[pyo3(signature = (theta, x, t = 0.0))]
    fn eval(&self, theta: Vec<f64>, x: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        let (theta, x) = self.args(theta, x)?;
        Ok(list(&self.inner.eval(&theta, &x, t)))
    }

    #[pyo3(signature = (theta, x, lam, t = 0.0))]
    fn vjp_state(&self, theta: Vec<f64>, x: Vec<f64>, lam: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        let (theta, x) = self.args(theta, x)?;
        check_len("lam", &lam, self.inner.state_dim())?;
        Ok(list(&self.inner.vjp_state(&theta, &x, t, &vector(lam))))
    }

    #[pyo3(signature = (theta, x, lam, t = 0.0))]
    fn vjp_param(&self, theta: Vec<f64>, x: Vec<f64>, lam: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        let (theta, x) = self.args(theta, x)?;
        check_len("lam", &lam, self.inner.state_dim())?;
        Ok(list(&self.inner.vjp_param(&theta, &x, t, &vector(lam))))
    }
}

/// A stopping criterion `J(x) <= eps`.
#[pyclass(frozen, module = "pystoptime")]
struct Criterion {
    inner: Arc<dyn StoppingCriterion>,
}

#[pymethods]
impl Criterion {
    /// `J(x) = |x|^2`
    #[staticmethod]
    fn squared_norm(eps: f64) -> Self {
        Criterion { inner: Arc::new(SquaredNorm { eps }) }
    }

    /// `J(x) = f(x)`
    #[staticmethod]
    fn objective(problem: &Problem, eps: f64) -> Self {
        Criterion { inner: Arc::new(ObjectiveValue { problem: problem.inner.clone(), eps }) }
    }

    /// `J(x) = |grad f(x)|^2`
    #[staticmethod]
    fn grad_norm(problem: &Problem, eps: f64) -> Self {
        Criterion { inner: Arc::new(GradNormSquared { problem: problem.inner.clone(), eps }) }
    }

    fn value(&self, x: Vec<f64>) -> f64 {
        self.inner.eval(&vector(x))
    }

    fn gradient(&self, x: Vec<f64>) -> Vec<f64> {
        list(&self.inner.grad(&vector(x)))
    }
}

/// Forward Euler until the criterion holds. Returns `n`, `stopped`, the
/// criterion values and the final state.
#[pyfunction]
#[pyo3(signature = (field, theta, x0, h, criterion, t0 = 0.0, n_max = 1_000_000))]
#[allow(clippy::too_many_arguments)]
fn integrate_until_stop<'py>(
    py: Python<'py>,
    field: &Field,
    theta: Vec<f64>,
    x0: Vec<f64>,
    h: f64,
    criterion: &Criterion,
    t0: f64,
    n_max: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let (theta, x0) = field.args(theta, x0)?;
    let (traj, rep) = stoptime::integrate_until_stop(field.inner.as_ref(), &theta, &x0, t0, h, criterion.inner.as_ref(), n_max)
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("n", rep.n)?;
    out.set_item("stopped", rep.stopped)?;
    out.set_item("j_values", traj.j_values.clone())?;
    out.set_item("x_final", list(traj.last()))?;
    out.set_item("nfe", traj.nfe)?;
    Ok(out)
}

/// Stopping index and its adjoint sensitivities `dN/dtheta`, `dN/dx0`
/// (time units).
#[pyfunction]
#[pyo3(signature = (field, theta, x0, h, criterion, t0 = 0.0, n_max = 1_000_000))]
#[allow(clippy::too_many_arguments)]
fn stopping_time_sensitivity<'py>(
    py: Python<'py>,
    field: &Field,
    theta: Vec<f64>,
    x0: Vec<f64>,
    h: f64,
    criterion: &Criterion,
    t0: f64,
    n_max: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let (theta, x0) = field.args(theta, x0)?;
    let crit = criterion.inner.as_ref();
    let (traj, rep) = stoptime::integrate_until_stop(field.inner.as_ref(), &theta, &x0, t0, h, crit, n_max).map_err(to_py)?;
    if !rep.stopped {
        return Err(to_py(StopTimeError::NoStop { t_max: t0 + h * n_max as f64 }));
    }
    let sens = stoptime::stopping_time_sensitivity(field.inner.as_ref(), &theta, &traj, crit).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("n", rep.n)?;
    out.set_item("s_theta", list(&sens.s_theta))?;
    out.set_item("s_x0", list(&sens.s_x0))?;
    out.set_item("dn_dtheta", list(&sens.dn_dtheta))?;
    out.set_item("dn_dx0", list(&sens.dn_dx0))?;
    Ok(out)
}

/// Continuous stopping time `T` and, when `sensitivity` is set, `dT/dtheta`.
#[pyfunction]
#[pyo3(signature = (field, theta, x0, criterion, t0 = 0.0, rtol = 1e-9, atol = 1e-9, event_tol = 1e-10, t_max = 1e6, sensitivity = true))]
#[allow(clippy::too_many_arguments)]
fn continuous_stop<'py>(
    py: Python<'py>,
    field: &Field,
    theta: Vec<f64>,
    x0: Vec<f64>,
    criterion: &Criterion,
    t0: f64,
    rtol: f64,
    atol: f64,
    event_tol: f64,
    t_max: f64,
    sensitivity: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let (theta, x0) = field.args(theta, x0)?;
    let opts = SolverOptions { rtol, atol, event_tol, t_max, max_params: field.inner.param_dim() };
    let (f, crit) = (field.inner.as_ref(), criterion.inner.as_ref());
    let res = if sensitivity {
        stoptime::solve_with_forward_sensitivity(f, &theta, &x0, t0, crit, &opts)
    } else {
        stoptime::solve_continuous_stop(f, &theta, &x0, t0, crit, &opts)
    }
    .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("t_stop", res.t_stop)?;
    out.set_item("x_at_stop", list(&res.x_at_stop))?;
    out.set_item("grad_theta_t", res.grad_theta_t.as_ref().map(list))?;
    out.set_item("nfe_forward", res.nfe_forward)?;
    out.set_item("nfe_sensitivity", res.nfe_sensitivity)?;
    Ok(out)
}

/// Adam with online learning-rate adaptation. Returns the objective and
/// learning-rate histories and the final iterate.
#[pyfunction]
#[pyo3(signature = (problem, x0, alpha0, eta_adapt = 1e-2, eps_desc = 1e-5, beta1 = 0.9, beta2 = 0.999, eps_stab = 1e-8, max_iters = 1000, grad_tol = 1e-4))]
#[allow(clippy::too_many_arguments)]
fn ola_run<'py>(
    py: Python<'py>,
    problem: &Problem,
    x0: Vec<f64>,
    alpha0: f64,
    eta_adapt: f64,
    eps_desc: f64,
    beta1: f64,
    beta2: f64,
    eps_stab: f64,
    max_iters: usize,
    grad_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    check_len("x0", &x0, problem.inner.dim())?;
    let hyper = OlaHyper { beta1, beta2, eps_stab, eta_adapt, eps_desc };
    let run = stoptime::ola::ola_run(problem.inner.as_ref(), &vector(x0), alpha0, &hyper, max_iters, grad_tol)
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("f", run.f_history.clone())?;
    out.set_item("alpha", run.alpha_history.clone())?;
    out.set_item("triggered", run.records.iter().map(|r| r.triggered).collect::<Vec<_>>())?;
    out.set_item("x_final", list(run.iterates.last().expect("run holds x0")))?;
    out.set_item("converged", run.converged)?;
    Ok(out)
}

/// Compare both VJPs of `field` against central differences.
#[pyfunction]
#[pyo3(signature = (field, theta, x, t = 0.0, trials = 5, tol = 1e-5))]
fn check_vjp_consistency(field: &Field, theta: Vec<f64>, x: Vec<f64>, t: f64, trials: usize, tol: f64) -> PyResult<bool> {
    let (theta, x) = field.args(theta, x)?;
    if trials == 0 || !(tol > 0.0) {
        return Err(PyValueError::new_err("trials >= 1 and tol > 0 required"));
    }
    Ok(stoptime::check_vjp_consistency(field.inner.as_ref(), &theta, &x, t, trials, tol))
}

#[pymodule]
fn pystoptime(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Field>()?;
    m.add_class::<Criterion>()?;
    m.add_function(wrap_pyfunction!(integrate_until_stop, m)?)?;
    m.add_function(wrap_pyfunction!(stopping_time_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(continuous_stop, m)?)?;
    m.add_function(wrap_pyfunction!(ola_run, m)?)?;
    m.add_function(wrap_pyfunction!(check_vjp_consistency, m)?)?;
    Ok(())
}
