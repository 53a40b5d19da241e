use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, StopTimeError};
use crate::fd::hvp_by_gradient_differences;
use crate::field::State;
use crate::zoo::dataset::Dataset;

/// A smooth objective `f: R^d -> R` with its gradient.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &State) -> f64;
    fn gradient(&self, x: &State) -> State;

    fn lipschitz_hint(&self) -> Option<f64> {
        None
    }

    /// Hessian-vector product; central differences of the gradient unless
    /// overridden.
    fn hvp(&self, x: &State, v: &State) -> State {
        hvp_by_gradient_differences(|y| self.gradient(y), x, v)
    }

    /// `H V` for a block of columns.
    fn hvp_columns(&self, x: &State, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(v.nrows(), v.ncols());
        for (j, col) in v.column_iter().enumerate() {
            out.set_column(j, &self.hvp(x, &col.into_owned()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Curvature {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

/// `f(x) = x^T Q x / 2` with a symmetric positive definite `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    q: Curvature,
    eigenvalues: DVector<f64>,
}

impl Quadratic {
    pub fn from_diagonal(diag: DVector<f64>) -> Self {
        Quadratic {
            eigenvalues: diag.clone(),
            q: Curvature::Diagonal(diag),
        }
    }

    /// Dense `Q` as a matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.q {
            Curvature::Diagonal(diag) => DMatrix::from_diagonal(diag),
            Curvature::Dense(m) => m.clone(),
        }
    }

    /// The spectrum the matrix was built from.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Multiply `Q` by a positive factor.
    pub fn scaled(mut self, factor: f64) -> Self {
        match &mut self.q {
            Curvature::Diagonal(diag) => *diag *= factor,
            Curvature::Dense(m) => *m *= factor,
        }
        self.eigenvalues *= factor;
        self
    }

    fn apply(&self, v: &State) -> State {
        match &self.q {
            Curvature::Diagonal(diag) => diag.component_mul(v),
            Curvature::Dense(m) => m * v,
        }
    }
}

impl Problem for Quadratic {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
    fn value(&self, x: &State) -> f64 {
        0.5 * x.dot(&self.apply(x))
    }
    fn gradient(&self, x: &State) -> State {
        self.apply(x)
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.eigenvalues.max())
    }
    fn hvp(&self, _x: &State, v: &State) -> State {
        self.apply(v)
    }
    fn hvp_columns(&self, _x: &State, v: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.q {
            Curvature::Diagonal(diag) => {
                let mut out = v.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= diag[i];
                }
                out
            }
            Curvature::Dense(m) => m * v,
        }
    }
}

/// Quadratic with eigenvalues log-uniformly spaced on `[1, cond]`; diagonal
/// unless `rotated`, in which case it is conjugated by a seeded random
/// orthogonal matrix.
pub fn make_quadratic(d: usize, cond: f64, rotated: bool, seed: u64) -> Result<Quadratic> {
    if d < 1 {
        return Err(StopTimeError::contract("quadratic dimension must be >= 1"));
    }
    if !(cond >= 1.0) {
        return Err(StopTimeError::contract(format!("condition number {cond} < 1")));
    }
    let eig = DVector::from_fn(d, |i, _| {
        if d == 1 {
            1.0
        } else {
            cond.powf(i as f64 / (d - 1) as f64)
        }
    });
    if !rotated {
        return Ok(Quadratic::from_diagonal(eig));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let q = gauss.qr().q();
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    // exact symmetry
    let m = (&m + m.transpose()) * 0.5;
    Ok(Quadratic {
        q: Curvature::Dense(m),
        eigenvalues: eig,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(u))` without overflow.
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `f(x) = (1/n) sum_i log(1 + exp(-y_i w_i^T x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    pub data: Dataset,
}

impl Logistic {
    pub fn new(data: Dataset) -> Self {
        Logistic { data }
    }

    fn margins(&self, x: &State) -> DVector<f64> {
        let wx = &self.data.features * x;
        wx.component_mul(&self.data.labels)
    }
}

impl Problem for Logistic {
    fn dim(&self) -> usize {
        self.data.d()
    }
    fn value(&self, x: &State) -> f64 {
        let m = self.margins(x);
        m.iter().map(|&mi| softplus(-mi)).sum::<f64>() / self.data.n() as f64
    }
    fn gradient(&self, x: &State) -> State {
        let m = self.margins(x);
        let n = self.data.n() as f64;
        let coef = DVector::from_fn(m.len(), |i, _| -self.data.labels[i] * sigmoid(-m[i]) / n);
        self.data.features.tr_mul(&coef)
    }
    fn hvp(&self, x: &State, v: &State) -> State {
        let m = self.margins(x);
        let n = self.data.n() as f64;
        let wv = &self.data.features * v;
        let scaled = DVector::from_fn(m.len(), |i, _| {
            let s = sigmoid(m[i]);
            s * (1.0 - s) * wv[i] / n
        });
        self.data.features.tr_mul(&scaled)
    }
}

/// Synthetic logistic regression: sparse Gaussian ground truth, Gaussian
/// features, sign labels, independent label flips.
pub fn make_logistic(d: usize, n: usize, sparsity: f64, flip_prob: f64, seed: u64) -> Result<(Logistic, Dataset)> {
    let data = synthetic_classification(d, n, sparsity, flip_prob, seed)?;
    Ok((Logistic::new(data.clone()), data))
}

/// The generator behind [`make_logistic`], also used for synthetic SVM
/// instances.
pub fn synthetic_classification(d: usize, n: usize, sparsity: f64, flip_prob: f64, seed: u64) -> Result<Dataset> {
    if d < 1 || n < 1 {
        return Err(StopTimeError::contract("need d >= 1 and n >= 1"));
    }
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(StopTimeError::contract(format!("sparsity {sparsity} outside [0, 1]")));
    }
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(StopTimeError::contract(format!("flip probability {flip_prob} outside [0, 0.5)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nnz = (sparsity * d as f64).ceil() as usize;
    let mut truth = DVector::zeros(d);
    let support = rand::seq::index::sample(&mut rng, d, nnz.min(d));
    for i in support.iter() {
        truth[i] = StandardNormal.sample(&mut rng);
    }
    let features = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let scores = &features * &truth;
    let labels = DVector::from_fn(n, |i, _| {
        let y = if scores[i] >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < flip_prob {
            -y
        } else {
            y
        }
    });
    Ok(Dataset { features, labels, truth: Some(truth) })
}

/// `f(w) = 1/2 sum_i max(0, 1 - y_i w^T x_i)^2 + reg/2 |w|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSvm {
    pub data: Dataset,
    pub reg: f64,
}

pub fn smooth_svm(data: Dataset, reg: f64) -> Result<SmoothSvm> {
    if !(reg >= 0.0) {
        return Err(StopTimeError::contract("regularization must be non-negative"));
    }
    Ok(SmoothSvm { data, reg })
}

impl SmoothSvm {
    fn slacks(&self, w: &State) -> DVector<f64> {
        let m = (&self.data.features * w).component_mul(&self.data.labels);
        m.map(|mi| (1.0 - mi).max(0.0))
    }
}

impl Problem for SmoothSvm {
    fn dim(&self) -> usize {
        self.data.d()
    }
    fn value(&self, w: &State) -> f64 {
        0.5 * self.slacks(w).norm_squared() + 0.5 * self.reg * w.norm_squared()
    }
    fn gradient(&self, w: &State) -> State {
        let s = self.slacks(w).component_mul(&self.data.labels);
        -self.data.features.tr_mul(&s) + w * self.reg
    }
}

/// Problem wrapper with `f(x) = c^T x`, zero curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub c: DVector<f64>,
}

impl Problem for Linear {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn value(&self, x: &State) -> f64 {
        self.c.dot(x)
    }
    fn gradient(&self, _x: &State) -> State {
        self.c.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::central_gradient;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;

    fn random_points(d: usize, count: usize, seed: u64) -> Vec<State> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| State::from_fn(d, |_, _| StandardNormal.sample(&mut rng)))
            .collect()
    }

    fn assert_gradient_consistent(p: &dyn Problem, seed: u64) {
        for x in random_points(p.dim(), 10, seed) {
            let fd = central_gradient(|y| p.value(y), &x, 1e-6);
            let g = p.gradient(&x);
            let gap = (&fd - &g).norm() / (fd.norm() + g.norm() + 1e-12);
            assert!(gap < 1e-5, "gradient gap {gap}");
        }
    }

    #[test]
    fn quadratic_examples() {
        let q = make_quadratic(2, 4.0, false, 0).unwrap();
        assert_eq!(q.matrix(), DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 4.0])));
        assert_eq!(q.value(&DVector::from_column_slice(&[1.0, 1.0])), 2.5);
        assert_eq!(q.value(&DVector::zeros(2)), 0.0);
        assert_eq!(q.gradient(&DVector::zeros(2)), DVector::zeros(2));
        assert!(make_quadratic(2, 0.5, false, 0).is_err());
    }

    #[test]
    fn rotated_quadratic_spectrum() {
        let q = make_quadratic(100, 100.0, true, 7).unwrap();
        let m = q.matrix();
        assert_eq!(m, m.transpose());
        let eig = SymmetricEigen::new(m).eigenvalues;
        assert_relative_eq!(eig.min(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(eig.max(), 100.0, epsilon = 1e-10);
    }

    #[test]
    fn problems_pass_fd_suite() {
        assert_gradient_consistent(&make_quadratic(6, 30.0, true, 1).unwrap(), 0);
        let (logi, data) = make_logistic(5, 12, 0.4, 0.1, 3).unwrap();
        assert_gradient_consistent(&logi, 1);
        assert_gradient_consistent(&smooth_svm(data, 0.1).unwrap(), 2);
    }

    #[test]
    fn logistic_at_origin_is_ln2() {
        let (logi, _) = make_logistic(8, 30, 0.25, 0.05, 11).unwrap();
        assert!((logi.value(&DVector::zeros(8)) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_decreases_along_truth() {
        let (logi, data) = make_logistic(10, 50, 0.5, 0.0, 4).unwrap();
        let truth = data.truth.unwrap();
        let f: Vec<f64> = [1.0, 10.0, 100.0].iter().map(|&c| logi.value(&(&truth * c))).collect();
        assert!(f[0] > f[1] && f[1] > f[2], "{f:?}");
    }

    #[test]
    fn logistic_sparsity_and_determinism() {
        let (_, a) = make_logistic(20, 10, 0.25, 0.05, 9).unwrap();
        let (_, b) = make_logistic(20, 10, 0.25, 0.05, 9).unwrap();
        assert_eq!(a, b);
        let nnz = a.truth.as_ref().unwrap().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nnz, 5);
        assert!(a.labels.iter().all(|y| *y == 1.0 || *y == -1.0));
    }

    #[test]
    fn logistic_exact_hvp_matches_fd() {
        let (logi, _) = make_logistic(6, 25, 0.5, 0.05, 2).unwrap();
        for x in random_points(6, 5, 8) {
            let v = random_points(6, 1, 99).remove(0);
            let fd = hvp_by_gradient_differences(|y| logi.gradient(y), &x, &v);
            let ex = logi.hvp(&x, &v);
            assert!((&fd - &ex).norm() <= 1e-6 * (1.0 + ex.norm()));
        }
    }

    #[test]
    fn svm_examples() {
        let data = Dataset::new(DMatrix::from_row_slice(1, 2, &[0.3, -2.0]), DVector::from_element(1, 1.0)).unwrap();
        let svm = smooth_svm(data, 0.0).unwrap();
        assert_eq!(svm.value(&DVector::zeros(2)), 0.5);

        let data = Dataset::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DVector::from_column_slice(&[1.0, -1.0]),
        )
        .unwrap();
        let svm = smooth_svm(data, 0.0).unwrap();
        let w = DVector::from_column_slice(&[2.0, -3.0]);
        assert_eq!(svm.value(&w), 0.0);
        assert_eq!(svm.gradient(&w), DVector::zeros(2));
    }

    #[test]
    fn svm_gradient_on_small_dataset() {
        let data = synthetic_classification(3, 5, 1.0, 0.0, 5).unwrap();
        let svm = smooth_svm(data, 0.0).unwrap();
        assert_gradient_consistent(&svm, 17);
    }
}
