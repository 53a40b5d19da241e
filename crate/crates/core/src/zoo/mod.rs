//! Benchmark problems, parametric dynamics fields and baseline optimizers.

mod baselines;
mod dataset;
mod fields;
mod problems;

pub use baselines::{adam_direction, baseline_step, Hyper, Method, Stepper};
pub use dataset::{
    parse_libsvm, parse_libsvm_raw, read_dataset_blob, read_theta_blob, write_dataset_blob, write_libsvm,
    write_theta_blob, Dataset, DATASET_MAGIC, THETA_MAGIC,
};
pub use fields::{
    diag_preconditioner_field, linear_scalar_field, rescaled_gradient_field, DiagPreconditionerField,
    RescaledGradientField, ScheduleFamily, PRECOND_FEATURES,
};
pub use problems::{
    make_logistic, make_quadratic, smooth_svm, synthetic_classification, Linear, Logistic, Problem, Quadratic,
    SmoothSvm,
};

use crate::fd::hvp_by_gradient_differences;
use crate::field::State;

/// Floor returned when the Hessian action vanishes.
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;

/// Largest Hessian eigenvalue magnitude at `x0` by 50 rounds of power
/// iteration on gradient-difference Hessian-vector products.
pub fn estimate_lipschitz(problem: &dyn Problem, x0: &State) -> f64 {
    let d = problem.dim();
    let mut v = State::from_fn(d, |i, _| 1.0 + 0.1 * ((i as f64) * 1.618).sin());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..50 {
        let hv = hvp_by_gradient_differences(|y| problem.gradient(y), x0, &v);
        let norm = hv.norm();
        if !(norm > LIPSCHITZ_FLOOR) {
            return LIPSCHITZ_FLOOR;
        }
        estimate = v.dot(&hv).abs();
        v = hv / norm;
    }
    estimate.max(LIPSCHITZ_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DVector, SymmetricEigen};

    #[test]
    fn lipschitz_of_diagonal_quadratic() {
        let q = make_quadratic(2, 4.0, false, 0).unwrap();
        let l = estimate_lipschitz(&q, &DVector::zeros(2));
        assert!((l - 4.0).abs() <= 0.04, "{l}");
    }

    #[test]
    fn lipschitz_of_linear_is_floor() {
        let lin = Linear { c: DVector::from_column_slice(&[1.0, 2.0]) };
        assert_eq!(estimate_lipschitz(&lin, &DVector::zeros(2)), LIPSCHITZ_FLOOR);
    }

    #[test]
    fn lipschitz_of_logistic_at_origin() {
        let (logi, data) = make_logistic(6, 15, 0.5, 0.05, 2).unwrap();
        let gram = data.features.transpose() * &data.features;
        let top = SymmetricEigen::new(gram).eigenvalues.max();
        let exact = top / (4.0 * data.n() as f64);
        let l = estimate_lipschitz(&logi, &DVector::zeros(6));
        assert!(l <= exact * (1.0 + 1e-4), "{l} vs {exact}");
        assert!(l >= exact * 0.99);
    }
}
