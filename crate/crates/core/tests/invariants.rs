use std::sync::Arc;

use nalgebra::DVector;
use proptest::prelude::*;

use stoptime::adjoint::unrolled_forward_sensitivity;
use stoptime::zoo::{diag_preconditioner_field, linear_scalar_field, Problem, Quadratic};
use stoptime::{
    discrete_adjoint, integrate_fixed, integrate_until_stop, solve_continuous_stop, stopping_time_sensitivity,
    DynamicsField, ParamVector, SolverOptions, SquaredNorm, State, StoppingCriterion,
};

fn gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (a.norm() + b.norm() + 1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_matches_unrolled_jacobian(
        diag in proptest::collection::vec(0.5f64..4.0, 3),
        x0 in proptest::collection::vec(-2.0f64..2.0, 3),
        scale in -0.2f64..0.2,
        h in 0.01f64..0.2,
        n in 1usize..40,
    ) {
        let problem: Arc<dyn Problem> = Arc::new(Quadratic::from_diagonal(DVector::from_vec(diag)));
        let field = diag_preconditioner_field(problem);
        let theta = ParamVector::from_fn(field.param_dim(), |i, _| scale * ((i as f64) + 1.0).sin());
        let x0 = State::from_vec(x0);
        let crit = SquaredNorm { eps: 0.0 };
        let traj = integrate_fixed(&field, &theta, &x0, 0.0, h, n).unwrap();
        let (s_theta, s_x0) = discrete_adjoint(&field, &theta, &traj, &crit).unwrap();
        let jac = unrolled_forward_sensitivity(&field, &theta, &x0, 0.0, h, n).unwrap();
        let lam = crit.grad(traj.last());
        prop_assert!(gap(&s_theta, &(jac.wrt_theta.transpose() * &lam)) <= 1e-10);
        prop_assert!(gap(&s_x0, &(jac.wrt_x0.transpose() * &lam)) <= 1e-10);
    }

    #[test]
    fn stopping_index_is_first_crossing_and_signs_follow_numerator(
        theta in 0.2f64..3.0,
        x0 in 0.5f64..4.0,
        eps in 1e-4f64..1e-1,
        h in 0.01f64..0.3,
    ) {
        let field = linear_scalar_field();
        let th = ParamVector::from_element(1, theta);
        let crit = SquaredNorm { eps };
        let (traj, rep) = integrate_until_stop(&field, &th, &State::from_element(1, x0), 0.0, h, &crit, 100_000).unwrap();
        prop_assert!(rep.stopped);
        prop_assert!(traj.j_values[..rep.n].iter().all(|&j| j > eps));
        prop_assert!(traj.j_values[rep.n] <= eps);
        if rep.n > 0 {
            let s = stopping_time_sensitivity(&field, &th, &traj, &crit).unwrap();
            prop_assert_eq!(s.dn_dtheta[0].signum(), s.s_theta[0].signum());
            prop_assert!(s.dn_dtheta[0] < 0.0);
        }
    }

    #[test]
    fn continuous_stop_matches_closed_form(
        theta in 0.2f64..3.0,
        x0 in 0.5f64..4.0,
        eps in 1e-4f64..1e-1,
    ) {
        prop_assume!(x0 * x0 > 2.0 * eps);
        let field = linear_scalar_field();
        let th = ParamVector::from_element(1, theta);
        let res = solve_continuous_stop(&field, &th, &State::from_element(1, x0), 0.0, &SquaredNorm { eps }, &SolverOptions::default()).unwrap();
        let t = (x0 * x0 / eps).ln() / (2.0 * theta);
        prop_assert!((res.t_stop - t).abs() <= 1e-6 * t.max(1.0), "{} vs {}", res.t_stop, t);
    }
}
