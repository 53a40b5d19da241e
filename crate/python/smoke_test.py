"""Smoke test for the pystoptime extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/pystoptime-*.whl
"""

import math

import pystoptime as st


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    field = st.Field.linear_scalar()
    crit = st.Criterion.squared_norm(0.01)
    h, theta = 0.1, 1.0

    run = st.integrate_until_stop(field, [theta], [1.0], h, crit)
    assert run["stopped"] and run["n"] == 22, run["n"]

    sens = st.stopping_time_sensitivity(field, [theta], [1.0], h, crit)
    n = sens["n"]
    closed = 2 * h * n * (1 - h * theta) / (theta * (h * theta - 2))
    assert close(sens["dn_dtheta"][0], closed, 1e-10), sens["dn_dtheta"]

    cont = st.continuous_stop(field, [theta], [1.0], crit)
    t_ref = math.log(100.0) / 2
    assert close(cont["t_stop"], t_ref, 1e-7), cont["t_stop"]
    assert close(cont["grad_theta_t"][0], -t_ref, 1e-4), cont["grad_theta_t"]

    quad = st.Problem.quadratic(5, 10.0, rotated=True, seed=1)
    pre = st.Field.build("diag-preconditioner", quad)
    th = [0.0] * pre.param_dim()
    assert st.check_vjp_consistency(pre, th, [1.0] * 5)
    gn = st.Criterion.grad_norm(quad, 1e-6)
    res = st.stopping_time_sensitivity(pre, th, [1.0] * 5, 0.05, gn)
    assert res["n"] > 0 and len(res["dn_dtheta"]) == pre.param_dim()

    svm = st.Problem.smooth_svm(10, 60, seed=0)
    x0 = [0.0] * svm.dim()
    alpha0 = 1.0 / svm.lipschitz(x0)
    ola = st.ola_run(svm, x0, alpha0, eta_adapt=1e-3, eps_desc=1e-3, max_iters=200)
    assert ola["f"][-1] < ola["f"][0]
    assert len(ola["alpha"]) == len(ola["f"])

    frozen = st.ola_run(svm, x0, alpha0, eta_adapt=0.0, max_iters=50)
    assert len(set(frozen["alpha"])) == 1

    try:
        st.Field.build("lstm", quad)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown family accepted")

    try:
        st.integrate_until_stop(field, [1.0, 2.0], [1.0], h, crit)
    except ValueError:
        pass
    else:
        raise AssertionError("wrong theta length accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
