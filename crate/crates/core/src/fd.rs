//! Central finite-difference helpers used by oracles and Hessian actions.

use nalgebra::DVector;

/// Central-difference gradient of a scalar function, one coordinate at a
/// time, with per-coordinate step `rel * max(1, |x_i|)`.
pub fn central_gradient<F>(f: F, x: &DVector<f64>, rel: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let step = rel * x[i].abs().max(1.0);
        probe[i] = x[i] + step;
        let plus = f(&probe);
        probe[i] = x[i] - step;
        let minus = f(&probe);
        probe[i] = x[i];
        (plus - minus) / (2.0 * step)
    })
}

/// Hessian-vector product by central differences of a gradient map:
/// `(g(x + s v) - g(x - s v)) / 2s` with `s = 1e-6 (1 + |x|) / |v|`.
pub fn hvp_by_gradient_differences<G>(grad: G, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let vnorm = v.norm();
    if vnorm == 0.0 {
        return DVector::zeros(x.len());
    }
    let step = 1e-6 * (1.0 + x.norm()) / vnorm;
    let plus = grad(&(x + v * step));
    let minus = grad(&(x - v * step));
    (plus - minus) / (2.0 * step)
}
