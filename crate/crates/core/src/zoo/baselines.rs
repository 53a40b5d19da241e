//! Classical first-order optimizers used as comparison baselines.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, StopTimeError};
use crate::field::State;
use crate::zoo::problems::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gd,
    HeavyBall,
    Nag,
    NagSc,
    Adam,
    Adagrad,
    AdamHd,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Gd,
        Method::HeavyBall,
        Method::Nag,
        Method::NagSc,
        Method::Adam,
        Method::Adagrad,
        Method::AdamHd,
    ];
}

impl FromStr for Method {
    type Err = StopTimeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(Method::Gd),
            "hb" => Ok(Method::HeavyBall),
            "nag" => Ok(Method::Nag),
            "nag-sc" => Ok(Method::NagSc),
            "adam" => Ok(Method::Adam),
            "adagrad" => Ok(Method::Adagrad),
            "adam-hd" => Ok(Method::AdamHd),
            other => Err(StopTimeError::contract(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gd => "gd",
            Method::HeavyBall => "hb",
            Method::Nag => "nag",
            Method::NagSc => "nag-sc",
            Method::Adam => "adam",
            Method::Adagrad => "adagrad",
            Method::AdamHd => "adam-hd",
        })
    }
}

/// Constants for every baseline; each method reads the ones it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    /// step size (`beta` for Adagrad, initial `alpha` for Adam variants)
    pub lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
    /// Adam-HD learning-rate update rate
    pub hyper_lr: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 1e-2,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps_stab: 1e-8,
            hyper_lr: 1e-4,
        }
    }
}

/// Bias-corrected Adam direction `m_hat / (sqrt(v_hat) + eps)` after folding
/// `g` into the moments at iteration `k` (0-based).
pub fn adam_direction(m: &mut State, v: &mut State, g: &State, k: usize, beta1: f64, beta2: f64, eps: f64) -> State {
    let c1 = 1.0 - beta1.powi(k as i32 + 1);
    let c2 = 1.0 - beta2.powi(k as i32 + 1);
    let mut dir = State::zeros(g.len());
    for i in 0..g.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        dir[i] = m_hat / (v_hat.sqrt() + eps);
    }
    dir
}

/// One optimizer run's mutable state.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub method: Method,
    pub hyper: Hyper,
    k: usize,
    prev: Option<State>,
    m: State,
    v: State,
    accum: State,
    alpha: f64,
    prev_dir: Option<State>,
}

impl Stepper {
    pub fn new(method: Method, hyper: Hyper, dim: usize) -> Self {
        Stepper {
            method,
            hyper,
            k: 0,
            prev: None,
            m: State::zeros(dim),
            v: State::zeros(dim),
            accum: State::zeros(dim),
            alpha: hyper.lr,
            prev_dir: None,
        }
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    /// Current learning rate (adapted for Adam-HD).
    pub fn learning_rate(&self) -> f64 {
        self.alpha
    }

    pub fn step(&mut self, x: &State, problem: &dyn Problem) -> State {
        let hp = self.hyper;
        let next = match self.method {
            Method::Gd => x - problem.gradient(x) * hp.lr,
            Method::HeavyBall => {
                let g = problem.gradient(x);
                let mut next = x - g * hp.lr;
                if let Some(prev) = &self.prev {
                    next += (x - prev) * hp.momentum;
                }
                next
            }
            Method::Nag | Method::NagSc => {
                let beta = match self.method {
                    Method::Nag => self.k as f64 / (self.k as f64 + 3.0),
                    _ => hp.momentum,
                };
                let y = match &self.prev {
                    Some(prev) => x + (x - prev) * beta,
                    None => x.clone(),
                };
                &y - problem.gradient(&y) * hp.lr
            }
            Method::Adam => {
                let g = problem.gradient(x);
                let dir = adam_direction(&mut self.m, &mut self.v, &g, self.k, hp.beta1, hp.beta2, hp.eps_stab);
                x - dir * self.alpha
            }
            Method::AdamHd => {
                let g = problem.gradient(x);
                if let Some(prev_dir) = &self.prev_dir {
                    // d f(x_k) / d alpha = -g_k . d_{k-1}
                    self.alpha += hp.hyper_lr * g.dot(prev_dir);
                }
                let dir = adam_direction(&mut self.m, &mut self.v, &g, self.k, hp.beta1, hp.beta2, hp.eps_stab);
                let next = x - &dir * self.alpha;
                self.prev_dir = Some(dir);
                next
            }
            Method::Adagrad => {
                let g = problem.gradient(x);
                self.accum += g.component_mul(&g);
                let scaled = g.zip_map(&self.accum, |gi, acc| gi / (acc.sqrt() + hp.eps_stab));
                x - scaled * hp.lr
            }
        };
        self.prev = Some(x.clone());
        self.k += 1;
        next
    }
}

/// One update of the named method (`gd`, `hb`, `nag`, `nag-sc`, `adam`,
/// `adagrad`, `adam-hd`), creating the stepper on first use.
pub fn baseline_step(tag: &str, stepper: &mut Option<Stepper>, x: &State, problem: &dyn Problem, hyper: Hyper) -> Result<State> {
    let method: Method = tag.parse()?;
    let st = stepper.get_or_insert_with(|| Stepper::new(method, hyper, x.len()));
    if st.method != method {
        return Err(StopTimeError::contract("stepper was created for a different method"));
    }
    Ok(st.step(x, problem))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::problems::make_quadratic;
    use nalgebra::DVector;

    #[test]
    fn gd_descends_at_inverse_lipschitz() {
        let q = make_quadratic(5, 20.0, true, 3).unwrap();
        let hyper = Hyper { lr: 1.0 / 20.0, ..Hyper::default() };
        let mut st = Stepper::new(Method::Gd, hyper, 5);
        let mut x = DVector::from_element(5, 1.0);
        for _ in 0..50 {
            let next = st.step(&x, &q);
            assert!(q.value(&next) < q.value(&x));
            x = next;
        }
    }

    #[test]
    fn adam_first_step_is_sign_like() {
        let q = make_quadratic(3, 4.0, false, 0).unwrap();
        let x = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let g = q.gradient(&x);
        let hyper = Hyper { lr: 0.1, ..Hyper::default() };
        let mut st = Stepper::new(Method::Adam, hyper, 3);
        let next = st.step(&x, &q);
        for i in 0..3 {
            let want = x[i] - 0.1 * g[i] / (g[i].abs() + 1e-8);
            assert!((next[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn adagrad_second_step_size() {
        // linear objective keeps the gradient constant
        let c = DVector::from_column_slice(&[2.0, -0.5]);
        let lin = crate::zoo::problems::Linear { c: c.clone() };
        let hyper = Hyper { lr: 0.3, eps_stab: 0.0, ..Hyper::default() };
        let mut st = Stepper::new(Method::Adagrad, hyper, 2);
        let x0 = DVector::zeros(2);
        let x1 = st.step(&x0, &lin);
        let x2 = st.step(&x1, &lin);
        for i in 0..2 {
            let want = 0.3 / (2.0 * c[i] * c[i]).sqrt() * c[i];
            assert!(((x1[i] - x2[i]) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn momentum_methods_converge() {
        let q = make_quadratic(4, 10.0, true, 1).unwrap();
        for method in [Method::HeavyBall, Method::Nag, Method::NagSc, Method::AdamHd] {
            let hyper = Hyper { lr: 0.05, momentum: 0.5, ..Hyper::default() };
            let mut st = Stepper::new(method, hyper, 4);
            let mut x = DVector::from_element(4, 1.0);
            let f0 = q.value(&x);
            for _ in 0..300 {
                x = st.step(&x, &q);
            }
            assert!(q.value(&x) < 1e-3 * f0, "{method}");
        }
    }

    #[test]
    fn unknown_tag() {
        let q = make_quadratic(2, 2.0, false, 0).unwrap();
        let mut st = None;
        assert!(baseline_step("lbfgs", &mut st, &DVector::zeros(2), &q, Hyper::default()).is_err());
        assert!(baseline_step("gd", &mut st, &DVector::zeros(2), &q, Hyper::default()).is_ok());
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
    }
}
