//! TOML run configuration, one section per command. Unknown keys are
//! rejected; every field has a default so an empty file is valid.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StopTimeError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub validate: ValidateConfig,
    pub compare: CompareConfig,
    pub l2o: L2oConfig,
    pub ola: OlaConfig,
    pub identity: IdentityConfig,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| StopTimeError::Config(e.to_string()))
    }
}

/// Render one section as TOML for embedding in outputs.
pub fn render<T: Serialize>(section: &str, value: &T) -> Result<String> {
    let wrapped = std::collections::BTreeMap::from([(section, value)]);
    toml::to_string(&wrapped).map_err(|e| StopTimeError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub dims: Vec<usize>,
    pub eps: Vec<f64>,
    pub h: Vec<f64>,
    pub cond: f64,
    /// largest eigenvalue after rescaling the `[1, cond]` spectrum
    pub spectrum_max: f64,
    pub rotated: bool,
    pub family: String,
    /// theta; empty selects the family default
    pub theta: Vec<f64>,
    /// every coordinate of x0
    pub x0: f64,
    pub seed: u64,
    pub rtol: f64,
    pub atol: f64,
    pub event_tol: f64,
    pub t_max: f64,
    pub n_max: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            dims: vec![100],
            eps: vec![1e-3, 1e-4, 1e-5],
            h: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
            cond: 100.0,
            spectrum_max: 10.0,
            rotated: false,
            family: "diag-preconditioner".into(),
            theta: Vec::new(),
            x0: 1.0,
            seed: 0,
            rtol: 1e-9,
            atol: 1e-9,
            event_tol: 1e-10,
            t_max: 1e6,
            n_max: 1_000_000,
        }
    }
}

/// Problem selection shared by `compare` and `ola`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// `svm`, `logistic` or `quadratic`
    pub kind: String,
    /// LIBSVM file; synthetic data when empty
    pub data: String,
    pub d: usize,
    pub n: usize,
    pub sparsity: f64,
    pub flip_prob: f64,
    pub reg: f64,
    pub cond: f64,
    pub seed: u64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            kind: "svm".into(),
            data: String::new(),
            d: 50,
            n: 200,
            sparsity: 0.1,
            flip_prob: 0.05,
            reg: 1e-2,
            cond: 100.0,
            seed: 0,
        }
    }
}

/// One optimizer run; unset fields fall back to the baseline defaults and
/// `lr` to `1/L`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub optimizer: String,
    pub label: Option<String>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps_stab: Option<f64>,
    pub hyper_lr: Option<f64>,
    pub eta_adapt: Option<f64>,
    pub eps_desc: Option<f64>,
}

impl RunSpec {
    pub fn named(optimizer: &str) -> Self {
        RunSpec {
            optimizer: optimizer.into(),
            ..RunSpec::default()
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.optimizer.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub problem: ProblemConfig,
    pub iters: usize,
    pub grad_tol: f64,
    pub runs: Vec<RunSpec>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        let ola = RunSpec {
            eta_adapt: Some(1e-3),
            eps_desc: Some(1e-3),
            ..RunSpec::named("adam-ola")
        };
        CompareConfig {
            problem: ProblemConfig::default(),
            iters: 1000,
            grad_tol: 1e-4,
            runs: vec![
                RunSpec::named("gd"),
                RunSpec { momentum: Some(0.5), ..RunSpec::named("hb") },
                RunSpec::named("nag-sc"),
                RunSpec::named("adagrad"),
                RunSpec::named("adam"),
                RunSpec::named("adam-hd"),
                ola,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlaConfig {
    pub problem: ProblemConfig,
    /// initial learning rate; `1/L` when unset
    pub alpha0: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
    pub eta_adapt: f64,
    pub eps_desc: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for OlaConfig {
    fn default() -> Self {
        OlaConfig {
            problem: ProblemConfig::default(),
            alpha0: None,
            beta1: 0.9,
            beta2: 0.999,
            eps_stab: 1e-8,
            eta_adapt: 1e-2,
            eps_desc: 1e-5,
            max_iters: 1000,
            grad_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L2oConfig {
    pub d: usize,
    pub n: usize,
    pub sparsity: f64,
    pub flip_prob: f64,
    pub family: String,
    pub k_max: usize,
    /// `w_0 ..= w_{k_max}`; uniform `1/k_max` when empty
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub epsilon: f64,
    /// `progress` or `grad-norm`
    pub criterion: String,
    pub eta: f64,
    /// `gd` or `adam`
    pub optimizer: String,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    pub h: f64,
    pub n_max: usize,
    pub held_out: usize,
    /// size multiplier of the generalization split; 0 disables it
    pub scale_up: usize,
    /// iterations recorded in the f-vs-k curves
    pub curve_len: usize,
}

impl Default for L2oConfig {
    fn default() -> Self {
        L2oConfig {
            d: 32,
            n: 64,
            sparsity: 0.1,
            flip_prob: 0.05,
            family: "diag-preconditioner".into(),
            k_max: 100,
            weights: Vec::new(),
            lambda: 1.0,
            epsilon: 1e-5,
            criterion: "progress".into(),
            eta: 1e-2,
            optimizer: "adam".into(),
            batch: 8,
            steps: 200,
            seed: 0,
            h: 1.0,
            n_max: 100_000,
            held_out: 20,
            scale_up: 4,
            curve_len: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    pub d: usize,
    pub cond: f64,
    pub k_max: usize,
    pub h: f64,
    /// standard deviation of the random theta
    pub theta_scale: f64,
    pub seeds: Vec<u64>,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            d: 4,
            cond: 10.0,
            k_max: 10,
            h: 0.1,
            theta_scale: 0.1,
            seeds: (0..10).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(FileConfig::parse("").unwrap(), FileConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = FileConfig::parse("[validate]\nstep = 0.1\n").unwrap_err();
        assert!(matches!(err, StopTimeError::Config(_)));
        assert!(FileConfig::parse("[validat]\n").is_err());
        assert!(FileConfig::parse("[compare.problem]\nkind = \"svm\"\nsize = 3\n").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = FileConfig::parse("[validate]\neps = [1e-3]\n[[compare.runs]]\noptimizer = \"adam\"\nlr = 0.1\n").unwrap();
        assert_eq!(cfg.validate.eps, vec![1e-3]);
        assert_eq!(cfg.validate.h.len(), 5);
        assert_eq!(cfg.compare.runs.len(), 1);
        assert_eq!(cfg.compare.runs[0].lr, Some(0.1));
    }

    #[test]
    fn rendered_sections_round_trip() {
        let cfg = FileConfig::default();
        let text = [
            render("validate", &cfg.validate).unwrap(),
            render("l2o", &cfg.l2o).unwrap(),
            render("identity", &cfg.identity).unwrap(),
            render("compare", &cfg.compare).unwrap(),
            render("ola", &cfg.ola).unwrap(),
        ]
        .join("\n");
        let back = FileConfig::parse(&text).unwrap();
        assert_eq!(back.validate, cfg.validate);
        assert_eq!(back.l2o, cfg.l2o);
        assert_eq!(back.compare, cfg.compare);
        assert_eq!(back.ola, cfg.ola);
    }
}
