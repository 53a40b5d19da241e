//! Experiment commands behind the `stoptime` binary. Each command reads
//! its section of a [`FileConfig`], writes CSV tables (with the resolved
//! configuration as a preamble) and returns a [`Manifest`].

pub mod config;
pub mod l2o;
pub mod output;
pub mod runs;
pub mod selftest;
pub mod validate;

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Result, StopTimeError};
use crate::zoo::write_theta_blob;
use config::{render, FileConfig};
use output::{sha256_hex, write_text, CellStatus, Manifest, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Compare,
    L2o,
    Ola,
    Identity,
    Selftest,
}

impl FromStr for Command {
    type Err = StopTimeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validate" => Ok(Command::Validate),
            "compare" => Ok(Command::Compare),
            "l2o" => Ok(Command::L2o),
            "ola" => Ok(Command::Ola),
            "identity" => Ok(Command::Identity),
            "selftest" => Ok(Command::Selftest),
            other => Err(StopTimeError::Config(format!("unknown command `{other}`"))),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Validate => "validate",
            Command::Compare => "compare",
            Command::L2o => "l2o",
            Command::Ola => "ola",
            Command::Identity => "identity",
            Command::Selftest => "selftest",
        })
    }
}

/// Process exit code for an error: 2 for bad input or configuration, 3 for
/// numerical failure, 4 for I/O and data errors.
pub fn exit_code(err: &StopTimeError) -> i32 {
    match err {
        StopTimeError::Config(_) | StopTimeError::Contract(_) | StopTimeError::SizeCap { .. } => 2,
        e if e.is_numerical() => 3,
        _ => 4,
    }
}

/// Replace every seed in the configuration. Identity seeds become
/// `seed, seed + 1, ...` keeping their count.
pub fn override_seed(cfg: &mut FileConfig, seed: u64) {
    cfg.validate.seed = seed;
    cfg.compare.problem.seed = seed;
    cfg.ola.problem.seed = seed;
    cfg.l2o.seed = seed;
    let count = cfg.identity.seeds.len() as u64;
    cfg.identity.seeds = (seed..seed + count).collect();
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub manifest: Manifest,
    /// false when a selftest check failed
    pub passed: bool,
}

struct Writer<'a> {
    dir: &'a Path,
    preamble: String,
    outputs: Vec<String>,
}

impl Writer<'_> {
    fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        write_text(self.dir, name, &table.to_csv(&self.preamble))?;
        self.outputs.push(name.into());
        Ok(())
    }
}

/// Run `command` and write its outputs plus `manifest.json` into `out`.
pub fn execute(command: Command, cfg: &FileConfig, out: &Path, seed: Option<u64>, threads: Option<usize>) -> Result<Outcome> {
    let start = Instant::now();
    let preamble = match command {
        Command::Validate => render("validate", &cfg.validate)?,
        Command::Compare => render("compare", &cfg.compare)?,
        Command::L2o => render("l2o", &cfg.l2o)?,
        Command::Ola => render("ola", &cfg.ola)?,
        Command::Identity => render("identity", &cfg.identity)?,
        Command::Selftest => String::new(),
    };
    let mut w = Writer { dir: out, preamble: preamble.clone(), outputs: Vec::new() };
    let mut cells = Vec::new();
    let mut passed = true;

    match command {
        Command::Validate => {
            let rep = validate::run_validate(&cfg.validate)?;
            let mut t = Table::new(&["d", "eps", "h", "rel_error", "euler_nfe", "ode_nfe", "nfe_ratio", "status"]);
            for r in &rep.rows {
                t.push(vec![
                    r.d.into(),
                    r.eps.into(),
                    r.h.into(),
                    r.rel_error.into(),
                    r.euler_nfe.into(),
                    r.ode_nfe.into(),
                    r.nfe_ratio.into(),
                    r.status.as_str().into(),
                ]);
                cells.push(CellStatus { cell: format!("d={} eps={:e} h={}", r.d, r.eps, r.h), status: r.status.clone() });
            }
            w.table("validate.csv", &t)?;
            let mut s = Table::new(&["d", "eps", "slope", "inversions"]);
            for r in &rep.slopes {
                s.push(vec![r.d.into(), r.eps.into(), r.slope.into(), r.inversions.into()]);
            }
            w.table("slopes.csv", &s)?;
        }
        Command::Compare => {
            let rep = runs::run_compare(&cfg.compare)?;
            w.preamble = format!("{preamble}lipschitz = {}\n", output::format_float(rep.lipschitz));
            let f_min = rep.curves.iter().map(runs::Curve::f_min).fold(f64::INFINITY, f64::min);
            let mut t = Table::new(&["optimizer", "k", "f", "f_minus_fmin"]);
            for c in &rep.curves {
                for (k, &f) in c.f.iter().enumerate() {
                    t.push(vec![c.label.as_str().into(), k.into(), f.into(), (f - f_min).into()]);
                }
                cells.push(CellStatus { cell: c.label.clone(), status: c.status.clone() });
            }
            w.table("compare.csv", &t)?;
            let mut s = Table::new(&["optimizer", "iters", "f_final", "f_best", "status"]);
            for c in &rep.curves {
                let last = c.f.last().copied().unwrap_or(f64::NAN);
                s.push(vec![c.label.as_str().into(), (c.f.len() - 1).into(), last.into(), c.f_min().into(), c.status.as_str().into()]);
            }
            w.table("compare_summary.csv", &s)?;
        }
        Command::Ola => {
            let (alpha0, run) = runs::run_ola(&cfg.ola)?;
            w.preamble = format!("{preamble}alpha0 = {}\n", output::format_float(alpha0));
            let mut t = Table::new(&["k", "f", "alpha", "trigger", "s_k"]);
            t.push(vec![0usize.into(), run.f_history[0].into(), alpha0.into(), output::Cell::Blank, output::Cell::Blank]);
            for r in &run.records {
                t.push(vec![(r.k + 1).into(), r.f_next.into(), r.alpha_after.into(), r.triggered.into(), r.s_k.into()]);
            }
            w.table("ola.csv", &t)?;
            let status = if run.converged { "converged" } else { "max-iters" };
            cells.push(CellStatus { cell: "ola".into(), status: status.into() });
        }
        Command::Identity => {
            let rows = runs::run_identity(&cfg.identity)?;
            let mut t = Table::new(&["seed", "lhs_norm", "rhs_norm", "abs_diff", "status"]);
            for r in &rows {
                t.push(vec![r.seed.into(), r.lhs_norm.into(), r.rhs_norm.into(), r.abs_diff.into(), r.status.as_str().into()]);
                cells.push(CellStatus { cell: format!("seed={}", r.seed), status: r.status.clone() });
            }
            w.table("identity.csv", &t)?;
        }
        Command::L2o => {
            let rep = l2o::run_l2o(&cfg.l2o)?;
            let mut log = Table::new(&["meta_step", "mean_loss", "mean_N", "grad_norm", "valid"]);
            for r in &rep.log {
                log.push(vec![r.step.into(), r.mean_loss.into(), r.mean_n.into(), r.grad_norm.into(), r.valid.into()]);
            }
            w.table("training_log.csv", &log)?;
            let mut held = Table::new(&["split", "theta", "seed", "N", "stopped", "diverged"]);
            let mut curves = Table::new(&["split", "theta", "seed", "k", "f"]);
            for e in &rep.evaluations {
                for (r, c) in e.results.iter().zip(&e.curves) {
                    held.push(vec![
                        e.split.as_str().into(),
                        e.which.as_str().into(),
                        r.seed.into(),
                        r.n_j.into(),
                        r.stopped.into(),
                        r.diverged.into(),
                    ]);
                    for (k, &f) in c.iter().enumerate() {
                        curves.push(vec![e.split.as_str().into(), e.which.as_str().into(), r.seed.into(), k.into(), f.into()]);
                    }
                }
                cells.push(CellStatus {
                    cell: format!("{} {}", e.split, e.which),
                    status: format!("mean N = {}", output::format_float(e.mean_n())),
                });
            }
            w.table("held_out.csv", &held)?;
            w.table("curves.csv", &curves)?;
            let path = out.join("theta.bin");
            let file = File::create(&path).map_err(|e| StopTimeError::io(&path, e))?;
            write_theta_blob(&rep.theta_final, BufWriter::new(file)).map_err(|e| StopTimeError::io(&path, e))?;
            w.outputs.push("theta.bin".into());
            if let Some(step) = rep.aborted_at {
                cells.push(CellStatus { cell: "training".into(), status: format!("aborted at meta-step {step}") });
            }
        }
        Command::Selftest => {
            let checks = selftest::run_selftest()?;
            let mut t = Table::new(&["check", "value", "reference", "tol", "status"]);
            for c in &checks {
                let status = if c.passed() { "pass" } else { "fail" };
                passed &= c.passed();
                t.push(vec![c.name.into(), c.value.into(), c.reference.into(), c.tol.into(), status.into()]);
                cells.push(CellStatus { cell: c.name.into(), status: status.into() });
            }
            w.table("selftest.csv", &t)?;
        }
    }

    let manifest = Manifest {
        command: command.to_string(),
        config_sha256: sha256_hex(&preamble),
        seed,
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: w.outputs,
        cells,
    };
    write_text(out, "manifest.json", &manifest.to_json())?;
    Ok(Outcome { manifest, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(exit_code(&StopTimeError::Config("x".into())), 2);
        assert_eq!(exit_code(&StopTimeError::StoppedAtInit), 3);
        assert_eq!(exit_code(&StopTimeError::EmptyDataset), 4);
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let mut cfg = FileConfig::default();
        override_seed(&mut cfg, 7);
        assert_eq!(cfg.l2o.seed, 7);
        assert_eq!(cfg.compare.problem.seed, 7);
        assert_eq!(cfg.identity.seeds, (7..17).collect::<Vec<_>>());
    }

    #[test]
    fn identity_command_writes_table_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = FileConfig::default();
        cfg.identity.seeds = vec![0, 1];
        let outcome = execute(Command::Identity, &cfg, dir.path(), None, None).unwrap();
        assert_eq!(outcome.manifest.outputs, vec!["identity.csv"]);
        let csv = fs::read_to_string(dir.path().join("identity.csv")).unwrap();
        assert!(csv.starts_with("# [identity]\n"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
        assert!(dir.path().join("manifest.json").exists());
    }
}
