use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stoptime::bench::config::FileConfig;
use stoptime::zoo::read_theta_blob;

const SMALL: &str = r#"
[validate]
dims = [4]
eps = [1e-3, 1e-4]
h = [0.1, 0.05]

[identity]
seeds = [0, 1, 2]

[compare]
iters = 60
[compare.problem]
d = 6
n = 30

[l2o]
d = 3
n = 12
sparsity = 0.5
k_max = 5
epsilon = 1e-3
batch = 2
steps = 3
held_out = 3
scale_up = 2
curve_len = 5
"#;

fn stoptime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stoptime")).args(args).output().unwrap()
}

fn run_in(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("cfg.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.join(cmd);
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    stoptime(&args)
}

fn body(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = stoptime(&["selftest", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("selftest.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",pass")));
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let files: [(&str, &[&str]); 4] = [
        ("validate", &["validate.csv", "slopes.csv"]),
        ("identity", &["identity.csv"]),
        ("compare", &["compare.csv", "compare_summary.csv"]),
        ("l2o", &["training_log.csv", "held_out.csv", "curves.csv"]),
    ];
    for (cmd, names) in files {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert!(run_in(a.path(), cmd, &["--threads", "1"]).status.success());
        assert!(run_in(b.path(), cmd, &["--threads", "3"]).status.success());
        for name in names {
            let pa = a.path().join(cmd).join(name);
            let pb = b.path().join(cmd).join(name);
            assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap(), "{cmd}/{name}");
        }
    }
}

#[test]
fn seed_override_changes_results_and_is_recorded() {
    let a = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), "identity", &["--seed", "5"]).status.success());
    let csv = body(&a.path().join("identity/identity.csv"));
    assert!(csv.lines().nth(1).unwrap().starts_with("5,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("identity/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "identity");
}

#[test]
fn preamble_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), "validate", &[]).status.success());
    let csv = fs::read_to_string(a.path().join("validate/validate.csv")).unwrap();
    let preamble: String = csv.lines().filter_map(|l| l.strip_prefix("# ")).map(|l| format!("{l}\n")).collect();
    let resolved = FileConfig::parse(&preamble).unwrap();
    let original = FileConfig::parse(SMALL).unwrap();
    assert_eq!(resolved.validate, original.validate);

    let b = tempfile::tempdir().unwrap();
    let cfg = b.path().join("resolved.toml");
    fs::write(&cfg, &preamble).unwrap();
    let out = b.path().join("out");
    assert!(stoptime(&["validate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    assert_eq!(body(&out.join("validate.csv")), body(&a.path().join("validate/validate.csv")));
}

#[test]
fn l2o_writes_a_readable_checkpoint() {
    let a = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), "l2o", &[]).status.success());
    let theta = read_theta_blob(fs::File::open(a.path().join("l2o/theta.bin")).unwrap()).unwrap();
    assert_eq!(theta.len(), 30);
    assert_eq!(body(&a.path().join("l2o/training_log.csv")).lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[validate]\nstep = 0.1\n").unwrap();
    let out_dir = dir.path().join("o");
    let out = out_dir.to_str().unwrap();
    assert_eq!(stoptime(&["validate", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    assert_eq!(stoptime(&["validate", "--config", "/nonexistent/cfg.toml", "--out", out]).status.code(), Some(4));

    let diverging = dir.path().join("div.toml");
    fs::write(&diverging, "[ola]\nalpha0 = 1e300\n[ola.problem]\nd = 3\nn = 10\n").unwrap();
    let res = stoptime(&["ola", "--config", diverging.to_str().unwrap(), "--out", out]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));

    let missing = dir.path().join("missing.toml");
    fs::write(&missing, "[compare.problem]\ndata = \"/nonexistent/data.svm\"\n").unwrap();
    assert_eq!(stoptime(&["compare", "--config", missing.to_str().unwrap(), "--out", out]).status.code(), Some(4));
}
