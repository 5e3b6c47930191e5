use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qinfer_experiments::config::ExperimentConfig;
use qinfer_experiments::run::run_experiment;

fn qinfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qinfer"))
        .args(args)
        .output()
        .unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn solve_prints_and_writes_the_exact_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve.csv");
    let cfg = configs().join("solve_fix_a.toml");
    let o = qinfer(&[
        "solve",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("q_s0_a0                  = 2.0"));
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.lines().any(|l| l == "solve,truth,,q_s0_a0,2.0,,1,0"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "kind = \"coverage\"\nn = 10\n[env.riverswim]\nm_s = 6\n",
    )
    .unwrap();
    assert_eq!(
        qinfer(&["coverage", "-c", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(&bad, "kind = \"nonsense\"\n").unwrap();
    assert_eq!(
        qinfer(&["coverage", "-c", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        qinfer(&["solve", "-c", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let cfg = configs().join("solve_fix_a.toml");
    assert_eq!(
        qinfer(&["coverage", "-c", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn runtime_errors_exit_with_3() {
    // tied optimal actions: the coverage target is not defined
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tie.toml"),
        "m_s = 1\nm_a = 2\ngamma = 0.5\nrho = [1.0]\n\
         [[pair]]\ns = 0\na = 0\nnext = [1.0]\nreward = { kind = \"deterministic\", value = 1.0 }\n\
         [[pair]]\ns = 0\na = 1\nnext = [1.0]\nreward = { kind = \"deterministic\", value = 1.0 }\n",
    )
    .unwrap();
    let cfg = dir.path().join("cov.toml");
    std::fs::write(
        &cfg,
        "kind = \"coverage\"\nn = 100\n[env]\nmodel = \"tie.toml\"\n[policy]\nkind = \"uniform\"\n",
    )
    .unwrap();
    assert_eq!(
        qinfer(&["coverage", "-c", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml")
            && path.file_name().unwrap() != "fix_a.toml"
        {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}

#[test]
fn single_state_selection_is_always_correct() {
    let text = r#"
kind = "correct-selection"
seed = 3
replications = 20
n = 200
[env]
model = "fix_a.toml"
[warm_start]
fraction = 0.3
p_right = 0.6
[[agents]]
kind = "qocba"
[[agents]]
kind = "eps-greedy"
eps = 0.1
[[agents]]
kind = "psrl"
episodes = 5
"#;
    let mut cfg = ExperimentConfig::parse(text).unwrap();
    cfg.base_dir = configs();
    let t = run_experiment(&cfg).unwrap();
    assert_eq!(t.rows.len(), 3);
    for r in &t.rows {
        assert_eq!((r.estimate, r.valid, r.na), (1.0, 20, 0), "{}", r.label);
    }
}

#[test]
fn noiseless_single_state_has_zero_length_intervals() {
    let text = r#"
kind = "ci-length"
seed = 3
replications = 5
n = 100
[env]
model = "fix_a.toml"
[[agents]]
kind = "qocba"
objective = "chi-variance"
"#;
    let mut cfg = ExperimentConfig::parse(text).unwrap();
    cfg.base_dir = configs();
    let t = run_experiment(&cfg).unwrap();
    for q in ["q_avg_ci_length", "chi_ci_length"] {
        assert_eq!(t.find("Q-OCBA-chi", Some(100), q).unwrap().estimate, 0.0);
    }
}
