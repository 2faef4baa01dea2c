use std::fs;
use std::path::Path;
use std::process::Command as Process;

use lasso_phase::phase::identity_delta_c;
use lasso_phase_cli::{parse_config, run};

const BIN: &str = env!("CARGO_BIN_EXE_lasso-phase");

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Data rows of a CSV written by the tool, split into fields.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, body)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn run_toml(dir: &Path, text: &str) -> lasso_phase_cli::Outcome {
    let mut cfg = parse_config(text).unwrap();
    cfg.out = Some(dir.join("out"));
    run(&cfg, dir).unwrap()
}

#[test]
fn identity_phase_curve_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_toml(
        dir.path(),
        r#"
command = "phase-curve"
seed = 3
[covariance]
family = "identity"
[prior]
epsilon = 0.1
[mc]
quadrature = false
[grid]
epsilons = { from = 0.05, to = 0.95, points = 31 }
"#,
    );
    assert!(outcome.flags.is_empty(), "{:?}", outcome.flags);
    let (header, body) = rows(&dir.path().join("out/phase-curve.csv"));
    assert_eq!(body.len(), 31);
    let (ce, cd) = (col(&header, "epsilon"), col(&header, "delta_c"));
    let mut worst: f64 = 0.0;
    for r in &body {
        let eps: f64 = r[ce].parse().unwrap();
        let dc: f64 = r[cd].parse().unwrap();
        worst = worst.max((dc - identity_delta_c(eps).unwrap()).abs());
    }
    assert!(worst <= 0.02, "max |Δδ| = {worst}");
    assert_eq!(body[0][col(&header, "p_grid")], "100;200;400");
}

#[test]
fn reruns_are_byte_identical() {
    let config = r#"
command = "phase-curve"
seed = 11
[covariance]
family = "ar1"
rho = 0.5
[prior]
epsilon = 0.3
d_epsilon = 1.0
[mc]
p_grid = [30, 60]
replicates = 20
[grid]
epsilons = [0.2, 0.4]
"#;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_toml(a.path(), config);
    run_toml(b.path(), config);
    let text = fs::read_to_string(a.path().join("out/phase-curve.csv")).unwrap();
    assert!(text == fs::read_to_string(b.path().join("out/phase-curve.csv")).unwrap());
    assert!(text.contains("# rho = 0.5"), "config echo missing:\n{text}");
}

#[test]
fn calibrate_lambda_monotone_past_last_sign_change() {
    let dir = tempfile::tempdir().unwrap();
    run_toml(
        dir.path(),
        r#"
command = "calibrate"
[covariance]
family = "identity"
[prior]
epsilon = 0.2
[geometry]
delta = 0.5
sigma_w_sq = 0.01
[grid]
alphas = { from = 0.1, to = 4.0, points = 40 }
"#,
    );
    let (header, body) = rows(&dir.path().join("out/calibrate.csv"));
    let (ca, cl) = (col(&header, "admissible"), col(&header, "lambda"));
    let lambdas: Vec<f64> = body.iter().filter(|r| r[ca] == "true").map(|r| r[cl].parse().unwrap()).collect();
    assert!(lambdas.len() >= 20 && body.iter().any(|r| r[ca] == "false"));
    let start = (1..lambdas.len())
        .rev()
        .find(|&i| lambdas[i - 1].signum() != lambdas[i].signum())
        .unwrap_or(0);
    for w in lambdas[start..].windows(2) {
        assert!(w[1] > w[0], "λ not increasing: {w:?}");
    }
}

#[test]
fn risk_curve_and_mse_experiment_agree() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"
seed = 5
[covariance]
family = "identity"
[prior]
epsilon = 0.1
[geometry]
delta = 0.5
sigma_w_sq = 0.04
[grid]
lambdas = [0.3, 1.0]
[experiment]
p = 200
instances = 20
"#;
    let outcome = run_toml(dir.path(), &format!("command = \"risk-curve\"\n{base}"));
    assert!(outcome.flags.is_empty());
    let (h, risk) = rows(&dir.path().join("out/risk-curve.csv"));
    let outcome = run_toml(dir.path(), &format!("command = \"mse-experiment\"\n{base}"));
    assert!(outcome.flags.is_empty());
    let (g, mse) = rows(&dir.path().join("out/mse-experiment.csv"));
    for (r, m) in risk.iter().zip(&mse) {
        let predicted: f64 = r[col(&h, "mse")].parse().unwrap();
        let theory: f64 = m[col(&g, "theory")].parse().unwrap();
        let mean: f64 = m[col(&g, "mean")].parse().unwrap();
        let se: f64 = m[col(&g, "stderr")].parse().unwrap();
        assert!((predicted - theory).abs() <= 1e-9 * predicted.max(1.0));
        assert!((mean - theory).abs() <= 4.0 * se + 0.1 * theory, "{mean} vs {theory} ± {se}");
    }
}

const AMP_DEMO: &str = r#"
command = "amp-demo"
seed = 2
[covariance]
family = "ar1"
rho = 0.3
[prior]
epsilon = 0.1
[geometry]
delta = 0.5
sigma_w_sq = 0.01
[mc]
p_grid = [50, 100]
replicates = 40
[experiment]
p = 400
alpha = 2.0
max_iter = 1000
tol = 1e-12
"#;

#[test]
fn amp_demo_reaches_a_lasso_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_toml(dir.path(), AMP_DEMO);
    assert!(outcome.flags.is_empty(), "{:?}", outcome.flags);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/amp-demo.json")).unwrap()).unwrap();
    let gap = summary["results"]["lasso_gap"].as_f64().unwrap();
    assert!(gap <= 1e-8, "gap {gap}");
    let (header, body) = rows(&dir.path().join("out/amp-demo.csv"));
    assert_eq!(header, ["iteration", "mse", "dbeta", "dz", "tau_sq", "support"]);
    assert_eq!(body.len() as u64, summary["results"]["iterations"].as_u64().unwrap());
}

#[test]
fn flagged_run_exits_nonzero_after_writing() {
    // at p = 200 this instance settles into a limit cycle instead of a fixed point
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &AMP_DEMO.replace("p = 400", "p = 200"));
    let out = Process::new(BIN).arg("--config").arg(&cfg).current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not converged"));
    assert!(dir.path().join("lasso-phase-out/amp-demo.csv").exists());
}

#[test]
fn verify_phase_writes_fit_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    run_toml(
        dir.path(),
        r#"
command = "verify-phase"
[covariance]
family = "identity"
[prior]
epsilon = 0.2
[grid]
deltas = [0.3, 0.5, 0.7, 0.9]
[experiment]
p = 60
instances = 20
"#,
    );
    let (header, body) = rows(&dir.path().join("out/verify-phase.csv"));
    assert_eq!(body.len(), 1);
    let dc: f64 = body[0][col(&header, "delta_c")].parse().unwrap();
    assert!((dc - identity_delta_c(0.2).unwrap()).abs() < 1e-6);
    let hat: f64 = body[0][col(&header, "delta_hat")].parse().unwrap();
    assert!((0.2..=1.0).contains(&hat), "delta_hat {hat}");
    let (_, counts) = rows(&dir.path().join("out/verify-phase-counts.csv"));
    assert_eq!(counts.len(), 4);
}

#[test]
fn explicit_covariance_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sigma.csv"), "1,0.5,0.25\n0.5,1,0.5\n0.25,0.5,1\n").unwrap();
    let text = r#"
command = "calibrate"
[covariance]
family = "explicit"
path = "sigma.csv"
[prior]
epsilon = 0.2
[geometry]
delta = 0.6
[mc]
p_grid = [3]
"#;
    let cfg = parse_config(text).unwrap();
    let family = cfg.covariance_family(dir.path()).unwrap();
    assert_eq!(family.fixed_dim(), Some(3));
    let err = cfg.covariance_family(Path::new("/nonexistent")).unwrap_err();
    assert_eq!(err.path, "covariance.path");
}

#[test]
fn binary_reports_missing_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "command = \"calibrate\"\n[prior]\nepsilon = 0.1\n");
    let out = Process::new(BIN).arg("--config").arg(&cfg).current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`covariance`"), "{stderr}");
    assert!(!dir.path().join("lasso-phase-out").exists());
}

#[test]
fn binary_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
command = "risk-curve"
seed = 1
[covariance]
family = "identity"
[prior]
epsilon = 0.1
[geometry]
delta = 0.5
[grid]
alphas = [1.5, 2.0]
lambdas = [0.5]
"#,
    );
    let out_dir = dir.path().join("flags");
    let out = Process::new(BIN)
        .arg("calibrate")
        .args(["--config".as_ref(), cfg.as_os_str()])
        .args(["--seed", "42", "--p-grid", "50,80", "--replicates", "30"])
        .arg("--out")
        .arg(&out_dir)
        .env("LASSO_PHASE_WORKERS", "1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty(), "data must go to files only");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("calibrate.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 42);
    assert_eq!(summary["config"]["mc"]["p_grid"], serde_json::json!([50, 80]));
    assert_eq!(summary["config"]["mc"]["replicates"], 30);
    assert_eq!(summary["workers"], 1);
    assert!(out_dir.join("calibrate.csv").exists());

    let bad = Process::new(BIN)
        .arg("calibrate")
        .arg("--config")
        .arg(&cfg)
        .args(["--p-grid", "50,x"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
