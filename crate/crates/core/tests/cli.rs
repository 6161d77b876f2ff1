use std::fs;
use std::path::Path;

use tvd_npl::cli::run;

fn run_args(args: &[&str]) -> i32 {
    let mut v = vec!["tvd-npl"];
    v.extend_from_slice(args);
    run(v)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn posterior_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_then_fit_recovers_rate() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    assert_eq!(
        run_args(&["--seed", "3", "--out", s(&sim), "simulate", "--scenario", "eps-poisson", "--eps", "0", "--n-test", "0"]),
        0
    );
    let train = sim.join("train.csv");
    assert!(train.exists());
    assert_eq!(
        run_args(&["--seed", "1", "--B", "200", "--loss", "kld", "--out", s(&fit), "fit", "--input", s(&train), "--model", "poisson"]),
        0
    );
    let rows = posterior_rows(&fit.join("posterior.csv"));
    assert_eq!(rows.len(), 200);
    let lam: Vec<f64> = rows.iter().map(|r| r[0].parse::<f64>().unwrap().exp()).collect();
    let mean = lam.iter().sum::<f64>() / lam.len() as f64;
    let sd = (lam.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (lam.len() - 1) as f64).sqrt();
    assert!((mean - 3.0).abs() < 3.0 * sd, "mean {mean} sd {sd}");
    assert!(rows.iter().all(|r| r[2] == "true"));
}

#[test]
fn fit_is_byte_identical_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x,y\n0.5,1\n-1.0,0\n1.5,1\n0.2,0\n-0.3,1\n2.0,1\n-2.0,0\n0.1,0\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for out in [&a, &b] {
        assert_eq!(
            run_args(&["--seed", "9", "--B", "30", "--out", s(out), "fit", "--input", s(&data), "--model", "probit"]),
            0
        );
    }
    let pa = fs::read(a.join("posterior.csv")).unwrap();
    assert_eq!(pa, fs::read(b.join("posterior.csv")).unwrap());

    // two columns: one covariate plus the outcome, so d + 1 = 2 parameters
    let header = String::from_utf8(pa.clone()).unwrap();
    assert!(header.starts_with("theta_0,theta_1,objective,converged\n"));
    assert_eq!(posterior_rows(&a.join("posterior.csv")).len(), 30);

    let cfg = a.join("run_config.toml");
    assert_eq!(run_args(&["--config", s(&cfg), "--out", s(&c)]), 0);
    assert_eq!(pa, fs::read(c.join("posterior.csv")).unwrap());
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x,y\n1.0,2\n1.0,oops\n").unwrap();
    let out = dir.path().join("o");
    assert_eq!(run_args(&["--out", s(&out), "fit", "--input", s(&bad), "--model", "poisson"]), 3);
    assert_eq!(run_args(&["--out", s(&out), "fit", "--model", "poisson"]), 2);
    assert_eq!(run_args(&["--out", s(&out), "fit", "--input", s(&dir.path().join("missing.csv")), "--model", "poisson"]), 3);
    assert_eq!(run_args(&["--B", "0", "verify"]), 2);
    assert_eq!(run_args(&[]), 2);
}

#[test]
fn verify_robustness_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    assert_eq!(run_args(&["--out", s(&out), "verify", "--claim", "robustness"]), 0);
    let text = fs::read_to_string(out.join("bounds.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(out.join("run_config.toml").exists());
}

#[test]
fn small_reproduce_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    assert_eq!(
        run_args(&["--B", "10", "--out", s(&out), "reproduce", "eps-poisson", "--k", "0,10", "--repeats", "2"]),
        0
    );
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert!(lines.next().unwrap().starts_with("benchmark,cell,loss,model,repeats"));
    assert_eq!(lines.count(), 4);
    let reports: Vec<_> = fs::read_dir(out.join("reports")).unwrap().collect();
    assert_eq!(reports.len(), 4);
    let cfg = fs::read_to_string(out.join("run_config.toml")).unwrap();
    assert!(cfg.contains("k_grid = [0, 10]"));
}
