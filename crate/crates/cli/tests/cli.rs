use std::path::Path;
use std::process::{Command, Output};

fn covsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covsel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = covsel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    covsel(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out-dir", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_writes_all_files_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let flags = ["--structure", "ar1", "--p", "25", "--n", "50", "--seed", "7"];
    simulate(&a, &flags);
    simulate(&b, &flags);
    for f in ["data.csv", "omega_true.csv", "edges_true.csv", "manifest.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let data = String::from_utf8(read(&a.join("data.csv"))).unwrap();
    let mut lines = data.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 25);
    assert_eq!(lines.count(), 50);

    let c = tmp.path().join("c");
    simulate(&c, &["--structure", "random", "--p", "20", "--edge-prob", "0.3", "--df", "20", "--n", "100", "--seed", "1"]);
    assert!(c.join("edges_true.csv").exists());
}

#[test]
fn fit_writes_outputs_with_a_pd_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, &["--structure", "ar1", "--p", "8", "--n", "60", "--seed", "3"]);
    let out = tmp.path().join("fit");
    let stdout = ok(&[
        "fit", "--data", s(&sim.join("data.csv")), "--out-dir", s(&out), "--warmup", "200", "--draws", "200", "--seed", "1",
    ]);
    assert!(stdout.contains("edges"), "{stdout}");
    for f in ["edges.csv", "pcor.csv", "omega_hat.csv", "lambda.csv", "manifest.json", "paths/node_1.csv", "paths/khat_8.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let (_, omega) = covsel::io::read_precision_csv(&out.join("omega_hat.csv")).unwrap();
    assert!(omega.min_eigenvalue() > 0.0);
    let manifest: serde_json::Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["p"], 8);
    assert_eq!(manifest["config"]["seed"], 1);
}

#[test]
fn bayes_boot_choice_is_recorded_in_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--structure", "ar2", "--p", "5", "--n", "400", "--seed", "2"]);
    let out = tmp.path().join("fit");
    ok(&["fit", "--data", s(&tmp.path().join("data.csv")), "--out-dir", s(&out), "--method", "bayes-boot", "--draws", "200"]);
    let manifest: serde_json::Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["method"], "bayes-boot");
    for node in manifest["nodes"].as_array().unwrap() {
        assert_eq!(node["method"], "bayesian-bootstrap");
    }
}

#[test]
fn zero_probability_threshold_gives_an_empty_graph() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--structure", "ar1", "--p", "6", "--n", "80", "--seed", "5"]);
    let out = tmp.path().join("fit");
    ok(&[
        "fit", "--data", s(&tmp.path().join("data.csv")), "--out-dir", s(&out), "--draws", "200", "--warmup", "200",
        "--prob-threshold", "0",
    ]);
    let edges = covsel::io::read_edge_file(&out.join("edges.csv"), 6).unwrap();
    assert!(edges.is_empty());
}

fn metric_row(csv: &str) -> std::collections::HashMap<String, String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    header.iter().zip(row).map(|(h, v)| (h.to_string(), v.to_string())).collect()
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--structure", "ar2", "--p", "10", "--n", "20", "--seed", "1"]);
    let omega = tmp.path().join("omega_true.csv");
    let stdout = ok(&["eval", "--omega-true", s(&omega), "--omega-est", s(&omega)]);
    let m = metric_row(&stdout);
    for k in ["kl", "ql", "l2", "mse"] {
        assert!(m[k].parse::<f64>().unwrap().abs() <= 1e-10, "{k}");
    }
    for k in ["sp", "sn", "f1", "mcc"] {
        assert_eq!(m[k].parse::<f64>().unwrap(), 1.0, "{k}");
    }
}

#[test]
fn eval_of_an_empty_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = covsel::generate::gen_ar1(10, 0.5).unwrap();
    let names = covsel::io::default_names(10);
    // Five of the nine chain edges kept in the truth file.
    let mut omega = truth.omega.matrix().clone();
    for i in 5..9 {
        omega[(i, i + 1)] = 0.0;
        omega[(i + 1, i)] = 0.0;
    }
    let t = tmp.path().join("t.csv");
    covsel::io::write_matrix_file(&t, &names, &omega).unwrap();
    let e = tmp.path().join("e.csv");
    let diag = nalgebra::DMatrix::from_diagonal(&omega.diagonal());
    covsel::io::write_matrix_file(&e, &names, &diag).unwrap();
    let out = tmp.path().join("m.csv");
    ok(&["eval", "--omega-true", s(&t), "--omega-est", s(&e), "--out", s(&out)]);
    let m = metric_row(&String::from_utf8(read(&out)).unwrap());
    assert_eq!(m["tp"], "0");
    assert_eq!(m["fn"], "5");
    assert_eq!(m["sn"].parse::<f64>().unwrap(), 0.0);
    assert_eq!(m["sp"].parse::<f64>().unwrap(), 1.0);
    assert_eq!(m["mcc_undefined"], "1");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["simulate", "--structure", "hexagon", "--p", "5", "--n", "10"]), 1);
    assert_eq!(code(&["simulate", "--structure", "ar1", "--p", "5", "--n", "10", "--rho", "1.5"]), 1);

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n3,oops\n").unwrap();
    let out = covsel(&["fit", "--data", s(&bad), "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row") && err.contains("column"), "{err}");
    assert_eq!(code(&["fit", "--data", s(&tmp.path().join("missing.csv"))]), 2);

    simulate(tmp.path(), &["--structure", "ar1", "--p", "4", "--n", "10"]);
    let small = tmp.path().join("small");
    simulate(&small, &["--structure", "ar1", "--p", "5", "--n", "10"]);
    let mismatch = covsel(&[
        "eval", "--omega-true", s(&tmp.path().join("omega_true.csv")), "--omega-est", s(&small.join("omega_true.csv")),
    ]);
    assert_ne!(mismatch.status.code(), Some(0));
    assert_eq!(code(&["fit", "--data", s(&tmp.path().join("data.csv")), "--draws", "5"]), 1);
}

#[test]
fn one_replicate_bench_summary_equals_the_replicate() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid.txt");
    std::fs::write(
        &grid,
        "structure = ar1\np = 6\nn = 60\nreplicates = 1\nseed = 3\nwarmup = 200\ndraws = 200\n",
    )
    .unwrap();
    let out = tmp.path().join("bench");
    ok(&["bench", "--grid", s(&grid), "--out-dir", s(&out), "--save-estimates"]);
    let metrics = metric_row(&String::from_utf8(read(&out.join("metrics.csv"))).unwrap());
    let summary = metric_row(&String::from_utf8(read(&out.join("summary.csv"))).unwrap());
    for k in ["kl", "ql", "sp", "sn", "edges"] {
        let a: f64 = metrics[k].parse().unwrap();
        let b: f64 = summary[&format!("{k}_mean")].parse().unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{k}: {a} vs {b}");
    }
    assert!(out.join("estimates/ar1_p6_n60_r0_omega_hat.csv").exists());
    assert!(out.join("manifest.json").exists());
}
