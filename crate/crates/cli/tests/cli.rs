use std::process::Command;

fn biassim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_biassim")).args(args).output().expect("binary runs")
}

#[test]
fn run_report_and_explain_on_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cell = ["--out", out, "--lbl", "0.4", "--rep", "0.6", "--seed", "2"];

    let r = biassim(&[&["run", "--pipeline", "offline", "--variant", "eg_dp"], &cell[..]].concat());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("2 cells, 0 failed"));
    let metrics = dir.path().join("results/rep0.6_lbl0.4/seed_2/offline/eg_dp/metrics.json");
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(metrics).unwrap()).unwrap();
    assert_eq!(record["status"]["state"], "ok");
    assert!(dir.path().join("results_tables/offline_results.csv").is_file());

    let rep = biassim(&["report", "--out", out]);
    assert!(rep.status.success());

    let e = biassim(&[&["explain", "--variant", "eg_dp"], &cell[..]].concat());
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    for f in ["none.dot", "eg_dp.dot", "eg_dp.json", "eg_dp.shapley.json"] {
        assert!(dir.path().join("explain/rep0.6_lbl0.4/seed_2/offline").join(f).is_file(), "{f}");
    }

    // The online models were never trained: the error names the cell.
    let missing = biassim(&[&["explain", "--pipeline", "online"], &cell[..]].concat());
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("results/rep0.6_lbl0.4/seed_2/online/none"));
}

#[test]
fn generate_prints_stable_fingerprints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = ["generate", "--out", out, "--lbl", "0.0", "--rep", "0.5", "--seed", "7"];
    let a = biassim(&args);
    let b = biassim(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(dir.path().join("datasets/rep0.5_lbl0.0_seed_7.csv").is_file());
}

#[test]
fn bad_arguments_fail() {
    assert!(!biassim(&["run", "--variant", "bogus"]).status.success());
    assert!(!biassim(&["run", "--lbl", "2.0", "--out", "/nonexistent/never"]).status.success());
}
