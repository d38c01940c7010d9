use std::process::{Command, Output};

fn newtonspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newtonspec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

#[test]
fn verify_passes_on_the_sphere() {
    let out = newtonspec(&["verify", "--surface", "sphere:1", "--c", "0", "--level", "2", "--trials", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["schema"], "newtonspec-report/1");
    assert_eq!(report["pass"], true);
    assert!(report.get("timings").is_none());
}

#[test]
fn thread_count_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for threads in ["1", "3"] {
        let path = dir.path().join(format!("t{threads}.json"));
        let out = newtonspec(&[
            "verify",
            "--surface",
            "ellipsoid:1,1,1.5",
            "--level",
            "2",
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
        texts.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn csv_and_timings() {
    let out = newtonspec(&["verify", "--surface", "flattorus:1,1", "--level", "0", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);

    let out = newtonspec(&["verify", "--surface", "flattorus:1,1", "--level", "0", "--timings"]);
    assert!(json(&out)["timings"]["solve"].is_number());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(newtonspec(&["verify"]).status.code(), Some(1));
    assert_eq!(newtonspec(&["verify", "--surface", "cube:1"]).status.code(), Some(1));
    let wrong_c = newtonspec(&["verify", "--surface", "cliffordtorus:0.6,0.8", "--c", "0"]);
    assert_eq!(wrong_c.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&wrong_c.stderr).contains("curvature 1"));
    let odd = newtonspec(&["verify", "--surface", "ellipsoid:1,1,1,1.3", "--r", "1", "--level", "0"]);
    assert_eq!(odd.status.code(), Some(1));
    assert_eq!(newtonspec(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_with_five() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("r.json");
    let out = newtonspec(&["verify", "--surface", "sphere:1", "--level", "0", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn solver_budget_exhaustion_exits_with_four() {
    let out = newtonspec(&["spectrum", "--surface", "sphere:1", "--level", "3", "--tol", "1e-300", "--eigs", "3"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn converge_spectrum_and_identities() {
    let out = newtonspec(&["converge", "--surface", "sphere:1", "--levels", "1..3", "--trials", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let table = json(&out);
    assert_eq!(table["rows"].as_array().unwrap().len(), 3);
    assert_eq!(table["weak_orders"].as_array().unwrap().len(), 2);

    let out = newtonspec(&["spectrum", "--surface", "cliffordtorus:0.7071067811865476,0.7071067811865476", "--level", "2", "--eigs", "4"]);
    let eigenvalues = json(&out)["eigenvalues"].as_array().unwrap().clone();
    assert_eq!(eigenvalues.len(), 4);
    for value in eigenvalues {
        assert!((value.as_f64().unwrap() - 2.0).abs() < 1e-10);
    }

    let out = newtonspec(&["identities", "--surface", "sphere:2@3", "--samples", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let scan = json(&out);
    assert_eq!(scan["rows"].as_array().unwrap().len(), 2);
    assert_eq!(scan["pass"], true);
}
