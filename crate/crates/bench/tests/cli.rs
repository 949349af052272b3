use std::process::Command;

use dsdr_bench::results::{read_results, RepLabel};

fn dsdr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dsdr"))
}

#[test]
fn run_writes_reps_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let status = dsdr()
        .args(["run", "--method", "sir", "--mode", "exact", "--model", "2", "--n", "500", "--p", "6"])
        .args(["--slices", "8", "--workers", "3", "--reps", "3", "--seed", "9", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let t = read_results(&out).unwrap();
    assert_eq!(t.rows.len(), 5);
    assert_eq!(t.rows[3].rep, RepLabel::Mean);
    assert_eq!(t.rows[0].echo[..3], ["sir", "exact", "model-2"]);
    assert!(t.rows[0].bytes_up > 0.0);
}

#[test]
fn fit_reads_external_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("x1,target,x2,x3\n");
    for i in 0..200 {
        let (a, b, c) = ((i % 17) as f64 - 8.0, (i % 11) as f64 - 5.0, (i % 7) as f64 - 3.0);
        text += &format!("{a},{},{b},{c}\n", a + 0.5 * b + 0.01 * ((i * 31) % 13) as f64);
    }
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("f.csv");
    let status = dsdr()
        .args(["fit", "--response", "target", "--mode", "approx-homo", "--reps", "2", "--standardize", "--input"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let t = read_results(&out).unwrap();
    assert_eq!(t.rows[0].echo[4..6], ["200", "3"]);
    assert!(t.rows[0].trace_correlation > 0.9);

    let missing = dsdr().args(["fit", "--response", "nope", "--input"]).arg(&data).status().unwrap();
    assert_eq!(missing.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    for args in [
        vec!["run", "--mode", "exact", "--method", "save"],
        vec!["run", "--reps", "0"],
        vec!["run", "--k", "11"],
        vec!["run", "--bogus"],
        vec!["timing", "--grid", "n=abc"],
    ] {
        let out = dsdr().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn all_reps_failing_exits_3() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let status = dsdr()
        .args(["run", "--mode", "exact", "--n", "200", "--p", "5", "--reps", "1", "--transport", "tcp", "--port", &port])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    let t = read_results(&out).unwrap();
    assert!(t.rows[0].error_flag);
}

#[test]
fn budget_env_var_caps_timing_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let grid = "n=300,600;p=5;s=3;modes=global,exact";
    let run = |budget: &str| {
        dsdr()
            .env("DSDR_BUDGET_CELLS", budget)
            .args(["timing", "--grid", grid, "--reps", "1", "--out"])
            .arg(&out)
            .status()
            .unwrap()
    };
    assert_eq!(run("2000").code(), Some(0));
    let t = read_results(&out).unwrap();
    for r in t.repetitions() {
        assert_eq!(r.error_flag, r.echo[4] == "600");
    }
    assert_eq!(run("100").code(), Some(3));
    assert_eq!(run("lots").code(), Some(2));
}
