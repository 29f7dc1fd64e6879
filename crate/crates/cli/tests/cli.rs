//! End-to-end tests of the `rpnn` binary: output formats, exit codes, and
//! byte-level reproducibility of every subcommand.

use std::path::Path;
use std::process::Command;

fn rpnn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rpnn"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn solve_writes_trajectory_with_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let status = rpnn()
        .args([
            "solve",
            "--problem",
            "dahlquist",
            "--lambda",
            "-1",
            "--solver",
            "pirpnn-m3",
            "--h",
            "0.1",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = String::from_utf8(read(&out)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,u_1");
    assert_eq!(lines.next().unwrap(), "0,1");
    assert_eq!(text.lines().count(), 12); // header + 11 time points
    assert!(
        out.with_extension("csv.manifest.json").exists()
            || dir.path().join("traj.csv.manifest.json").exists()
    );
}

#[test]
fn region_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("r1.csv");
    let out2 = dir.path().join("r2.csv");
    for out in [&out1, &out2] {
        let status = rpnn()
            .args([
                "region", "--m", "4", "--runs", "4", "--seed", "7", "--points", "8", "--re-min",
                "-3", "--re-max", "1", "--im-min", "-1", "--im-max", "1",
            ])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&out1), read(&out2));
    let text = String::from_utf8(read(&out1)).unwrap();
    assert!(text.starts_with("re,im,max_abs_s,flag\n"));
}

#[test]
fn region_threads_do_not_change_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("p.csv");
    let out2 = dir.path().join("s.csv");
    for (out, threads) in [(&out1, "2"), (&out2, "1")] {
        let status = rpnn()
            .args([
                "region",
                "--m",
                "3",
                "--runs",
                "3",
                "--seed",
                "11",
                "--points",
                "6",
                "--re-min",
                "-2",
                "--re-max",
                "0.5",
                "--im-min",
                "-1",
                "--im-max",
                "1",
                "--threads",
                threads,
            ])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&out1), read(&out2));
}

#[test]
fn bench_emits_rows_for_every_solver_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let status = rpnn()
        .args([
            "bench",
            "--problem",
            "example1",
            "--h-values",
            "0.5,0.25,0.125",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = String::from_utf8(read(&out)).unwrap();
    assert!(text.starts_with("solver,h,l2_error,wall_seconds,steps\n"));
    assert_eq!(text.lines().count(), 1 + 8 * 3); // header + |solvers| x |h|
                                                 // Untimed by default: deterministic zero wall column.
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').nth(3).unwrap(), "0");
    }
}

#[test]
fn bench_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("b1.csv");
    let out2 = dir.path().join("b2.csv");
    for out in [&out1, &out2] {
        let status = rpnn()
            .args([
                "bench",
                "--problem",
                "dahlquist",
                "--lambda",
                "-2",
                "--h-values",
                "0.25,0.125",
                "--seed",
                "5",
            ])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&out1), read(&out2));
}

#[test]
fn orders_reports_one_row_per_solver() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("orders.csv");
    let status = rpnn()
        .args([
            "orders",
            "--problem",
            "example1",
            "--solvers",
            "backward-euler,trapezoidal",
            "--h-values",
            "0.25,0.125,0.0625,0.03125,0.015625,0.0078125",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = String::from_utf8(read(&out)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "solver,fitted_order,rows_used");
    assert_eq!(lines.len(), 3);
    let order_be: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    let order_tr: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!((order_be - 1.0).abs() < 0.3, "{order_be}");
    assert!((order_tr - 2.0).abs() < 0.3, "{order_tr}");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "problem = dahlquist\nlambda = -1\nsolver = backward-euler\nh = 0.5\nt_end = 1\n",
    )
    .unwrap();
    let out = dir.path().join("a.csv");
    let status = rpnn()
        .arg("--config")
        .arg(&cfg)
        .args(["solve", "--h", "0.25"]) // overrides the file's 0.5
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = String::from_utf8(read(&out)).unwrap();
    assert_eq!(text.lines().count(), 1 + 5); // h=0.25 over [0,1]: 4 steps + IC
}

#[test]
fn unknown_names_exit_with_config_code() {
    let status = rpnn()
        .args([
            "solve",
            "--problem",
            "nonesuch",
            "--solver",
            "pirpnn-m3",
            "--h",
            "0.1",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = rpnn()
        .args([
            "solve",
            "--problem",
            "dahlquist",
            "--solver",
            "rk99",
            "--h",
            "0.1",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = rpnn().args(["solve", "--no-such-flag"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn manifest_records_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let status = rpnn()
        .args([
            "solve",
            "--problem",
            "dahlquist",
            "--solver",
            "gauss2",
            "--h",
            "0.5",
            "--seed",
            "99",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = dir.path().join("m.csv.manifest.json");
    let text = String::from_utf8(read(&manifest)).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["subcommand"], "solve");
    assert_eq!(json["config"]["seed"], "99");
    assert_eq!(json["config"]["h"], "0.5");
    assert!(json["machine"]["cpus"].as_u64().unwrap() >= 1);
}
