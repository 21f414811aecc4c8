use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lowrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lowrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let out = lowrank(&[
        "--out",
        s(dir.path()),
        "--seed",
        "3",
        "gen",
        "--n",
        "30",
        "--r",
        "2",
        "--m",
        "300",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("instance/meta.toml").exists());

    let inst = dir.path().join("instance");
    let solved = dir.path().join("gd");
    let out = lowrank(&[
        "--out",
        s(&solved),
        "solve",
        "--method",
        "gd",
        "--mu",
        "0.5",
        "--instance",
        s(&inst),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(solved.join("trace.csv")).unwrap();
    assert!(trace.lines().count() > 2);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(solved.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["termination"], "converged");
    assert!(summary["final_rel_err"].as_f64().unwrap() < 1e-5);
}

#[test]
fn unconverged_solve_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = lowrank(&[
        "--out",
        s(dir.path()),
        "gen",
        "--n",
        "20",
        "--r",
        "1",
        "--m",
        "200",
    ]);
    assert_eq!(code(&out), 0);
    let inst = dir.path().join("instance");
    let out = lowrank(&[
        "--out",
        s(dir.path()),
        "solve",
        "--method",
        "gd",
        "--mu",
        "0.3",
        "--max-iters",
        "2",
        "--instance",
        s(&inst),
    ]);
    assert_eq!(code(&out), 2);
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&lowrank(&["frobnicate"])), 1);
    assert_eq!(code(&lowrank(&["gen", "--n", "10"])), 1);
    assert_eq!(
        code(&lowrank(&[
            "solve",
            "--method",
            "newton",
            "--instance",
            "x"
        ])),
        1
    );
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(
        code(&lowrank(&[
            "solve",
            "--method",
            "gd",
            "--instance",
            s(&missing)
        ])),
        1
    );
    assert_eq!(code(&lowrank(&["--help"])), 0);
}

#[test]
fn mean_check_reports_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = lowrank(&[
        "--out",
        s(dir.path()),
        "check",
        "mean",
        "--n",
        "40",
        "--r",
        "1",
        "--trials",
        "4",
    ]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let slope = json["slope"].as_f64().unwrap();
    assert!(slope < 0.0, "slope {slope}");
    assert!(dir.path().join("check_mean.json").exists());
}

#[test]
fn sdp_solves_small_problem() {
    let dir = tempfile::tempdir().unwrap();
    // min 2x11 + x22 subject to x11 + x22 = 1: optimum 1 at diag(0, 1).
    let problem = dir.path().join("p.sdp");
    fs::write(&problem, "2 1\n0 1 1 2\n0 2 2 1\n1 1 1 1\n1 2 2 1\nb 1 1\n").unwrap();
    let out = lowrank(&["--out", s(dir.path()), "sdp", "--problem", s(&problem)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let obj: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("objective "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((obj - 1.0).abs() < 1e-4);
}

#[test]
fn phase_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    fs::write(
        &grid,
        "n = [16]\nr = [1]\nm_over_n = [1.0, 3.0]\ntrials = 3\nmethods = [\"gd\"]\n\
         [gd]\nmu = 0.3\nmax_iters = 2000\n",
    )
    .unwrap();
    let mut tables = Vec::new();
    for (name, threads) in [("a", None), ("b", None), ("c", Some("4"))] {
        let out_dir = dir.path().join(name);
        let mut args = vec!["--out", s(&out_dir), "--config", s(&grid), "--seed", "9"];
        if let Some(k) = threads {
            args.extend(["--threads", k]);
        }
        args.push("phase");
        let out = lowrank(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        tables.push(fs::read_to_string(out_dir.join("phase.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0], tables[2]);
}
