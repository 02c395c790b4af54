use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_takagi-lab"));
    c.env_remove("TAKAGI_LAB_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn eval_examples() {
    for x in ["17/108", "37/108"] {
        let o = run(&["eval", "--r", "3", "--x", x]);
        assert!(o.status.success());
        assert_eq!(stdout(&o), "3/8\n");
    }
    assert_eq!(stdout(&run(&["eval", "--r", "2", "--x", "1/3"])), "2/3\n");
    assert_eq!(run(&["eval", "--r", "2", "--x", "0.5"]).status.code(), Some(2));
}

#[test]
fn slope_walk_starts_at_step_one() {
    let o = run(&["slopes", "--r", "3", "--x", "17/108", "--depth", "12"]);
    assert_eq!(stdout(&o), "1 2 3 4 3 4 3 4 3 4 3 4\n");
    let o = run(&["slopes", "--r", "3", "--x", "17/108", "--depth", "5", "--format", "csv"]);
    let rows: Vec<_> = stdout(&o).lines().skip(1).map(String::from).collect();
    assert_eq!(rows, ["1,1,1", "2,1,2", "3,1,3", "4,1,4", "5,-1,3"]);
}

#[test]
fn domain_errors_exit_one_with_tag() {
    let o = run(&["nplus", "--r", "3", "--x", "1/2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("PointInCorner:"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());

    let o = run(&["eval", "--r", "2", "--x", "-1/3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("OutOfRange:"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["eval", "--r", "2"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "--r", "0", "--x", "1/3"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "--r", "2", "--x", "1/0"]).status.code(), Some(2));
    assert_eq!(run(&["plot", "--r", "2", "--depth", "99"]).status.code(), Some(2));
    for bad in ["0", "zero", "-3", ""] {
        let o = bin().env("TAKAGI_LAB_THREADS", bad).args(["eval", "--r", "2", "--x", "1/3"]).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "TAKAGI_LAB_THREADS={bad:?}");
    }
}

#[test]
fn json_documents_are_versioned() {
    let cmds: [&[&str]; 5] = [
        &["eval", "--r", "3", "--x", "17/108"],
        &["rho", "--r", "3", "--x", "37/108"],
        &["maxval", "--r", "2"],
        &["crw-params", "--r", "4"],
        &["cover", "--r", "2", "--y", "1/2", "--depth", "6"],
    ];
    for args in cmds {
        let mut full = args.to_vec();
        full.extend(["--format", "json"]);
        let o = run(&full);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["schemaVersion"], 1, "{args:?}");
        assert_eq!(v["command"], args[0]);
    }
}

#[test]
fn rationals_round_trip_through_json() {
    let o = run(&["rho", "--r", "2", "--x", "4/5", "--format", "json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let out = v["step"]["output"].as_str().expect("output rational");
    assert_eq!(out, "1/5");
    assert_eq!(v["step"]["rule"], "complement");
    let text = stdout(&run(&["rho", "--r", "2", "--x", "4/5"]));
    assert_eq!(text.lines().next(), Some(out));
    let back = run(&["eval", "--r", "2", "--x", out]);
    assert_eq!(stdout(&back), stdout(&run(&["eval", "--r", "2", "--x", "4/5"])));
}

#[test]
fn out_flag_writes_file_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ab.csv");
    let o = run(&["crw-ab", "--r", "2", "--depth", "6", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("n,a_n,b_n,b_{n+2}/a_n\n"));
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 1);
}

#[test]
fn failed_command_leaves_existing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("keep.txt");
    std::fs::write(&path, "old").unwrap();
    let o = run(&["eval", "--r", "2", "--x", "1/4", "--depth", "3", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let o = run(&["nplus", "--r", "2", "--x", "1/4", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_ne!(std::fs::read_to_string(&path).unwrap(), "old");
    let before = std::fs::read(&path).unwrap();
    let o = run(&["nplus", "--r", "2", "--x", "1/4", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[test]
fn plot_polyline_has_all_vertices() {
    for (r, n) in [(2u32, 1u32), (2, 5), (3, 3), (5, 2)] {
        let o = run(&["plot", "--r", &r.to_string(), "--depth", &n.to_string()]);
        let svg = stdout(&o);
        assert!(svg.starts_with("<svg"));
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count() as u32, 2 * r.pow(n - 1) + 1, "r={r} n={n}");

        let o = run(&["plot", "--r", &r.to_string(), "--depth", &n.to_string(), "--format", "csv"]);
        assert_eq!(stdout(&o).lines().count() as u32, 2 * r.pow(n - 1) + 2);
    }
}

#[test]
fn seeded_commands_repeat() {
    let args = ["crw-sim", "--r", "3", "--depth", "200", "--samples", "500", "--seed", "11"];
    let a = run(&args);
    let b = bin().env("TAKAGI_LAB_THREADS", "1").args(args).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
