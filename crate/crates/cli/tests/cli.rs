use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lastmile"));
    c.env_remove("LASTMILE_TIME_LIMIT");
    c
}

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/example1.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_regular_fleet() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.json");
    let o = run(&[
        "generate",
        "--K",
        "10",
        "--per-dest",
        "100",
        "--Tw",
        "5",
        "--seed",
        "7",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["passengers"].as_array().unwrap().len(), 1000);
    assert_eq!(v["destinations"].as_array().unwrap().len(), 10);
    assert_eq!(v["fleet_size"], 60);
}

#[test]
fn generate_express_fleet() {
    let o = run(&[
        "generate",
        "--variant",
        "express",
        "--K",
        "10",
        "--per-dest",
        "50",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["fleet_size"], 50);
}

#[test]
fn generate_batch() {
    let o = run(&["generate", "--batch", "--K", "2,3"]);
    assert_eq!(code(&o), 64);
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "generate",
        "--batch",
        "--K",
        "2,3",
        "--per-dest",
        "5",
        "--replicates",
        "2",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 4);
    let o = run(&["generate", "--K", "2,3"]);
    assert_eq!(code(&o), 64);
}

#[test]
fn solve_example_with_bp() {
    let ex = example();
    let o = run(&[
        "solve",
        "--engine",
        "bp",
        "--alpha",
        "1.0",
        "--no-timing",
        p(&ex),
    ]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["objective"], 22.0);
    assert_eq!(v["travel"], 22);
    assert_eq!(v["status"], "optimal");
    assert!(v["wall_ms"].is_null());
    let o = run(&["solve", "--alpha", "0", p(&ex)]);
    assert_eq!(json(&o)["trips"], 2);
    assert!(json(&o)["wall_ms"].is_u64());
}

#[test]
fn root_only_reports_gap() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    let o = run(&[
        "generate",
        "--K",
        "3",
        "--per-dest",
        "20",
        "--Tw",
        "5",
        "--seed",
        "2",
        "--fleet-fraction",
        "0.2",
        "--out",
        p(&inst),
    ]);
    assert_eq!(code(&o), 0);
    let o = run(&["solve", "--root-only", "--alpha", "0.5", p(&inst)]);
    assert!([0, 2].contains(&code(&o)));
    let v = json(&o);
    let lb = v["lower_bound"].as_f64().unwrap();
    let ub = v["upper_bound"].as_f64().unwrap();
    let gap = v["gap_percent"].as_f64().unwrap();
    assert!(lb <= ub + 1e-6);
    assert!((gap - (ub - lb) / lb * 100.0).abs() < 1e-9);
    assert_eq!(v["nodes"], 1);
}

#[test]
fn oracle_engine() {
    let ex = example();
    let o = run(&["solve", "--engine", "oracle", "--alpha", "1", p(&ex)]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["objective"], 22.0);

    let dir = tempfile::tempdir().unwrap();
    let big = dir.path().join("big.json");
    run(&["generate", "--K", "2", "--per-dest", "60", "--out", p(&big)]);
    let o = run(&["solve", "--engine", "oracle", p(&big)]);
    assert_eq!(code(&o), 4);
    assert_eq!(json(&o)["status"], "limit");
}

#[test]
fn infeasible_instance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(example()).unwrap()).unwrap();
    v["fleet_size"] = 0.into();
    let f = dir.path().join("none.json");
    std::fs::write(&f, v.to_string()).unwrap();
    for engine in ["bp", "oracle"] {
        let o = run(&["solve", "--engine", engine, p(&f)]);
        assert_eq!(code(&o), 3, "{engine}");
    }
}

#[test]
fn exports_write_lp_files() {
    let ex = example();
    let dir = tempfile::tempdir().unwrap();
    for (engine, needle) in [("export-ip", "ip14:"), ("export-nf", "cap_4:")] {
        let f = dir.path().join(format!("{engine}.lp"));
        let o = run(&["solve", "--engine", engine, "--out", p(&f), p(&ex)]);
        assert_eq!(code(&o), 0);
        let text = std::fs::read_to_string(&f).unwrap();
        assert!(text.contains("Subject To") && text.contains(needle));
    }
    let o = run(&["solve", "--engine", "export-ip", p(&ex)]);
    assert_eq!(code(&o), 64);
}

#[test]
fn usage_errors() {
    let ex = example();
    assert_eq!(code(&run(&["solve", "--engine", "cplex", p(&ex)])), 64);
    assert_eq!(code(&run(&["solve", "--alpha", "1.5", p(&ex)])), 64);
    assert_eq!(code(&run(&["solve", "/nonexistent.json"])), 64);
    assert_eq!(code(&run(&["frobnicate"])), 64);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn time_limit_env_is_read() {
    let ex = example();
    let o = bin()
        .env("LASTMILE_TIME_LIMIT", "soon")
        .args(["solve", p(&ex)])
        .output()
        .unwrap();
    assert_eq!(code(&o), 64);
    let o = bin()
        .env("LASTMILE_TIME_LIMIT", "soon")
        .args(["solve", "--time-limit", "30", p(&ex)])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

fn sweep_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn sweep_example() {
    let ex = example();
    let o = run(&["sweep", "--alphas", "0,1", "--no-timing", p(&ex)]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "instance,alpha,Tw,n,K,m,travel_total,trips,lower_bound,gap_percent,wall_ms,nodes,columns,status"
    );
    let rows = sweep_rows(&text);
    assert_eq!(rows.len(), 2);
    let travel = |r: &Vec<String>| r[6].parse::<i64>().unwrap();
    let trips = |r: &Vec<String>| r[7].parse::<i64>().unwrap();
    assert_eq!(trips(&rows[0]), 2);
    assert_eq!(travel(&rows[1]), 22);
    assert!(travel(&rows[1]) <= travel(&rows[0]));
    assert!(trips(&rows[0]) <= trips(&rows[1]));

    let o = run(&[
        "sweep",
        "--alphas",
        "0",
        "--trips-x100",
        "--Tw",
        "1,2",
        p(&ex),
    ]);
    let rows = sweep_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2], "1");
    assert_eq!(rows[1][2], "2");
    assert_eq!(rows[0][7], "200");
}

#[test]
fn sweep_default_grid_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("s.json");
    run(&[
        "generate",
        "--K",
        "2",
        "--per-dest",
        "8",
        "--Tw",
        "2",
        "--seed",
        "4",
        "--out",
        p(&inst),
    ]);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let o = run(&[
            "sweep",
            "--no-timing",
            "--workers",
            workers,
            "--out",
            p(out),
            p(&inst),
        ]);
        assert_eq!(code(&o), 0);
    }
    let ta = std::fs::read_to_string(&a).unwrap();
    assert_eq!(ta, std::fs::read_to_string(&b).unwrap());
    assert_eq!(ta.lines().count(), 12);
}

fn write_schedule(dir: &Path, name: &str, groups: &[(&[usize], i64, &[usize])]) -> PathBuf {
    let v: Vec<Value> = groups
        .iter()
        .map(|(members, t, trips)| {
            let m: Vec<Value> = members
                .iter()
                .zip(trips.iter())
                .map(|(&j, &c)| serde_json::json!({"passenger": j, "trip": c}))
                .collect();
            serde_json::json!({"dest": 0, "depart": t, "members": m})
        })
        .collect();
    let f = dir.join(name);
    std::fs::write(&f, Value::Array(v).to_string()).unwrap();
    f
}

#[test]
fn validate_paths() {
    let ex = example();
    let dir = tempfile::tempdir().unwrap();
    let good = write_schedule(
        dir.path(),
        "p2.json",
        &[
            (&[0, 1], 3, &[0, 0]),
            (&[2, 3], 5, &[0, 0]),
            (&[4], 7, &[1]),
        ],
    );
    let o = run(&["validate", p(&ex), p(&good)]);
    assert_eq!(code(&o), 0);
    let bad = write_schedule(
        dir.path(),
        "p1.json",
        &[
            (&[0], 2, &[0]),
            (&[1], 3, &[0]),
            (&[2], 3, &[0]),
            (&[3], 6, &[1]),
            (&[4], 6, &[1]),
        ],
    );
    let o = run(&["validate", p(&ex), p(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("CV capacity exceeded at t=4"));
    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, "[{\"dest\": 0, \"depart\"").unwrap();
    assert_eq!(code(&run(&["validate", p(&ex), p(&cut)])), 64);

    let res = dir.path().join("res.json");
    run(&["solve", "--alpha", "0.5", "--out", p(&res), p(&ex)]);
    assert_eq!(code(&run(&["validate", p(&ex), p(&res)])), 0);
}
