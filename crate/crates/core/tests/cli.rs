use std::path::PathBuf;
use std::process::{Command, Output};

use modcap::io::Instance;

fn modcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modcap")).args(args).output().unwrap()
}

fn shipped(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "instances", name].iter().collect();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn solve_writes_one_csv_row() {
    let o = modcap(&["solve", "--instance", &shipped("path5.json"), "--family", "ends", "--p", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "instance,family,p,value,dual_value,gap,iters,wall_ms,seed");
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[1], "ends");
    // five unit masses on a path: 1 / (1/4 + 1 + 1 + 1 + 1/4)
    let value: f64 = fields[3].parse().unwrap();
    assert!((value - 2.0 / 7.0).abs() < 1e-9);
    assert_eq!(fields[8], "0");
}

#[test]
fn solve_ndjson_echoes_the_seed() {
    let o = modcap(&["solve", "--instance", &shipped("grid4.json"), "--family", "rows", "--format", "ndjson", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["family"], "rows");
}

#[test]
fn duality_certifies_and_emits_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let o = modcap(&[
        "duality",
        "--instance",
        &shipped("grid4.json"),
        "--family",
        "rows",
        "--emit-plan",
        plan.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["duality"], "ok");
    let m = v["modulus_root"].as_f64().unwrap();
    let c = v["content"].as_f64().unwrap();
    assert!((m - c).abs() < 1e-6);
    let emitted = Instance::load(&plan).unwrap();
    let (_, rho) = &emitted.plans[0];
    assert!((rho.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn loose_tolerance_fails_the_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("big.json");
    let o = modcap(&["gen", "--points", "100", "--measures", "200", "--sparsity", "0.3", "--seed", "1", "--out", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = modcap(&["duality", "--instance", inst.to_str().unwrap(), "--family", "random", "--tol", "0.5"]);
    assert_eq!(o.status.code(), Some(4));
    let o = modcap(&["solve", "--instance", inst.to_str().unwrap(), "--family", "random", "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"space": {"points": 2, "edges": [[0, 1, 1.0]], "measure": [1.0, -1.0]}}"#).unwrap();
    let o = modcap(&["solve", "--instance", bad.to_str().unwrap(), "--family", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains('1'), "{}", stderr(&o));

    std::fs::write(
        &bad,
        r#"{"space": {"points": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0]], "measure": [1, 1, 1]},
            "curves": [{"name": "jump", "nodes": [0, 2]}]}"#,
    )
    .unwrap();
    let o = modcap(&["curve", "mult", "--instance", bad.to_str().unwrap(), "--curve", "jump"]);
    assert_eq!(o.status.code(), Some(2));

    let o = modcap(&["solve", "--instance", &shipped("path5.json"), "--family", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    let o = modcap(&["solve", "--instance", &shipped("path5.json"), "--family", "ends", "--p", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_is_reproducible() {
    let a = modcap(&["gen", "--points", "30", "--measures", "5", "--seed", "3"]);
    let b = modcap(&["gen", "--points", "30", "--measures", "5", "--seed", "3"]);
    assert_eq!(a.stdout, b.stdout);
    let o = modcap(&["gen", "--points", "500", "--measures", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn curve_commands_print_tables() {
    let inst = shipped("path5.json");
    let o = modcap(&["curve", "mult", "--instance", &inst, "--curve", "detour"]);
    assert_eq!(stdout(&o), "edge,u,v,multiplicity\n0,0,1,1\n1,1,2,3\n2,2,3,1\n");
    let o = modcap(&["curve", "jmap", "--instance", &inst, "--curve", "across", "--support", "edges"]);
    assert_eq!(stdout(&o).lines().count(), 5);
    let o = modcap(&["curve", "mmap", "--instance", &inst, "--curve", "across"]);
    let total: f64 = stdout(&o).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let o = modcap(&["curve", "resample", "--instance", &inst, "--curve", "detour"]);
    assert!(Instance::from_json(&stdout(&o)).is_ok());
}

#[test]
fn plan_commands_report() {
    let inst = shipped("path5.json");
    let o = modcap(&["plan", "check", "--instance", &inst, "--plan", "both"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["is_test_plan"], true);
    let o = modcap(&["plan", "improve", "--instance", &inst, "--plan", "both", "--eps", "0.1", "--q", "3"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["barycenter_sup"].as_f64().unwrap() <= v["one_over_z"].as_f64().unwrap() + 1e-12);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stretched.json");
    let o = modcap(&[
        "plan", "stretch", "--instance", &inst, "--plan", "both", "--eps", "0.25", "--ntau", "4", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(Instance::load(&out).unwrap().plans[0].1.len(), 8);
}

#[test]
fn grad_check_reports_violations() {
    let inst = shipped("grid4.json");
    let o = modcap(&["grad", "check", "--instance", &inst, "--f", "f", "--g", "g", "--family", "left-right", "--plans", "rows"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["violations"], 0);
    assert_eq!(v["plans_passed"], true);
    let o = modcap(&["grad", "check", "--instance", &inst, "--f", "f", "--g", "g_low", "--family", "left-right", "--plans", "rows"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["violations"].as_u64().unwrap() > 0);
    assert!(v["modulus_of_violations"].as_f64().unwrap() > 0.0);
    assert_eq!(v["plans_passed"], false);
}

#[test]
fn selftest_runs_a_subset() {
    let o = modcap(&["selftest", "--only", "1,3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("PASS")).count(), 2);
}
