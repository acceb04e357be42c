use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn intertwine(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_intertwine")).args(args).output().expect("binary runs");
    out.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> i32 {
    let mut all: Vec<&str> = args.to_vec();
    let out = dir.to_str().unwrap();
    all.extend(["--out", out]);
    intertwine(&all)
}

#[test]
fn factorize3_on_the_mixed_chain_gives_two_one_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["factorize3", "--fixture", "mixed"]), 0);
    let plan = read_json(&tmp.path().join("plan.json"));
    let counts = &plan["plan"]["counts"];
    assert_eq!((counts["j1"].as_u64(), counts["j2"].as_u64(), counts["j3"].as_u64()), (Some(2), Some(1), Some(0)));
    let manifest = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["test_functions"]["seed"], 20);
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["chain"]["record"]["factors"].as_array().unwrap().len(), 3);
    assert!(manifest["residuals"]["plan_intertwining"].as_f64().unwrap() < 1e-5);
    assert!(tmp.path().join("grids/potentials.csv").exists());
}

#[test]
fn verify_on_ground_deletion_is_balanced() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["verify", "--fixture", "ground_deletion"]), 0);
    let audit = read_json(&tmp.path().join("audit.json"));
    let reports = audit["index"].as_array().unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r["balanced"] == true));
    assert!(audit["table"]["rows"].as_array().unwrap().iter().all(|r| r["passed"] == true));
}

#[test]
fn unpaired_complex_value_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "potential = \"x^2 - 3\"\nr0 = 2.0\n[[edits]]\nlambda = [-1.0, 1.0]\n").unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run_in(&out, &["factorize3", "--config", cfg.to_str().unwrap()]), 2);
    let diag = read_json(&out.join("diagnostic.json"));
    assert_eq!(diag["kind"], "config");
}

#[test]
fn negative_tolerance_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["index", "--fixture", "two_level", "--tol", "-1"]), 2);
}

#[test]
fn singular_factor_exits_with_3_and_a_witness() {
    // the first excited state has a node at the origin
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "potential = \"x^2 - 3\"\nr0 = 2.0\n[[edits]]\nlambda = 0.0\n").unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run_in(&out, &["factorize2", "--config", cfg.to_str().unwrap()]), 3);
    let diag = read_json(&out.join("diagnostic.json"));
    assert!(diag["witness"].as_f64().unwrap().abs() < 0.05);
}

#[test]
fn plan_replay_reproduces_residuals() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    assert_eq!(run_in(&first, &["factorize3", "--fixture", "two_level"]), 0);
    let plan = first.join("plan.json");
    let again = tmp.path().join("again");
    assert_eq!(run_in(&again, &["verify", "--plan", plan.to_str().unwrap()]), 0);
    let replay = read_json(&again.join("replay.json"));
    assert!(replay["drift"].as_f64().unwrap() <= 1e-12);
    let a = read_json(&plan);
    let b = read_json(&again.join("plan.json"));
    assert_eq!(a["residuals"], b["residuals"]);
}

#[test]
fn edit_list_builds_the_mixed_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "potential = \"x^2 - 3\"\nr0 = 2.0\n[grid]\nxi = 40.0\n\
         [[edits]]\nlambda = -4.0\n\
         [[edits]]\nlambda = [-1.0, 1.0]\nmultiplicity = 2\n\
         [[edits]]\nlambda = [-1.0, -1.0]\nmultiplicity = 2\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run_in(&out, &["factorize3", "--config", cfg.to_str().unwrap()]), 0);
    let counts = read_json(&out.join("plan.json"))["plan"]["counts"].clone();
    assert_eq!((counts["j1"].as_u64(), counts["j2"].as_u64(), counts["j3"].as_u64()), (Some(2), Some(1), Some(0)));
}

#[test]
fn asymptotics_writes_its_tables() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["asymptotics"]), 0);
    assert!(tmp.path().join("grids/asymptotics.csv").exists());
    assert!(tmp.path().join("grids/counterexample.csv").exists());
    let audit = read_json(&tmp.path().join("audit.json"));
    assert_eq!(audit["asymptotics"]["bounded"], true);
}
