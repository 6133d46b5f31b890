use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(cmd: &str, config: &str, dir: &Path) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_jumpform"))
        .args([cmd, "--config"])
        .arg(&cfg)
        .arg("--output-dir")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn outputs(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = match fs::read_dir(dir.join("out")) {
        Ok(rd) => rd
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    v
}

fn json_output(dir: &Path) -> Value {
    let name = outputs(dir)
        .into_iter()
        .find(|f| f.ends_with(".json"))
        .unwrap();
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

const CRITERIA: &str = r#"{"command":"criteria",
  "model":{"d":1,"alpha":1.0,"kernel":"FiniteRange"},
  "potential":{"family":{"Linear":{"lambda":10.0}},"dim":1},
  "numeric":{"r_grid":[2,4,8,16,32],"s_list":[0.01,0.1]}}"#;

#[test]
fn criteria_passes_for_steep_linear() {
    let t = tempfile::tempdir().unwrap();
    let o = run("criteria", CRITERIA, t.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = outputs(t.path());
    assert_eq!(files.len(), 2, "{files:?}");
    assert!(files.iter().all(|f| f.starts_with("criteria-")));
    let v = json_output(t.path());
    let pc = &v["verdicts"][0];
    assert_eq!(pc["criterion"], "poincare");
    assert_eq!(pc["verdict"], "Pass");
    assert!(pc["margin"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(t.path().join("out").join(&files[0])).unwrap();
    assert!(csv.starts_with("r,log_k,log_K,log_phi,log_ratio"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn malformed_json_exits_1_without_outputs() {
    let t = tempfile::tempdir().unwrap();
    let o = run("criteria", "{\"command\": \"criteria\", ", t.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(outputs(t.path()).is_empty());
    assert!(!t.path().join("out").exists());
}

#[test]
fn unknown_key_and_bad_values_exit_1() {
    let t = tempfile::tempdir().unwrap();
    let bad = CRITERIA.replace("\"s_list\"", "\"s_lists\"");
    assert_eq!(run("criteria", &bad, t.path()).status.code(), Some(1));
    let bad = CRITERIA.replace("[2,4,8,16,32]", "[4,2]");
    assert_eq!(run("criteria", &bad, t.path()).status.code(), Some(1));
    // command on the line must match the config
    assert_eq!(run("gap", CRITERIA, t.path()).status.code(), Some(1));
    assert!(outputs(t.path()).is_empty());
}

#[test]
fn numeric_failure_exits_2_with_error_name() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"command":"gap","model":{"d":1,"alpha":1.0,"kernel":"FiniteRange"},
      "potential":{"family":{"Linear":{"lambda":1.0}},"dim":1},
      "numeric":{"L_list":[2,3,4],"h":0.1,"dense_cap":2,"max_iter":1}}"#;
    let o = run("gap", cfg, t.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "NoConvergence");
    assert_eq!(json_output(t.path())["error"], "NoConvergence");
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let cfg = r#"{"command":"gap","model":{"d":1,"alpha":1.0,"kernel":"LargeJump"},
      "potential":{"family":{"Power":{"delta":2.0}},"dim":1},
      "numeric":{"L_list":[3,5,7],"h":0.1,"threads":4}}"#;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run("gap", cfg, a.path()).status.success());
    assert!(run("gap", cfg, b.path()).status.success());
    let fa = outputs(a.path());
    assert_eq!(fa, outputs(b.path()));
    for f in fa {
        let x = fs::read(a.path().join("out").join(&f)).unwrap();
        let y = fs::read(b.path().join("out").join(&f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn report_chains_sections() {
    let cfg = r#"{"command":"report","model":{"d":1,"alpha":0.5,"kernel":"LargeJump"},
      "potential":{"family":{"PolyTail":{"eps":1.5}},"dim":1},
      "numeric":{"L_list":[5,10,20],"h":0.1,"r_grid":[2,4,8,16,32],"s_list":[0.01]}}"#;
    let t = tempfile::tempdir().unwrap();
    let o = run("report", cfg, t.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_output(t.path());
    assert_eq!(v["criteria"]["verdicts"][2]["verdict"], "Pass");
    assert!(v["gap"]["study"]["rows"].as_array().unwrap().len() == 3);
    assert!(v["drift"]["large_jump_generator"].is_array());
    assert!(v["certificate"]["contradiction_factor"].as_f64().unwrap() <= 0.5);
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        seen.push(v["command"].as_str().unwrap().to_string());
    }
    seen.sort();
    assert_eq!(
        seen,
        [
            "concentration",
            "criteria",
            "gap",
            "lyapunov",
            "report",
            "superpc"
        ]
    );
}
