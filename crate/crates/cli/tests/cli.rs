use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn rbmo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbmo")).args(args).output().expect("spawn rbmo")
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p
}

fn run_scenario(dir: &Path, sc: &Value, extra: &[&str]) -> (Output, PathBuf) {
    let path = write(dir, "scenario.json", sc);
    let out = dir.join(format!("out{}", extra.join("")));
    let mut args = vec!["--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (rbmo(&args), out)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let s = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(s.lines().last().expect("stderr line")).expect("error JSON")
}

#[test]
fn growth_check_on_segment() {
    let dir = tempfile::tempdir().unwrap();
    let sc = json!({"measure": {"generator": "segment", "n": 1024}, "command": {"name": "growth-check"}});
    let (o, out) = run_scenario(dir.path(), &sc, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let c0 = r["calibration"]["c0"].as_f64().unwrap();
    assert!((1.0..=3.0).contains(&c0), "{c0}");
    assert_eq!(r["scenario"]["seed"], 0);
    assert!(out.join("series.csv").exists() && out.join("timings.json").exists());
}

#[test]
fn rbmo_on_eps_weighted() {
    let dir = tempfile::tempdir().unwrap();
    let sc = json!({
        "measure": {"generator": "eps_weighted", "h": 0.0025, "eps": 0.01},
        "function": {"builtin": "ex3", "eps": 0.01},
        "command": {"name": "rbmo", "rho": [5.0]}
    });
    let (o, out) = run_scenario(dir.path(), &sc, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let star = r["outputs"]["rbmo_star"]["value"].as_f64().unwrap();
    assert!(star >= 10.0, "{star}");
    let bmo5 = r["outputs"]["bmo_rho"]["5"]["value"].as_f64().unwrap();
    assert!(bmo5 <= 10.0, "{bmo5}");
}

#[test]
fn reports_ignore_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let sc = json!({
        "measure": {"generator": "cantor4", "generation": 4},
        "function": {"builtin": "noise", "seed": 3},
        "command": {"name": "maximal"}
    });
    let (a, oa) = run_scenario(dir.path(), &sc, &["--threads", "1"]);
    let (b, ob) = run_scenario(dir.path(), &sc, &["--threads", "4"]);
    assert!(a.status.success() && b.status.success());
    for f in ["report.json", "series.csv"] {
        assert_eq!(std::fs::read(oa.join(f)).unwrap(), std::fs::read(ob.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn cz_above_sup_has_no_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let sc = json!({
        "measure": {"generator": "square", "n": 12},
        "function": {"builtin": "constant", "value": 1.0},
        "command": {"name": "cz", "lambda": 1.5}
    });
    let (o, out) = run_scenario(dir.path(), &sc, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["outputs"]["blocks"], 0, "{}", r["outputs"]);
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = json!({"measure": {"generator": "sierpinski", "n": 3}, "command": {"name": "growth-check"}});
    let (o, _) = run_scenario(dir.path(), &sc, &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert!(e["error"].is_string() && e["message"].is_string(), "{e}");

    let missing = rbmo(&["--scenario", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr_json(&missing)["message"].is_string());
}

#[test]
fn planar_command_on_line_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sc = json!({"measure": {"generator": "segment", "n": 16}, "command": {"name": "t1"}});
    let (o, _) = run_scenario(dir.path(), &sc, &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_block_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let n = 8;
    let vals: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect();
    let block = json!({
        "envelope": {"center": [0.5], "side": 2.0},
        "pieces": [{"lambda": 1.0, "a": {"values": vals}, "cube": {"center": [0.5], "side": 1.0}}]
    });
    let bp = write(dir.path(), "block.json", &block);
    let sc = json!({
        "measure": {"generator": "segment", "n": n},
        "command": {"name": "block-check", "block": bp.to_str().unwrap()}
    });
    let (o, out) = run_scenario(dir.path(), &sc, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&out)["outputs"]["valid"], false);
    assert_eq!(stderr_json(&o)["error"], "ValidationFailed");
}

#[test]
fn seed_flag_overrides_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let sc = json!({
        "measure": {"generator": "segment", "n": 256},
        "command": {"name": "k-sweep", "pairs": 20},
        "seed": 1
    });
    let (o, out) = run_scenario(dir.path(), &sc, &["--seed", "7"]);
    assert!(o.status.success());
    assert_eq!(report(&out)["scenario"]["seed"], 7);
}

#[test]
fn shipped_scenarios_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for e in std::fs::read_dir(&root).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") && !p.to_string_lossy().ends_with(".schema.json") {
            rbmo_core::scenario::Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            seen += 1;
        }
    }
    assert!(seen >= 10);
}
