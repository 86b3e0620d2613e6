use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn diffnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffnet")).args(args).output().expect("binary runs")
}

fn pair_config(extra: &str) -> String {
    format!(
        r#"{{
  "schema": 1,
  "name": "pair",
  "description": "test pair",
  "system": {{
    "source": "generated",
    "L": 20.0,
    "preset": "paper-sec4",
    "placements": [
      {{ "type": "point", "kind": "sender", "position": [0, 0, 0] }},
      {{ "type": "point", "kind": "receiver", "position": [15, 0, 0] }}
    ]
  }},
  "reduced": {{ "method": {{ "method": "rk4", "dt": 0.1 }} }},
  "t_end": 50.0,
  "output_dt": 5.0,
  {extra}
  "analyses": [{{ "type": "toggle_report" }}, {{ "type": "gain_export" }}]
}}"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn entries(dir: &Path) -> Vec<String> {
    match fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().into_string().unwrap()).collect(),
        Err(_) => Vec::new(),
    }
}

#[test]
fn malformed_json_exits_2_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.json", "{ \"schema\": 1, \"name\": ");
    let out = tmp.path().join("out");
    let o = diffnet(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(entries(&out).is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("config parse"));
}

#[test]
fn unknown_field_and_preset_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "extra.json", &pair_config("\"colour\": \"red\","));
    assert_eq!(diffnet(&["validate", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(diffnet(&["validate", "--preset", "no-such"]).status.code(), Some(2));
}

#[test]
fn invalid_system_exits_3() {
    let tmp = TempDir::new().unwrap();
    let text = pair_config("").replace("[15, 0, 0]", "[1, 0, 0]");
    let cfg = write(tmp.path(), "overlap.json", &text);
    let out = tmp.path().join("out");
    let o = diffnet(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(entries(&out).is_empty());
}

#[test]
fn slab_without_seed_exits_3_and_seed_flag_fixes_it() {
    let tmp = TempDir::new().unwrap();
    let text = pair_config("").replace(
        r#"{ "type": "point", "kind": "sender", "position": [0, 0, 0] }"#,
        r#"{ "type": "slab", "kind": "sender", "count": 3, "r1_min": -10, "r1_max": 0 }"#,
    );
    let cfg = write(tmp.path(), "slab.json", &text);
    assert_eq!(diffnet(&["validate", "--config", &cfg]).status.code(), Some(3));
    let o = diffnet(&["validate", "--config", &cfg, "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("3 senders, 1 receivers"));
}

#[test]
fn solver_failure_exits_4() {
    let tmp = TempDir::new().unwrap();
    let text = pair_config("\"model\": \"full\", \"full\": { \"tolerance\": 1e-300 },");
    let cfg = write(tmp.path(), "hard.json", &text);
    let out = tmp.path().join("out");
    let o = diffnet(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(entries(&out).is_empty());
}

#[test]
fn run_writes_outputs_reproducibly() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "pair.json", &pair_config(""));
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let o = diffnet(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let dirs = entries(&out_a);
    assert_eq!(dirs.len(), 1);
    assert!(dirs[0].starts_with("pair-"));
    let (a, b) = (out_a.join(&dirs[0]), out_b.join(&dirs[0]));
    let mut files = entries(&a);
    files.sort();
    for f in [
        "gain.csv",
        "green.csv",
        "manifest.json",
        "plot_reduced_cell0.dat",
        "plot_reduced_cell1.dat",
        "time_scales.json",
        "toggle_report.json",
        "trajectory_reduced.csv",
    ] {
        assert!(files.iter().any(|x| x == f), "missing {f}");
    }
    for f in files.iter().filter(|f| f.ends_with(".csv") || f.ends_with(".dat")) {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let traj = fs::read_to_string(a.join("trajectory_reduced.csv")).unwrap();
    assert!(traj.starts_with("time,cell_id,kind,species,value\n0.0,0,sender,LuxI,400.0\n"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("toggle_report.json")).unwrap()).unwrap();
    assert_eq!(report["reduced"][0]["state"], "OFF");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "run");
    assert!(manifest["outputs"]["gain.csv"].as_str().unwrap().len() == 64);
}

#[test]
fn overrides_change_the_output_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "pair.json", &pair_config(""));
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(diffnet(&["gain", "--config", &cfg, "--out", out_s]).status.success());
    assert!(diffnet(&["gain", "--config", &cfg, "--out", out_s, "--seed", "1"]).status.success());
    assert_eq!(entries(&out).len(), 2);
}

#[test]
fn presets_are_listed() {
    let o = diffnet(&["presets"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["paper-4-1", "paper-4-1-sweep", "paper-4-2-slab", "paper-4-2-shell", "prop-1-decay"] {
        assert!(text.contains(name));
    }
    assert_eq!(diffnet(&["validate", "--preset", "paper-4-1"]).status.code(), Some(0));
}
