use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
name = "small"
num_slots = 2
slot_duration_s = 10.0
algorithms = ["crt_fast", "spf"]
seeds = [1]
svg = true

[shell]
planes = 6
sats_per_plane = 11
altitude_km = 780.0
inclination_deg = 86.4
phasing_offset = 0.5
epoch_s = 0.0
pattern = "star"

[traffic]
n_flows = 20

[traffic.deadline]
alpha = 1.5
delta_buf_s = 0.03
d_max_s = 0.1
"#;

fn crt(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_crt")).args(args).current_dir(cwd).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn schedule_then_verify() {
    let dir = setup();
    let (code, out, err) = crt(&["schedule", "--config", "small.toml", "--out", "res"], dir.path());
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("crt_fast seed=1"));
    let res = dir.path().join("res");
    for f in ["metrics.csv", "manifest.json", "report.json", "overlap_cdf.csv", "overlap_cdf.svg"] {
        assert!(res.join(f).exists(), "{f}");
    }
    let sched = res.join("schedules/crt_fast_seed1.json");
    let (code, out, _) = crt(&["verify", sched.to_str().unwrap(), "--config", "small.toml"], dir.path());
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("ok:"));

    // stretch one residence time so the path no longer sums to its target
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sched).unwrap()).unwrap();
    let entry = v["entries"].as_array_mut().unwrap().iter_mut().find(|e| e["y"] == true).unwrap();
    entry["d_target_s"] = serde_json::json!(entry["d_target_s"].as_f64().unwrap() + 1e-3);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let (code, out, _) = crt(&["verify", bad.to_str().unwrap(), "--config", "small.toml"], dir.path());
    assert_eq!(code, 2, "{out}");
}

#[test]
fn simulate_writes_packets() {
    let dir = setup();
    let (code, out, err) =
        crt(&["simulate", "--config", "small.toml", "--out", "sim", "--horizon", "0.2", "--algo", "crt_fast"], dir.path());
    assert_eq!(code, 0, "{out}{err}");
    let csv = fs::read_to_string(dir.path().join("sim/packets_crt_fast_seed1.csv")).unwrap();
    assert!(csv.starts_with("flow_id,seq,emit_s,delivered_s,e2e_delay_s,total_queue_wait_s"));
    assert!(csv.lines().count() > 1);
    assert!(!dir.path().join("sim/schedules/spf_seed1.json").exists());
}

#[test]
fn same_config_same_bytes() {
    let dir = setup();
    for out in ["a", "b"] {
        let (code, _, _) = crt(&["schedule", "--config", "small.toml", "--out", out], dir.path());
        assert_eq!(code, 0);
    }
    for f in ["schedules/crt_fast_seed1.json", "schedules/spf_seed1.json", "report.json", "manifest.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gen_topology_outputs() {
    let dir = setup();
    let (code, out, _) = crt(&["gen-topology", "--config", "small.toml", "--out", "topo"], dir.path());
    assert_eq!(code, 0);
    assert!(out.contains("66 nodes"));
    assert!(dir.path().join("topo/topology_slot1.json").exists());
    assert_eq!(fs::read_to_string(dir.path().join("topo/flows.csv")).unwrap().lines().count(), 21);
}

#[test]
fn config_errors_exit_one() {
    let dir = setup();
    assert_eq!(crt(&["schedule", "--config", "missing-preset"], dir.path()).0, 1);
    assert_eq!(crt(&["schedule", "--config", "small.toml", "--algo", "dstmr"], dir.path()).0, 1);
    assert_eq!(crt(&["frobnicate"], dir.path()).0, 1);
    fs::write(dir.path().join("empty.toml"), SMALL.replace(r#"["crt_fast", "spf"]"#, "[]")).unwrap();
    let (code, _, err) = crt(&["schedule", "--config", "empty.toml"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("algorithm"));
}

#[test]
fn io_errors_exit_three() {
    let dir = setup();
    let (code, _, _) = crt(&["verify", "nowhere.json", "--config", "small.toml"], dir.path());
    assert_eq!(code, 3);
    fs::write(dir.path().join("blocker"), "").unwrap();
    let (code, _, _) = crt(&["schedule", "--config", "small.toml", "--out", "blocker/x"], dir.path());
    assert_eq!(code, 3);
}

#[test]
fn presets_listed() {
    let (code, out, _) = crt(&["presets"], Path::new("."));
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 4);
}
