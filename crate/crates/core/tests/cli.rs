use nalgebra::Vector3;

use shw_core::assets::{self, data_dir};
use shw_core::cli::{run, EXIT_DATA, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE};
use shw_core::rig::{string_lengths, GripPose, RigConfig};

fn shw(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("shw").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> serde_json::Value {
    let mut v = vec!["--format", "structured"];
    v.extend_from_slice(args);
    let (code, out, err) = shw(&v);
    assert_eq!(code, EXIT_OK, "{err}");
    serde_json::from_str(&out).unwrap()
}

#[test]
fn solve_at_rest_is_mid_tension() {
    let v = json(&["solve"]);
    assert_eq!(v["status"], "Optimal");
    for t in v["tensions"].as_array().unwrap() {
        assert!((t.as_f64().unwrap() - 15.25).abs() < 1e-9);
    }
    let (code, out, _) = shw(&["solve"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().filter(|l| l.contains("15.250000000")).count(), 8);
}

#[test]
fn solve_beyond_capability_exits_3() {
    let (code, _, err) = shw(&["solve", "--wrench", "0,0,2000,0,0,0"]);
    assert_eq!(code, EXIT_INFEASIBLE);
    assert!(err.starts_with("infeasible"));
}

#[test]
fn usage_and_data_errors() {
    assert_eq!(shw(&["solve", "--wrench", "1,2,3"]).0, EXIT_USAGE);
    assert_eq!(shw(&["solve", "--orientation", "0,0,0,0"]).0, EXIT_USAGE);
    assert_eq!(shw(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(shw(&["--help"]).0, EXIT_OK);
    let (code, _, err) = shw(&["solve", "--rig", "/nonexistent/rig.toml"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("/nonexistent/rig.toml"), "{err}");
    let (code, _, _) = shw(&["sweep", "--diameters", "0.2,0.1"]);
    assert_eq!(code, EXIT_DATA);
    let lengths = "1,1,1,1,1,1,1,-1";
    assert_eq!(shw(&["pose", "--lengths", lengths]).0, EXIT_DATA);
}

#[test]
fn sweep_rows_follow_the_diameters() {
    let v = json(&["sweep", "--diameters", "0,0.1,0.2,0.3"]);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["torque_capability"].as_f64().unwrap(), 0.0);
    assert!(rows[0]["condition_number"].is_null());
    let caps: Vec<f64> = rows.iter().map(|r| r["torque_capability"].as_f64().unwrap()).collect();
    assert!(caps.windows(2).all(|w| w[1] > w[0]), "{caps:?}");
    let (code, out, _) = shw(&["sweep", "--diameters", "0,0.1,0.2,0.3"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 5);
    assert!(out.lines().nth(1).unwrap().contains("inf"));
}

#[test]
fn pose_recovers_the_lengths_pose() {
    let rig = RigConfig::default_rig();
    let truth = GripPose::new(Vector3::new(0.05, -0.03, 0.02), 0.98, 0.1, -0.1, 0.05);
    let l = string_lengths(&rig, &truth).unwrap();
    let arg = l.iter().map(|x| format!("{x:.15}")).collect::<Vec<_>>().join(",");
    let v = json(&["pose", "--lengths", &arg]);
    let p: Vec<f64> = v["position"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((Vector3::from_vec(p) - truth.position).amax() < 1e-6);

    // noisy runs are reproducible per seed
    let noisy = |seed: &str| json(&["pose", "--lengths", &arg, "--noise", "0.001", "--seed", seed]);
    assert_eq!(noisy("4"), noisy("4"));
    assert_ne!(noisy("4")["lengths"], noisy("5")["lengths"]);
}

#[test]
fn workspace_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ws");
    let v = json(&["workspace", "--resolution", "3,3,3", "--out", out.to_str().unwrap()]);
    assert_eq!(v["cells"], 27);
    assert_eq!(v["closed_fraction"].as_f64().unwrap(), 1.0);
    let csv = std::fs::read_to_string(out.join("workspace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 28);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("workspace.json")).unwrap()).unwrap();
    assert_eq!(summary["closed_fraction"], v["closed_fraction"]);
}

#[test]
fn replay_of_the_bundled_follow_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data_dir().join(assets::CONFIG_FILE);
    let script = data_dir().join(assets::SEAM_FOLLOW_SCRIPT);
    let log = dir.path().join("run.bin");
    let report = dir.path().join("report.json");
    let v = json(&[
        "replay",
        "--config",
        cfg.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(v["summary"]["coverage"].as_f64().unwrap() >= 0.99);
    assert_eq!(v["summary"]["slip_events"], 0);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved, v);
    let bytes = std::fs::read(&log).unwrap();
    let frames = shw_core::hapticd::log::FrameLog::from_bytes(&bytes).unwrap();
    assert_eq!(frames.digest_hex(), v["summary"]["digest"].as_str().unwrap());

    let missing = shw(&["replay", "--config", cfg.to_str().unwrap(), "--script", "/nonexistent.script"]);
    assert_eq!(missing.0, EXIT_DATA);
}

#[test]
fn shadow_projects_onto_the_plane() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("tri.obj");
    std::fs::write(&mesh, "v 0 0 1\nv 1 0 1\nv 0 1 2\nf 1 2 3\n").unwrap();
    let out = dir.path().join("shadow.obj");
    let v = json(&[
        "shadow",
        "--mesh",
        mesh.to_str().unwrap(),
        "--light",
        "1,0,-1",
        "--plane",
        "0,0,1,0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(v["vertices"], 3);
    let text = std::fs::read_to_string(&out).unwrap();
    let verts: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| l.starts_with("v "))
        .map(|l| l[2..].split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    // along (1,0,-1) each point slides x += z onto z = 0
    let expected = [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 1.0, 0.0]];
    for (v, e) in verts.iter().zip(expected) {
        for k in 0..3 {
            assert!((v[k] - e[k]).abs() < 1e-12, "{v:?} vs {e:?}");
        }
    }
    assert!(text.contains("f 1 2 3"));
    let (code, _, _) = shw(&["shadow", "--mesh", mesh.to_str().unwrap(), "--light", "1,0,0", "--plane", "0,0,1,0", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn serve_reports_its_stats() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data_dir().join(assets::CONFIG_FILE))
        .unwrap()
        .replace("127.0.0.1:7701", "127.0.0.1:0")
        .replace("127.0.0.1:7702", "127.0.0.1:0");
    for f in [assets::RIG_FILE, assets::MESH_FILE, assets::SEAM_FILE] {
        std::fs::copy(data_dir().join(f), dir.path().join(f)).unwrap();
    }
    let cfg = dir.path().join("hapticd.toml");
    std::fs::write(&cfg, text).unwrap();
    let (code, out, err) = shw(&["--format", "structured", "serve", "--config", cfg.to_str().unwrap(), "--duration", "0.3"]);
    assert_eq!(code, EXIT_OK, "{err}");
    // two address lines, then the stats document
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("udp 127.0.0.1:"));
    assert!(lines.next().unwrap().starts_with("websocket ws://127.0.0.1:"));
    let v: serde_json::Value = serde_json::from_str(&lines.collect::<Vec<_>>().join("\n")).unwrap();
    assert!(v["ticks"].as_u64().unwrap() > 50);
    assert_eq!(v["malformed"], 0);
}
