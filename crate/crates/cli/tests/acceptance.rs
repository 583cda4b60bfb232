//! End-to-end checks of the `graspgen` binary, including the determinism
//! gate: identical config and seed must produce byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graspgen_core::config::Config;
use graspgen_core::grammar;
use graspgen_core::scenarios;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_graspgen")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config() -> Config {
    let mut config = scenarios::desk_search_config();
    config.search.iterations = 6;
    config
}

fn write_config(dir: &Path, config: &Config) -> PathBuf {
    let path = dir.join("config.json");
    config.save(&path).unwrap();
    path
}

fn write_design(dir: &Path) -> PathBuf {
    let path = dir.join("design.json");
    fs::write(
        &path,
        grammar::serialize(&scenarios::reference_two_finger_graph()) + "\n",
    )
    .unwrap();
    path
}

fn read_dir_sorted(dir: &Path) -> Vec<PathBuf> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    entries
}

#[test]
fn acceptance_7_search_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &small_config());
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");

    for out in [&out1, &out2] {
        let output = run(&[
            "search",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }

    let trace1 = fs::read(out1.join("trace.csv")).unwrap();
    let trace2 = fs::read(out2.join("trace.csv")).unwrap();
    assert_eq!(trace1, trace2, "trace.csv differs between identical runs");

    let designs1 = read_dir_sorted(&out1.join("designs"));
    let designs2 = read_dir_sorted(&out2.join("designs"));
    assert!(!designs1.is_empty());
    assert_eq!(designs1.len(), designs2.len());
    for (a, b) in designs1.iter().zip(&designs2) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(
            fs::read(a).unwrap(),
            fs::read(b).unwrap(),
            "{a:?} differs between identical runs"
        );
    }
    println!("ACCEPTANCE 7 (byte-identical search reruns): PASS");
}

#[test]
fn search_writes_one_trace_row_per_iteration_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &small_config());
    let out = dir.path().join("run");
    let output = run(&[
        "search",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--iterations",
        "5",
    ]);
    assert!(output.status.success());

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.trim_end().lines().collect();
    assert_eq!(
        lines[0],
        "iteration,episode_reward,best_reward,v_root,mean_q,test_run_reward"
    );
    assert_eq!(lines.len(), 1 + 5);

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["iterations"], 5);
    assert_eq!(meta["seed"], 7);
    assert!(meta["config"]["search"].is_object());

    // Reports round-trip through serde.
    for path in read_dir_sorted(&out.join("designs")) {
        if path.to_str().unwrap().ends_with(".report.json") {
            let report: graspgen_core::reward::DesignReward =
                serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
            assert!(report.final_reward >= 0.0);
        } else {
            let graph = grammar::deserialize(&fs::read_to_string(&path).unwrap()).unwrap();
            assert!(graph.node_count() > 0);
        }
    }
}

#[test]
fn missing_config_exits_2() {
    let output = run(&["search", "--config", "/nonexistent/config.json"]);
    assert_eq!(output.status.code(), Some(2));

    let output = run(&[
        "evaluate",
        "--design",
        "/nonexistent/design.json",
        "--config",
        "/nonexistent/config.json",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn evaluate_rejects_non_terminal_design_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &small_config());
    let design_path = dir.path().join("incomplete.json");
    fs::write(
        &design_path,
        grammar::serialize(&grammar::init_graph()) + "\n",
    )
    .unwrap();
    let output = run(&[
        "evaluate",
        "--design",
        design_path.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn evaluate_prints_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &small_config());
    let design_path = write_design(dir.path());

    let run_once = || {
        let output = run(&[
            "evaluate",
            "--design",
            design_path.to_str().unwrap(),
            "--config",
            config_path.to_str().unwrap(),
        ]);
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        output.stdout
    };
    let first = run_once();
    let second = run_once();
    assert_eq!(first, second, "evaluation reports must be identical");

    let report: graspgen_core::reward::DesignReward =
        serde_json::from_slice(&first).unwrap();
    assert_eq!(report.per_object.len(), 3);
    // 3 objects x 2^2 tension assignments x 2 orientations.
    assert_eq!(report.sim_count, 24);
    for obj in report.per_object.values() {
        for r in [
            obj.breakdown.r1,
            obj.breakdown.r2,
            obj.breakdown.r3,
            obj.breakdown.r4,
            obj.breakdown.r5,
            obj.breakdown.r6,
        ] {
            assert!((0.0..=1.0).contains(&r));
        }
    }
}

#[test]
fn render_writes_frames_and_force_traces() {
    let dir = tempfile::tempdir().unwrap();
    let design_path = write_design(dir.path());
    let out = dir.path().join("frames");
    let output = run(&[
        "render",
        "--design",
        design_path.to_str().unwrap(),
        "--object",
        "disc",
        "--tension",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let frames: Vec<PathBuf> = read_dir_sorted(&out)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .collect();
    assert!(frames.len() >= 2, "expected at least two frames");
    let last = fs::read_to_string(frames.last().unwrap()).unwrap();
    assert!(last.contains("<circle")); // object plus contact markers

    // Force trace: zero before contact, then a sustained positive plateau
    // once the grasp settles (contact onset may transiently spike, as usual
    // for penalty methods).
    let forces = fs::read_to_string(out.join("forces.csv")).unwrap();
    let values: Vec<f64> = forces
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values.first().copied().unwrap_or(1.0) == 0.0);
    assert!(values.iter().all(|v| *v >= 0.0));
    let late = &values[values.len() - values.len() / 4..];
    let late_max = late.iter().cloned().fold(0.0, f64::max);
    let late_min = late.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(late_max > 0.5, "grip force should build up, got {late_max}");
    assert!(
        late_min > 0.5 * late_max,
        "grip force should plateau, late range [{late_min}, {late_max}]"
    );

    // The 6-column simulation trace is written alongside.
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,object_x,object_y,object_theta,n_contacts,sum_normal_force"));
}

#[test]
fn render_rejects_unknown_object() {
    let dir = tempfile::tempdir().unwrap();
    let design_path = write_design(dir.path());
    let output = run(&[
        "render",
        "--design",
        design_path.to_str().unwrap(),
        "--object",
        "banana",
        "--tension",
        "10",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}
