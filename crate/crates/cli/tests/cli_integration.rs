//! End-to-end runs of the compiled binary.

use std::path::Path;
use std::process::Command;

fn heatwave() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heatwave"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.conf");
    std::fs::write(&path, body).unwrap();
    path
}

fn run_ok(args: &[&str]) {
    let out = heatwave().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn compare_decouplers_emits_the_published_cost_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = decoupler-compare\nh = 0.25\nn_macro = 50\nconfig = 1\ntol = 1e-12\n",
    );
    let out_dir = dir.path().join("out");
    run_ok(&[
        "compare-decouplers",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--log-level",
        "warn",
    ]);
    let csv = std::fs::read_to_string(out_dir.join("decoupler.csv")).unwrap();
    let mut relax = Vec::new();
    let mut shoot = Vec::new();
    for line in csv.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        let evals: usize = fields[2].parse().unwrap();
        match fields[1] {
            "relaxation" => relax.push(evals),
            "shooting" => shoot.push(evals),
            other => panic!("unexpected method {other}"),
        }
    }
    assert_eq!(relax.len(), 50);
    assert_eq!(shoot.len(), 50);
    assert!(shoot.iter().all(|&e| e <= 8), "shooting counts {shoot:?}");
    assert!(relax.iter().all(|&e| e >= 12), "relaxation counts {relax:?}");
}

#[test]
fn convergence_errors_quarter_per_halving() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = convergence\nh = 0.25\nn_macro = 50\nlevels = 4\nmethod = monolithic\nconfig = 1\nfunctional = fluid\n",
    );
    let out_dir = dir.path().join("out");
    run_ok(&[
        "convergence",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--log-level",
        "warn",
    ]);
    let csv = std::fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    let errs: Vec<f64> = csv
        .lines()
        .skip(2)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            fields[9].parse::<f64>().unwrap().abs()
        })
        .collect();
    assert_eq!(errs.len(), 4);
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (3.0..=5.0).contains(&ratio),
            "error ratio {ratio:.2} outside [3, 5] (errors {errs:?})"
        );
    }
    // full round-trip precision of the numeric fields
    let first = csv.lines().nth(2).unwrap();
    let j: f64 = first.split(',').nth(8).unwrap().parse().unwrap();
    assert_eq!(format!("{j:.16e}"), first.split(',').nth(8).unwrap());
}

#[test]
fn render_mesh_tick_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "h = 0.25\nt_end = 1\nn_macro = 4\nm_micro = 2\nl_micro = 1\n",
    );
    let out_dir = dir.path().join("out");
    run_ok(&[
        "render-mesh",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--log-level",
        "warn",
    ]);
    let svg = std::fs::read_to_string(out_dir.join("mesh_step0.svg")).unwrap();
    assert_eq!(svg.matches("tick-fluid").count(), 9);
    assert_eq!(svg.matches("tick-macro").count(), 5);
    assert_eq!(svg.matches("tick-solid").count(), 5);
    // the line-oriented text form: one line per macro interval
    let text = std::fs::read_to_string(out_dir.join("mesh_step0.txt")).unwrap();
    assert_eq!(text.lines().count(), 4);
    for line in text.lines() {
        assert_eq!(line.split('|').count(), 3);
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = primal\nh = 0.25\nn_macro = 8\nm_micro = 2\nl_micro = 3\nmethod = shooting\n",
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "solve",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--log-level",
            "warn",
            "--seed",
            "7",
        ]);
    }
    for name in ["report.json", "mesh_step0.svg", "mesh_step0.txt"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn adaptive_run_emits_records_and_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = adaptive\nh = 0.25\nn_macro = 20\nadaptive_steps = 2\nmethod = shooting\nconfig = 1\nfunctional = fluid\n",
    );
    let out_dir = dir.path().join("out");
    run_ok(&[
        "adapt",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--log-level",
        "warn",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let records = report["adaptive"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert!(records[0]["marked_fluid"].as_u64().unwrap() > 0);
    assert_eq!(records[0]["marked_solid"].as_u64().unwrap(), 0);
    assert!(out_dir.join("mesh_step0.svg").exists());
    assert!(out_dir.join("mesh_step2.svg").exists());
}

#[test]
fn bad_configs_fail_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "nu = 0.001\nbogus = 1\n");
    let out = heatwave()
        .args(["solve", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}
