use std::fs;

use torsion_sn_cli::{dispatch, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("torsion-sn").chain(args.iter().copied()))
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(dispatch(Vec::<String>::new()), EXIT_USAGE);
    assert_eq!(run(&[]), EXIT_USAGE);
    assert_eq!(run(&["no-such-command"]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["snr", "--config", "/nonexistent.toml", "--out", out]), EXIT_CONFIG);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[pendulum]\nq = -1\n").unwrap();
    assert_eq!(run(&["snr", "--config", "bundled:apparatus", "--config", bad.to_str().unwrap(), "--out", out]), EXIT_CONFIG);
    assert_eq!(run(&["q-factor", "--mechanism", "friction", "--out", out]), EXIT_CONFIG);
}

#[test]
fn numerical_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("low_band.toml");
    // Band centre below the 1/t_bw resolution.
    fs::write(&cfg, "[run]\nband_center_hz = 0.01\n").unwrap();
    let out = dir.path().join("o");
    let code = run(&["ringup", "--config", "bundled:desk", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_NUMERIC);
}

#[test]
fn q_factor_gas_writes_budget_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    assert_eq!(run(&["q-factor", "--mechanism", "gas", "--out", out.to_str().unwrap()]), EXIT_OK);
    let csv = fs::read_to_string(out.join("q_budget.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("gas,")).unwrap();
    let q: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((q / 6.6e4 - 1.0).abs() < 0.05, "{q}");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "q-factor");
    assert_eq!(m["outputs"][0], "q_budget.csv");
    // Nothing besides the declared outputs.
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "q_budget.csv"]);
}

#[test]
fn repro_optical_spring_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("os");
    assert_eq!(run(&["repro", "optical-spring", "--out", out.to_str().unwrap()]), EXIT_OK);
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.lines().filter(|l| l.ends_with(",true")).count() == 2, "{csv}");
}

#[test]
fn same_config_and_seed_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    fs::write(&cfg, "[run]\nduration = 16\nt_bw = 4\nn_traj = 2\n").unwrap();
    let mut outputs = Vec::new();
    for (k, jobs) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("s{k}"));
        let code = run(&[
            "simulate", "--config", "bundled:desk", "--config", cfg.to_str().unwrap(), "--seed", "7", "--jobs", jobs, "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        outputs.push((m["config_hash"].clone(), fs::read(out.join("trajectory_0001.csv")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}
