//! End-to-end checks of the `safeq` binary: exit codes, file outputs,
//! overrides, and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn safeq(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_safeq"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn tabular_cmdp_args<'a>(out: &'a str, seed: &'a str, episodes: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--env",
        "cmdp",
        "--seed",
        seed,
        "--episodes",
        episodes,
        "--out",
        out,
        "--set",
        "agent.tabular=true",
        "--set",
        "agent.batch_size=16",
        "--set",
        "agent.buffer_capacity=1024",
        "--set",
        "agent.horizon=15",
    ]
}

#[test]
fn train_writes_one_metrics_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_str = out.to_str().unwrap();
    let result = safeq(&tabular_cmdp_args(out_str, "3", "2"), &[]);
    assert!(result.status.success(), "{result:?}");
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2);
    assert!(out.join("config.toml").exists());
    assert!(out.join("checkpoint_agent0.qnn").exists());
}

#[test]
fn same_seed_produces_byte_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let result = safeq(&tabular_cmdp_args(out.to_str().unwrap(), "9", "4"), &[]);
        assert!(result.status.success());
    }
    assert_eq!(
        std::fs::read(a.join("metrics.csv")).unwrap(),
        std::fs::read(b.join("metrics.csv")).unwrap()
    );
}

#[test]
fn gamma_flag_shows_up_in_the_echoed_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = tabular_cmdp_args(out.to_str().unwrap(), "0", "1");
    args.extend_from_slice(&["--gamma", "0.9"]);
    let result = safeq(&args, &[]);
    assert!(result.status.success());
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echoed.contains("gamma = 0.9"), "echo was:\n{echoed}");
}

#[test]
fn misspelled_key_is_a_usage_error_naming_the_key() {
    let result = safeq(
        &["train", "--set", "agent.gamm=0.9", "--out", "/tmp/unused"],
        &[],
    );
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("gamm"), "stderr was: {stderr}");
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    let result = safeq(
        &[
            "train",
            "--env",
            "cmdp",
            "--seed",
            "5",
            "--episodes",
            "1",
            "--set",
            "agent.tabular=true",
            "--set",
            "agent.batch_size=8",
            "--set",
            "agent.horizon=10",
        ],
        &[("SAFEQ_OUT", root)],
    );
    assert!(result.status.success());
    assert!(dir.path().join("cmdp-seed5").join("metrics.csv").exists());
}

fn small_uav_overrides() -> Vec<&'static str> {
    vec![
        "--set",
        "env.uav.n_uav=3",
        "--set",
        "env.uav.subchannels=3",
        "--set",
        "env.uav.power_levels_dbm=[5.0,23.0]",
        "--set",
        "env.uav.arena_m=[90.0,90.0]",
        "--set",
        "env.uav.d_min_m=12.0",
        "--set",
        "env.uav.slow_interval=4",
        "--set",
        "agent.hidden=[16]",
        "--set",
        "agent.learning_rate=0.001",
        "--set",
        "agent.batch_size=16",
        "--set",
        "agent.buffer_capacity=2048",
        "--set",
        "agent.horizon=24",
    ]
}

#[test]
fn shielded_uav_run_reports_overrides_and_zero_collisions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("uav");
    let mut args = vec![
        "train",
        "--env",
        "uav",
        "--seed",
        "2",
        "--episodes",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(small_uav_overrides());
    let result = safeq(&args, &[]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let header: Vec<&str> = metrics.lines().next().unwrap().split(',').collect();
    assert!(header.contains(&"shield_overrides"));
    let collision_col = header
        .iter()
        .position(|c| *c == "violations_collision")
        .expect("per-constraint violation column");
    for line in metrics.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[collision_col], "0", "collision in row: {line}");
    }
}

#[test]
fn uav_eval_with_shield_has_zero_distance_violation_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("uav");
    let mut args = vec![
        "train",
        "--env",
        "uav",
        "--seed",
        "4",
        "--episodes",
        "2",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(small_uav_overrides());
    assert!(safeq(&args, &[]).status.success());

    let eval_out = dir.path().join("uav-eval");
    let mut args = vec![
        "eval",
        "--env",
        "uav",
        "--seed",
        "4",
        "--out",
        eval_out.to_str().unwrap(),
        "--checkpoint",
        out.to_str().unwrap(),
        "--set",
        "eval.episodes=3",
    ];
    args.extend(small_uav_overrides());
    let result = safeq(&args, &[]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let summary = std::fs::read_to_string(eval_out.join("eval_summary.csv")).unwrap();
    let header: Vec<&str> = summary.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let col = header
        .iter()
        .position(|c| *c == "violation_rate_collision")
        .expect("collision rate column");
    assert_eq!(row[col].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn ris_eval_reports_feasibility_in_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ris");
    let ris_args = [
        "--set",
        "env.ris.ebs_antennas=2",
        "--set",
        "env.ris.ris_elements=4",
        "--set",
        "env.ris.users=1",
        "--set",
        "env.ris.blocks=[2,1]",
        "--set",
        "env.ris.power_levels_dbm=[0.0,21.0]",
        "--set",
        "env.ris.noise_w=1e-7",
        "--set",
        "agent.hidden=[16]",
        "--set",
        "agent.batch_size=16",
        "--set",
        "agent.buffer_capacity=1024",
        "--set",
        "agent.horizon=1",
        "--set",
        "agent.learning_rate=0.001",
    ];
    let mut args = vec![
        "train",
        "--env",
        "ris",
        "--seed",
        "6",
        "--episodes",
        "30",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(&ris_args);
    assert!(safeq(&args, &[]).status.success());

    let eval_out = dir.path().join("ris-eval");
    let mut args = vec![
        "eval",
        "--env",
        "ris",
        "--seed",
        "6",
        "--out",
        eval_out.to_str().unwrap(),
        "--checkpoint",
        out.to_str().unwrap(),
        "--set",
        "eval.episodes=10",
    ];
    args.extend_from_slice(&ris_args);
    let result = safeq(&args, &[]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let summary = std::fs::read_to_string(eval_out.join("eval_summary.csv")).unwrap();
    let header: Vec<&str> = summary.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let col = header.iter().position(|c| *c == "feasibility").unwrap();
    let feasibility: f64 = row[col].parse().unwrap();
    assert!((0.0..=1.0).contains(&feasibility));
    // per-episode environment rows exist for this environment
    let rows = std::fs::read_to_string(eval_out.join("eval_episodes.csv")).unwrap();
    assert!(rows.starts_with("episode,feasible,energy_cost_watts,min_sinr_db"));
    assert_eq!(rows.lines().count(), 1 + 10);
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(safeq(&tabular_cmdp_args(out.to_str().unwrap(), "1", "1"), &[])
        .status
        .success());
    // same checkpoint, environment with a different action count
    let result = safeq(
        &[
            "eval",
            "--env",
            "cmdp",
            "--seed",
            "1",
            "--out",
            dir.path().join("eval").to_str().unwrap(),
            "--checkpoint",
            out.join("checkpoint_agent0.qnn").to_str().unwrap(),
            "--set",
            "env.cmdp.actions=4",
            "--set",
            "agent.tabular=true",
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("actions"), "stderr: {stderr}");
}

#[test]
fn oracle_check_passes_and_fails_with_proper_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle");
    let result = safeq(
        &[
            "oracle-check",
            "--out",
            out.to_str().unwrap(),
            "--set",
            "oracle.seeds=[0,1,2]",
            "--set",
            "agent.tabular=true",
            "--set",
            "agent.batch_size=32",
            "--set",
            "agent.buffer_capacity=4096",
            "--gamma",
            "0.9",
        ],
        &[],
    );
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let csv = std::fs::read_to_string(out.join("oracle_check.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3, "one row per seed: {csv}");

    // an unreachable reward requirement must fail with exit code 1
    let result = safeq(
        &[
            "oracle-check",
            "--out",
            dir.path().join("oracle-fail").to_str().unwrap(),
            "--set",
            "oracle.seeds=[0]",
            "--set",
            "oracle.reward_fraction=2.0",
            "--set",
            "oracle.max_steps=3000",
            "--set",
            "agent.tabular=true",
            "--set",
            "agent.batch_size=32",
            "--set",
            "agent.buffer_capacity=4096",
            "--gamma",
            "0.9",
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("failing seeds"), "stdout: {stdout}");
}

#[test]
fn dotted_long_flags_mirror_config_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = safeq(
        &[
            "train",
            "--env",
            "cmdp",
            "--episodes",
            "1",
            "--out",
            out.to_str().unwrap(),
            "--agent.tabular",
            "true",
            "--agent.horizon",
            "10",
            "--agent.batch_size",
            "8",
        ],
        &[],
    );
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echoed.contains("tabular = true"));
    assert!(echoed.contains("horizon = 10"));
}

#[test]
fn config_file_with_unknown_section_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[agent]\nlearning_rte = 0.1\n").unwrap();
    let result = safeq(&["train", "--config", path.to_str().unwrap()], &[]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("learning_rte"));
}

#[test]
fn trajectory_dump_has_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("uav");
    let mut args = vec![
        "train",
        "--env",
        "uav",
        "--seed",
        "8",
        "--episodes",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "agent.write_trajectories=true",
    ];
    args.extend(small_uav_overrides());
    assert!(safeq(&args, &[]).status.success());
    let text = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(text.starts_with("step,agent,x,y,energy,min_dist,u2u_ok,u2r_rate,overridden,episode"));
    assert_eq!(text.lines().count(), 1 + 24 * 3, "one row per agent-step");
    let _ = Path::new("");
}
