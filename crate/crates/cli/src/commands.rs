//! Subcommand implementations: seeded training, greedy evaluation from
//! checkpoints, and the exact-oracle benchmark.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use safeq_core::env::cmdp::CmdpEnv;
use safeq_core::env::ris::RisEnv;
use safeq_core::env::uav::UavEnv;
use safeq_core::env::Environment;
use safeq_core::lagrangian::DualState;
use safeq_core::metrics::fmt_f64;
use safeq_core::oracle::{random_cmdp, run_oracle_benchmark};
use safeq_core::qlearn::training::{evaluate, run_training, AgentState, EvalSummary};
use safeq_core::qlearn::ValueFn;

use crate::config::{EnvKind, RunConfig};

fn build_env(config: &RunConfig, seed: u64) -> Result<Box<dyn Environment>> {
    Ok(match config.run.env {
        EnvKind::Uav => Box::new(UavEnv::new(config.env.uav.clone(), seed)?),
        EnvKind::Ris => Box::new(RisEnv::new(config.env.ris.clone(), seed)?),
        EnvKind::Cmdp => {
            let section = &config.env.cmdp;
            let mut spec = random_cmdp(
                section.instance_seed.unwrap_or(config.run.seed),
                section.states,
                section.actions,
                section.n_constraints,
            );
            spec.gamma = config.agent.gamma;
            Box::new(CmdpEnv::new(spec, seed)?)
        }
    })
}

fn echo_config(config: &RunConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    std::fs::write(out_dir.join("config.toml"), config.to_toml()?)
        .context("echoing resolved configuration")?;
    Ok(())
}

/// Train on the configured environment; writes metrics, checkpoints, and the
/// resolved configuration into the output directory.
pub fn cmd_train(config: &RunConfig) -> Result<PathBuf> {
    let out_dir = config.out_dir();
    echo_config(config, &out_dir)?;
    let mut env = build_env(config, config.run.seed)?;
    let settings = config.settings();
    let artifacts = run_training(env.as_mut(), &settings, Some(&out_dir))?;
    let episodes = artifacts.reports.len();
    let last = artifacts
        .reports
        .last()
        .map(|agents| {
            let ret: f64 =
                agents.iter().map(|r| r.return_sum).sum::<f64>() / agents.len() as f64;
            let violations: usize = agents.iter().map(|r| r.total_violations).sum();
            (ret, violations)
        })
        .unwrap_or((0.0, 0));
    println!(
        "trained {} episodes on {} (seed {}); final mean return {}, final violations {}",
        episodes,
        config.run.env,
        config.run.seed,
        fmt_f64(last.0),
        last.1
    );
    println!("outputs in {}", out_dir.display());
    Ok(out_dir)
}

/// Load one checkpoint per agent from `checkpoint` (a train output directory
/// or a single file for one agent).
fn load_agents(
    config: &RunConfig,
    env: &dyn Environment,
    checkpoint: &Path,
) -> Result<Vec<AgentState>> {
    let n = env.num_agents();
    let paths: Vec<PathBuf> = if checkpoint.is_dir() {
        (0..n)
            .map(|i| checkpoint.join(format!("checkpoint_agent{i}.qnn")))
            .collect()
    } else {
        if n != 1 {
            bail!(
                "environment has {n} agents; pass the training output directory instead of a single file"
            );
        }
        vec![checkpoint.to_path_buf()]
    };
    let settings = config.settings();
    let specs = env.constraints();
    let mut agents = Vec::with_capacity(n);
    for (i, path) in paths.iter().enumerate() {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading checkpoint {}", path.display()))?;
        let value = ValueFn::deserialize(&bytes, settings.learning_rate, settings.grad_clip)
            .map_err(|e| anyhow!("loading checkpoint {}: {e}", path.display()))?;
        if value.action_count() != env.action_count() {
            bail!(
                "checkpoint {} has {} actions but the configured environment has {}",
                path.display(),
                value.action_count(),
                env.action_count()
            );
        }
        if value.obs_dim() != env.obs_dim() {
            bail!(
                "checkpoint {} expects {}-dimensional observations but the environment emits {}",
                path.display(),
                value.obs_dim(),
                env.obs_dim()
            );
        }
        let duals = DualState::new(specs, &settings.dual)?;
        agents.push(AgentState::from_value(value, duals, &settings, i));
    }
    Ok(agents)
}

/// Greedy evaluation of trained checkpoints: exploration off, duals frozen.
pub fn cmd_eval(config: &RunConfig, checkpoint: &Path) -> Result<EvalSummary> {
    let out_dir = config.out_dir();
    echo_config(config, &out_dir)?;
    // evaluation draws a different stream than training on the same seed
    let mut env = build_env(config, config.run.seed.wrapping_add(0x5eed))?;
    let agents = load_agents(config, env.as_ref(), checkpoint)?;
    let summary = evaluate(
        &agents,
        env.as_mut(),
        config.eval.episodes,
        config.agent.horizon,
        Some(&out_dir),
    )?;
    println!(
        "evaluated {} episodes: mean return {}, feasibility {}, override rate {}",
        summary.episodes,
        fmt_f64(summary.mean_return),
        fmt_f64(summary.feasibility),
        fmt_f64(summary.override_rate)
    );
    for (id, rate) in &summary.violation_rate {
        println!("violation rate {id}: {}", fmt_f64(*rate));
    }
    Ok(summary)
}

/// Tabular learner vs. exhaustive feasible-policy oracle over a seed set.
/// Returns true when every seed passed.
pub fn cmd_oracle_check(config: &RunConfig) -> Result<bool> {
    let out_dir = config.out_dir();
    echo_config(config, &out_dir)?;
    let bench = config.oracle_bench();
    let reports = run_oracle_benchmark(
        &config.oracle.seeds,
        &bench,
        Some(&out_dir.join("oracle_check.csv")),
    )?;
    let mut failing = Vec::new();
    for r in &reports {
        println!(
            "seed {}: {} (learner V_r {} vs oracle {}; V_c {} within budget {})",
            r.seed,
            if r.passed { "pass" } else { "FAIL" },
            fmt_f64(r.learner_v_r),
            fmt_f64(r.oracle_v_r),
            fmt_f64(r.learner_v_c.first().copied().unwrap_or(0.0)),
            fmt_f64(r.budgets.first().copied().unwrap_or(f64::INFINITY)),
        );
        if !r.passed {
            failing.push(r.seed);
        }
    }
    if failing.is_empty() {
        println!("all {} oracle seeds passed", reports.len());
        Ok(true)
    } else {
        println!("failing seeds: {failing:?}");
        Ok(false)
    }
}
