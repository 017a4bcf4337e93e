//! Run configuration: a TOML file with nested sections, dotted-path
//! overrides from the command line, and defaults for every knob. Unknown
//! keys are rejected with the offending path, and the fully resolved
//! configuration is echoed into the output directory so no default stays
//! silent.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use safeq_core::env::ris::RisConfig;
use safeq_core::env::uav::UavConfig;
use safeq_core::lagrangian::{DualConfig, ScaleTrigger, TrainingConfig};
use safeq_core::oracle::OracleBenchConfig;
use safeq_core::qlearn::training::{EpsilonSchedule, TrainSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Uav,
    Ris,
    Cmdp,
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvKind::Uav => write!(f, "uav"),
            EnvKind::Ris => write!(f, "ris"),
            EnvKind::Cmdp => write!(f, "cmdp"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub env: EnvKind,
    pub episodes: usize,
    pub seed: u64,
    /// Output directory; defaults under `SAFEQ_OUT` (or `./safeq-runs`).
    pub out_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            env: EnvKind::Cmdp,
            episodes: 500,
            seed: 0,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub gamma: f64,
    pub horizon: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub grad_clip: Option<f64>,
    pub update_period: usize,
    pub target_sync_period: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
    pub penalties_enabled: bool,
    pub tabular: bool,
    pub tabular_alpha: f64,
    pub vhat_window: usize,
    pub dual_update_period: usize,
    pub penalty_scale_trigger: ScaleTrigger,
    pub beta_lambda: f64,
    pub beta_mu: f64,
    pub beta_nu: f64,
    pub rho0: f64,
    pub rho_max: f64,
    pub xi: f64,
    pub write_trajectories: bool,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            gamma: 0.95,
            horizon: 100,
            batch_size: 1024,
            buffer_capacity: 50_000,
            hidden: vec![128, 128],
            learning_rate: 2e-5,
            grad_clip: Some(10.0),
            update_period: 1,
            target_sync_period: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.0,
            epsilon_decay_fraction: 0.8,
            penalties_enabled: true,
            tabular: false,
            tabular_alpha: 0.5,
            vhat_window: 10,
            dual_update_period: 1,
            penalty_scale_trigger: ScaleTrigger::OnMeanViolation,
            beta_lambda: 0.1,
            beta_mu: 0.1,
            beta_nu: 0.1,
            rho0: 0.05,
            rho_max: 100_000.0,
            xi: 1.1,
            write_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmdpSection {
    pub states: usize,
    pub actions: usize,
    pub n_constraints: usize,
    /// Instance seed; defaults to the run seed.
    pub instance_seed: Option<u64>,
}

impl Default for CmdpSection {
    fn default() -> Self {
        CmdpSection {
            states: 5,
            actions: 3,
            n_constraints: 1,
            instance_seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub uav: UavConfig,
    pub ris: RisConfig,
    pub cmdp: CmdpSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { episodes: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub seeds: Vec<u64>,
    pub states: usize,
    pub actions: usize,
    pub n_constraints: usize,
    pub max_steps: usize,
    pub feasibility_slack: f64,
    pub reward_fraction: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            seeds: vec![0, 1, 2],
            states: 5,
            actions: 3,
            n_constraints: 1,
            max_steps: 50_000,
            feasibility_slack: 1e-2,
            reward_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub agent: AgentSection,
    pub env: EnvSection,
    pub eval: EvalSection,
    pub oracle: OracleSection,
}

impl RunConfig {
    pub fn settings(&self) -> TrainSettings {
        let a = &self.agent;
        TrainSettings {
            episodes: self.run.episodes,
            seed: self.run.seed,
            training: TrainingConfig {
                gamma: a.gamma,
                horizon: a.horizon,
                dual_update_period: a.dual_update_period,
                penalty_scale_trigger: a.penalty_scale_trigger,
            },
            dual: DualConfig {
                rho0: a.rho0,
                xi: a.xi,
                rho_max: a.rho_max,
                beta_lambda: a.beta_lambda,
                beta_mu: a.beta_mu,
                beta_nu: a.beta_nu,
            },
            hidden: a.hidden.clone(),
            learning_rate: a.learning_rate,
            grad_clip: a.grad_clip,
            batch_size: a.batch_size,
            buffer_capacity: a.buffer_capacity,
            update_period: a.update_period,
            target_sync_period: a.target_sync_period,
            epsilon: EpsilonSchedule {
                start: a.epsilon_start,
                end: a.epsilon_end,
                decay_fraction: a.epsilon_decay_fraction,
            },
            penalties_enabled: a.penalties_enabled,
            tabular: a.tabular,
            tabular_alpha: a.tabular_alpha,
            vhat_window: a.vhat_window,
            write_trajectories: a.write_trajectories,
        }
    }

    pub fn oracle_bench(&self) -> OracleBenchConfig {
        let mut settings = self.settings();
        settings.tabular = true;
        settings.hidden = vec![];
        OracleBenchConfig {
            states: self.oracle.states,
            actions: self.oracle.actions,
            gamma: self.agent.gamma,
            n_constraints: self.oracle.n_constraints,
            max_steps: self.oracle.max_steps,
            feasibility_slack: self.oracle.feasibility_slack,
            reward_fraction: self.oracle.reward_fraction,
            settings,
        }
    }

    /// Output directory: explicit setting, else `$SAFEQ_OUT/<env>-seed<seed>`,
    /// else `./safeq-runs/<env>-seed<seed>`.
    pub fn out_dir(&self) -> PathBuf {
        if let Some(dir) = &self.run.out_dir {
            return dir.clone();
        }
        let root = std::env::var_os("SAFEQ_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("safeq-runs"));
        root.join(format!("{}-seed{}", self.run.env, self.run.seed))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing resolved configuration")
    }
}

/// Parse an override value with TOML scalar syntax, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    let attempt = format!("v = {raw}");
    if let Ok(table) = attempt.parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

/// Insert `value` at a dotted `path` inside the TOML tree, creating tables
/// along the way.
fn insert_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override path `{path}` has an empty segment");
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override path `{path}`: `{part}` is not a table"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Load the configuration file (when given), apply dotted-path overrides in
/// order, and deserialize with unknown keys rejected.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut tree: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("parsing config file {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for (key, value) in overrides {
        insert_path(&mut tree, key, parse_value(value))
            .with_context(|| format!("applying override --{key}"))?;
    }
    let config: RunConfig = toml::Value::Table(tree)
        .try_into()
        .map_err(|e| anyhow!("invalid configuration: {e}"))?;
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<()> {
    config
        .settings()
        .validate()
        .map_err(|e| anyhow!("invalid agent settings: {e}"))?;
    match config.run.env {
        EnvKind::Uav => config
            .env
            .uav
            .validate()
            .map_err(|e| anyhow!("invalid UAV environment: {e}"))?,
        EnvKind::Ris => config
            .env
            .ris
            .validate()
            .map_err(|e| anyhow!("invalid RIS environment: {e}"))?,
        EnvKind::Cmdp => {
            if config.env.cmdp.states < 2 || config.env.cmdp.actions < 2 {
                bail!("invalid CMDP environment: need at least 2 states and 2 actions");
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_documented_defaults() {
        let config = load_config(None, &[]).unwrap();
        assert_eq!(config.agent.gamma, 0.95);
        assert_eq!(config.agent.batch_size, 1024);
        assert_eq!(config.agent.buffer_capacity, 50_000);
        assert_eq!(config.agent.beta_lambda, 0.1);
        assert_eq!(config.agent.xi, 1.1);
        assert_eq!(config.agent.rho0, 0.05);
        assert_eq!(config.agent.rho_max, 100_000.0);
        assert_eq!(config.agent.horizon, 100);
        assert_eq!(config.agent.hidden, vec![128, 128]);
        assert_eq!(config.agent.learning_rate, 2e-5);
        assert_eq!(config.agent.target_sync_period, 100);
        assert_eq!(config.run.env, EnvKind::Cmdp);
    }

    #[test]
    fn overrides_take_effect_and_echo() {
        let config = load_config(
            None,
            &[
                ("agent.gamma".into(), "0.9".into()),
                ("run.seed".into(), "42".into()),
                ("agent.hidden".into(), "[32, 16]".into()),
            ],
        )
        .unwrap();
        assert_eq!(config.agent.gamma, 0.9);
        assert_eq!(config.run.seed, 42);
        assert_eq!(config.agent.hidden, vec![32, 16]);
        let echo = config.to_toml().unwrap();
        assert!(echo.contains("gamma = 0.9"));
        assert!(echo.contains("seed = 42"));
    }

    #[test]
    fn misspelled_key_is_rejected_by_name() {
        let err = load_config(None, &[("agent.gamm".into(), "0.9".into())]).unwrap_err();
        let message = format!("{err:#}");
        assert!(message.contains("gamm"), "message was: {message}");
    }

    #[test]
    fn file_and_override_compose() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[run]\nenv = \"ris\"\nepisodes = 7\n").unwrap();
        let config = load_config(Some(&path), &[("run.episodes".into(), "9".into())]).unwrap();
        assert_eq!(config.run.env, EnvKind::Ris);
        assert_eq!(config.run.episodes, 9);
    }

    #[test]
    fn invalid_env_parameters_are_reported() {
        let err = load_config(
            None,
            &[
                ("run.env".into(), "uav".into()),
                ("env.uav.n_uav".into(), "1".into()),
            ],
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("UAV"));
    }
}
