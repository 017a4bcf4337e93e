//! Episode-level training loops with the two-timescale structure: value
//! updates at step granularity, dual/penalty updates at episode boundaries.
//! The same loop drives one agent or a whole team; each agent owns its
//! network, replay buffer, and dual state, and the joint environment step is
//! the only synchronization point.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionMask, Environment};
use crate::error::{CoreError, Result};
use crate::lagrangian::{
    dual_ascent, positive_part, scale_penalties, violated_ids, ConstraintKind, ConstraintSet,
    DualConfig, DualState, ScaleTrigger, TrainingConfig, VIOLATION_TOL,
};
use crate::metrics::{fmt_f64, MetricsWriter};
use crate::qlearn::replay::{Obs, ReplayBuffer, Transition};
use crate::qlearn::value::ValueFn;
use crate::qlearn::{augmented_target, masked_argmax};

/// Linear exploration schedule: `start` to `end` over the first
/// `decay_fraction` of the episode budget, then flat at `end`.
#[derive(Debug, Clone)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.0,
            decay_fraction: 0.8,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize, total_episodes: usize) -> f64 {
        let cutoff = (total_episodes as f64 * self.decay_fraction).max(1.0);
        if (episode as f64) >= cutoff {
            self.end
        } else {
            self.start + (self.end - self.start) * episode as f64 / cutoff
        }
    }
}

/// Everything the training loop needs besides the environment.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub episodes: usize,
    pub seed: u64,
    pub training: TrainingConfig,
    pub dual: DualConfig,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub grad_clip: Option<f64>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps between gradient steps.
    pub update_period: usize,
    /// Gradient steps between target-network syncs.
    pub target_sync_period: usize,
    pub epsilon: EpsilonSchedule,
    /// When false, penalties are dropped from targets and duals stay frozen.
    pub penalties_enabled: bool,
    /// Use a Q-table over one-hot observations instead of a network.
    pub tabular: bool,
    pub tabular_alpha: f64,
    /// Episodes in the moving average smoothing the cumulative-cost estimate.
    pub vhat_window: usize,
    /// Dump per-step trajectories when the environment supports it.
    pub write_trajectories: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            episodes: 100,
            seed: 0,
            training: TrainingConfig::default(),
            dual: DualConfig::default(),
            hidden: vec![128, 128],
            learning_rate: 2e-5,
            grad_clip: Some(10.0),
            batch_size: 1024,
            buffer_capacity: 50_000,
            update_period: 1,
            target_sync_period: 100,
            epsilon: EpsilonSchedule::default(),
            penalties_enabled: true,
            tabular: false,
            tabular_alpha: 0.5,
            vhat_window: 10,
            write_trajectories: false,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.episodes == 0 {
            return Err(CoreError::config("episode count must be >= 1"));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(CoreError::config(format!(
                "need buffer capacity >= batch size >= 1, got capacity {} batch {}",
                self.buffer_capacity, self.batch_size
            )));
        }
        if self.update_period == 0 || self.target_sync_period == 0 {
            return Err(CoreError::config(
                "update and target sync periods must be >= 1",
            ));
        }
        if self.learning_rate <= 0.0 || self.tabular_alpha <= 0.0 {
            return Err(CoreError::config("learning rates must be positive"));
        }
        if self.vhat_window == 0 {
            return Err(CoreError::config("vhat window must be >= 1"));
        }
        Ok(())
    }
}

/// Per-agent learner state owned by the training loop.
pub struct AgentState {
    pub value: ValueFn,
    pub duals: DualState,
    pub buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    grad_steps: u64,
    net_version: u64,
    vhat_history: VecDeque<BTreeMap<String, f64>>,
    greedy_cache: Option<(Vec<f64>, ActionMask, usize, u64)>,
}

impl AgentState {
    /// Wrap a restored value function for evaluation or continued training.
    pub fn from_value(value: ValueFn, duals: DualState, settings: &TrainSettings, index: usize) -> Self {
        let mut buffer_rng = ChaCha8Rng::seed_from_u64(settings.seed);
        buffer_rng.set_stream(20_000 + index as u64);
        let buffer = ReplayBuffer::new(settings.buffer_capacity, buffer_rng);
        let mut agent_rng = ChaCha8Rng::seed_from_u64(settings.seed);
        agent_rng.set_stream(30_000 + index as u64);
        AgentState::new(value, duals, buffer, agent_rng)
    }

    pub fn new(value: ValueFn, duals: DualState, buffer: ReplayBuffer, rng: ChaCha8Rng) -> Self {
        AgentState {
            value,
            duals,
            buffer,
            rng,
            grad_steps: 0,
            net_version: 0,
            vhat_history: VecDeque::new(),
            greedy_cache: None,
        }
    }

    /// Epsilon-greedy choice with a memoized greedy action: the argmax is
    /// only recomputed when the observation, mask, or network changed.
    fn choose(&mut self, obs: &[f64], mask: &ActionMask, epsilon: f64) -> Result<usize> {
        if self.rng.gen::<f64>() < epsilon {
            return Ok(mask.sample_allowed(&mut self.rng));
        }
        if let Some((c_obs, c_mask, action, version)) = &self.greedy_cache {
            if *version == self.net_version && c_mask == mask && c_obs == obs {
                return Ok(*action);
            }
        }
        let q = self.value.q_values(obs)?;
        let action = masked_argmax(&q, mask);
        self.greedy_cache = Some((obs.to_vec(), mask.clone(), action, self.net_version));
        Ok(action)
    }

    /// Greedy action (no exploration), bypassing the cache.
    pub fn greedy(&self, obs: &[f64], mask: &ActionMask) -> Result<usize> {
        Ok(masked_argmax(&self.value.q_values(obs)?, mask))
    }

    /// Cumulative-cost estimate smoothed over the configured window.
    fn windowed_vhat(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, f64> = BTreeMap::new();
        let n = self.vhat_history.len().max(1) as f64;
        for snapshot in &self.vhat_history {
            for (id, v) in snapshot {
                *acc.entry(id.clone()).or_insert(0.0) += v;
            }
        }
        for v in acc.values_mut() {
            *v /= n;
        }
        acc
    }
}

/// Per-agent episode summary.
#[derive(Debug, Clone)]
pub struct EpisodeReport {
    pub episode: usize,
    pub steps: usize,
    pub return_sum: f64,
    /// Discounted per-episode cumulative-cost estimate per constraint id.
    pub vhat_c: BTreeMap<String, f64>,
    pub mean_gplus: BTreeMap<String, f64>,
    pub mean_e: BTreeMap<String, f64>,
    pub mean_abs_e: BTreeMap<String, f64>,
    /// Violating steps per instantaneous/equality constraint id.
    pub violations: BTreeMap<String, usize>,
    /// Steps with at least one violated constraint.
    pub total_violations: usize,
    pub shield_overrides: usize,
    pub epsilon: f64,
    pub loss_mean: f64,
    /// Episode ended on an environment fault.
    pub aborted: bool,
    /// Episode ended on a terminal state before the horizon.
    pub terminated: bool,
}

impl EpisodeReport {
    fn new(episode: usize, epsilon: f64) -> Self {
        EpisodeReport {
            episode,
            steps: 0,
            return_sum: 0.0,
            vhat_c: BTreeMap::new(),
            mean_gplus: BTreeMap::new(),
            mean_e: BTreeMap::new(),
            mean_abs_e: BTreeMap::new(),
            violations: BTreeMap::new(),
            total_violations: 0,
            shield_overrides: 0,
            epsilon,
            loss_mean: 0.0,
            aborted: false,
            terminated: false,
        }
    }
}

/// Run one episode for the whole team: select actions under the safety mask,
/// step the joint environment, store transitions, and train each agent's
/// value function at the configured cadence. Duals are not touched here.
pub fn train_episode(
    agents: &mut [AgentState],
    env: &mut dyn Environment,
    settings: &TrainSettings,
    episode: usize,
    trajectory: Option<&mut Vec<String>>,
) -> Result<Vec<EpisodeReport>> {
    let n = env.num_agents();
    assert_eq!(agents.len(), n, "agent count must match the environment");
    let specs = env.constraints().clone();
    let epsilon = settings.epsilon.at(episode, settings.episodes);

    let mut obs: Vec<Obs> = env.reset()?.into_iter().map(Obs::from).collect();
    let mut masks: Vec<ActionMask> = (0..n).map(|i| env.safe_mask(i)).collect();
    let mut reports: Vec<EpisodeReport> = (0..n)
        .map(|_| EpisodeReport::new(episode, epsilon))
        .collect();
    let mut losses: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut gplus_sums: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); n];
    let mut e_sums: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); n];
    let mut abs_e_sums: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); n];
    let mut discount = 1.0;
    let mut trajectory = trajectory;

    for t in 0..settings.training.horizon {
        let mut actions = vec![0usize; n];
        for i in 0..n {
            actions[i] = agents[i].choose(&obs[i], &masks[i], epsilon)?;
        }
        let steps = match env.step(&actions) {
            Ok(steps) => steps,
            Err(_) => {
                for report in &mut reports {
                    report.aborted = true;
                }
                break;
            }
        };
        let next_masks: Vec<ActionMask> = (0..n).map(|i| env.safe_mask(i)).collect();
        if let Some(rows) = trajectory.as_deref_mut() {
            if let Some(new_rows) = env.trajectory_rows() {
                for row in new_rows {
                    rows.push(format!("{row},{episode}"));
                }
            }
        }

        let mut any_terminal = false;
        let mut next_obs: Vec<Obs> = Vec::with_capacity(n);
        for (i, st) in steps.into_iter().enumerate() {
            let report = &mut reports[i];
            report.steps += 1;
            report.return_sum += st.reward;
            report.shield_overrides += st.overridden as usize;
            let mut step_violated = false;
            for (id, &g) in &st.costs.g {
                *gplus_sums[i].entry(id.clone()).or_insert(0.0) += positive_part(g);
                if g > VIOLATION_TOL {
                    *report.violations.entry(id.clone()).or_insert(0) += 1;
                    step_violated = true;
                } else {
                    report.violations.entry(id.clone()).or_insert(0);
                }
            }
            for (id, &e) in &st.costs.e {
                *e_sums[i].entry(id.clone()).or_insert(0.0) += e;
                *abs_e_sums[i].entry(id.clone()).or_insert(0.0) += e.abs();
                if e.abs() > VIOLATION_TOL {
                    *report.violations.entry(id.clone()).or_insert(0) += 1;
                    step_violated = true;
                } else {
                    report.violations.entry(id.clone()).or_insert(0);
                }
            }
            for (id, &c) in &st.costs.c {
                *report.vhat_c.entry(id.clone()).or_insert(0.0) += discount * c;
            }
            report.total_violations += step_violated as usize;
            any_terminal |= st.terminal;

            // share the allocation when the observation did not change
            // (quasi-static episodes collapse to a single buffer)
            let next: Obs = if obs[i].as_ref() == st.obs.as_slice() {
                obs[i].clone()
            } else {
                Obs::from(st.obs)
            };
            agents[i].buffer.push(Transition {
                obs: obs[i].clone(),
                action: st.executed_action,
                reward: st.reward,
                next_obs: next.clone(),
                costs: st.costs,
                next_mask: next_masks[i].clone(),
                terminal: st.terminal,
            });
            next_obs.push(next);
        }
        discount *= settings.training.gamma;

        if (t + 1) % settings.update_period == 0 {
            for (i, agent) in agents.iter_mut().enumerate() {
                if agent.buffer.len() < settings.batch_size {
                    continue;
                }
                let AgentState {
                    value,
                    duals,
                    buffer,
                    grad_steps,
                    net_version,
                    ..
                } = agent;
                let batch = buffer.sample(settings.batch_size);
                let targets = augmented_target(
                    &batch,
                    value,
                    duals,
                    &specs,
                    &settings.training,
                    settings.penalties_enabled,
                )?;
                let inputs: Vec<&[f64]> = batch.iter().map(|tr| tr.obs.as_ref()).collect();
                let chosen: Vec<usize> = batch.iter().map(|tr| tr.action).collect();
                let loss = value.train_batch(&inputs, &chosen, &targets)?;
                losses[i].push(loss);
                *grad_steps += 1;
                *net_version += 1;
                if *grad_steps % settings.target_sync_period as u64 == 0 {
                    value.sync_target()?;
                }
            }
        }

        obs = next_obs;
        masks = next_masks;
        if any_terminal {
            for report in &mut reports {
                report.terminated = true;
            }
            break;
        }
    }

    for i in 0..n {
        let steps = reports[i].steps.max(1) as f64;
        reports[i].mean_gplus = gplus_sums[i]
            .iter()
            .map(|(k, v)| (k.clone(), v / steps))
            .collect();
        reports[i].mean_e = e_sums[i]
            .iter()
            .map(|(k, v)| (k.clone(), v / steps))
            .collect();
        reports[i].mean_abs_e = abs_e_sums[i]
            .iter()
            .map(|(k, v)| (k.clone(), v / steps))
            .collect();
        // every registered id appears in the estimates, costs emitted or not
        for spec in specs.iter() {
            match spec.kind {
                ConstraintKind::CumulativeInequality => {
                    reports[i].vhat_c.entry(spec.id.clone()).or_insert(0.0);
                }
                ConstraintKind::InstantEquality => {
                    reports[i].mean_e.entry(spec.id.clone()).or_insert(0.0);
                    reports[i].mean_abs_e.entry(spec.id.clone()).or_insert(0.0);
                }
                ConstraintKind::InstantInequality => {
                    reports[i].mean_gplus.entry(spec.id.clone()).or_insert(0.0);
                }
            }
        }
        if !losses[i].is_empty() {
            reports[i].loss_mean = losses[i].iter().sum::<f64>() / losses[i].len() as f64;
        }
    }
    Ok(reports)
}

/// Slow-timescale update at the episode boundary: dual ascent on the
/// window-smoothed cumulative estimate and the episode means, then penalty
/// scaling for the violated constraints.
pub fn end_of_episode(
    agent: &mut AgentState,
    report: &EpisodeReport,
    specs: &ConstraintSet,
    settings: &TrainSettings,
) -> Result<()> {
    if !settings.penalties_enabled {
        return Ok(());
    }
    agent.vhat_history.push_back(report.vhat_c.clone());
    while agent.vhat_history.len() > settings.vhat_window {
        agent.vhat_history.pop_front();
    }
    if (report.episode + 1) % settings.training.dual_update_period != 0 {
        return Ok(());
    }
    let vhat = agent.windowed_vhat();
    agent.duals = dual_ascent(&agent.duals, specs, &vhat, &report.mean_e, &report.mean_gplus)?;
    let violated: BTreeSet<String> = match settings.training.penalty_scale_trigger {
        ScaleTrigger::OnMeanViolation => {
            violated_ids(specs, &vhat, &report.mean_abs_e, &report.mean_gplus)
        }
        ScaleTrigger::OnAnyViolation => {
            let mut ids: BTreeSet<String> = report
                .violations
                .iter()
                .filter(|(_, count)| **count > 0)
                .map(|(id, _)| id.clone())
                .collect();
            for spec in specs.of_kind(ConstraintKind::CumulativeInequality) {
                if vhat.get(&spec.id).copied().unwrap_or(0.0) > spec.budget.unwrap_or(f64::INFINITY)
                {
                    ids.insert(spec.id.clone());
                }
            }
            ids
        }
    };
    agent.duals = scale_penalties(&agent.duals, &violated);
    agent.net_version += 1; // duals changed; cached greedy actions may be stale
    Ok(())
}

/// Outputs of a full training run.
pub struct RunArtifacts {
    /// `reports[episode][agent]`.
    pub reports: Vec<Vec<EpisodeReport>>,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_paths: Vec<PathBuf>,
    pub final_duals: Vec<DualState>,
}

/// Build the per-agent learner states for an environment.
pub fn build_agents(env: &dyn Environment, settings: &TrainSettings) -> Result<Vec<AgentState>> {
    settings.validate()?;
    let specs = env.constraints();
    let mut agents = Vec::with_capacity(env.num_agents());
    for i in 0..env.num_agents() {
        let value = if settings.tabular {
            ValueFn::tabular(env.obs_dim(), env.action_count(), settings.tabular_alpha)
        } else {
            let mut init_rng = ChaCha8Rng::seed_from_u64(settings.seed);
            init_rng.set_stream(10_000 + i as u64);
            ValueFn::neural(
                env.obs_dim(),
                &settings.hidden,
                env.action_count(),
                settings.learning_rate,
                settings.grad_clip,
                &mut init_rng,
            )?
        };
        let duals = DualState::new(specs, &settings.dual)?;
        let mut buffer_rng = ChaCha8Rng::seed_from_u64(settings.seed);
        buffer_rng.set_stream(20_000 + i as u64);
        let buffer = ReplayBuffer::new(settings.buffer_capacity, buffer_rng);
        let mut agent_rng = ChaCha8Rng::seed_from_u64(settings.seed);
        agent_rng.set_stream(30_000 + i as u64);
        agents.push(AgentState::new(value, duals, buffer, agent_rng));
    }
    Ok(agents)
}

/// Full training run: episodes, dual updates, metrics rows, checkpoints.
pub fn run_training(
    env: &mut dyn Environment,
    settings: &TrainSettings,
    out_dir: Option<&Path>,
) -> Result<RunArtifacts> {
    let mut agents = build_agents(env, settings)?;
    run_training_with(env, &mut agents, settings, out_dir)
}

/// Like [`run_training`] but on caller-provided agents (lets tests and the
/// oracle harness inspect or pre-seed learner state).
pub fn run_training_with(
    env: &mut dyn Environment,
    agents: &mut [AgentState],
    settings: &TrainSettings,
    out_dir: Option<&Path>,
) -> Result<RunArtifacts> {
    settings.validate()?;
    let specs = env.constraints().clone();
    let mut metrics = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(MetricsWriter::create(&dir.join("metrics.csv"), &specs)?)
        }
        None => None,
    };
    let mut trajectory_rows: Vec<String> = Vec::new();
    let want_trajectory =
        settings.write_trajectories && env.trajectory_header().is_some() && out_dir.is_some();

    let mut all_reports = Vec::with_capacity(settings.episodes);
    for episode in 0..settings.episodes {
        let traj = want_trajectory.then_some(&mut trajectory_rows);
        let reports = train_episode(agents, env, settings, episode, traj)?;
        for (agent, report) in agents.iter_mut().zip(&reports) {
            end_of_episode(agent, report, &specs, settings)?;
        }
        if let Some(writer) = metrics.as_mut() {
            for (i, report) in reports.iter().enumerate() {
                writer.write_episode(i, report, &agents[i].duals)?;
            }
            writer.flush()?;
        }
        all_reports.push(reports);
    }

    let mut checkpoint_paths = Vec::new();
    if let Some(dir) = out_dir {
        for (i, agent) in agents.iter().enumerate() {
            let path = dir.join(format!("checkpoint_agent{i}.qnn"));
            std::fs::write(&path, agent.value.serialize())?;
            checkpoint_paths.push(path);
        }
        if want_trajectory {
            let mut content = String::new();
            content.push_str(&format!(
                "{},episode\n",
                env.trajectory_header().unwrap_or_default()
            ));
            for row in &trajectory_rows {
                content.push_str(row);
                content.push('\n');
            }
            std::fs::write(dir.join("trajectory.csv"), content)?;
        }
    }
    Ok(RunArtifacts {
        reports: all_reports,
        metrics_path: out_dir.map(|d| d.join("metrics.csv")),
        checkpoint_paths,
        final_duals: agents.iter().map(|a| a.duals.clone()).collect(),
    })
}

/// Aggregate results of a greedy evaluation run.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    /// Violating steps / total steps, per constraint id.
    pub violation_rate: BTreeMap<String, f64>,
    /// Fraction of episodes with no violation at any step.
    pub feasibility: f64,
    pub override_rate: f64,
    pub mean_steps: f64,
}

/// Greedy evaluation: exploration off, duals frozen, no learning. Episodes
/// run for `horizon` steps or until a terminal state.
pub fn evaluate(
    agents: &[AgentState],
    env: &mut dyn Environment,
    episodes: usize,
    horizon: usize,
    out_dir: Option<&Path>,
) -> Result<EvalSummary> {
    let n = env.num_agents();
    assert_eq!(agents.len(), n, "agent count must match the environment");
    let mut total_return = 0.0;
    let mut agent_steps = 0usize;
    let mut override_steps = 0usize;
    let mut violating: BTreeMap<String, usize> = BTreeMap::new();
    let mut feasible_episodes = 0usize;
    let mut env_rows: Vec<String> = Vec::new();

    for episode in 0..episodes {
        let mut obs = env.reset()?;
        let mut masks: Vec<ActionMask> = (0..n).map(|i| env.safe_mask(i)).collect();
        let mut episode_feasible = true;
        for _ in 0..horizon {
            let mut actions = vec![0usize; n];
            for i in 0..n {
                actions[i] = agents[i].greedy(&obs[i], &masks[i])?;
            }
            let steps = env.step(&actions)?;
            let mut any_terminal = false;
            for (i, st) in steps.into_iter().enumerate() {
                agent_steps += 1;
                total_return += st.reward;
                override_steps += st.overridden as usize;
                for (id, &g) in &st.costs.g {
                    if g > VIOLATION_TOL {
                        *violating.entry(id.clone()).or_insert(0) += 1;
                        episode_feasible = false;
                    } else {
                        violating.entry(id.clone()).or_insert(0);
                    }
                }
                for (id, &e) in &st.costs.e {
                    if e.abs() > VIOLATION_TOL {
                        *violating.entry(id.clone()).or_insert(0) += 1;
                        episode_feasible = false;
                    } else {
                        violating.entry(id.clone()).or_insert(0);
                    }
                }
                any_terminal |= st.terminal;
                obs[i] = st.obs;
            }
            masks = (0..n).map(|i| env.safe_mask(i)).collect();
            if any_terminal {
                break;
            }
        }
        feasible_episodes += episode_feasible as usize;
        if let Some(row) = env.eval_row(episode) {
            env_rows.push(row);
        }
    }

    let steps = agent_steps.max(1) as f64;
    let summary = EvalSummary {
        episodes,
        mean_return: total_return / episodes.max(1) as f64 / n as f64,
        violation_rate: violating
            .iter()
            .map(|(k, v)| (k.clone(), *v as f64 / steps))
            .collect(),
        feasibility: feasible_episodes as f64 / episodes.max(1) as f64,
        override_rate: override_steps as f64 / steps,
        mean_steps: steps / episodes.max(1) as f64 / n as f64,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut content = String::from(
            "episodes,mean_return,feasibility,override_rate,mean_steps",
        );
        let mut tail = format!(
            "\n{},{},{},{},{}",
            summary.episodes,
            fmt_f64(summary.mean_return),
            fmt_f64(summary.feasibility),
            fmt_f64(summary.override_rate),
            fmt_f64(summary.mean_steps),
        );
        for (id, rate) in &summary.violation_rate {
            content.push_str(&format!(",violation_rate_{id}"));
            tail.push_str(&format!(",{}", fmt_f64(*rate)));
        }
        content.push_str(&tail);
        content.push('\n');
        std::fs::write(dir.join("eval_summary.csv"), content)?;
        if let Some(header) = env.eval_header() {
            let mut content = format!("{header}\n");
            for row in &env_rows {
                content.push_str(row);
                content.push('\n');
            }
            std::fs::write(dir.join("eval_episodes.csv"), content)?;
        }
    }
    Ok(summary)
}
