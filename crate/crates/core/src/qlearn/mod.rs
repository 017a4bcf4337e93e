//! Constrained Q-learning: masked action selection, augmented TD targets,
//! and the episode/dual training loops.

pub mod replay;
pub mod training;
pub mod value;

pub use replay::{ReplayBuffer, Transition};
pub use training::{
    evaluate, run_training, AgentState, EpisodeReport, EpsilonSchedule, EvalSummary,
    RunArtifacts, TrainSettings,
};
pub use value::{QTable, ValueFn};

use rand::Rng;

use crate::env::ActionMask;
use crate::error::{CoreError, Result};
use crate::lagrangian::{penalty_step, ConstraintSet, DualState, TrainingConfig};

/// Argmax over the allowed actions, ties to the lowest index.
pub fn masked_argmax(q: &[f64], mask: &ActionMask) -> usize {
    debug_assert_eq!(q.len(), mask.len());
    let mut best: Option<usize> = None;
    for (a, v) in q.iter().enumerate() {
        if mask.allows(a) {
            match best {
                None => best = Some(a),
                Some(b) if *v > q[b] => best = Some(a),
                _ => {}
            }
        }
    }
    best.expect("mask has no allowed action")
}

/// Epsilon-greedy over the safe action set. The Q-values are only computed
/// when the greedy branch is taken.
pub fn select_action_with<F>(
    q_provider: F,
    mask: &ActionMask,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize>
where
    F: FnOnce() -> Result<Vec<f64>>,
{
    if mask.count_allowed() == 0 {
        return Err(CoreError::config("action mask has no allowed entry"));
    }
    if rng.gen::<f64>() < epsilon {
        Ok(mask.sample_allowed(rng))
    } else {
        Ok(masked_argmax(&q_provider()?, mask))
    }
}

/// Epsilon-greedy action for `obs` under `mask`.
pub fn select_action(
    value: &ValueFn,
    obs: &[f64],
    mask: &ActionMask,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    select_action_with(|| value.q_values(obs), mask, epsilon, rng)
}

/// Augmented TD targets for a replay batch:
/// `y = r - phi_step(costs) + gamma * max over safe next actions of targetQ`.
///
/// Penalties are recomputed from the stored costs under the duals current at
/// sampling time, so replayed transitions feel the present constraint prices.
pub fn augmented_target(
    batch: &[&Transition],
    value: &ValueFn,
    duals: &DualState,
    specs: &ConstraintSet,
    cfg: &TrainingConfig,
    penalties_enabled: bool,
) -> Result<Vec<f64>> {
    let mut targets = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        let phi = if penalties_enabled {
            penalty_step(&t.costs, duals, specs, cfg)?
        } else {
            0.0
        };
        let bootstrap = if t.terminal {
            0.0
        } else {
            value.target_masked_max(&t.next_obs, &t.next_mask)?
        };
        let y = t.reward - phi + cfg.gamma * bootstrap;
        if !y.is_finite() {
            return Err(CoreError::NonFinite(format!(
                "augmented target for batch entry {i}: action {}, reward {}, penalty {phi}, bootstrap {bootstrap}",
                t.action, t.reward
            )));
        }
        targets.push(y);
    }
    Ok(targets)
}

/// Grid-search hook for the second selection stage: among the candidate
/// actions that pass the feasibility pre-check, pick the one with the best
/// Q-value (earlier candidates win ties); fall back when none is feasible.
pub fn stage2_grid_refine<F>(q: &[f64], feasible: F, grid: &[usize], fallback: usize) -> usize
where
    F: Fn(usize) -> bool,
{
    let mut best: Option<usize> = None;
    for &a in grid {
        if feasible(a) {
            match best {
                None => best = Some(a),
                Some(b) if q[a] > q[b] => best = Some(a),
                _ => {}
            }
        }
    }
    best.unwrap_or(fallback)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{ConstraintSpec, CostSample, DualConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn greedy_takes_argmax() {
        let v = table_with(&[1.0, 5.0, 3.0]);
        let a = select_action(
            &v,
            &[1.0],
            &ActionMask::AllValid(3),
            0.0,
            &mut rng(0),
        )
        .unwrap();
        assert_eq!(a, 1);
    }

    #[test]
    fn greedy_respects_mask() {
        let v = table_with(&[1.0, 5.0, 3.0]);
        let mask = ActionMask::Partial(vec![true, false, true]);
        let a = select_action(&v, &[1.0], &mask, 0.0, &mut rng(0)).unwrap();
        assert_eq!(a, 2);
    }

    #[test]
    fn greedy_breaks_ties_to_lowest_index() {
        let v = table_with(&[2.0, 2.0, 2.0]);
        let a = select_action(&v, &[1.0], &ActionMask::AllValid(3), 0.0, &mut rng(0)).unwrap();
        assert_eq!(a, 0);
    }

    #[test]
    fn full_exploration_is_uniform_over_masked_set() {
        let v = table_with(&[0.0, 0.0, 0.0, 0.0, 0.0]);
        let mask = ActionMask::Partial(vec![true, false, true, true, false]);
        let mut r = rng(7);
        let draws = 10_000usize;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[select_action(&v, &[1.0], &mask, 1.0, &mut r).unwrap()] += 1;
        }
        assert_eq!(counts[1] + counts[4], 0);
        let expected = draws as f64 / 3.0;
        let chi2: f64 = [counts[0], counts[2], counts[3]]
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // df = 2, 0.999 quantile ~ 13.82
        assert!(chi2 < 13.82, "chi-squared statistic {chi2}");
    }

    fn table_with(q: &[f64]) -> ValueFn {
        let mut v = ValueFn::tabular(1, q.len(), 1.0);
        let obs = vec![1.0];
        for (a, y) in q.iter().enumerate() {
            v.train_batch(&[obs.as_slice()], &[a], &[*y]).unwrap();
        }
        v.sync_target().unwrap();
        v
    }

    fn transition(reward: f64, terminal: bool, costs: CostSample) -> Transition {
        Transition {
            obs: vec![1.0].into(),
            action: 0,
            reward,
            next_obs: vec![1.0].into(),
            costs,
            next_mask: ActionMask::AllValid(2),
            terminal,
        }
    }

    #[test]
    fn augmented_target_reduces_to_dqn_when_duals_zero() {
        let specs = ConstraintSet::new(vec![ConstraintSpec::inequality("k", "")]).unwrap();
        let duals =
            crate::lagrangian::DualState::new(&specs, &DualConfig::default()).unwrap();
        let cfg = TrainingConfig {
            gamma: 0.9,
            ..TrainingConfig::default()
        };
        let value = table_with(&[2.0, 4.0]);
        let t = transition(1.0, false, CostSample::default().with_g("k", -1.0));
        let y = augmented_target(&[&t], &value, &duals, &specs, &cfg, true).unwrap();
        assert!((y[0] - (1.0 + 0.9 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn augmented_target_terminal_skips_bootstrap() {
        let specs = ConstraintSet::new(vec![ConstraintSpec::inequality("k", "")]).unwrap();
        let mut duals =
            crate::lagrangian::DualState::new(&specs, &DualConfig::default()).unwrap();
        duals.nu.insert("k".into(), 1.0);
        duals.rho_inst.insert("k".into(), 2.0);
        let cfg = TrainingConfig::default();
        let value = table_with(&[2.0, 4.0]);
        let t = transition(1.0, true, CostSample::default().with_g("k", 0.5));
        let y = augmented_target(&[&t], &value, &duals, &specs, &cfg, true).unwrap();
        assert!((y[0] - (1.0 - 0.75)).abs() < 1e-12);
    }

    #[test]
    fn augmented_target_hand_value() {
        let specs = ConstraintSet::new(vec![ConstraintSpec::inequality("k", "")]).unwrap();
        let mut duals =
            crate::lagrangian::DualState::new(&specs, &DualConfig::default()).unwrap();
        duals.nu.insert("k".into(), 1.0);
        duals.rho_inst.insert("k".into(), 2.0);
        let cfg = TrainingConfig {
            gamma: 0.95,
            ..TrainingConfig::default()
        };
        // maxQ' = 2, phi = 0.75, r = 1 -> y = 1 - 0.75 + 1.9 = 2.15
        let value = table_with(&[2.0, 1.0]);
        let t = transition(1.0, false, CostSample::default().with_g("k", 0.5));
        let y = augmented_target(&[&t], &value, &duals, &specs, &cfg, true).unwrap();
        assert!((y[0] - 2.15).abs() < 1e-12);
    }

    #[test]
    fn stage2_singleton_and_fallback() {
        let q = vec![0.1, 0.9, 0.5];
        assert_eq!(stage2_grid_refine(&q, |_| true, &[2], 0), 2);
        assert_eq!(stage2_grid_refine(&q, |_| false, &[1, 2], 0), 0);
        assert_eq!(stage2_grid_refine(&q, |a| a != 1, &[0, 1, 2], 0), 2);
    }
}
