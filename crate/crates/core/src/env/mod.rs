//! Simulation environments behind a single trait.
//!
//! Environments own their PRNG and all world state; a `(config, seed)` pair
//! fully determines every trajectory. Agents submit a joint action vector and
//! receive per-agent step results carrying reward, constraint costs, and
//! shield/violation flags. When an environment has an execution-layer shield
//! it is applied inside [`Environment::step`], and the executed (possibly
//! overridden) action is reported back.

pub mod cmdp;
pub mod ris;
pub mod uav;

use rand::Rng;

use crate::error::Result;
use crate::lagrangian::{ConstraintSet, CostSample};

/// Boolean action mask with a compact all-true representation.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionMask {
    AllValid(usize),
    Partial(Vec<bool>),
}

impl ActionMask {
    pub fn len(&self) -> usize {
        match self {
            ActionMask::AllValid(n) => *n,
            ActionMask::Partial(v) => v.len(),
        }
    }

    pub fn allows(&self, action: usize) -> bool {
        match self {
            ActionMask::AllValid(n) => action < *n,
            ActionMask::Partial(v) => v.get(action).copied().unwrap_or(false),
        }
    }

    pub fn count_allowed(&self) -> usize {
        match self {
            ActionMask::AllValid(n) => *n,
            ActionMask::Partial(v) => v.iter().filter(|b| **b).count(),
        }
    }

    pub fn first_allowed(&self) -> Option<usize> {
        match self {
            ActionMask::AllValid(n) => (*n > 0).then_some(0),
            ActionMask::Partial(v) => v.iter().position(|b| *b),
        }
    }

    /// Uniform draw over the allowed entries. Panics if none are allowed.
    pub fn sample_allowed(&self, rng: &mut impl Rng) -> usize {
        match self {
            ActionMask::AllValid(n) => rng.gen_range(0..*n),
            ActionMask::Partial(v) => {
                let k = self.count_allowed();
                assert!(k > 0, "mask has no allowed action");
                let mut pick = rng.gen_range(0..k);
                for (i, &ok) in v.iter().enumerate() {
                    if ok {
                        if pick == 0 {
                            return i;
                        }
                        pick -= 1;
                    }
                }
                unreachable!()
            }
        }
    }
}

/// One agent's view of a joint environment step.
#[derive(Debug, Clone)]
pub struct EnvStep {
    /// Observation after the step.
    pub obs: Vec<f64>,
    pub reward: f64,
    pub costs: CostSample,
    /// Action actually applied after any shield override.
    pub executed_action: usize,
    /// The shield replaced the intended action.
    pub overridden: bool,
    /// Some instantaneous constraint was violated at this step.
    pub violation: bool,
    /// All instantaneous constraints hold at this step.
    pub feasible: bool,
    pub terminal: bool,
}

pub trait Environment {
    fn num_agents(&self) -> usize;
    /// Size of each agent's discrete action space.
    fn action_count(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// Constraint declarations shared by every agent.
    fn constraints(&self) -> &ConstraintSet;

    /// Start a fresh episode; returns per-agent observations.
    fn reset(&mut self) -> Result<Vec<Vec<f64>>>;

    /// Mask of actions whose deterministically-evaluable constraints are
    /// satisfiable in the current state. Implementations force-enable the
    /// fallback action (and count the event) rather than return an all-false
    /// mask.
    fn safe_mask(&mut self, agent: usize) -> ActionMask;

    /// Env-defined safe fallback (hover/minimum power/first action).
    fn fallback_action(&self, agent: usize) -> usize;

    /// Apply the joint intended action; shields run inside.
    fn step(&mut self, intended: &[usize]) -> Result<Vec<EnvStep>>;

    /// Optional header for the per-step trajectory dump.
    fn trajectory_header(&self) -> Option<String> {
        None
    }

    /// Optional trajectory rows describing the most recent step.
    fn trajectory_rows(&self) -> Option<Vec<String>> {
        None
    }

    /// Optional header for env-specific per-episode evaluation rows.
    fn eval_header(&self) -> Option<String> {
        None
    }

    /// Optional env-specific evaluation row for the episode that just ended.
    fn eval_row(&self, _episode: usize) -> Option<String> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mask_basics() {
        let all = ActionMask::AllValid(3);
        assert_eq!(all.len(), 3);
        assert_eq!(all.count_allowed(), 3);
        assert!(all.allows(2));
        assert!(!all.allows(3));

        let partial = ActionMask::Partial(vec![false, true, false, true]);
        assert_eq!(partial.count_allowed(), 2);
        assert_eq!(partial.first_allowed(), Some(1));
        assert!(!partial.allows(0));
    }

    #[test]
    fn mask_sampling_hits_only_allowed() {
        let mask = ActionMask::Partial(vec![false, true, false, true, false]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = mask.sample_allowed(&mut rng);
            assert!(a == 1 || a == 3);
        }
    }
}
