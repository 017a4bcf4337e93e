//! Episodic environment wrapper around an explicit finite CMDP, with one-hot
//! observations so the tabular learner can run against the exact oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionMask, EnvStep, Environment};
use crate::error::Result;
use crate::lagrangian::{ConstraintSet, ConstraintSpec, CostSample};
use crate::oracle::CmdpSpec;

pub struct CmdpEnv {
    spec: CmdpSpec,
    constraints: ConstraintSet,
    state: usize,
    rng: ChaCha8Rng,
}

impl CmdpEnv {
    pub fn new(spec: CmdpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut decls = Vec::new();
        for (i, d) in spec.budgets.iter().enumerate() {
            decls.push(ConstraintSpec::cumulative(
                format!("budget_{i}"),
                *d,
                "discounted cumulative cost budget",
            ));
        }
        for i in 0..spec.inst_costs.len() {
            decls.push(ConstraintSpec::inequality(
                format!("inst_{i}"),
                "per-step inequality cost",
            ));
        }
        let constraints = ConstraintSet::new(decls)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        Ok(CmdpEnv {
            spec,
            constraints,
            state: 0,
            rng,
        })
    }

    pub fn spec(&self) -> &CmdpSpec {
        &self.spec
    }

    fn one_hot(&self, state: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.spec.states];
        v[state] = 1.0;
        v
    }

    fn sample_categorical(&mut self, weights: impl Iterator<Item = f64>) -> usize {
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in weights.enumerate() {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }
}

impl Environment for CmdpEnv {
    fn num_agents(&self) -> usize {
        1
    }

    fn action_count(&self) -> usize {
        self.spec.actions
    }

    fn obs_dim(&self) -> usize {
        self.spec.states
    }

    fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    fn reset(&mut self) -> Result<Vec<Vec<f64>>> {
        let dist = self.spec.initial_dist.clone();
        self.state = self.sample_categorical(dist.into_iter());
        Ok(vec![self.one_hot(self.state)])
    }

    fn safe_mask(&mut self, _agent: usize) -> ActionMask {
        ActionMask::AllValid(self.spec.actions)
    }

    fn fallback_action(&self, _agent: usize) -> usize {
        0
    }

    fn step(&mut self, intended: &[usize]) -> Result<Vec<EnvStep>> {
        let action = intended[0];
        let s = self.state;
        let reward = self.spec.r(s, action);
        let mut costs = CostSample::default();
        for (i, table) in self.spec.cum_costs.iter().enumerate() {
            costs
                .c
                .insert(format!("budget_{i}"), table[s * self.spec.actions + action]);
        }
        let mut violation = false;
        for (i, table) in self.spec.inst_costs.iter().enumerate() {
            let g = table[s * self.spec.actions + action];
            violation |= g > 1e-9;
            costs.g.insert(format!("inst_{i}"), g);
        }
        let weights: Vec<f64> = (0..self.spec.states)
            .map(|s2| self.spec.p(s, action, s2))
            .collect();
        self.state = self.sample_categorical(weights.into_iter());
        Ok(vec![EnvStep {
            obs: self.one_hot(self.state),
            reward,
            costs,
            executed_action: action,
            overridden: false,
            violation,
            feasible: !violation,
            terminal: false,
        }])
    }
}
