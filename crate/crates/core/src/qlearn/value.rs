//! Action-value approximators: a dense MLP pair (online + frozen target) or
//! a plain table, behind one query/update contract so the training loop does
//! not care which mode it drives.

use rand::Rng;

use crate::env::ActionMask;
use crate::error::{CoreError, Result};
use crate::nn::{self, AdamState, Network};

const TABLE_MAGIC: &[u8; 8] = b"SAFEQTB1";

/// Dense state-action value table for finite observation spaces encoded as
/// one-hot vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub states: usize,
    pub actions: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn zeros(states: usize, actions: usize) -> Self {
        QTable {
            states,
            actions,
            q: vec![0.0; states * actions],
        }
    }

    /// One-hot observation to state index.
    pub fn state_of(&self, obs: &[f64]) -> usize {
        obs.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.q[state * self.actions..(state + 1) * self.actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.q[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.q[state * self.actions + action] = value;
    }

    /// Greedy action per state, ties to the lowest index.
    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.states)
            .map(|s| {
                let row = self.row(s);
                let mut best = 0;
                for (a, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }
}

/// Either a neural approximator with its frozen target copy, or a table with
/// a per-(state, action) decaying learning rate and a target copy synced at
/// the same cadence as the neural path.
pub enum ValueFn {
    Neural {
        net: Network,
        target: Network,
        opt: AdamState,
    },
    Table {
        table: QTable,
        target: QTable,
        alpha0: f64,
        visits: Vec<u32>,
    },
}

impl ValueFn {
    pub fn neural(
        obs_dim: usize,
        hidden: &[usize],
        actions: usize,
        learning_rate: f64,
        grad_clip: Option<f64>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(obs_dim);
        dims.extend_from_slice(hidden);
        dims.push(actions);
        let net = Network::new(&dims, rng)?;
        let target = net.clone();
        let mut opt = AdamState::new(&net, learning_rate);
        opt.grad_clip = grad_clip;
        Ok(ValueFn::Neural { net, target, opt })
    }

    pub fn tabular(states: usize, actions: usize, alpha0: f64) -> Self {
        ValueFn::Table {
            table: QTable::zeros(states, actions),
            target: QTable::zeros(states, actions),
            alpha0,
            visits: vec![0; states * actions],
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            ValueFn::Neural { net, .. } => net.output_dim(),
            ValueFn::Table { table, .. } => table.actions,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            ValueFn::Neural { net, .. } => net.input_dim(),
            ValueFn::Table { table, .. } => table.states,
        }
    }

    /// Online-network action values at `obs`.
    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            ValueFn::Neural { net, .. } => net.forward(obs),
            ValueFn::Table { table, .. } => Ok(table.row(table.state_of(obs)).to_vec()),
        }
    }

    /// Target-network max over the allowed actions at `obs`.
    pub fn target_masked_max(&self, obs: &[f64], mask: &ActionMask) -> Result<f64> {
        let values = match self {
            ValueFn::Neural { target, .. } => target.forward(obs)?,
            ValueFn::Table { target, .. } => target.row(target.state_of(obs)).to_vec(),
        };
        let mut best = f64::NEG_INFINITY;
        for (a, v) in values.iter().enumerate() {
            if mask.allows(a) && *v > best {
                best = *v;
            }
        }
        if best == f64::NEG_INFINITY {
            return Err(CoreError::config(
                "bootstrap mask excludes every action".to_string(),
            ));
        }
        Ok(best)
    }

    /// One update on the batch; returns the pre-update mean squared error.
    pub fn train_batch(
        &mut self,
        inputs: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<f64> {
        match self {
            ValueFn::Neural { net, opt, .. } => nn::train_step(net, opt, inputs, actions, targets),
            ValueFn::Table {
                table,
                alpha0,
                visits,
                ..
            } => {
                if inputs.len() != actions.len() || inputs.len() != targets.len() {
                    return Err(CoreError::config("batch arity mismatch"));
                }
                let mut loss = 0.0;
                for ((obs, &a), &y) in inputs.iter().zip(actions).zip(targets) {
                    if !y.is_finite() {
                        return Err(CoreError::NonFinite("training target".into()));
                    }
                    let s = table.state_of(obs);
                    let idx = s * table.actions + a;
                    let q = table.get(s, a);
                    let err = q - y;
                    loss += err * err;
                    let alpha = *alpha0 / (1.0 + visits[idx] as f64 / 1000.0);
                    table.set(s, a, q + alpha * (y - q));
                    visits[idx] += 1;
                }
                Ok(loss / inputs.len() as f64)
            }
        }
    }

    /// Copy the online parameters into the frozen target.
    pub fn sync_target(&mut self) -> Result<()> {
        match self {
            ValueFn::Neural { net, target, .. } => nn::sync_target(net, target),
            ValueFn::Table { table, target, .. } => {
                *target = table.clone();
                Ok(())
            }
        }
    }

    pub fn table(&self) -> Option<&QTable> {
        match self {
            ValueFn::Table { table, .. } => Some(table),
            _ => None,
        }
    }

    /// Checkpoint bytes (network format or table format by mode).
    pub fn serialize(&self) -> Vec<u8> {
        match self {
            ValueFn::Neural { net, .. } => nn::serialize(net),
            ValueFn::Table { table, .. } => {
                let mut out = Vec::with_capacity(16 + table.q.len() * 8);
                out.extend_from_slice(TABLE_MAGIC);
                out.extend_from_slice(&(table.states as u32).to_le_bytes());
                out.extend_from_slice(&(table.actions as u32).to_le_bytes());
                for v in &table.q {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out
            }
        }
    }

    /// Restore from checkpoint bytes, accepting either format.
    pub fn deserialize(bytes: &[u8], learning_rate: f64, grad_clip: Option<f64>) -> Result<Self> {
        if bytes.len() >= 8 && &bytes[..8] == TABLE_MAGIC {
            if bytes.len() < 16 {
                return Err(CoreError::Checkpoint {
                    offset: bytes.len(),
                    message: "truncated table header".into(),
                });
            }
            let states = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
            let actions = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
            let expect = 16 + states * actions * 8;
            if bytes.len() != expect {
                return Err(CoreError::Checkpoint {
                    offset: bytes.len().min(expect),
                    message: format!(
                        "table payload length {} does not match {states}x{actions}",
                        bytes.len()
                    ),
                });
            }
            let mut table = QTable::zeros(states, actions);
            for i in 0..states * actions {
                let off = 16 + i * 8;
                table.q[i] = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            }
            let target = table.clone();
            let visits = vec![0; states * actions];
            Ok(ValueFn::Table {
                table,
                target,
                alpha0: 0.5,
                visits,
            })
        } else {
            let net = nn::deserialize(bytes)?;
            let target = net.clone();
            let mut opt = AdamState::new(&net, learning_rate);
            opt.grad_clip = grad_clip;
            Ok(ValueFn::Neural { net, target, opt })
        }
    }
}
