//! Dense feedforward function approximator with backpropagation and an
//! adaptive-moment optimizer.
//!
//! Hidden layers use ReLU, the output layer is linear, one output per
//! discrete action. Training minimizes the mean squared error between the
//! outputs selected by a batch's action indices and their targets, so the
//! output-layer gradient is nonzero only for the touched rows; both the
//! backward pass and the optimizer exploit that sparsity to stay cheap when
//! the action space is wide.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{CoreError, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"SAFEQNN1";

/// Dense multi-layer perceptron. Weights are row-major `out x in` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn new(layer_dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Network::zeros(layer_dims)?;
        for l in 0..net.weights.len() {
            let (fan_out, fan_in) = (layer_dims[l + 1], layer_dims[l]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in net.weights[l].iter_mut() {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(CoreError::config(
                "network needs at least input and output dimensions",
            ));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(CoreError::config("layer dimensions must be positive"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_dims.len() - 1 {
            weights.push(vec![0.0; layer_dims[l] * layer_dims[l + 1]]);
            biases.push(vec![0.0; layer_dims[l + 1]]);
        }
        Ok(Network {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Hidden activations for `x`, i.e. the input to the output layer.
    fn trunk(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in 0..self.weights.len() - 1 {
            a = self.affine(l, &a, true);
        }
        a
    }

    fn affine(&self, layer: usize, input: &[f64], relu: bool) -> Vec<f64> {
        let n_in = self.layer_dims[layer];
        let w = &self.weights[layer];
        let mut out = self.biases[layer].clone();
        for (row, o) in out.iter_mut().enumerate() {
            let wrow = &w[row * n_in..(row + 1) * n_in];
            let mut acc = 0.0;
            for (wi, xi) in wrow.iter().zip(input) {
                acc += wi * xi;
            }
            *o += acc;
            if relu && *o < 0.0 {
                *o = 0.0;
            }
        }
        out
    }

    /// Full output vector `Q(x, .)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(CoreError::config(format!(
                "input length {} does not match network input dimension {}",
                x.len(),
                self.input_dim()
            )));
        }
        let hidden = self.trunk(x);
        Ok(self.affine(self.weights.len() - 1, &hidden, false))
    }

    /// `Q(x, action)` without materializing the other outputs.
    pub fn forward_one(&self, x: &[f64], action: usize) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(CoreError::config(format!(
                "input length {} does not match network input dimension {}",
                x.len(),
                self.input_dim()
            )));
        }
        if action >= self.output_dim() {
            return Err(CoreError::config(format!(
                "action index {action} out of range for {} outputs",
                self.output_dim()
            )));
        }
        let hidden = self.trunk(x);
        let last = self.weights.len() - 1;
        let n_in = self.layer_dims[last];
        let wrow = &self.weights[last][action * n_in..(action + 1) * n_in];
        let mut acc = self.biases[last][action];
        for (wi, hi) in wrow.iter().zip(&hidden) {
            acc += wi * hi;
        }
        Ok(acc)
    }

    /// Forward pass keeping every layer's post-activation output.
    fn forward_cached(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layer_dims.len());
        acts.push(x.to_vec());
        for l in 0..self.weights.len() {
            let out = self.affine(l, &acts[l], l < self.weights.len() - 1);
            acts.push(out);
        }
        acts
    }
}

/// Gradients mirroring a network's parameters. The output layer is kept as a
/// sparse row map because a training batch only ever touches the rows of its
/// action indices.
struct Gradients {
    trunk_w: Vec<Vec<f64>>,
    trunk_b: Vec<Vec<f64>>,
    head_rows: BTreeMap<usize, (Vec<f64>, f64)>,
}

impl Gradients {
    fn zeros(net: &Network) -> Self {
        let last = net.weights.len() - 1;
        Gradients {
            trunk_w: (0..last).map(|l| vec![0.0; net.weights[l].len()]).collect(),
            trunk_b: (0..last).map(|l| vec![0.0; net.biases[l].len()]).collect(),
            head_rows: BTreeMap::new(),
        }
    }

    fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for layer in self.trunk_w.iter().chain(self.trunk_b.iter()) {
            for g in layer {
                sq += g * g;
            }
        }
        for (row, bias) in self.head_rows.values() {
            for g in row {
                sq += g * g;
            }
            sq += bias * bias;
        }
        sq.sqrt()
    }

    fn scale(&mut self, factor: f64) {
        for layer in self.trunk_w.iter_mut().chain(self.trunk_b.iter_mut()) {
            for g in layer {
                *g *= factor;
            }
        }
        for (row, bias) in self.head_rows.values_mut() {
            for g in row {
                *g *= factor;
            }
            *bias *= factor;
        }
    }
}

/// Adam accumulators and hyperparameters.
///
/// Output-layer rows that receive no gradient in a step keep their moments
/// untouched (sparse variant); trunk parameters follow the dense update.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Clip gradients to this global norm before the update, if set.
    pub grad_clip: Option<f64>,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    /// Per-row step counts for the output layer's bias correction.
    head_steps: Vec<u64>,
}

impl AdamState {
    pub fn new(net: &Network, learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip: Some(10.0),
            m_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            head_steps: vec![0; net.output_dim()],
        }
    }

    fn matches(&self, net: &Network) -> bool {
        self.m_w.len() == net.weights.len()
            && self
                .m_w
                .iter()
                .zip(&net.weights)
                .all(|(m, w)| m.len() == w.len())
            && self.head_steps.len() == net.output_dim()
    }

    fn adam_update(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        param: &mut f64,
        m: &mut f64,
        v: &mut f64,
        grad: f64,
    ) {
        *m = beta1 * *m + (1.0 - beta1) * grad;
        *v = beta2 * *v + (1.0 - beta2) * grad * grad;
        let m_hat = *m / (1.0 - beta1.powi(t as i32));
        let v_hat = *v / (1.0 - beta2.powi(t as i32));
        *param -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One optimizer step on the mean squared error over the selected outputs.
/// Returns the pre-step loss.
pub fn train_step(
    net: &mut Network,
    opt: &mut AdamState,
    inputs: &[&[f64]],
    actions: &[usize],
    targets: &[f64],
) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != actions.len() || inputs.len() != targets.len() {
        return Err(CoreError::config(format!(
            "batch arity mismatch: {} inputs, {} actions, {} targets",
            inputs.len(),
            actions.len(),
            targets.len()
        )));
    }
    if !opt.matches(net) {
        return Err(CoreError::config(
            "optimizer state does not match network shape",
        ));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(CoreError::NonFinite("training target".into()));
    }

    let batch = inputs.len() as f64;
    let last = net.weights.len() - 1;
    let n_hidden = net.layer_dims[last];
    let mut grads = Gradients::zeros(net);
    let mut loss = 0.0;

    for ((x, &action), &target) in inputs.iter().zip(actions).zip(targets) {
        if action >= net.output_dim() {
            return Err(CoreError::config(format!(
                "action index {action} out of range for {} outputs",
                net.output_dim()
            )));
        }
        let acts = net.forward_cached(x);
        let hidden = &acts[last];
        let wrow = &net.weights[last][action * n_hidden..(action + 1) * n_hidden];
        let mut q = net.biases[last][action];
        for (wi, hi) in wrow.iter().zip(hidden) {
            q += wi * hi;
        }
        let err = q - target;
        loss += err * err;

        // d(mean squared error)/dq for this sample
        let delta_out = 2.0 * err / batch;
        let entry = grads
            .head_rows
            .entry(action)
            .or_insert_with(|| (vec![0.0; n_hidden], 0.0));
        for (g, hi) in entry.0.iter_mut().zip(hidden) {
            *g += delta_out * hi;
        }
        entry.1 += delta_out;

        // backprop through the trunk
        let mut delta: Vec<f64> = wrow.iter().map(|wi| wi * delta_out).collect();
        for l in (0..last).rev() {
            let out_dim = net.layer_dims[l + 1];
            let in_dim = net.layer_dims[l];
            // ReLU gate on this layer's post-activation
            for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            let input = &acts[l];
            let gw = &mut grads.trunk_w[l];
            let gb = &mut grads.trunk_b[l];
            for row in 0..out_dim {
                let d = delta[row];
                if d != 0.0 {
                    let base = row * in_dim;
                    for (j, xi) in input.iter().enumerate() {
                        gw[base + j] += d * xi;
                    }
                    gb[row] += d;
                }
            }
            if l > 0 {
                let w = &net.weights[l];
                let mut prev = vec![0.0; in_dim];
                for (row, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let base = row * in_dim;
                        for (p, wi) in prev.iter_mut().zip(&w[base..base + in_dim]) {
                            *p += d * wi;
                        }
                    }
                }
                delta = prev;
            }
        }
    }
    loss /= batch;
    if !loss.is_finite() {
        return Err(CoreError::NonFinite(format!(
            "training loss became {loss}; aborting before the parameter update"
        )));
    }

    if let Some(clip) = opt.grad_clip {
        let norm = grads.global_norm();
        if norm > clip {
            grads.scale(clip / norm);
        }
    }

    opt.step += 1;
    let (lr, b1, b2, eps, t) = (
        opt.learning_rate,
        opt.beta1,
        opt.beta2,
        opt.epsilon,
        opt.step,
    );
    for l in 0..last {
        for (i, g) in grads.trunk_w[l].iter().enumerate() {
            AdamState::adam_update(
                lr,
                b1,
                b2,
                eps,
                t,
                &mut net.weights[l][i],
                &mut opt.m_w[l][i],
                &mut opt.v_w[l][i],
                *g,
            );
        }
        for (i, g) in grads.trunk_b[l].iter().enumerate() {
            AdamState::adam_update(
                lr,
                b1,
                b2,
                eps,
                t,
                &mut net.biases[l][i],
                &mut opt.m_b[l][i],
                &mut opt.v_b[l][i],
                *g,
            );
        }
    }
    for (&row, (gw, gb)) in &grads.head_rows {
        opt.head_steps[row] += 1;
        let rt = opt.head_steps[row];
        let base = row * n_hidden;
        for (j, g) in gw.iter().enumerate() {
            AdamState::adam_update(
                lr,
                b1,
                b2,
                eps,
                rt,
                &mut net.weights[last][base + j],
                &mut opt.m_w[last][base + j],
                &mut opt.v_w[last][base + j],
                *g,
            );
        }
        AdamState::adam_update(
            lr,
            b1,
            b2,
            eps,
            rt,
            &mut net.biases[last][row],
            &mut opt.m_b[last][row],
            &mut opt.v_b[last][row],
            *gb,
        );
    }
    Ok(loss)
}

/// Analytic parameter gradients of `0.5 * (Q(x, action) - target)^2`.
fn analytic_gradients(net: &Network, x: &[f64], action: usize, target: f64) -> Gradients {
    let last = net.weights.len() - 1;
    let n_hidden = net.layer_dims[last];
    let mut grads = Gradients::zeros(net);
    let acts = net.forward_cached(x);
    let hidden = &acts[last];
    let wrow = &net.weights[last][action * n_hidden..(action + 1) * n_hidden];
    let mut q = net.biases[last][action];
    for (wi, hi) in wrow.iter().zip(hidden) {
        q += wi * hi;
    }
    let delta_out = q - target;
    let entry = grads
        .head_rows
        .entry(action)
        .or_insert_with(|| (vec![0.0; n_hidden], 0.0));
    for (g, hi) in entry.0.iter_mut().zip(hidden) {
        *g += delta_out * hi;
    }
    entry.1 += delta_out;
    let mut delta: Vec<f64> = wrow.iter().map(|wi| wi * delta_out).collect();
    for l in (0..last).rev() {
        let out_dim = net.layer_dims[l + 1];
        let in_dim = net.layer_dims[l];
        for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
            if *a <= 0.0 {
                *d = 0.0;
            }
        }
        for row in 0..out_dim {
            let d = delta[row];
            let base = row * in_dim;
            for (j, xi) in acts[l].iter().enumerate() {
                grads.trunk_w[l][base + j] += d * xi;
            }
            grads.trunk_b[l][row] += d;
        }
        if l > 0 {
            let w = &net.weights[l];
            let mut prev = vec![0.0; in_dim];
            for (row, &d) in delta.iter().enumerate() {
                let base = row * in_dim;
                for (p, wi) in prev.iter_mut().zip(&w[base..base + in_dim]) {
                    *p += d * wi;
                }
            }
            delta = prev;
        }
    }
    grads
}

/// Central-difference validation of the backward pass.
///
/// Compares analytic gradients of `0.5 * (Q - target)^2` against central
/// differences with `h = 1e-4` and returns the maximum relative error over
/// all parameters.
pub fn finite_diff_check(net: &Network, x: &[f64], action: usize, target: f64) -> f64 {
    const H: f64 = 1e-4;
    let loss = |n: &Network| {
        let q = n.forward_one(x, action).unwrap();
        0.5 * (q - target) * (q - target)
    };
    let analytic = analytic_gradients(net, x, action, target);
    let last = net.weights.len() - 1;
    let n_hidden = net.layer_dims[last];
    let mut max_rel: f64 = 0.0;
    let mut check = |net: &Network, layer: usize, idx: usize, is_bias: bool, a: f64| {
        let mut plus = net.clone();
        let mut minus = net.clone();
        if is_bias {
            plus.biases[layer][idx] += H;
            minus.biases[layer][idx] -= H;
        } else {
            plus.weights[layer][idx] += H;
            minus.weights[layer][idx] -= H;
        }
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    };
    for l in 0..last {
        for (i, &a) in analytic.trunk_w[l].iter().enumerate() {
            check(net, l, i, false, a);
        }
        for (i, &a) in analytic.trunk_b[l].iter().enumerate() {
            check(net, l, i, true, a);
        }
    }
    // untouched head rows have exactly zero analytic gradient; verify the
    // selected row and one other
    let rows: Vec<usize> = if net.output_dim() > 1 {
        vec![action, (action + 1) % net.output_dim()]
    } else {
        vec![action]
    };
    for row in rows {
        let zero_row = (vec![0.0; n_hidden], 0.0);
        let (gw, gb) = analytic.head_rows.get(&row).unwrap_or(&zero_row);
        for (j, &a) in gw.iter().enumerate() {
            check(net, last, row * n_hidden + j, false, a);
        }
        check(net, last, row, true, *gb);
    }
    max_rel
}

/// Deep-copy `net` into `target`.
pub fn sync_target(net: &Network, target: &mut Network) -> Result<()> {
    if net.layer_dims != target.layer_dims {
        return Err(CoreError::config(format!(
            "target network shape {:?} does not match {:?}",
            target.layer_dims, net.layer_dims
        )));
    }
    target.weights.clone_from(&net.weights);
    target.biases.clone_from(&net.biases);
    Ok(())
}

/// Versioned little-endian checkpoint: magic, layer count, layer dims, then
/// per layer the weight matrix (row-major) followed by the bias vector.
pub fn serialize(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + net.param_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(net.layer_dims.len() as u32).to_le_bytes());
    for &d in &net.layer_dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for l in 0..net.weights.len() {
        for w in &net.weights[l] {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in &net.biases[l] {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::Checkpoint {
                offset: self.pos,
                message: format!("truncated payload while reading {what}"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        if &magic[..7] == &CHECKPOINT_MAGIC[..7] {
            return Err(CoreError::Checkpoint {
                offset: 7,
                message: format!(
                    "unsupported checkpoint version `{}`",
                    magic[7] as char
                ),
            });
        }
        return Err(CoreError::Checkpoint {
            offset: 0,
            message: "bad magic".into(),
        });
    }
    let n_layers = r.u32("layer count")? as usize;
    if !(2..=64).contains(&n_layers) {
        return Err(CoreError::Checkpoint {
            offset: 8,
            message: format!("implausible layer count {n_layers}"),
        });
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        dims.push(r.u32("layer dimension")? as usize);
    }
    let mut net = Network::zeros(&dims).map_err(|e| CoreError::Checkpoint {
        offset: r.pos,
        message: e.to_string(),
    })?;
    for l in 0..net.weights.len() {
        for i in 0..net.weights[l].len() {
            net.weights[l][i] = r.f64("weights")?;
        }
        for i in 0..net.biases[l].len() {
            net.biases[l][i] = r.f64("biases")?;
        }
    }
    if r.pos != bytes.len() {
        return Err(CoreError::Checkpoint {
            offset: r.pos,
            message: "trailing bytes after network payload".into(),
        });
    }
    Ok(net)
}
