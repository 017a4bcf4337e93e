//! Seeded multi-UAV simulation: planar mobility on a slow timescale,
//! Rician-faded channels resampled every fast step, UAV-to-UAV broadcast
//! reliability, UAV-to-ground throughput, energy bookkeeping, and the
//! execution-layer safety shield.
//!
//! Action layout per agent: one mobility primitive (applied only on slow
//! steps; masked to hover otherwise), a (power, subchannel) pair for the
//! broadcast link and a (power, subchannel) pair for the ground link. The
//! two links always occupy distinct subchannels by construction of the
//! encoding, so subchannel exclusivity cannot be violated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{ActionMask, EnvStep, Environment};
use crate::error::{CoreError, Result};
use crate::lagrangian::{ConstraintSet, ConstraintSpec, CostSample};
use crate::metrics::fmt_f64;

pub const MOBILITY_COUNT: usize = 5;

/// Mobility primitives with a fixed step length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mobility {
    Forward,
    Backward,
    Left,
    Right,
    Hover,
}

impl Mobility {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => Mobility::Forward,
            1 => Mobility::Backward,
            2 => Mobility::Left,
            3 => Mobility::Right,
            _ => Mobility::Hover,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Mobility::Forward => 0,
            Mobility::Backward => 1,
            Mobility::Left => 2,
            Mobility::Right => 3,
            Mobility::Hover => 4,
        }
    }

    /// Unit displacement in the horizontal plane.
    pub fn delta(self) -> (f64, f64) {
        match self {
            Mobility::Forward => (1.0, 0.0),
            Mobility::Backward => (-1.0, 0.0),
            Mobility::Left => (0.0, 1.0),
            Mobility::Right => (0.0, -1.0),
            Mobility::Hover => (0.0, 0.0),
        }
    }
}

/// Decoded joint action: mobility plus one (power index, subchannel) pair
/// per link. The two subchannels are always distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UavAction {
    pub mobility: Mobility,
    pub u2u_power: usize,
    pub u2u_channel: usize,
    pub u2r_power: usize,
    pub u2r_channel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavConfig {
    pub n_uav: usize,
    /// Orthogonal subchannels shared by both link types.
    pub subchannels: usize,
    pub bandwidth_hz: f64,
    pub noise_w: f64,
    /// Transmit power levels in dBm, strictly increasing.
    pub power_levels_dbm: Vec<f64>,
    /// Minimum pairwise separation in meters.
    pub d_min_m: f64,
    pub initial_energy_j: f64,
    pub min_energy_j: f64,
    /// Fixed per-step overhead energy in joules.
    pub overhead_energy_j: f64,
    /// Fast-timescale step duration in seconds.
    pub fast_step_s: f64,
    /// Fast steps per mobility step.
    pub slow_interval: usize,
    /// Broadcast message size in bits that must be delivered per fast step.
    pub daa_message_bits: f64,
    /// Required fraction of agents with a decodable broadcast.
    pub min_reliability: f64,
    pub arena_m: (f64, f64),
    pub altitude_m: f64,
    pub rician_k_db: f64,
    pub pathloss_exponent: f64,
    /// Reference path loss at 1 m, in dB (negative).
    pub ref_loss_db: f64,
    /// Nearest peers visible in the observation; 0 means all.
    pub knn_k: usize,
    /// Mobility step length in meters.
    pub step_size_m: f64,
    pub shield_enabled: bool,
    /// Reward = own ground-link rate (bit/s) times this factor.
    pub reward_scale: f64,
    /// Discounted energy-spend budget; `None` disables the constraint.
    pub energy_budget_j: Option<f64>,
}

impl Default for UavConfig {
    fn default() -> Self {
        UavConfig {
            n_uav: 5,
            subchannels: 5,
            bandwidth_hz: 1e6,
            noise_w: dbm_to_watts(-104.0),
            power_levels_dbm: vec![5.0, 10.0, 15.0, 23.0],
            d_min_m: 30.0,
            initial_energy_j: 0.15,
            min_energy_j: 0.015,
            overhead_energy_j: 5e-4,
            fast_step_s: 1e-3,
            slow_interval: 20,
            daa_message_bits: 6000.0,
            min_reliability: 1.0,
            arena_m: (200.0, 200.0),
            altitude_m: 50.0,
            rician_k_db: 10.0,
            pathloss_exponent: 2.2,
            ref_loss_db: -40.0,
            knn_k: 0,
            step_size_m: 1.0,
            shield_enabled: true,
            reward_scale: 1e-7,
            energy_budget_j: Some(0.014),
        }
    }
}

impl UavConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_uav < 2 {
            return Err(CoreError::config("need at least 2 UAVs"));
        }
        if self.subchannels < 2 {
            return Err(CoreError::config(
                "need at least 2 subchannels so the two links can stay orthogonal",
            ));
        }
        if self.power_levels_dbm.is_empty()
            || self.power_levels_dbm.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(CoreError::config(
                "power levels must be non-empty and strictly increasing",
            ));
        }
        if self.d_min_m <= 0.0 || self.step_size_m <= 0.0 {
            return Err(CoreError::config("distances must be positive"));
        }
        if self.min_energy_j >= self.initial_energy_j {
            return Err(CoreError::config(
                "energy floor must lie below the initial energy",
            ));
        }
        if self.slow_interval == 0 {
            return Err(CoreError::config("slow interval must be >= 1"));
        }
        if self.arena_m.0 <= 0.0 || self.arena_m.1 <= 0.0 {
            return Err(CoreError::config("arena must have positive extent"));
        }
        Ok(())
    }

    pub fn power_count(&self) -> usize {
        self.power_levels_dbm.len()
    }

    /// Flat action-space size: mobility x (power, channel) x (power, other channel).
    pub fn action_count(&self) -> usize {
        let zp = self.power_count();
        let b = self.subchannels;
        MOBILITY_COUNT * zp * b * zp * (b - 1)
    }

    pub fn encode(&self, a: &UavAction) -> usize {
        let zp = self.power_count();
        let b = self.subchannels;
        debug_assert_ne!(a.u2u_channel, a.u2r_channel);
        let rel = if a.u2r_channel < a.u2u_channel {
            a.u2r_channel
        } else {
            a.u2r_channel - 1
        };
        ((((a.mobility.index() * zp + a.u2u_power) * b + a.u2u_channel) * zp + a.u2r_power)
            * (b - 1))
            + rel
    }

    pub fn decode(&self, index: usize) -> UavAction {
        let zp = self.power_count();
        let b = self.subchannels;
        debug_assert!(index < self.action_count());
        let rel = index % (b - 1);
        let rest = index / (b - 1);
        let u2r_power = rest % zp;
        let rest = rest / zp;
        let u2u_channel = rest % b;
        let rest = rest / b;
        let u2u_power = rest % zp;
        let mobility = Mobility::from_index(rest / zp);
        let u2r_channel = if rel < u2u_channel { rel } else { rel + 1 };
        UavAction {
            mobility,
            u2u_power,
            u2u_channel,
            u2r_power,
            u2r_channel,
        }
    }

    fn knn(&self) -> usize {
        if self.knn_k == 0 {
            self.n_uav - 1
        } else {
            self.knn_k.min(self.n_uav - 1)
        }
    }

    /// Worst-case one-step energy spend, used by the shield's energy guard.
    fn max_step_spend(&self) -> f64 {
        let p_max = dbm_to_watts(*self.power_levels_dbm.last().unwrap());
        self.overhead_energy_j + 2.0 * p_max * self.fast_step_s
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// `|h|^2 P / (sigma^2 + I)`.
pub fn sinr(link_gain: f64, tx_power_w: f64, interference_w: f64, noise_w: f64) -> f64 {
    link_gain * tx_power_w / (noise_w + interference_w)
}

/// Shannon rate in bit/s.
pub fn rate_bps(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Deterministic path-gain component `nu^2` with the distance floored at 1 m.
pub fn path_gain(ref_loss_db: f64, exponent: f64, distance_m: f64) -> f64 {
    let d = distance_m.max(1.0);
    10f64.powf(ref_loss_db / 10.0) * d.powf(-exponent)
}

/// Squared magnitude of a unit-mean Rician fading coefficient.
/// `k_linear = infinity` degenerates to the pure line-of-sight value 1.
pub fn sample_fading_power(k_linear: f64, rng: &mut impl Rng) -> f64 {
    if k_linear.is_infinite() {
        return 1.0;
    }
    let los = (k_linear / (k_linear + 1.0)).sqrt();
    let scatter = (1.0 / (k_linear + 1.0)).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let f_re = los + scatter * re / 2f64.sqrt();
    let f_im = scatter * im / 2f64.sqrt();
    f_re * f_re + f_im * f_im
}

/// Channel power gain `nu^2 |f|^2` for one subchannel of one link.
pub fn sample_channel_gain(
    tx: [f64; 3],
    rx: [f64; 3],
    ref_loss_db: f64,
    exponent: f64,
    k_linear: f64,
    rng: &mut impl Rng,
) -> f64 {
    let d = dist3(tx, rx);
    path_gain(ref_loss_db, exponent, d) * sample_fading_power(k_linear, rng)
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub struct UavEnv {
    cfg: UavConfig,
    constraints: ConstraintSet,
    rng: ChaCha8Rng,
    positions: Vec<[f64; 3]>,
    energies: Vec<f64>,
    /// `|h|^2` per (tx, rx, subchannel); tx == rx entries unused.
    gains_u2u: Vec<f64>,
    /// `|h|^2` per (tx, subchannel) toward the ground station.
    gains_u2r: Vec<f64>,
    /// Distances shown in observations, refreshed only on slow steps.
    frozen_dists: Vec<Vec<f64>>,
    gnb: [f64; 3],
    fast_t: usize,
    terminal: bool,
    forced_fallback_events: usize,
    distance_floor_events: usize,
    clamp_events: usize,
    last_rows: Vec<String>,
}

impl UavEnv {
    pub fn new(cfg: UavConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut decls = vec![
            ConstraintSpec::inequality("collision", "pairwise separation below the minimum"),
            ConstraintSpec::inequality("reliability", "broadcast reliability below threshold"),
            ConstraintSpec::inequality("energy_floor", "residual energy below the floor"),
        ];
        if let Some(budget) = cfg.energy_budget_j {
            decls.push(ConstraintSpec::cumulative(
                "energy_budget",
                budget,
                "discounted energy spend budget",
            ));
        }
        let constraints = ConstraintSet::new(decls)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let n = cfg.n_uav;
        let gnb = [cfg.arena_m.0 / 2.0, cfg.arena_m.1 / 2.0, 0.0];
        Ok(UavEnv {
            constraints,
            rng,
            positions: vec![[0.0; 3]; n],
            energies: vec![cfg.initial_energy_j; n],
            gains_u2u: vec![0.0; n * n * cfg.subchannels],
            gains_u2r: vec![0.0; n * cfg.subchannels],
            frozen_dists: vec![Vec::new(); n],
            gnb,
            fast_t: 0,
            terminal: false,
            forced_fallback_events: 0,
            distance_floor_events: 0,
            clamp_events: 0,
            last_rows: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &UavConfig {
        &self.cfg
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.cfg.n_uav {
            for j in i + 1..self.cfg.n_uav {
                min = min.min(dist3(self.positions[i], self.positions[j]));
            }
        }
        min
    }

    pub fn forced_fallback_events(&self) -> usize {
        self.forced_fallback_events
    }

    pub fn distance_floor_events(&self) -> usize {
        self.distance_floor_events
    }

    /// The step about to be executed applies mobility.
    fn next_step_is_slow(&self) -> bool {
        self.fast_t % self.cfg.slow_interval == 0
    }

    fn k_linear(&self) -> f64 {
        if self.cfg.rician_k_db.is_infinite() {
            f64::INFINITY
        } else {
            10f64.powf(self.cfg.rician_k_db / 10.0)
        }
    }

    fn resample_channels(&mut self) {
        let n = self.cfg.n_uav;
        let b = self.cfg.subchannels;
        let k = self.k_linear();
        for tx in 0..n {
            for rx in 0..n {
                if tx == rx {
                    continue;
                }
                let mut d = dist3(self.positions[tx], self.positions[rx]);
                if d < 1.0 {
                    self.distance_floor_events += 1;
                    d = 1.0;
                }
                let nu2 = path_gain(self.cfg.ref_loss_db, self.cfg.pathloss_exponent, d);
                for ch in 0..b {
                    self.gains_u2u[(tx * n + rx) * b + ch] =
                        nu2 * sample_fading_power(k, &mut self.rng);
                }
            }
            let d = dist3(self.positions[tx], self.gnb).max(1.0);
            let nu2 = path_gain(self.cfg.ref_loss_db, self.cfg.pathloss_exponent, d);
            for ch in 0..b {
                self.gains_u2r[tx * b + ch] = nu2 * sample_fading_power(k, &mut self.rng);
            }
        }
    }

    fn refresh_frozen_distances(&mut self) {
        let n = self.cfg.n_uav;
        let k = self.cfg.knn();
        for i in 0..n {
            let mut dists: Vec<f64> = (0..n)
                .filter(|j| *j != i)
                .map(|j| dist3(self.positions[i], self.positions[j]))
                .collect();
            dists.sort_by(f64::total_cmp);
            dists.truncate(k);
            self.frozen_dists[i] = dists;
        }
    }

    fn observation(&self, agent: usize) -> Vec<f64> {
        let cfg = &self.cfg;
        let n = cfg.n_uav;
        let b = cfg.subchannels;
        let scaled_db = |gain: f64| (10.0 * (gain + 1e-30).log10() + 100.0) / 50.0;
        let mut obs = Vec::with_capacity(self.obs_dim());
        for ch in 0..b {
            obs.push(scaled_db(self.gains_u2r[agent * b + ch]));
        }
        for peer in 0..n {
            if peer == agent {
                continue;
            }
            let best = (0..b)
                .map(|ch| self.gains_u2u[(peer * n + agent) * b + ch])
                .fold(0.0, f64::max);
            obs.push(scaled_db(best));
        }
        obs.push(self.energies[agent] / cfg.initial_energy_j);
        obs.push(self.positions[agent][0] / cfg.arena_m.0);
        obs.push(self.positions[agent][1] / cfg.arena_m.1);
        let diag = (cfg.arena_m.0 * cfg.arena_m.0 + cfg.arena_m.1 * cfg.arena_m.1).sqrt();
        for d in &self.frozen_dists[agent] {
            obs.push(d / diag);
        }
        obs
    }

    fn inside_arena(&self, x: f64, y: f64) -> bool {
        (0.0..=self.cfg.arena_m.0).contains(&x) && (0.0..=self.cfg.arena_m.1).contains(&y)
    }

    fn predicted_position(&self, agent: usize, mobility: Mobility) -> [f64; 3] {
        let (dx, dy) = mobility.delta();
        let p = self.positions[agent];
        [
            p[0] + dx * self.cfg.step_size_m,
            p[1] + dy * self.cfg.step_size_m,
            p[2],
        ]
    }

    fn min_dist_to_others(&self, agent: usize, from: [f64; 3]) -> f64 {
        let mut min = f64::INFINITY;
        for j in 0..self.cfg.n_uav {
            if j != agent {
                min = min.min(dist3(from, self.positions[j]));
            }
        }
        min
    }

    /// Mobility primitives admissible at the current state against current
    /// peer positions (exact minimum-distance and geofence pre-checks).
    fn mobility_ok(&self, agent: usize) -> [bool; MOBILITY_COUNT] {
        let slow = self.next_step_is_slow();
        let mut ok = [false; MOBILITY_COUNT];
        for (m, entry) in ok.iter_mut().enumerate() {
            let mobility = Mobility::from_index(m);
            if !slow && mobility != Mobility::Hover {
                continue;
            }
            let p = self.predicted_position(agent, mobility);
            if !self.inside_arena(p[0], p[1]) {
                continue;
            }
            if self.min_dist_to_others(agent, p) < self.cfg.d_min_m {
                continue;
            }
            *entry = true;
        }
        ok
    }

    /// Execution-layer shield: predicted separation (with a one-step margin
    /// for simultaneous peer motion), geofence, and energy guard. Returns the
    /// executed action and whether it replaced the intended one.
    fn shield(&self, agent: usize, intended: UavAction) -> (UavAction, bool) {
        if !self.cfg.shield_enabled {
            return (intended, false);
        }
        let mut overridden = false;
        let mut action = intended;
        if self.next_step_is_slow() && action.mobility != Mobility::Hover {
            let p = self.predicted_position(agent, action.mobility);
            let guard = self.cfg.step_size_m;
            if !self.inside_arena(p[0], p[1])
                || self.min_dist_to_others(agent, p) < self.cfg.d_min_m + guard
            {
                overridden = true;
            }
        }
        let low_energy =
            self.energies[agent] <= self.cfg.min_energy_j + self.cfg.max_step_spend();
        if low_energy {
            overridden = true;
        }
        if overridden {
            action.mobility = Mobility::Hover;
            action.u2u_power = 0;
            action.u2r_power = 0;
        }
        (action, overridden)
    }
}

impl Environment for UavEnv {
    fn num_agents(&self) -> usize {
        self.cfg.n_uav
    }

    fn action_count(&self) -> usize {
        self.cfg.action_count()
    }

    fn obs_dim(&self) -> usize {
        self.cfg.subchannels + (self.cfg.n_uav - 1) + 3 + self.cfg.knn()
    }

    fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    fn reset(&mut self) -> Result<Vec<Vec<f64>>> {
        let cfg = self.cfg.clone();
        let n = cfg.n_uav;
        let spacing = 2.0 * cfg.d_min_m;
        let mut placed: Vec<[f64; 3]> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut tries = 0;
            loop {
                tries += 1;
                if tries > 1000 {
                    return Err(CoreError::env(format!(
                        "arena {}x{} m too small to place {} UAVs {} m apart",
                        cfg.arena_m.0, cfg.arena_m.1, n, spacing
                    )));
                }
                let x = self.rng.gen_range(0.0..=cfg.arena_m.0);
                let y = self.rng.gen_range(0.0..=cfg.arena_m.1);
                let candidate = [x, y, cfg.altitude_m];
                if placed.iter().all(|p| dist3(*p, candidate) >= spacing) {
                    placed.push(candidate);
                    break;
                }
            }
        }
        self.positions = placed;
        self.energies = vec![cfg.initial_energy_j; n];
        self.fast_t = 0;
        self.terminal = false;
        self.last_rows.clear();
        self.refresh_frozen_distances();
        self.resample_channels();
        Ok((0..n).map(|i| self.observation(i)).collect())
    }

    fn safe_mask(&mut self, agent: usize) -> ActionMask {
        let ok = self.mobility_ok(agent);
        if ok.iter().all(|v| !v) {
            // nothing admissible: force-enable the fallback and log the event
            self.forced_fallback_events += 1;
            let mut mask = vec![false; self.action_count()];
            mask[self.fallback_action(agent)] = true;
            return ActionMask::Partial(mask);
        }
        if ok.iter().all(|v| *v) {
            return ActionMask::AllValid(self.action_count());
        }
        let per_mobility = self.action_count() / MOBILITY_COUNT;
        let mut mask = Vec::with_capacity(self.action_count());
        for allowed in ok {
            mask.extend(std::iter::repeat(allowed).take(per_mobility));
        }
        ActionMask::Partial(mask)
    }

    fn fallback_action(&self, _agent: usize) -> usize {
        // hover, lowest power on both links, channels 0 and 1
        self.cfg.encode(&UavAction {
            mobility: Mobility::Hover,
            u2u_power: 0,
            u2u_channel: 0,
            u2r_power: 0,
            u2r_channel: 1,
        })
    }

    fn step(&mut self, intended: &[usize]) -> Result<Vec<EnvStep>> {
        let cfg = self.cfg.clone();
        let n = cfg.n_uav;
        let b = cfg.subchannels;
        if intended.len() != n {
            return Err(CoreError::config("one action per agent required"));
        }
        if self.terminal {
            return Err(CoreError::env("episode already terminal; reset first"));
        }
        let slow = self.next_step_is_slow();

        let mut executed = Vec::with_capacity(n);
        let mut overridden = vec![false; n];
        for (i, &a) in intended.iter().enumerate() {
            if a >= cfg.action_count() {
                return Err(CoreError::config(format!(
                    "action index {a} out of range for agent {i}"
                )));
            }
            let (action, over) = self.shield(i, cfg.decode(a));
            executed.push(action);
            overridden[i] = over;
        }

        // simultaneous position update on slow steps
        if slow {
            for (i, action) in executed.iter().enumerate() {
                let p = self.predicted_position(i, action.mobility);
                let x = p[0].clamp(0.0, cfg.arena_m.0);
                let y = p[1].clamp(0.0, cfg.arena_m.1);
                if x != p[0] || y != p[1] {
                    self.clamp_events += 1;
                }
                self.positions[i] = [x, y, p[2]];
            }
            self.refresh_frozen_distances();
        }

        // block fading: one fresh draw per link per fast step
        self.resample_channels();

        let powers_w: Vec<f64> = cfg
            .power_levels_dbm
            .iter()
            .map(|d| dbm_to_watts(*d))
            .collect();
        let tx_u2u: Vec<(usize, f64)> = executed
            .iter()
            .map(|a| (a.u2u_channel, powers_w[a.u2u_power]))
            .collect();
        let tx_u2r: Vec<(usize, f64)> = executed
            .iter()
            .map(|a| (a.u2r_channel, powers_w[a.u2r_power]))
            .collect();

        // broadcast decodability at the worst peer receiver
        let mut delivered_min = vec![f64::INFINITY; n];
        for i in 0..n {
            let (ch, p) = tx_u2u[i];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let mut interference = 0.0;
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    if tx_u2u[k].0 == ch {
                        interference += tx_u2u[k].1 * self.gains_u2u[(k * n + j) * b + ch];
                    }
                    if tx_u2r[k].0 == ch {
                        interference += tx_u2r[k].1 * self.gains_u2u[(k * n + j) * b + ch];
                    }
                }
                let gain = self.gains_u2u[(i * n + j) * b + ch];
                let s = sinr(gain, p, interference, cfg.noise_w);
                let bits = rate_bps(s, cfg.bandwidth_hz) * cfg.fast_step_s;
                delivered_min[i] = delivered_min[i].min(bits);
            }
        }
        let success: Vec<bool> = delivered_min
            .iter()
            .map(|bits| *bits >= cfg.daa_message_bits)
            .collect();
        let reliability = success.iter().filter(|s| **s).count() as f64 / n as f64;

        // ground-link rates at the base station
        let mut u2r_rate = vec![0.0; n];
        for i in 0..n {
            let (ch, p) = tx_u2r[i];
            let mut interference = 0.0;
            for k in 0..n {
                if k == i {
                    continue;
                }
                if tx_u2u[k].0 == ch {
                    interference += tx_u2u[k].1 * self.gains_u2r[k * b + ch];
                }
                if tx_u2r[k].0 == ch {
                    interference += tx_u2r[k].1 * self.gains_u2r[k * b + ch];
                }
            }
            let s = sinr(self.gains_u2r[i * b + ch], p, interference, cfg.noise_w);
            u2r_rate[i] = rate_bps(s, cfg.bandwidth_hz);
        }

        // exact energy bookkeeping
        let mut spend = vec![0.0; n];
        let mut any_depleted = false;
        for i in 0..n {
            let (_, pu) = tx_u2u[i];
            let (_, pr) = tx_u2r[i];
            spend[i] = cfg.overhead_energy_j + (pu + pr) * cfg.fast_step_s;
            self.energies[i] -= spend[i];
            if self.energies[i] <= 0.0 {
                any_depleted = true;
            }
        }
        self.terminal = any_depleted;

        self.fast_t += 1;
        let mut results = Vec::with_capacity(n);
        self.last_rows.clear();
        for i in 0..n {
            let min_dist = self.min_dist_to_others(i, self.positions[i]);
            let g_collision = cfg.d_min_m - min_dist;
            let g_reliability = cfg.min_reliability - reliability;
            let g_energy = cfg.min_energy_j - self.energies[i];
            let mut costs = CostSample::default()
                .with_g("collision", g_collision)
                .with_g("reliability", g_reliability)
                .with_g("energy_floor", g_energy);
            if cfg.energy_budget_j.is_some() {
                costs = costs.with_c("energy_budget", spend[i]);
            }
            let violation = g_collision > 1e-9 || g_reliability > 1e-9 || g_energy > 1e-9;
            self.last_rows.push(format!(
                "{},{},{},{},{},{},{},{},{}",
                self.fast_t - 1,
                i,
                fmt_f64(self.positions[i][0]),
                fmt_f64(self.positions[i][1]),
                fmt_f64(self.energies[i]),
                fmt_f64(min_dist),
                success[i] as u8,
                fmt_f64(u2r_rate[i]),
                overridden[i] as u8
            ));
            results.push(EnvStep {
                obs: self.observation(i),
                reward: u2r_rate[i] * cfg.reward_scale,
                costs,
                executed_action: cfg.encode(&executed[i]),
                overridden: overridden[i],
                violation,
                feasible: !violation,
                terminal: self.terminal,
            });
        }
        Ok(results)
    }

    fn trajectory_header(&self) -> Option<String> {
        Some("step,agent,x,y,energy,min_dist,u2u_ok,u2r_rate,overridden".into())
    }

    fn trajectory_rows(&self) -> Option<Vec<String>> {
        Some(self.last_rows.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> UavConfig {
        UavConfig {
            n_uav: 3,
            subchannels: 3,
            power_levels_dbm: vec![5.0, 23.0],
            arena_m: (120.0, 120.0),
            d_min_m: 20.0,
            slow_interval: 2,
            ..UavConfig::default()
        }
    }

    fn hover_action(cfg: &UavConfig) -> usize {
        cfg.encode(&UavAction {
            mobility: Mobility::Hover,
            u2u_power: 0,
            u2u_channel: 0,
            u2r_power: 0,
            u2r_channel: 1,
        })
    }

    #[test]
    fn action_round_trip_is_identity() {
        let cfg = small_cfg();
        for index in 0..cfg.action_count() {
            let action = cfg.decode(index);
            assert_ne!(action.u2u_channel, action.u2r_channel);
            assert_eq!(cfg.encode(&action), index);
        }
    }

    #[test]
    fn reset_enforces_initial_spacing() {
        let cfg = small_cfg();
        for seed in 0..10 {
            let mut env = UavEnv::new(cfg.clone(), seed).unwrap();
            env.reset().unwrap();
            assert!(env.min_pairwise_distance() >= 2.0 * cfg.d_min_m - 1e-12);
        }
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let cfg = small_cfg();
        let mut a = UavEnv::new(cfg.clone(), 7).unwrap();
        let mut b = UavEnv::new(cfg, 7).unwrap();
        assert_eq!(a.reset().unwrap(), b.reset().unwrap());
        assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn tiny_arena_is_an_explicit_error() {
        let cfg = UavConfig {
            n_uav: 5,
            arena_m: (10.0, 10.0),
            d_min_m: 30.0,
            ..small_cfg()
        };
        let mut env = UavEnv::new(cfg, 0).unwrap();
        assert!(matches!(env.reset(), Err(CoreError::Env(_))));
    }

    #[test]
    fn pure_los_fading_is_unit() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_fading_power(f64::INFINITY, &mut rng), 1.0);
        }
    }

    #[test]
    fn rician_power_is_unit_mean() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = 10f64;
        let draws = 100_000;
        let mean: f64 = (0..draws)
            .map(|_| sample_fading_power(k, &mut rng))
            .sum::<f64>()
            / draws as f64;
        assert!((0.98..=1.02).contains(&mean), "mean |f|^2 = {mean}");
    }

    #[test]
    fn path_gain_follows_power_law() {
        let near = path_gain(-40.0, 2.0, 10.0);
        let far = path_gain(-40.0, 2.0, 20.0);
        assert!((near / far - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sinr_hand_values() {
        assert_eq!(sinr(1.0, 1.0, 0.0, 1.0), 1.0);
        assert_eq!(sinr(1.0, 0.0, 0.5, 1.0), 0.0);
        // |h|^2 P = sigma^2 and I = sigma^2 -> 0.5
        assert_eq!(sinr(2.0, 0.5, 1.0, 1.0), 0.5);
    }

    #[test]
    fn rate_hand_values() {
        assert_eq!(rate_bps(1.0, 1.0), 1.0);
        assert_eq!(rate_bps(0.0, 5e6), 0.0);
        assert_eq!(rate_bps(3.0, 1e6), 2e6);
    }

    #[test]
    fn hover_keeps_positions_and_forward_moves_one_meter() {
        let cfg = UavConfig {
            shield_enabled: false,
            ..small_cfg()
        };
        let mut env = UavEnv::new(cfg.clone(), 3).unwrap();
        env.reset().unwrap();
        let before = env.positions().to_vec();
        env.step(&vec![hover_action(&cfg); cfg.n_uav]).unwrap();
        assert_eq!(env.positions(), before.as_slice());

        let mut env = UavEnv::new(cfg.clone(), 3).unwrap();
        env.reset().unwrap();
        let before = env.positions().to_vec();
        let mut actions = vec![hover_action(&cfg); cfg.n_uav];
        actions[0] = cfg.encode(&UavAction {
            mobility: Mobility::Forward,
            u2u_power: 0,
            u2u_channel: 0,
            u2r_power: 0,
            u2r_channel: 1,
        });
        env.step(&actions).unwrap();
        let moved = env.positions()[0];
        assert!((moved[0] - (before[0][0] + 1.0)).abs() < 1e-12 || moved[0] == cfg.arena_m.0);
        assert_eq!(moved[1], before[0][1]);
    }

    #[test]
    fn energy_identity_is_exact() {
        let cfg = small_cfg();
        let mut env = UavEnv::new(cfg.clone(), 5).unwrap();
        env.reset().unwrap();
        let p = |idx: usize| dbm_to_watts(cfg.power_levels_dbm[idx]);
        let action = UavAction {
            mobility: Mobility::Hover,
            u2u_power: 1,
            u2u_channel: 0,
            u2r_power: 1,
            u2r_channel: 2,
        };
        let encoded = cfg.encode(&action);
        let e_before = env.energies().to_vec();
        let steps = env.step(&vec![encoded; cfg.n_uav]).unwrap();
        for i in 0..cfg.n_uav {
            let executed = cfg.decode(steps[i].executed_action);
            let spend = cfg.overhead_energy_j
                + (p(executed.u2u_power) + p(executed.u2r_power)) * cfg.fast_step_s;
            assert!(
                (env.energies()[i] - (e_before[i] - spend)).abs() < 1e-15,
                "energy identity violated for agent {i}"
            );
        }
    }

    #[test]
    fn mask_blocks_moves_toward_close_neighbor() {
        let cfg = UavConfig {
            n_uav: 2,
            d_min_m: 30.0,
            arena_m: (200.0, 200.0),
            slow_interval: 1,
            ..small_cfg()
        };
        let mut env = UavEnv::new(cfg.clone(), 0).unwrap();
        env.reset().unwrap();
        // neighbor at d_min + 0.5 in +x: the forward step would land below d_min
        env.positions[0] = [50.0, 100.0, cfg.altitude_m];
        env.positions[1] = [50.0 + cfg.d_min_m + 0.5, 100.0, cfg.altitude_m];
        let mask = env.safe_mask(0);
        let forward = cfg.encode(&UavAction {
            mobility: Mobility::Forward,
            u2u_power: 0,
            u2u_channel: 0,
            u2r_power: 0,
            u2r_channel: 1,
        });
        assert!(
            !mask.allows(forward),
            "move toward the neighbor must be masked"
        );
        assert!(mask.allows(hover_action(&cfg)));
    }

    #[test]
    fn mask_blocks_outward_moves_at_arena_edge() {
        let cfg = UavConfig {
            n_uav: 2,
            slow_interval: 1,
            ..small_cfg()
        };
        let mut env = UavEnv::new(cfg.clone(), 0).unwrap();
        env.reset().unwrap();
        env.positions[0] = [0.0, 60.0, cfg.altitude_m];
        env.positions[1] = [100.0, 60.0, cfg.altitude_m];
        let mask = env.safe_mask(0);
        let backward = cfg.encode(&UavAction {
            mobility: Mobility::Backward,
            u2u_power: 0,
            u2u_channel: 0,
            u2r_power: 0,
            u2r_channel: 1,
        });
        assert!(!mask.allows(backward), "leaving the arena must be masked");
    }

    #[test]
    fn shield_overrides_near_boundary_and_passes_through_when_clear() {
        let cfg = UavConfig {
            n_uav: 2,
            d_min_m: 30.0,
            slow_interval: 1,
            arena_m: (300.0, 300.0),
            ..small_cfg()
        };
        let mut env = UavEnv::new(cfg.clone(), 0).unwrap();
        env.reset().unwrap();
        env.positions[0] = [100.0, 150.0, cfg.altitude_m];
        env.positions[1] = [100.0 + cfg.d_min_m, 150.0, cfg.altitude_m];
        let toward = UavAction {
            mobility: Mobility::Forward,
            u2u_power: 1,
            u2u_channel: 0,
            u2r_power: 1,
            u2r_channel: 1,
        };
        let (executed, overridden) = env.shield(0, toward);
        assert!(overridden);
        assert_eq!(executed.mobility, Mobility::Hover);
        assert_eq!(executed.u2u_power, 0);
        assert_eq!(executed.u2r_power, 0);

        // far apart: passes through untouched
        env.positions[1] = [250.0, 150.0, cfg.altitude_m];
        let (executed, overridden) = env.shield(0, toward);
        assert!(!overridden);
        assert_eq!(executed, toward);
    }

    #[test]
    fn shield_curtails_power_when_energy_is_low() {
        let cfg = small_cfg();
        let mut env = UavEnv::new(cfg.clone(), 0).unwrap();
        env.reset().unwrap();
        env.energies[0] = cfg.min_energy_j + 1e-6;
        let intended = UavAction {
            mobility: Mobility::Hover,
            u2u_power: 1,
            u2u_channel: 0,
            u2r_power: 1,
            u2r_channel: 1,
        };
        let (executed, overridden) = env.shield(0, intended);
        assert!(overridden);
        assert_eq!(executed.u2u_power, 0);
        assert_eq!(executed.u2r_power, 0);
    }

    #[test]
    fn observation_layout_is_stable_and_distances_freeze() {
        let cfg = UavConfig {
            slow_interval: 4,
            shield_enabled: false,
            ..small_cfg()
        };
        let mut env = UavEnv::new(cfg.clone(), 9).unwrap();
        let obs0 = env.reset().unwrap();
        assert_eq!(obs0[0].len(), env.obs_dim());
        // knn 0 -> all peers visible
        assert_eq!(
            env.obs_dim(),
            cfg.subchannels + (cfg.n_uav - 1) + 3 + (cfg.n_uav - 1)
        );
        let forward = cfg.encode(&UavAction {
            mobility: Mobility::Forward,
            u2u_power: 0,
            u2u_channel: 0,
            u2r_power: 0,
            u2r_channel: 1,
        });
        // step 0 is slow (positions move); steps 1..3 are fast-only
        let d_start = cfg.subchannels + (cfg.n_uav - 1) + 3;
        let s1 = env.step(&vec![forward; cfg.n_uav]).unwrap();
        let frozen: Vec<f64> = s1[0].obs[d_start..].to_vec();
        for _ in 0..3 {
            let s = env
                .step(&vec![hover_action(&cfg); cfg.n_uav])
                .unwrap();
            assert_eq!(s[0].obs.len(), env.obs_dim());
            assert_eq!(&s[0].obs[d_start..], frozen.as_slice());
        }
    }

    #[test]
    fn clean_channel_reliability_matches_manual_recomputation() {
        // disjoint channels and pure line of sight: delivered bits depend
        // only on the deterministic path gain
        let cfg = UavConfig {
            n_uav: 2,
            subchannels: 4,
            shield_enabled: false,
            rician_k_db: f64::INFINITY,
            ..small_cfg()
        };
        let mut env = UavEnv::new(cfg.clone(), 11).unwrap();
        env.reset().unwrap();
        let a0 = cfg.encode(&UavAction {
            mobility: Mobility::Hover,
            u2u_power: 1,
            u2u_channel: 0,
            u2r_power: 1,
            u2r_channel: 1,
        });
        let a1 = cfg.encode(&UavAction {
            mobility: Mobility::Hover,
            u2u_power: 1,
            u2u_channel: 2,
            u2r_power: 1,
            u2r_channel: 3,
        });
        let steps = env.step(&[a0, a1]).unwrap();
        let d = dist3(env.positions[0], env.positions[1]);
        let gain = path_gain(cfg.ref_loss_db, cfg.pathloss_exponent, d);
        let p = dbm_to_watts(cfg.power_levels_dbm[1]);
        let bits =
            rate_bps(sinr(gain, p, 0.0, cfg.noise_w), cfg.bandwidth_hz) * cfg.fast_step_s;
        let expected_reliability = if bits >= cfg.daa_message_bits { 1.0 } else { 0.0 };
        let g = steps[0].costs.g["reliability"];
        assert!((g - (cfg.min_reliability - expected_reliability)).abs() < 1e-12);
    }

    #[test]
    fn cochannel_transmitters_interfere_mutually() {
        let cfg = UavConfig {
            n_uav: 3,
            subchannels: 3,
            shield_enabled: false,
            rician_k_db: f64::INFINITY,
            ..small_cfg()
        };
        let mut env = UavEnv::new(cfg.clone(), 13).unwrap();
        env.reset().unwrap();
        let positions = env.positions().to_vec();
        let p = dbm_to_watts(cfg.power_levels_dbm[1]);
        let g01 = path_gain(
            cfg.ref_loss_db,
            cfg.pathloss_exponent,
            dist3(positions[0], positions[1]),
        );
        let g21 = path_gain(
            cfg.ref_loss_db,
            cfg.pathloss_exponent,
            dist3(positions[2], positions[1]),
        );
        // receiver 1 hears transmitter 0 with interference from transmitter 2
        let with_interference = sinr(g01, p, p * g21, cfg.noise_w);
        let clean = sinr(g01, p, 0.0, cfg.noise_w);
        assert!(with_interference < clean);
        assert!(with_interference > 0.0);
    }

    #[test]
    fn boundary_separation_is_feasible() {
        let cfg = UavConfig {
            n_uav: 2,
            d_min_m: 30.0,
            shield_enabled: false,
            slow_interval: 1,
            ..small_cfg()
        };
        let mut env = UavEnv::new(cfg.clone(), 0).unwrap();
        env.reset().unwrap();
        env.positions[0] = [50.0, 50.0, cfg.altitude_m];
        env.positions[1] = [80.0, 50.0, cfg.altitude_m];
        let steps = env
            .step(&[hover_action(&cfg), hover_action(&cfg)])
            .unwrap();
        assert!((steps[0].costs.g["collision"] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn shielded_rollouts_never_violate_separation() {
        // random intended actions under full exploration; the shield plus the
        // guard margin must keep every post-step distance at or above d_min
        use rand::SeedableRng;
        let cfg = UavConfig {
            n_uav: 4,
            subchannels: 3,
            power_levels_dbm: vec![5.0, 23.0],
            arena_m: (60.0, 60.0),
            d_min_m: 10.0,
            slow_interval: 2,
            shield_enabled: true,
            ..UavConfig::default()
        };
        let mut env = UavEnv::new(cfg.clone(), 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            env.reset().unwrap();
            for _ in 0..60 {
                let actions: Vec<usize> = (0..cfg.n_uav)
                    .map(|i| {
                        let mask = env.safe_mask(i);
                        mask.sample_allowed(&mut rng)
                    })
                    .collect();
                let steps = env.step(&actions).unwrap();
                assert!(
                    env.min_pairwise_distance() >= cfg.d_min_m - 1e-9,
                    "separation violated: {}",
                    env.min_pairwise_distance()
                );
                if steps.iter().any(|s| s.terminal) {
                    break;
                }
            }
        }
    }
}
