//! Constraint taxonomy and augmented-Lagrangian penalty arithmetic.
//!
//! Three constraint classes are supported:
//!
//! * cumulative inequalities — discounted long-run costs with a budget,
//!   relaxed through a linear multiplier term,
//! * instantaneous equalities — multiplier plus quadratic penalty,
//! * instantaneous inequalities — multiplier plus quadratic penalty on the
//!   positive part only.
//!
//! Multipliers move by projected dual ascent at episode granularity while the
//! quadratic penalty factors grow geometrically on violation, capped at a
//! configured maximum. Everything here is a pure function over value inputs
//! so per-agent training loops can call in concurrently without sharing state.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Episode-mean violations below this magnitude are treated as satisfied.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Discounted sum of per-step costs must stay within a budget.
    CumulativeInequality,
    /// Per-step equality that must hold at every step.
    InstantEquality,
    /// Per-step inequality (`<= 0`) that must hold at every step.
    InstantInequality,
}

/// Declaration of a single constraint an agent must respect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub id: String,
    pub kind: ConstraintKind,
    /// Budget for cumulative constraints; `None` otherwise.
    pub budget: Option<f64>,
    pub description: String,
}

impl ConstraintSpec {
    pub fn cumulative(id: impl Into<String>, budget: f64, description: impl Into<String>) -> Self {
        ConstraintSpec {
            id: id.into(),
            kind: ConstraintKind::CumulativeInequality,
            budget: Some(budget),
            description: description.into(),
        }
    }

    pub fn equality(id: impl Into<String>, description: impl Into<String>) -> Self {
        ConstraintSpec {
            id: id.into(),
            kind: ConstraintKind::InstantEquality,
            budget: None,
            description: description.into(),
        }
    }

    pub fn inequality(id: impl Into<String>, description: impl Into<String>) -> Self {
        ConstraintSpec {
            id: id.into(),
            kind: ConstraintKind::InstantInequality,
            budget: None,
            description: description.into(),
        }
    }
}

/// Validated collection of constraint declarations for one agent.
#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    specs: Vec<ConstraintSpec>,
}

impl ConstraintSet {
    pub fn new(specs: Vec<ConstraintSpec>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for spec in &specs {
            if !seen.insert(spec.id.clone()) {
                return Err(CoreError::config(format!(
                    "duplicate constraint id `{}`",
                    spec.id
                )));
            }
            match spec.kind {
                ConstraintKind::CumulativeInequality => match spec.budget {
                    Some(d) if d >= 0.0 => {}
                    Some(d) => {
                        return Err(CoreError::config(format!(
                            "constraint `{}`: budget must be >= 0, got {d}",
                            spec.id
                        )))
                    }
                    None => {
                        return Err(CoreError::config(format!(
                            "cumulative constraint `{}` is missing its budget",
                            spec.id
                        )))
                    }
                },
                _ => {
                    if spec.budget.is_some() {
                        return Err(CoreError::config(format!(
                            "constraint `{}`: only cumulative constraints carry a budget",
                            spec.id
                        )));
                    }
                }
            }
        }
        Ok(ConstraintSet { specs })
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConstraintSpec> {
        self.specs.iter()
    }

    pub fn of_kind(&self, kind: ConstraintKind) -> impl Iterator<Item = &ConstraintSpec> {
        self.specs.iter().filter(move |s| s.kind == kind)
    }

    pub fn get(&self, id: &str) -> Option<&ConstraintSpec> {
        self.specs.iter().find(|s| s.id == id)
    }

    pub fn budget(&self, id: &str) -> Result<f64> {
        self.get(id)
            .and_then(|s| s.budget)
            .ok_or_else(|| CoreError::config(format!("constraint `{id}` has no budget")))
    }
}

/// Dual-side hyperparameters shared by every constraint of an agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualConfig {
    /// Initial quadratic penalty factor for equality/inequality constraints.
    pub rho0: f64,
    /// Geometric growth factor applied to penalty factors on violation (> 1).
    pub xi: f64,
    /// Penalty factors never exceed this cap.
    pub rho_max: f64,
    pub beta_lambda: f64,
    pub beta_mu: f64,
    pub beta_nu: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            rho0: 0.05,
            xi: 1.1,
            rho_max: 100_000.0,
            beta_lambda: 0.1,
            beta_mu: 0.1,
            beta_nu: 0.1,
        }
    }
}

/// Lagrange multipliers and penalty factors for one agent.
///
/// `lambda` (cumulative) and `nu` (instantaneous inequality) are projected to
/// `[0, inf)` after every update; `mu` (equality) is sign-free.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: BTreeMap<String, f64>,
    pub mu: BTreeMap<String, f64>,
    pub nu: BTreeMap<String, f64>,
    pub rho_eq: BTreeMap<String, f64>,
    pub rho_inst: BTreeMap<String, f64>,
    pub xi: f64,
    pub rho_max: f64,
    pub beta_lambda: f64,
    pub beta_mu: f64,
    pub beta_nu: f64,
}

impl DualState {
    /// Zero multipliers, penalty factors at `rho0`.
    pub fn new(specs: &ConstraintSet, cfg: &DualConfig) -> Result<Self> {
        if cfg.xi <= 1.0 {
            return Err(CoreError::config(format!(
                "penalty scaling factor must be > 1, got {}",
                cfg.xi
            )));
        }
        if cfg.rho0 <= 0.0 || cfg.rho_max <= 0.0 || cfg.rho0 > cfg.rho_max {
            return Err(CoreError::config(format!(
                "penalty factors must satisfy 0 < rho0 <= rho_max, got rho0={} rho_max={}",
                cfg.rho0, cfg.rho_max
            )));
        }
        for (name, beta) in [
            ("beta_lambda", cfg.beta_lambda),
            ("beta_mu", cfg.beta_mu),
            ("beta_nu", cfg.beta_nu),
        ] {
            if beta < 0.0 {
                return Err(CoreError::config(format!(
                    "dual learning rate {name} must be >= 0, got {beta}"
                )));
            }
        }
        let mut state = DualState {
            lambda: BTreeMap::new(),
            mu: BTreeMap::new(),
            nu: BTreeMap::new(),
            rho_eq: BTreeMap::new(),
            rho_inst: BTreeMap::new(),
            xi: cfg.xi,
            rho_max: cfg.rho_max,
            beta_lambda: cfg.beta_lambda,
            beta_mu: cfg.beta_mu,
            beta_nu: cfg.beta_nu,
        };
        for spec in specs.iter() {
            match spec.kind {
                ConstraintKind::CumulativeInequality => {
                    state.lambda.insert(spec.id.clone(), 0.0);
                }
                ConstraintKind::InstantEquality => {
                    state.mu.insert(spec.id.clone(), 0.0);
                    state.rho_eq.insert(spec.id.clone(), cfg.rho0);
                }
                ConstraintKind::InstantInequality => {
                    state.nu.insert(spec.id.clone(), 0.0);
                    state.rho_inst.insert(spec.id.clone(), cfg.rho0);
                }
            }
        }
        Ok(state)
    }
}

/// Per-step constraint cost values keyed by constraint id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostSample {
    /// Instantaneous inequality values `g_k(s, a)` (violated when > 0).
    pub g: BTreeMap<String, f64>,
    /// Instantaneous equality values `e_j(s, a)` (violated when != 0).
    pub e: BTreeMap<String, f64>,
    /// Per-step cumulative costs `c_i(s, a)`.
    pub c: BTreeMap<String, f64>,
}

impl CostSample {
    pub fn with_g(mut self, id: impl Into<String>, value: f64) -> Self {
        self.g.insert(id.into(), value);
        self
    }

    pub fn with_e(mut self, id: impl Into<String>, value: f64) -> Self {
        self.e.insert(id.into(), value);
        self
    }

    pub fn with_c(mut self, id: impl Into<String>, value: f64) -> Self {
        self.c.insert(id.into(), value);
        self
    }
}

/// When to grow the quadratic penalty factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleTrigger {
    /// Any single violating step in the episode triggers scaling.
    OnAnyViolation,
    /// Episode-mean violation above tolerance triggers scaling.
    OnMeanViolation,
}

/// Discounting and cadence parameters shared by the penalty computations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub gamma: f64,
    /// Steps per episode.
    pub horizon: usize,
    /// Episodes between dual updates.
    pub dual_update_period: usize,
    pub penalty_scale_trigger: ScaleTrigger,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            gamma: 0.95,
            horizon: 100,
            dual_update_period: 1,
            penalty_scale_trigger: ScaleTrigger::OnMeanViolation,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(CoreError::config(format!(
                "discount factor must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.horizon == 0 {
            return Err(CoreError::config("horizon must be >= 1"));
        }
        if self.dual_update_period == 0 {
            return Err(CoreError::config("dual update period must be >= 1"));
        }
        Ok(())
    }
}

/// `max(0, x)`.
#[inline]
pub fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

fn lookup<'a>(map: &'a BTreeMap<String, f64>, id: &str, what: &str) -> Result<&'a f64> {
    map.get(id)
        .ok_or_else(|| CoreError::config(format!("unknown {what} constraint id `{id}`")))
}

/// Instantaneous-inequality penalty: sum of `nu_k * g_k^+ + (rho_k / 2) * (g_k^+)^2`.
///
/// Non-negative for every input; zero exactly when every `g_k <= 0`.
pub fn penalty_inst(costs: &CostSample, duals: &DualState) -> Result<f64> {
    let mut total = 0.0;
    for (id, &g) in &costs.g {
        let nu = lookup(&duals.nu, id, "inequality")?;
        let rho = lookup(&duals.rho_inst, id, "inequality")?;
        let gp = positive_part(g);
        total += nu * gp + 0.5 * rho * gp * gp;
    }
    Ok(total)
}

/// Equality penalty: sum of `mu_j * e_j + (rho_j / 2) * e_j^2`.
///
/// May be negative when the linear term dominates.
pub fn penalty_eq(costs: &CostSample, duals: &DualState) -> Result<f64> {
    let mut total = 0.0;
    for (id, &e) in &costs.e {
        let mu = lookup(&duals.mu, id, "equality")?;
        let rho = lookup(&duals.rho_eq, id, "equality")?;
        total += mu * e + 0.5 * rho * e * e;
    }
    Ok(total)
}

/// Step-wise cumulative penalty: sum of `lambda_i * (c_i - (1 - gamma) * d_i)`.
///
/// The `(1 - gamma) * d_i` term spreads the long-run budget into an equivalent
/// per-step allowance so the penalized reward stays aligned with the
/// trajectory-level constraint.
pub fn penalty_cum_step(
    costs: &CostSample,
    duals: &DualState,
    specs: &ConstraintSet,
    cfg: &TrainingConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (id, &c) in &costs.c {
        let lambda = lookup(&duals.lambda, id, "cumulative")?;
        let budget = specs.budget(id)?;
        total += lambda * (c - (1.0 - cfg.gamma) * budget);
    }
    Ok(total)
}

/// Full per-step penalty: instantaneous + equality + step-wise cumulative.
pub fn penalty_step(
    costs: &CostSample,
    duals: &DualState,
    specs: &ConstraintSet,
    cfg: &TrainingConfig,
) -> Result<f64> {
    Ok(penalty_inst(costs, duals)?
        + penalty_eq(costs, duals)?
        + penalty_cum_step(costs, duals, specs, cfg)?)
}

/// Single-trajectory Monte-Carlo estimate of the discounted cumulative costs.
pub fn estimate_cumulative_cost(trajectory: &[CostSample], gamma: f64) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let mut discount = 1.0;
    for sample in trajectory {
        for (id, &c) in &sample.c {
            *out.entry(id.clone()).or_insert(0.0) += discount * c;
        }
        discount *= gamma;
    }
    out
}

/// Projected dual ascent on all multipliers.
///
/// `lambda_i <- [lambda_i + beta_lambda * (vhat_c_i - d_i)]_+`,
/// `mu_j <- mu_j + beta_mu * mean_e_j` (unprojected),
/// `nu_k <- [nu_k + beta_nu * mean_gplus_k]_+`.
/// Penalty factors and scaling parameters are left untouched.
pub fn dual_ascent(
    duals: &DualState,
    specs: &ConstraintSet,
    vhat_c: &BTreeMap<String, f64>,
    mean_e: &BTreeMap<String, f64>,
    mean_gplus: &BTreeMap<String, f64>,
) -> Result<DualState> {
    for (name, beta) in [
        ("beta_lambda", duals.beta_lambda),
        ("beta_mu", duals.beta_mu),
        ("beta_nu", duals.beta_nu),
    ] {
        if beta < 0.0 {
            return Err(CoreError::config(format!(
                "dual learning rate {name} must be >= 0, got {beta}"
            )));
        }
    }
    let mut next = duals.clone();
    for (id, lambda) in next.lambda.iter_mut() {
        let vhat = lookup(vhat_c, id, "cumulative")?;
        let budget = specs.budget(id)?;
        *lambda = positive_part(*lambda + duals.beta_lambda * (vhat - budget));
    }
    for (id, mu) in next.mu.iter_mut() {
        let e = lookup(mean_e, id, "equality")?;
        *mu += duals.beta_mu * e;
    }
    for (id, nu) in next.nu.iter_mut() {
        let gp = lookup(mean_gplus, id, "inequality")?;
        *nu = positive_part(*nu + duals.beta_nu * gp);
    }
    Ok(next)
}

/// Grow the quadratic penalty factor of each violated constraint by `xi`,
/// capped at `rho_max`. Ids without a penalty factor (cumulative constraints)
/// and non-violated ids are left unchanged.
pub fn scale_penalties(duals: &DualState, violated: &BTreeSet<String>) -> DualState {
    let mut next = duals.clone();
    for id in violated {
        if let Some(rho) = next.rho_eq.get_mut(id) {
            *rho = (*rho * duals.xi).min(duals.rho_max);
        }
        if let Some(rho) = next.rho_inst.get_mut(id) {
            *rho = (*rho * duals.xi).min(duals.rho_max);
        }
    }
    next
}

/// Constraint ids whose episode estimates violate:
/// `vhat_c > d` for cumulative, `|mean e| > tol` for equality,
/// `mean g^+ > tol` for inequality.
pub fn violated_ids(
    specs: &ConstraintSet,
    vhat_c: &BTreeMap<String, f64>,
    mean_abs_e: &BTreeMap<String, f64>,
    mean_gplus: &BTreeMap<String, f64>,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for spec in specs.iter() {
        let violated = match spec.kind {
            ConstraintKind::CumulativeInequality => vhat_c
                .get(&spec.id)
                .map(|v| *v > spec.budget.unwrap_or(f64::INFINITY))
                .unwrap_or(false),
            ConstraintKind::InstantEquality => mean_abs_e
                .get(&spec.id)
                .map(|v| v.abs() > VIOLATION_TOL)
                .unwrap_or(false),
            ConstraintKind::InstantInequality => mean_gplus
                .get(&spec.id)
                .map(|v| *v > VIOLATION_TOL)
                .unwrap_or(false),
        };
        if violated {
            out.insert(spec.id.clone());
        }
    }
    out
}
