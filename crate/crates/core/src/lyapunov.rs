//! Virtual cost queues and the drift-plus-penalty objective.

use serde::Serialize;

use crate::error::{Error, Result};

/// `max(Q − c_max, 0) + α c`.
pub fn queue_update(q: f64, alpha: bool, cost: f64, c_max: f64) -> f64 {
    (q - c_max).max(0.0) + if alpha { cost } else { 0.0 }
}

/// `Γ = ½ Σ Q_i²`.
pub fn lyapunov_value(queues: &[f64]) -> f64 {
    0.5 * queues.iter().map(|q| q * q).sum::<f64>()
}

/// `B = ½ Σ ((α_i c_i)² + c_max²)`, the action-independent slack of the one-slot drift bound.
pub fn drift_constant(alphas: &[bool], costs: &[f64], c_max: f64) -> f64 {
    alphas
        .iter()
        .zip(costs)
        .map(|(&a, &c)| {
            let ac = if a { c } else { 0.0 };
            0.5 * (ac * ac + c_max * c_max)
        })
        .sum()
}

/// `Σ Q_i (α_i c_i − c_max) + ω Σ Δ_i`.
pub fn dpp_objective(
    queues: &[f64],
    alphas: &[bool],
    costs: &[f64],
    c_max: f64,
    omega: f64,
    aois: &[f64],
) -> Result<f64> {
    let n = queues.len();
    if alphas.len() != n || costs.len() != n || aois.len() != n {
        return Err(Error::shape("queues, actions, costs and AoIS differ in length"));
    }
    let drift: f64 = (0..n)
        .map(|i| queues[i] * (if alphas[i] { costs[i] } else { 0.0 } - c_max))
        .sum();
    Ok(drift + omega * aois.iter().sum::<f64>())
}

/// One realized queue transition together with its drift bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftStep {
    pub gamma_before: f64,
    pub gamma_after: f64,
    /// `B + Σ Q_i (α_i c_i − c_max)` evaluated at the pre-transition queues.
    pub bound: f64,
}

impl DriftStep {
    pub fn holds(&self) -> bool {
        let scale = 1.0 + self.gamma_before.abs() + self.gamma_after.abs();
        self.gamma_after - self.gamma_before <= self.bound + 1e-12 * scale
    }
}

/// Queues, per-user costs and cumulative spend.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    pub queues: Vec<f64>,
    pub cumulative_cost: Vec<f64>,
    pub slots: u64,
    pub costs: Vec<f64>,
    pub c_max: f64,
}

impl QueueState {
    pub fn new(costs: Vec<f64>, c_max: f64) -> Result<Self> {
        if costs.iter().any(|c| !(*c >= 0.0)) || !(c_max >= 0.0) {
            return Err(Error::domain("costs and cost cap must be nonnegative"));
        }
        let n = costs.len();
        Ok(Self { queues: vec![0.0; n], cumulative_cost: vec![0.0; n], slots: 0, costs, c_max })
    }

    pub fn step(&mut self, alphas: &[bool]) -> Result<DriftStep> {
        if alphas.len() != self.queues.len() {
            return Err(Error::shape("action vector length differs from user count"));
        }
        let gamma_before = lyapunov_value(&self.queues);
        let zeros = vec![0.0; alphas.len()];
        let bound = drift_constant(alphas, &self.costs, self.c_max)
            + dpp_objective(&self.queues, alphas, &self.costs, self.c_max, 0.0, &zeros)?;
        for (i, &a) in alphas.iter().enumerate() {
            self.queues[i] = queue_update(self.queues[i], a, self.costs[i], self.c_max);
            if a {
                self.cumulative_cost[i] += self.costs[i];
            }
        }
        self.slots += 1;
        Ok(DriftStep { gamma_before, gamma_after: lyapunov_value(&self.queues), bound })
    }

    /// `Q_i(t)/t − ((1/t) Σ α_i c_i − c_max)`, nonnegative on every sample path.
    pub fn telescoping_slack(&self, user: usize) -> f64 {
        if self.slots == 0 {
            return 0.0;
        }
        let t = self.slots as f64;
        self.queues[user] / t - (self.cumulative_cost[user] / t - self.c_max)
    }
}

/// Empirical mean-rate stability and time-average cost per user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub mean_rate: Vec<f64>,
    pub avg_cost: Vec<f64>,
    pub stable: Vec<bool>,
    pub satisfied: bool,
}

/// A user satisfies the check when `Q_i(T)/T ≤ δ_stab` implies `avg_cost ≤ c_max + δ_cost`.
pub fn prop1_check(state: &QueueState, delta_stab: f64, delta_cost: f64) -> Result<StabilityReport> {
    if state.slots == 0 {
        return Err(Error::domain("stability check needs at least one slot"));
    }
    let t = state.slots as f64;
    let mean_rate: Vec<f64> = state.queues.iter().map(|q| q / t).collect();
    let avg_cost: Vec<f64> = state.cumulative_cost.iter().map(|c| c / t).collect();
    let stable: Vec<bool> = mean_rate.iter().map(|&r| r <= delta_stab).collect();
    let satisfied = stable
        .iter()
        .zip(&avg_cost)
        .all(|(&s, &c)| !s || c <= state.c_max + delta_cost);
    Ok(StabilityReport { mean_rate, avg_cost, stable, satisfied })
}
