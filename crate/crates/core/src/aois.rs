//! Age of incorrect semantic information: `Δ = exp(b (t − ε)) · g`.

use crate::error::{Error, Result};
use crate::linalg::RVec;
use crate::semantics::SemanticModel;

/// `exp(b (t − ε))`.
pub fn time_penalty(t: u64, epsilon: u64, b: f64) -> Result<f64> {
    if t < epsilon {
        return Err(Error::Contract(format!("slot {t} precedes last update {epsilon}")));
    }
    if !(b >= 0.0) {
        return Err(Error::domain(format!("penalty rate must be nonnegative, got {b}")));
    }
    Ok((b * (t - epsilon) as f64).exp())
}

/// `f(t) · g` for a mismatch `g ∈ [0, 1]`.
pub fn aois_value(t: u64, epsilon: u64, g: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&g) {
        return Err(Error::domain(format!("mismatch {g} outside [0, 1]")));
    }
    Ok(time_penalty(t, epsilon, b)? * g)
}

/// Mismatch between the current feature and a receiver estimate; an estimate whose task
/// output vanishes carries no information and counts as a full mismatch.
pub fn receiver_mismatch(model: &SemanticModel, z: &RVec, z_hat: &RVec) -> Result<f64> {
    match model.mismatch(z, z_hat) {
        Err(Error::Degenerate(_)) if model.task_output(z).norm() > 0.0 => Ok(1.0),
        other => other,
    }
}

/// A successful update delivered to the user in the current slot.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub g: f64,
    pub z_hat: RVec,
}

/// Per-user receiver state.
#[derive(Debug, Clone, PartialEq)]
pub struct AoisState {
    pub penalty_rate: f64,
    pub last_update: Vec<u64>,
    pub recovered: Vec<RVec>,
    pub current: Vec<f64>,
}

impl AoisState {
    /// Every receiver starts at slot 0 holding the noiseless full-length decode of its
    /// initial feature.
    pub fn warm_start(model: &SemanticModel, initial: &[RVec], penalty_rate: f64) -> Result<Self> {
        time_penalty(0, 0, penalty_rate)?;
        let lmax = model.max_symbols();
        let mut recovered = Vec::with_capacity(initial.len());
        let mut current = Vec::with_capacity(initial.len());
        for z in initial {
            let z_hat = model.decode(&model.encode(z, lmax)?, lmax)?;
            current.push(receiver_mismatch(model, z, &z_hat)?);
            recovered.push(z_hat);
        }
        Ok(Self { penalty_rate, last_update: vec![0; initial.len()], recovered, current })
    }

    pub fn num_users(&self) -> usize {
        self.last_update.len()
    }

    /// AoIS user `user` would have at slot `t` if nothing new is delivered.
    pub fn stale_value(&self, model: &SemanticModel, user: usize, t: u64, z_now: &RVec) -> Result<f64> {
        let g = receiver_mismatch(model, z_now, &self.recovered[user])?;
        aois_value(t, self.last_update[user], g, self.penalty_rate)
    }

    /// Advance user `user` to slot `t`. `delivery` must be present exactly when `alpha`.
    pub fn evolve(
        &mut self,
        model: &SemanticModel,
        user: usize,
        t: u64,
        z_now: &RVec,
        alpha: bool,
        delivery: Option<Delivery>,
    ) -> Result<f64> {
        if user >= self.num_users() {
            return Err(Error::shape(format!("user {user} out of range")));
        }
        let value = match (alpha, delivery) {
            (true, Some(d)) => {
                if t < self.last_update[user] {
                    return Err(Error::Contract(format!("slot {t} precedes last update")));
                }
                let v = aois_value(t, t, d.g, self.penalty_rate)?;
                self.last_update[user] = t;
                self.recovered[user] = d.z_hat;
                v
            }
            (false, None) => self.stale_value(model, user, t, z_now)?,
            (true, None) => {
                return Err(Error::Contract("transmission without a delivered estimate".into()))
            }
            (false, Some(_)) => {
                return Err(Error::Contract("delivered estimate for a skipped user".into()))
            }
        };
        self.current[user] = value;
        Ok(value)
    }
}
