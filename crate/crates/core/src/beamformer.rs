use crate::error::{Error, Result};
use crate::linalg::{frob_sq, CMat};

/// Transmit matrices `V_i` (`N_t × d`) and receive matrices `U_i` (`N_r × N_r`), one per user.
///
/// A user that does not transmit in a slot carries an all-zero `V_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub transmit: Vec<CMat>,
    pub receive: Vec<CMat>,
}

impl BeamformerSet {
    pub fn new(transmit: Vec<CMat>, receive: Vec<CMat>) -> Result<Self> {
        if transmit.len() != receive.len() {
            return Err(Error::shape(format!(
                "{} transmit vs {} receive beamformers",
                transmit.len(),
                receive.len()
            )));
        }
        for (i, u) in receive.iter().enumerate() {
            if u.nrows() != u.ncols() {
                return Err(Error::shape(format!("receive beamformer {i} is not square")));
            }
        }
        Ok(Self { transmit, receive })
    }

    pub fn num_users(&self) -> usize {
        self.transmit.len()
    }

    /// `Σ_i tr(V_i V_iᴴ)`.
    pub fn total_power(&self) -> f64 {
        self.transmit.iter().map(frob_sq).sum()
    }

    pub fn is_power_feasible(&self, p_max: f64, tol: f64) -> bool {
        self.total_power() <= p_max + tol
    }

    /// Number of spatial streams carried by user `i`.
    pub fn streams(&self, i: usize) -> usize {
        self.transmit[i].ncols()
    }
}
