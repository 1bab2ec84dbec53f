//! Achievable rates (bps/Hz, base 2) and the delay model `T = L / (B R)`.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, identity, logdet_hpd, CMat, CVec, C64};

/// Per-user rate, delay and delay-budget feasibility.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rate_bps_hz: Vec<f64>,
    pub delay_s: Vec<f64>,
    pub feasible: Vec<bool>,
}

impl RateReport {
    pub fn new(rates: &[f64], lengths: &[usize], bandwidth_hz: f64, delay_budget_s: f64) -> Self {
        let delay_s: Vec<f64> = rates
            .iter()
            .zip(lengths)
            .map(|(&r, &l)| transmission_delay(l as f64, bandwidth_hz, r))
            .collect();
        let feasible = delay_s.iter().map(|&d| d <= delay_budget_s).collect();
        Self { rate_bps_hz: rates.to_vec(), delay_s, feasible }
    }
}

/// Effective interference-plus-noise covariance after the receive matrix:
/// `Σ_{j≠i} Uᴴ H V_j V_jᴴ Hᴴ U + σ² I`.
pub fn interference_covariance(
    h: &CMat,
    all_v: &[CMat],
    user: usize,
    u: &CMat,
    sigma2: f64,
) -> CMat {
    let n = u.ncols();
    let mut y = identity(n) * C64::new(sigma2, 0.0);
    let uh_h = u.adjoint() * h;
    for (j, v) in all_v.iter().enumerate() {
        if j == user {
            continue;
        }
        let a = &uh_h * v;
        y += &a * a.adjoint();
    }
    hermitian_part(&y)
}

/// `log2 det(I + Uᴴ H V_i V_iᴴ Hᴴ U (Σ_{j≠i} Uᴴ H V_j V_jᴴ Hᴴ U + σ² I)⁻¹)`.
///
/// Evaluated as `log det(Y + X Xᴴ) − log det(Y)` on Hermitian-cleaned matrices.
pub fn mimo_rate(h: &CMat, all_v: &[CMat], user: usize, u: &CMat, sigma2: f64) -> Result<f64> {
    if user >= all_v.len() {
        return Err(Error::shape(format!("user {user} out of range")));
    }
    if h.ncols() != all_v[user].nrows() || u.nrows() != h.nrows() {
        return Err(Error::shape(format!(
            "H is {:?}, V is {:?}, U is {:?}",
            h.shape(),
            all_v[user].shape(),
            u.shape()
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::domain("rate requires a positive noise variance"));
    }
    let y = interference_covariance(h, all_v, user, u, sigma2);
    let x = u.adjoint() * h * &all_v[user];
    let total = hermitian_part(&(&y + &x * x.adjoint()));
    let nats = logdet_hpd(&total)? - logdet_hpd(&y)?;
    Ok((nats / std::f64::consts::LN_2).max(0.0))
}

/// `log2(1 + |h_iᴴ v_i|² / (Σ_{j≠i} |h_iᴴ v_j|² + σ²))`.
pub fn miso_rate(h: &CVec, all_v: &[CVec], user: usize, sigma2: f64) -> Result<f64> {
    if user >= all_v.len() {
        return Err(Error::shape(format!("user {user} out of range")));
    }
    if let Some(j) = all_v.iter().position(|v| v.len() != h.len()) {
        return Err(Error::shape(format!("v_{j} has length {} but h has {}", all_v[j].len(), h.len())));
    }
    let gain = |v: &CVec| h.dotc(v).norm_sqr();
    let signal = gain(&all_v[user]);
    let interference: f64 = all_v
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != user)
        .map(|(_, v)| gain(v))
        .sum();
    let denom = interference + sigma2;
    if !(denom > 0.0) {
        return Err(Error::domain("interference plus noise must be positive"));
    }
    Ok((1.0 + signal / denom).log2())
}

/// `L / (B R)`; `+∞` when the rate is zero and the payload is not empty.
pub fn transmission_delay(length: f64, bandwidth_hz: f64, rate_bps_hz: f64) -> f64 {
    if length <= 0.0 {
        0.0
    } else if rate_bps_hz <= 0.0 {
        f64::INFINITY
    } else {
        length / (bandwidth_hz * rate_bps_hz)
    }
}

/// Minimum rate implied by the delay budget: `L / (B T_max)`.
pub fn rate_floor(length: usize, bandwidth_hz: f64, delay_budget_s: f64) -> f64 {
    length as f64 / (bandwidth_hz * delay_budget_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sample_cn_matrix, ONE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, C64::new(x, 0.0))
    }

    #[test]
    fn scalar_rate() {
        let r = mimo_rate(&scalar(2.0), &[scalar(1.0)], 0, &scalar(1.0), 1.0).unwrap();
        assert!((r - 5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_gives_zero_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = sample_cn_matrix(2, 3, &mut rng);
        let v = vec![CMat::zeros(3, 2), sample_cn_matrix(3, 2, &mut rng)];
        assert_eq!(mimo_rate(&h, &v, 0, &identity(2), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn miso_plugin_and_orthogonal_interferer() {
        let p: f64 = 7.0;
        let h = CVec::from_vec(vec![ONE, C64::new(0.0, 0.0)]);
        let v1 = CVec::from_vec(vec![C64::new(p.sqrt(), 0.0), C64::new(0.0, 0.0)]);
        let r = miso_rate(&h, &[v1.clone()], 0, 1.0).unwrap();
        assert!((r - (1.0 + p).log2()).abs() < 1e-12);
        let orth = CVec::from_vec(vec![C64::new(0.0, 0.0), C64::new(3.0, -1.0)]);
        let r2 = miso_rate(&h, &[v1, orth], 0, 1.0).unwrap();
        assert!((r - r2).abs() < 1e-15);
    }

    #[test]
    fn delay_edge_cases() {
        assert!((transmission_delay(1000.0, 5e6, 2.0) - 1e-4).abs() < 1e-18);
        assert_eq!(transmission_delay(0.0, 5e6, 3.0), 0.0);
        assert!(transmission_delay(10.0, 5e6, 0.0).is_infinite());
    }

    #[test]
    fn nonpositive_noise_is_rejected() {
        let err = mimo_rate(&scalar(1.0), &[scalar(1.0)], 0, &scalar(1.0), 0.0);
        assert!(matches!(err, Err(Error::Domain(_))));
    }
}
