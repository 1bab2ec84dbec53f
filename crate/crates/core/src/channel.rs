//! Block-fading downlink channel: Rayleigh small-scale fading, optional path loss
//! and lognormal shadowing, thermal noise, and the linear received-signal model
//! `y_i = H_i Σ_j V_j x_j + n_i`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::beamformer::BeamformerSet;
use crate::error::{Error, Result};
use crate::linalg::{sample_cn_matrix, sample_cn_vector, CMat, CVec, C64};
use crate::rng::{stream, Stream};

/// Per-slot channel realization for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    /// `H_i`, each `N_r × N_t`.
    pub matrices: Vec<CMat>,
    /// `σ_i²` in watts.
    pub noise_variance: Vec<f64>,
    /// Large-scale loss applied to `H_i` (0 when path loss is disabled).
    pub pathloss_db: Vec<f64>,
    pub slot: u64,
}

impl ChannelState {
    pub fn new(
        matrices: Vec<CMat>,
        noise_variance: Vec<f64>,
        pathloss_db: Vec<f64>,
        slot: u64,
    ) -> Result<Self> {
        if matrices.len() != noise_variance.len() || matrices.len() != pathloss_db.len() {
            return Err(Error::shape("per-user channel fields have different lengths"));
        }
        if let Some(first) = matrices.first() {
            let shape = first.shape();
            if let Some((i, _)) = matrices.iter().enumerate().find(|(_, h)| h.shape() != shape) {
                return Err(Error::shape(format!(
                    "channel of user {i} is {:?}, expected {:?}",
                    matrices[i].shape(),
                    shape
                )));
            }
        }
        if let Some(i) = noise_variance.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::domain(format!("noise variance of user {i} must be finite and >= 0")));
        }
        Ok(Self { matrices, noise_variance, pathloss_db, slot })
    }

    pub fn num_users(&self) -> usize {
        self.matrices.len()
    }

    pub fn rx_antennas(&self) -> usize {
        self.matrices.first().map_or(0, |h| h.nrows())
    }

    pub fn tx_antennas(&self) -> usize {
        self.matrices.first().map_or(0, |h| h.ncols())
    }

    /// MISO channels stacked as columns: `[h_1 … h_U]` (`N_t × U`) with `h_iᴴ` the
    /// single row of `H_i`.
    pub fn stacked_miso(&self) -> Result<CMat> {
        if self.rx_antennas() != 1 {
            return Err(Error::shape("stacked MISO channel requires one receive antenna"));
        }
        let nt = self.tx_antennas();
        let mut h = CMat::zeros(nt, self.num_users());
        for (i, hi) in self.matrices.iter().enumerate() {
            for a in 0..nt {
                h[(a, i)] = hi[(0, a)].conj();
            }
        }
        Ok(h)
    }
}

/// One `N_r × N_t` matrix with i.i.d. CN(0,1) entries.
pub fn sample_block_fading<R: Rng + ?Sized>(nr: usize, nt: usize, rng: &mut R) -> CMat {
    sample_cn_matrix(nr, nt, rng)
}

/// Distance-dependent path loss `128.1 + 37.6 log10(d)` in dB.
pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0 && distance_km.is_finite()) {
        return Err(Error::domain(format!("distance must be positive, got {distance_km}")));
    }
    Ok(128.1 + 37.6 * distance_km.log10())
}

/// Path loss plus a lognormal shadowing draw with the given dB standard deviation.
pub fn shadowed_path_loss_db<R: Rng + ?Sized>(
    distance_km: f64,
    shadowing_std_db: f64,
    rng: &mut R,
) -> Result<f64> {
    let base = path_loss_db(distance_km)?;
    let normal = Normal::new(0.0, shadowing_std_db)
        .map_err(|e| Error::domain(format!("shadowing std: {e}")))?;
    Ok(base + normal.sample(rng))
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Thermal noise power in watts for a PSD in dBm/Hz over `bandwidth_hz`.
pub fn noise_power(bandwidth_hz: f64, psd_dbm_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::domain(format!("bandwidth must be positive, got {bandwidth_hz}")));
    }
    Ok(dbm_to_watts(psd_dbm_hz + 10.0 * bandwidth_hz.log10()))
}

fn check_downlink_shapes(
    channel: &ChannelState,
    beamformers: &BeamformerSet,
    symbols: &[CVec],
) -> Result<()> {
    let u = channel.num_users();
    if beamformers.num_users() != u || symbols.len() != u {
        return Err(Error::shape(format!(
            "{u} channels, {} beamformers, {} symbol vectors",
            beamformers.num_users(),
            symbols.len()
        )));
    }
    for (j, (v, x)) in beamformers.transmit.iter().zip(symbols).enumerate() {
        if v.nrows() != channel.tx_antennas() {
            return Err(Error::shape(format!("V_{j} has {} rows, expected N_t", v.nrows())));
        }
        if v.ncols() != x.len() {
            return Err(Error::shape(format!(
                "V_{j} has {} columns but x_{j} has length {}",
                v.ncols(),
                x.len()
            )));
        }
    }
    Ok(())
}

/// Noise-free superposition `H_i Σ_j V_j x_j` for every user.
pub fn downlink_signal(
    channel: &ChannelState,
    beamformers: &BeamformerSet,
    symbols: &[CVec],
) -> Result<Vec<CVec>> {
    check_downlink_shapes(channel, beamformers, symbols)?;
    let mut tx = CVec::zeros(channel.tx_antennas());
    for (v, x) in beamformers.transmit.iter().zip(symbols) {
        tx += v * x;
    }
    Ok(channel.matrices.iter().map(|h| h * &tx).collect())
}

/// Received vectors with caller-supplied unit-variance noise `w_i`, scaled by `σ_i`.
pub fn apply_downlink_with_noise(
    channel: &ChannelState,
    beamformers: &BeamformerSet,
    symbols: &[CVec],
    unit_noise: &[CVec],
) -> Result<Vec<CVec>> {
    let clean = downlink_signal(channel, beamformers, symbols)?;
    if unit_noise.len() != clean.len() {
        return Err(Error::shape("one noise vector per user required"));
    }
    clean
        .into_iter()
        .zip(unit_noise)
        .zip(&channel.noise_variance)
        .map(|((y, w), s2)| {
            if w.len() != y.len() {
                return Err(Error::shape("noise vector length differs from N_r"));
            }
            Ok(y + w * C64::new(s2.sqrt(), 0.0))
        })
        .collect()
}

/// `y_i = H_i Σ_j V_j x_j + n_i`, `n_i ~ CN(0, σ_i² I)` drawn from `rng`.
pub fn apply_downlink<R: Rng + ?Sized>(
    channel: &ChannelState,
    beamformers: &BeamformerSet,
    symbols: &[CVec],
    rng: &mut R,
) -> Result<Vec<CVec>> {
    let nr = channel.rx_antennas();
    let noise: Vec<CVec> = (0..channel.num_users()).map(|_| sample_cn_vector(nr, rng)).collect();
    apply_downlink_with_noise(channel, beamformers, symbols, &noise)
}

/// Large-scale fading settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossConfig {
    pub enabled: bool,
    /// One distance per user.
    pub distances_km: Vec<f64>,
    pub shadowing: bool,
    #[serde(default = "default_shadowing_std")]
    pub shadowing_std_db: f64,
}

fn default_shadowing_std() -> f64 {
    6.0
}

impl Default for PathLossConfig {
    fn default() -> Self {
        Self { enabled: false, distances_km: Vec::new(), shadowing: false, shadowing_std_db: 6.0 }
    }
}

/// Deterministic block-fading process: the channel of slot `t` is a pure function of
/// `(seed, t / block_length, user)`.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    pub num_users: usize,
    pub rx_antennas: usize,
    pub tx_antennas: usize,
    pub block_length: u64,
    pub noise_variance: Vec<f64>,
    pub pathloss: PathLossConfig,
    pub seed: u64,
}

impl FadingProcess {
    pub fn block_of(&self, slot: u64) -> u64 {
        slot / self.block_length.max(1)
    }

    pub fn state_at(&self, slot: u64) -> Result<ChannelState> {
        let block = self.block_of(slot);
        let mut matrices = Vec::with_capacity(self.num_users);
        let mut losses = Vec::with_capacity(self.num_users);
        for i in 0..self.num_users {
            let mut rng = stream(self.seed, Stream::Fading, block, i as u64);
            let mut h = sample_block_fading(self.rx_antennas, self.tx_antennas, &mut rng);
            let loss = if self.pathloss.enabled {
                let d = *self.pathloss.distances_km.get(i).ok_or_else(|| {
                    Error::config(format!("no distance configured for user {i}"))
                })?;
                if self.pathloss.shadowing {
                    let mut srng = stream(self.seed, Stream::Shadowing, block, i as u64);
                    shadowed_path_loss_db(d, self.pathloss.shadowing_std_db, &mut srng)?
                } else {
                    path_loss_db(d)?
                }
            } else {
                0.0
            };
            if loss != 0.0 {
                h *= C64::new(db_to_linear(-loss).sqrt(), 0.0);
            }
            matrices.push(h);
            losses.push(loss);
        }
        ChannelState::new(matrices, self.noise_variance.clone(), losses, slot)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    slot: u64,
    user: usize,
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

/// Write channel matrices as CSV rows `slot,user,row,col,re,im`.
pub fn write_trace_csv<W: Write>(states: &[ChannelState], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in states {
        for (user, h) in s.matrices.iter().enumerate() {
            for row in 0..h.nrows() {
                for col in 0..h.ncols() {
                    let z = h[(row, col)];
                    w.serialize(TraceRow { slot: s.slot, user, row, col, re: z.re, im: z.im })?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a trace written by [`write_trace_csv`]. Noise variances are not part of the
/// trace and are supplied by the caller; path loss is reported as 0.
pub fn read_trace_csv<R: Read>(input: R, noise_variance: &[f64]) -> Result<Vec<ChannelState>> {
    use std::collections::BTreeMap;
    let mut r = csv::Reader::from_reader(input);
    let mut entries: BTreeMap<u64, BTreeMap<usize, Vec<(usize, usize, C64)>>> = BTreeMap::new();
    for row in r.deserialize() {
        let row: TraceRow = row?;
        entries
            .entry(row.slot)
            .or_default()
            .entry(row.user)
            .or_default()
            .push((row.row, row.col, C64::new(row.re, row.im)));
    }
    let mut out = Vec::with_capacity(entries.len());
    for (slot, users) in entries {
        let mut matrices = Vec::with_capacity(users.len());
        for (expected, (user, cells)) in users.into_iter().enumerate() {
            if user != expected {
                return Err(Error::shape(format!("slot {slot}: missing user {expected}")));
            }
            let nr = cells.iter().map(|c| c.0).max().map_or(0, |m| m + 1);
            let nt = cells.iter().map(|c| c.1).max().map_or(0, |m| m + 1);
            if cells.len() != nr * nt {
                return Err(Error::shape(format!("slot {slot} user {user}: incomplete matrix")));
            }
            let mut h = CMat::zeros(nr, nt);
            for (r, c, z) in cells {
                h[(r, c)] = z;
            }
            matrices.push(h);
        }
        if matrices.len() != noise_variance.len() {
            return Err(Error::shape("noise variance count differs from user count in trace"));
        }
        let n = matrices.len();
        out.push(ChannelState::new(matrices, noise_variance.to_vec(), vec![0.0; n], slot)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, ONE, ZERO};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fading_is_deterministic_per_seed() {
        let a = sample_block_fading(1, 1, &mut ChaCha8Rng::seed_from_u64(11));
        let b = sample_block_fading(1, 1, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn fading_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let (mut p, mut vr, mut vi) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let h = sample_block_fading(1, 1, &mut rng)[(0, 0)];
            p += h.norm_sqr();
            vr += h.re * h.re;
            vi += h.im * h.im;
        }
        let nf = n as f64;
        assert!((p / nf - 1.0).abs() < 0.01);
        assert!((vr / nf - 0.5).abs() < 0.01);
        assert!((vi / nf - 0.5).abs() < 0.01);
    }

    #[test]
    fn path_loss_values() {
        assert!((path_loss_db(1.0).unwrap() - 128.1).abs() < 1e-12);
        assert!((path_loss_db(10.0).unwrap() - 165.7).abs() < 1e-9);
        assert!((path_loss_db(0.1).unwrap() - 90.5).abs() < 1e-9);
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-1.0).is_err());
    }

    #[test]
    fn noise_power_values() {
        let w = noise_power(5e6, -174.0).unwrap();
        assert!((watts_to_dbm(w) - (-107.0103)).abs() < 1e-3);
        assert!((w - 1.99e-14).abs() / 1.99e-14 < 0.01);
        assert!((watts_to_dbm(noise_power(1.0, -174.0).unwrap()) + 174.0).abs() < 1e-9);
        assert!((watts_to_dbm(noise_power(2.0, -174.0).unwrap()) + 174.0 - 3.0103).abs() < 1e-4);
        assert!(noise_power(0.0, -174.0).is_err());
    }

    #[test]
    fn identity_chain_without_noise() {
        let ch = ChannelState::new(vec![identity(2)], vec![0.0], vec![0.0], 0).unwrap();
        let bf = BeamformerSet::new(vec![identity(2)], vec![identity(2)]).unwrap();
        let x = CVec::from_vec(vec![ONE, ZERO]);
        let y = apply_downlink(&ch, &bf, &[x.clone()], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(y[0], x);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let ch = ChannelState::new(vec![identity(2)], vec![1.0], vec![0.0], 0).unwrap();
        let bf = BeamformerSet::new(vec![identity(2)], vec![identity(2)]).unwrap();
        let x = CVec::from_vec(vec![ONE]);
        let err = apply_downlink(&ch, &bf, &[x], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn null_interferer_leaves_first_user_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h1 = sample_block_fading(2, 3, &mut rng);
        let h2 = sample_block_fading(2, 3, &mut rng);
        let v1 = sample_cn_matrix(3, 2, &mut rng);
        let x1 = sample_cn_vector(2, &mut rng);
        let x2 = sample_cn_vector(2, &mut rng);
        let noise = vec![sample_cn_vector(2, &mut rng), sample_cn_vector(2, &mut rng)];
        let two = ChannelState::new(vec![h1.clone(), h2], vec![0.3, 0.3], vec![0.0; 2], 0).unwrap();
        let bf2 = BeamformerSet::new(vec![v1.clone(), CMat::zeros(3, 2)], vec![identity(2); 2])
            .unwrap();
        let y = apply_downlink_with_noise(&two, &bf2, &[x1.clone(), x2], &noise).unwrap();
        let one = ChannelState::new(vec![h1], vec![0.3], vec![0.0], 0).unwrap();
        let bf1 = BeamformerSet::new(vec![v1], vec![identity(2)]).unwrap();
        let y1 = apply_downlink_with_noise(&one, &bf1, &[x1], &noise[..1]).unwrap();
        assert!((&y[0] - &y1[0]).norm() < 1e-14);
    }

    #[test]
    fn block_fading_constant_within_block() {
        let proc = FadingProcess {
            num_users: 2,
            rx_antennas: 2,
            tx_antennas: 3,
            block_length: 5,
            noise_variance: vec![1.0, 1.0],
            pathloss: PathLossConfig::default(),
            seed: 4,
        };
        let a = proc.state_at(5).unwrap();
        let b = proc.state_at(9).unwrap();
        let c = proc.state_at(10).unwrap();
        assert_eq!(a.matrices, b.matrices);
        assert_ne!(a.matrices, c.matrices);
    }

    #[test]
    fn pathloss_scales_power() {
        let mut proc = FadingProcess {
            num_users: 1,
            rx_antennas: 1,
            tx_antennas: 1,
            block_length: 1,
            noise_variance: vec![1.0],
            pathloss: PathLossConfig {
                enabled: true,
                distances_km: vec![1.0],
                shadowing: false,
                shadowing_std_db: 6.0,
            },
            seed: 8,
        };
        let scaled = proc.state_at(0).unwrap();
        proc.pathloss.enabled = false;
        let raw = proc.state_at(0).unwrap();
        let ratio = scaled.matrices[0][(0, 0)].norm_sqr() / raw.matrices[0][(0, 0)].norm_sqr();
        assert!((10.0 * ratio.log10() + 128.1).abs() < 1e-9);
        assert!((scaled.pathloss_db[0] - 128.1).abs() < 1e-12);
    }

    #[test]
    fn trace_roundtrip_is_exact() {
        let proc = FadingProcess {
            num_users: 2,
            rx_antennas: 2,
            tx_antennas: 3,
            block_length: 1,
            noise_variance: vec![0.5, 0.25],
            pathloss: PathLossConfig::default(),
            seed: 99,
        };
        let states: Vec<_> = (0..3).map(|t| proc.state_at(t).unwrap()).collect();
        let mut buf = Vec::new();
        write_trace_csv(&states, &mut buf).unwrap();
        assert!(buf.starts_with(b"slot,user,row,col,re,im\n"));
        let back = read_trace_csv(&buf[..], &[0.5, 0.25]).unwrap();
        assert_eq!(back, states);
    }
}
