//! Monte Carlo estimate of the semantic mismatch `g` and its analytic gradients.
//!
//! The symbol stream of length `L` is sent in chunks of `d` spatial streams (the last
//! chunk zero-padded). The receiver keeps the first `d` outputs of `Uᴴ y` per chunk,
//! concatenates them, truncates to `L` and decodes. Symbols of other active users are
//! modeled as `CN(0, I)` draws held in a [`NoiseBank`], so that every estimate that
//! shares a bank sees identical randomness (common random numbers).

use rand::Rng;

use super::SemanticModel;
use crate::beamformer::BeamformerSet;
use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, sample_cn_vector, CMat, CVec, RVec, C64, ZERO};

/// Pre-drawn unit-variance randomness for `samples` Monte Carlo draws.
#[derive(Debug, Clone)]
pub struct NoiseBank {
    samples: usize,
    chunks: usize,
    users: usize,
    /// `CN(0, I_{N_r})`, indexed `m * chunks + k`.
    noise: Vec<CVec>,
    /// `CN(0, I_d)` stand-ins for other users' symbols, indexed `(m * chunks + k) * users + j`.
    symbols: Vec<CVec>,
}

impl NoiseBank {
    pub fn draw<R: Rng + ?Sized>(
        samples: usize,
        chunks: usize,
        rx_antennas: usize,
        streams: usize,
        users: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if samples == 0 {
            return Err(Error::domain("Monte Carlo sample count must be at least 1"));
        }
        let mut noise = Vec::with_capacity(samples * chunks);
        let mut symbols = Vec::with_capacity(samples * chunks * users);
        for _ in 0..samples * chunks {
            noise.push(sample_cn_vector(rx_antennas, rng));
            for _ in 0..users {
                symbols.push(sample_cn_vector(streams, rng));
            }
        }
        Ok(Self { samples, chunks, users, noise, symbols })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn chunks(&self) -> usize {
        self.chunks
    }

    fn noise(&self, m: usize, k: usize) -> &CVec {
        &self.noise[m * self.chunks + k]
    }

    fn symbol(&self, m: usize, k: usize, j: usize) -> &CVec {
        &self.symbols[(m * self.chunks + k) * self.users + j]
    }
}

/// Everything the estimator needs about user `user`'s link.
#[derive(Debug, Clone, Copy)]
pub struct LinkView<'a> {
    pub channel: &'a CMat,
    /// All users' transmit matrices; silent users carry zeros.
    pub transmit: &'a [CMat],
    pub receive: &'a CMat,
    pub noise_variance: f64,
    pub user: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradRequest {
    pub transmit: bool,
    pub receive: bool,
}

impl GradRequest {
    pub const NONE: Self = Self { transmit: false, receive: false };
    pub const TRANSMIT: Self = Self { transmit: true, receive: false };
    pub const RECEIVE: Self = Self { transmit: false, receive: true };
    pub const ALL: Self = Self { transmit: true, receive: true };
}

/// Sample-mean mismatch with optional gradients of the unclamped estimate.
///
/// Gradients follow the convention `df = Re tr(Gᴴ dX)`.
#[derive(Debug, Clone)]
pub struct MismatchEstimate {
    /// `1 − mean cos`, clamped to `[0, 1]`.
    pub g_value: f64,
    pub g_unclamped: f64,
    pub std_error: f64,
    pub samples: usize,
    /// `∂g/∂V_j` for every user `j`.
    pub grad_transmit: Option<Vec<CMat>>,
    /// `∂g/∂U_i`.
    pub grad_receive: Option<CMat>,
}

/// Split `x` into zero-padded chunks of `streams` symbols.
pub fn split_chunks(x: &CVec, streams: usize) -> Vec<CVec> {
    let chunks = x.len().div_ceil(streams);
    (0..chunks)
        .map(|k| CVec::from_fn(streams, |s, _| x.get(k * streams + s).copied().unwrap_or(ZERO)))
        .collect()
}

/// Receiver chain: `x̂ = [S Uᴴ y_k]_k`, truncated to `L`, then decoded.
pub fn receive_and_decode(
    model: &SemanticModel,
    length: usize,
    receive: &CMat,
    streams: usize,
    received: &[CVec],
) -> Result<RVec> {
    if received.len() * streams < length {
        return Err(Error::shape(format!(
            "{} chunks of {streams} streams cannot carry {length} symbols",
            received.len()
        )));
    }
    let mut x_hat = CVec::zeros(length);
    for (k, y) in received.iter().enumerate() {
        let out = receive.adjoint() * y;
        for s in 0..streams {
            let idx = k * streams + s;
            if idx < length {
                x_hat[idx] = out[s];
            }
        }
    }
    model.decode(&x_hat, length)
}

/// Monte Carlo mismatch for one user against a fixed [`NoiseBank`].
pub fn estimate_g(
    model: &SemanticModel,
    z: &RVec,
    length: usize,
    link: &LinkView<'_>,
    bank: &NoiseBank,
    grad: GradRequest,
) -> Result<MismatchEstimate> {
    let h = link.channel;
    let (nr, nt) = h.shape();
    let i = link.user;
    let users = link.transmit.len();
    if i >= users {
        return Err(Error::shape(format!("user {i} out of range for {users} users")));
    }
    let d = link.transmit[i].ncols();
    if let Some(j) = link.transmit.iter().position(|v| v.shape() != (nt, d)) {
        return Err(Error::shape(format!(
            "V_{j} is {:?}, expected ({nt}, {d})",
            link.transmit[j].shape()
        )));
    }
    if link.receive.shape() != (nr, nr) || d > nr {
        return Err(Error::shape(format!("U is {:?} with {d} streams, expected ({nr}, {nr})", link.receive.shape())));
    }
    if !(link.noise_variance >= 0.0) {
        return Err(Error::domain("noise variance must be nonnegative"));
    }
    if bank.users != users {
        return Err(Error::shape("noise bank drawn for a different user count"));
    }
    let a = model.task_output(z);
    let a_norm = a.norm();
    if a_norm == 0.0 {
        return Err(Error::Degenerate("task output of the source feature is zero".into()));
    }
    let a_hat = a / a_norm;

    let x = model.encode(z, length)?;
    let chunks = split_chunks(&x, d);
    if chunks.len() > bank.chunks {
        return Err(Error::shape(format!(
            "noise bank holds {} chunks, length {length} needs {}",
            bank.chunks,
            chunks.len()
        )));
    }
    let n_chunks = chunks.len();
    let sigma = link.noise_variance.sqrt();

    let hv: Vec<CMat> = link.transmit.iter().map(|v| h * v).collect();
    let signal: Vec<CVec> = chunks.iter().map(|c| &hv[i] * c).collect();

    // A_k = B_k U_dᴴ with B_k the task-space decoder columns of chunk k.
    let td = model.task_decoder(length);
    let dt = td.nrows();
    let u_d = link.receive.columns(0, d);
    let b_mats: Vec<CMat> = (0..n_chunks)
        .map(|k| {
            CMat::from_fn(dt, d, |r, s| {
                let idx = k * d + s;
                if idx < length {
                    td[(r, idx)]
                } else {
                    ZERO
                }
            })
        })
        .collect();
    let a_mats: Vec<CMat> = b_mats.iter().map(|b| b * u_d.adjoint()).collect();

    let m_total = bank.samples;
    let mut cosines = Vec::with_capacity(m_total);
    let mut e_acc: Vec<CMat> = if grad.transmit { vec![CMat::zeros(nr, d); users] } else { Vec::new() };
    let mut u_acc = if grad.receive { CMat::zeros(nr, d) } else { CMat::zeros(0, 0) };
    let mut ys: Vec<CVec> = vec![CVec::zeros(nr); n_chunks];

    for m in 0..m_total {
        let mut b = RVec::zeros(dt);
        for k in 0..n_chunks {
            let y = &mut ys[k];
            y.copy_from(&signal[k]);
            for (j, hvj) in hv.iter().enumerate() {
                if j != i {
                    y.gemv(C64::new(1.0, 0.0), hvj, bank.symbol(m, k, j), C64::new(1.0, 0.0));
                }
            }
            if sigma > 0.0 {
                y.axpy(C64::new(sigma, 0.0), bank.noise(m, k), C64::new(1.0, 0.0));
            }
            let contrib = &a_mats[k] * &*y;
            for (bv, c) in b.iter_mut().zip(contrib.iter()) {
                *bv += c.re;
            }
        }
        let b_norm = b.norm();
        if b_norm == 0.0 {
            cosines.push(0.0);
            continue;
        }
        let b_hat = &b / b_norm;
        let cos = a_hat.dot(&b_hat);
        cosines.push(cos);
        if !(grad.transmit || grad.receive) {
            continue;
        }
        let r_b = (&a_hat - &b_hat * cos) / b_norm;
        let r_c = r_b.map(|v| C64::new(v, 0.0));
        for k in 0..n_chunks {
            if grad.transmit {
                let gy = a_mats[k].adjoint() * &r_c;
                for (j, e) in e_acc.iter_mut().enumerate() {
                    let sym = if j == i { &chunks[k] } else { bank.symbol(m, k, j) };
                    e.gerc(C64::new(1.0, 0.0), &gy, sym, C64::new(1.0, 0.0));
                }
            }
            if grad.receive {
                let beta = b_mats[k].transpose() * &r_c;
                u_acc.ger(C64::new(1.0, 0.0), &ys[k], &beta, C64::new(1.0, 0.0));
            }
        }
    }

    let mf = m_total as f64;
    let mean_cos = pairwise_sum(&cosines) / mf;
    let std_error = if m_total > 1 {
        let dev: Vec<f64> = cosines.iter().map(|c| (c - mean_cos).powi(2)).collect();
        (pairwise_sum(&dev) / (mf - 1.0)).sqrt() / mf.sqrt()
    } else {
        0.0
    };
    let g_unclamped = 1.0 - mean_cos;
    let scale = C64::new(-1.0 / mf, 0.0);
    let grad_transmit = grad.transmit.then(|| e_acc.iter().map(|e| h.adjoint() * e * scale).collect());
    let grad_receive = grad.receive.then(|| {
        let mut g = CMat::zeros(nr, nr);
        g.columns_mut(0, d).copy_from(&(u_acc * scale));
        g
    });
    Ok(MismatchEstimate {
        g_value: g_unclamped.clamp(0.0, 1.0),
        g_unclamped,
        std_error,
        samples: m_total,
        grad_transmit,
        grad_receive,
    })
}

/// Draw a fresh bank from `rng` and estimate `g` for `user` under `beamformers`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_g_for_user<R: Rng + ?Sized>(
    model: &SemanticModel,
    z: &RVec,
    length: usize,
    channel: &ChannelState,
    beamformers: &BeamformerSet,
    user: usize,
    samples: usize,
    rng: &mut R,
) -> Result<MismatchEstimate> {
    if user >= channel.num_users() || beamformers.num_users() != channel.num_users() {
        return Err(Error::shape("user index or beamformer count does not match the channel"));
    }
    let d = beamformers.streams(user);
    if d == 0 {
        return Err(Error::shape("transmit beamformer has no streams"));
    }
    let bank = NoiseBank::draw(
        samples,
        length.div_ceil(d),
        channel.rx_antennas(),
        d,
        channel.num_users(),
        rng,
    )?;
    let link = LinkView {
        channel: &channel.matrices[user],
        transmit: &beamformers.transmit,
        receive: &beamformers.receive[user],
        noise_variance: channel.noise_variance[user],
        user,
    };
    estimate_g(model, z, length, &link, &bank, GradRequest::NONE)
}
