//! Linear-Gaussian semantic codec.
//!
//! The feature `z ∈ ℝ^{N_H}` is mapped to `L` complex symbols by the first `L` rows
//! of a fixed encoder matrix, scaled so the average symbol power is one. The decoder
//! is the real-linear pseudoinverse of the full-length encoder, restricted to the
//! symbols actually received. Semantic similarity is the cosine between task-map
//! outputs `T z` and `T ẑ`.

mod estimator;

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sample_normal_matrix, CMat, CVec, RMat, RVec, C64};

pub use estimator::{
    estimate_g, estimate_g_for_user, receive_and_decode, split_chunks, GradRequest, LinkView,
    MismatchEstimate, NoiseBank,
};

/// Fixed encoder / decoder / task maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticModel {
    enc: CMat,
    dec: CMat,
    task: RMat,
    /// `s_L`, indexed by `L - 1`.
    power_scale: Vec<f64>,
    /// `T · dec`, `d_task × L_max`; column slices give the task-space decoder for any `L`.
    task_dec: CMat,
}

impl SemanticModel {
    /// Draw a random model: the real-stacked encoder has orthonormal columns, so the
    /// decoder at full length is its transpose and truncation is a projection.
    pub fn random<R: Rng + ?Sized>(
        feature_dim: usize,
        max_symbols: usize,
        task_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if feature_dim == 0 || max_symbols == 0 || task_dim == 0 {
            return Err(Error::domain("semantic model dimensions must be positive"));
        }
        if feature_dim > 2 * max_symbols {
            return Err(Error::domain(format!(
                "feature_dim {feature_dim} exceeds 2*max_symbols {}: encoder cannot be invertible",
                2 * max_symbols
            )));
        }
        let g = sample_normal_matrix(2 * max_symbols, feature_dim, rng);
        let q = g.qr().q();
        let enc = CMat::from_fn(max_symbols, feature_dim, |k, c| {
            C64::new(q[(k, c)], q[(max_symbols + k, c)])
        });
        let task = sample_normal_matrix(task_dim, feature_dim, rng);
        Self::from_maps(enc, task)
    }

    /// Build from an encoder and task map; the decoder is the real-linear pseudoinverse.
    pub fn from_maps(enc: CMat, task: RMat) -> Result<Self> {
        let (lmax, nh) = enc.shape();
        if task.ncols() != nh {
            return Err(Error::shape(format!(
                "task map has {} columns, encoder has {nh}",
                task.ncols()
            )));
        }
        let stacked = RMat::from_fn(2 * lmax, nh, |r, c| {
            if r < lmax {
                enc[(r, c)].re
            } else {
                enc[(r - lmax, c)].im
            }
        });
        let svd = stacked.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-10 * smax) {
            return Err(Error::Numerical {
                what: "encoder is not injective on the feature space".into(),
                condition: smax / smin,
            });
        }
        let pinv = svd
            .pseudo_inverse(1e-12 * smax)
            .map_err(|e| Error::Numerical { what: e.to_string(), condition: smax / smin })?;
        let dec = CMat::from_fn(nh, lmax, |r, k| C64::new(pinv[(r, k)], -pinv[(r, lmax + k)]));
        Self::from_parts(enc, dec, task)
    }

    /// Assemble from explicit matrices (used when loading fixtures).
    pub fn from_parts(enc: CMat, dec: CMat, task: RMat) -> Result<Self> {
        let (lmax, nh) = enc.shape();
        if dec.shape() != (nh, lmax) {
            return Err(Error::shape(format!("decoder is {:?}, expected ({nh}, {lmax})", dec.shape())));
        }
        if task.ncols() != nh {
            return Err(Error::shape("task map column count differs from feature_dim"));
        }
        let mut power_scale = Vec::with_capacity(lmax);
        let mut energy = 0.0;
        for k in 0..lmax {
            energy += enc.row(k).iter().map(|x| x.norm_sqr()).sum::<f64>();
            if !(energy > 0.0) {
                return Err(Error::Degenerate(format!("encoder rows 0..={k} carry no energy")));
            }
            power_scale.push(((k + 1) as f64 / energy).sqrt());
        }
        let task_dec = task.map(|x| C64::new(x, 0.0)) * &dec;
        Ok(Self { enc, dec, task, power_scale, task_dec })
    }

    pub fn feature_dim(&self) -> usize {
        self.enc.ncols()
    }

    pub fn max_symbols(&self) -> usize {
        self.enc.nrows()
    }

    pub fn task_dim(&self) -> usize {
        self.task.nrows()
    }

    pub fn encoder(&self) -> &CMat {
        &self.enc
    }

    pub fn decoder(&self) -> &CMat {
        &self.dec
    }

    pub fn task_map(&self) -> &RMat {
        &self.task
    }

    /// Power normalizer `s_L`, so that `E‖x‖² = L` for `z ~ N(0, I)`.
    pub fn power_scale(&self, length: usize) -> Result<f64> {
        self.check_length(length)?;
        Ok(self.power_scale[length - 1])
    }

    fn check_length(&self, length: usize) -> Result<()> {
        if length == 0 || length > self.max_symbols() {
            return Err(Error::config(format!(
                "symbol length {length} outside 1..={}",
                self.max_symbols()
            )));
        }
        Ok(())
    }

    /// `x = s_L · enc[0..L] z`.
    pub fn encode(&self, z: &RVec, length: usize) -> Result<CVec> {
        self.check_length(length)?;
        if z.len() != self.feature_dim() {
            return Err(Error::shape(format!("feature has length {}, expected {}", z.len(), self.feature_dim())));
        }
        let s = self.power_scale[length - 1];
        let zc = z.map(|v| C64::new(v, 0.0));
        Ok(self.enc.rows(0, length) * zc * C64::new(s, 0.0))
    }

    /// `ẑ = Re(dec[:, 0..L] x̂) / s_L`.
    pub fn decode(&self, x_hat: &CVec, length: usize) -> Result<RVec> {
        self.check_length(length)?;
        if x_hat.len() != length {
            return Err(Error::shape(format!("received {} symbols, expected {length}", x_hat.len())));
        }
        let s = self.power_scale[length - 1];
        let z = self.dec.columns(0, length) * x_hat;
        Ok(z.map(|v| v.re / s))
    }

    pub fn task_output(&self, z: &RVec) -> RVec {
        &self.task * z
    }

    /// Cosine similarity between `T z` and `T ẑ`.
    pub fn similarity(&self, z: &RVec, z_hat: &RVec) -> Result<f64> {
        if z.len() != self.feature_dim() || z_hat.len() != self.feature_dim() {
            return Err(Error::shape("feature length differs from feature_dim"));
        }
        let a = self.task_output(z);
        let b = self.task_output(z_hat);
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Degenerate("task output has zero norm".into()));
        }
        Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
    }

    /// Semantic mismatch `1 − Sim`, clamped to `[0, 1]`.
    pub fn mismatch(&self, z: &RVec, z_hat: &RVec) -> Result<f64> {
        Ok((1.0 - self.similarity(z, z_hat)?).clamp(0.0, 1.0))
    }

    /// `T · dec[:, 0..L] / s_L`: maps received symbols straight to the task output.
    pub(crate) fn task_decoder(&self, length: usize) -> CMat {
        let s = self.power_scale[length - 1];
        self.task_dec.columns(0, length) * C64::new(1.0 / s, 0.0)
    }

    /// Write the three maps as CSV rows `matrix,row,col,re,im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut put = |name: &str, m: &CMat| -> Result<()> {
            for c in 0..m.ncols() {
                for r in 0..m.nrows() {
                    let z = m[(r, c)];
                    w.serialize(FixtureRow { matrix: name.to_string(), row: r, col: c, re: z.re, im: z.im })?;
                }
            }
            Ok(())
        };
        put("enc", &self.enc)?;
        put("dec", &self.dec)?;
        put("task", &self.task.map(|x| C64::new(x, 0.0)))?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut cells: std::collections::BTreeMap<String, Vec<FixtureRow>> = Default::default();
        for row in r.deserialize() {
            let row: FixtureRow = row?;
            cells.entry(row.matrix.clone()).or_default().push(row);
        }
        let mut build = |name: &str| -> Result<CMat> {
            let rows = cells
                .remove(name)
                .ok_or_else(|| Error::shape(format!("fixture lacks matrix `{name}`")))?;
            let nr = rows.iter().map(|c| c.row + 1).max().unwrap_or(0);
            let nc = rows.iter().map(|c| c.col + 1).max().unwrap_or(0);
            if rows.len() != nr * nc {
                return Err(Error::shape(format!("fixture matrix `{name}` is incomplete")));
            }
            let mut m = CMat::zeros(nr, nc);
            for c in rows {
                m[(c.row, c.col)] = C64::new(c.re, c.im);
            }
            Ok(m)
        };
        let enc = build("enc")?;
        let dec = build("dec")?;
        let task = build("task")?.map(|x| x.re);
        Self::from_parts(enc, dec, task)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRow {
    matrix: String,
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

/// One `N(0, I)` feature draw.
pub fn sample_source<R: Rng + ?Sized>(feature_dim: usize, rng: &mut R) -> RVec {
    let m = sample_normal_matrix(feature_dim, 1, rng);
    RVec::from_iterator(feature_dim, m.iter().copied())
}

/// Stationary Gauss–Markov feature process `z(t+1) = ρ z(t) + √(1−ρ²) w(t)`.
#[derive(Debug, Clone)]
pub struct SourceProcess<R: Rng> {
    rho: f64,
    state: RVec,
    rng: R,
}

impl<R: Rng> SourceProcess<R> {
    pub fn new(feature_dim: usize, rho: f64, mut rng: R) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::domain(format!("source correlation {rho} outside [-1, 1]")));
        }
        let state = sample_source(feature_dim, &mut rng);
        Ok(Self { rho, state, rng })
    }

    pub fn current(&self) -> &RVec {
        &self.state
    }

    pub fn advance(&mut self) -> &RVec {
        let w = sample_source(self.state.len(), &mut self.rng);
        let keep = (1.0 - self.rho * self.rho).max(0.0).sqrt();
        if keep == 0.0 {
            self.state *= self.rho;
        } else {
            self.state = &self.state * self.rho + w * keep;
        }
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> SemanticModel {
        SemanticModel::random(12, 8, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn full_length_loopback_recovers_feature() {
        let m = model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let z = sample_source(12, &mut rng);
            let zh = m.decode(&m.encode(&z, 8).unwrap(), 8).unwrap();
            assert!((&zh - &z).norm() <= 1e-6 * z.norm());
        }
    }

    #[test]
    fn expected_symbol_power_is_one() {
        let m = model(3);
        for l in 1..=8 {
            // E‖x‖² = s_L² ‖enc[0..L]‖_F² for z ~ N(0, I)
            let s = m.power_scale(l).unwrap();
            let e: f64 = m.encoder().rows(0, l).iter().map(|x| x.norm_sqr()).sum();
            assert!((s * s * e / l as f64 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn similarity_edge_cases() {
        let m = model(4);
        let z = sample_source(12, &mut ChaCha8Rng::seed_from_u64(5));
        assert!((m.similarity(&z, &z).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.similarity(&z, &(&z * 2.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.similarity(&z, &(-&z)).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(m.similarity(&z, &RVec::zeros(12)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn bad_length_is_config_error() {
        let m = model(6);
        let z = RVec::zeros(12);
        assert!(matches!(m.encode(&z, 0), Err(Error::Config(_))));
        assert!(matches!(m.encode(&z, 9), Err(Error::Config(_))));
    }

    #[test]
    fn non_injective_encoder_rejected() {
        let r = SemanticModel::random(20, 8, 4, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(r.is_err());
    }

    #[test]
    fn frozen_and_white_sources() {
        let mut frozen = SourceProcess::new(6, 1.0, ChaCha8Rng::seed_from_u64(7)).unwrap();
        let z0 = frozen.current().clone();
        assert_eq!(frozen.advance(), &z0);

        let mut white = SourceProcess::new(1, 0.0, ChaCha8Rng::seed_from_u64(8)).unwrap();
        let n = 100_000;
        let mut prev = white.current()[0];
        let (mut cross, mut power) = (0.0, 0.0);
        for _ in 0..n {
            let next = white.advance()[0];
            cross += prev * next;
            power += next * next;
            prev = next;
        }
        assert!((cross / power).abs() <= 0.02);
    }

    #[test]
    fn source_replays_with_seed() {
        let mut a = SourceProcess::new(4, 0.7, ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut b = SourceProcess::new(4, 0.7, ChaCha8Rng::seed_from_u64(9)).unwrap();
        for _ in 0..10 {
            assert_eq!(a.advance(), b.advance());
        }
    }

    #[test]
    fn fixture_roundtrip() {
        let m = model(10);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(SemanticModel::read_csv(&buf[..]).unwrap(), m);
    }
}
