//! Parameter sweeps replicated over seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::config::{Mode, SystemConfig};
use crate::engine::episode::run_episode;
use crate::engine::output::write_csv;
use crate::error::{Error, Result};

/// Swept configuration parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Power budget in dBm.
    PMax,
    /// Mean of the symbol length set; the set, the encoder capacity and the feature
    /// dimension are scaled together so that the amount of source information grows.
    MeanL,
    /// DPP weight `ω`.
    Omega,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_max" => Ok(Axis::PMax),
            "mean_l" => Ok(Axis::MeanL),
            "omega" => Ok(Axis::Omega),
            other => Err(Error::config(format!("unknown sweep axis `{other}` (expected p_max, mean_l or omega)"))),
        }
    }
}

/// Configuration at one sweep point.
pub fn apply_axis(base: &SystemConfig, axis: Axis, value: f64) -> Result<SystemConfig> {
    if !value.is_finite() {
        return Err(Error::config(format!("sweep value {value} is not finite")));
    }
    let mut cfg = base.clone();
    match axis {
        Axis::PMax => cfg.power_budget_dbm = value,
        Axis::Omega => cfg.dpp_weight = value,
        Axis::MeanL => {
            let set = base.length_set();
            let mean = set.iter().sum::<usize>() as f64 / set.len() as f64;
            let factor = value / mean;
            if !(factor > 0.0) {
                return Err(Error::config(format!("mean symbol length {value} must be positive")));
            }
            let scale = |x: usize| ((x as f64 * factor).round() as usize).max(1);
            cfg.symbol_lengths = set.iter().map(|&l| scale(l)).collect();
            cfg.max_symbols = scale(base.max_symbols).max(*cfg.symbol_lengths.iter().max().expect("nonempty"));
            cfg.feature_dim = scale(base.feature_dim).min(2 * cfg.max_symbols);
        }
    }
    Ok(cfg)
}

/// Aggregates of one episode at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub avg_aois: f64,
    pub avg_cost: f64,
    pub avg_mismatch: f64,
    pub transmit_fraction: f64,
    pub lost_updates: u64,
}

pub const SWEEP_HEADER: [&str; 7] =
    ["value", "seed", "avg_aois", "avg_cost", "avg_mismatch", "transmit_fraction", "lost_updates"];

/// One row per `(value, seed)`, ordered by value then seed; seeds run in parallel.
pub fn sweep(base: &SystemConfig, mode: Mode, axis: Axis, values: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(f64, u64)> = values.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    jobs.par_iter()
        .map(|&(value, seed)| {
            let mut cfg = apply_axis(base, axis, value)?;
            cfg.seed = seed;
            let s = run_episode(&cfg, mode)?.summary;
            Ok(SweepRow {
                value,
                seed,
                avg_aois: s.avg_aois,
                avg_cost: s.avg_cost_per_user.iter().sum(),
                avg_mismatch: s.avg_mismatch,
                transmit_fraction: s.transmit_fraction,
                lost_updates: s.lost_updates,
            })
        })
        .collect()
}

/// Seed-averaged `(value, mean AoIS, sample std)` per sweep point, in input order.
pub fn aggregate(rows: &[SweepRow]) -> Vec<(f64, f64, f64)> {
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for group in rows.chunk_by(|a, b| a.value == b.value) {
        let n = group.len() as f64;
        let mean = group.iter().map(|r| r.avg_aois).sum::<f64>() / n;
        let var = if group.len() > 1 {
            group.iter().map(|r| (r.avg_aois - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        out.push((group[0].value, mean, var.sqrt()));
    }
    out
}

/// Writes `sweep.csv`, `sweep.dat` and `sweep.gp` into `dir`.
pub fn write_sweep(rows: &[SweepRow], axis: Axis, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("sweep.csv"), rows, &SWEEP_HEADER)?;
    let mut dat = String::from("# value mean_aois std_aois\n");
    for (v, m, s) in aggregate(rows) {
        let _ = writeln!(dat, "{v} {m} {s}");
    }
    fs::write(dir.join("sweep.dat"), dat)?;
    let xlabel = match axis {
        Axis::PMax => "P_max (dBm)",
        Axis::MeanL => "mean symbol length",
        Axis::Omega => "DPP weight",
    };
    fs::write(
        dir.join("sweep.gp"),
        format!(
            "set terminal pngcairo size 800,500\nset output 'sweep.png'\nset xlabel '{xlabel}'\n\
             set ylabel 'average AoIS'\nplot 'sweep.dat' using 1:2:3 with yerrorlines title 'average AoIS'\n"
        ),
    )?;
    Ok(())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
