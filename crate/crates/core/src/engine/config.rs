//! Simulation configuration, JSON I/O and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_watts, noise_power, PathLossConfig};
use crate::error::{Error, Result};
use crate::scheduler::{AoOrder, BeamformingMode, SchedulerOptions};
use crate::sca::ScaOptions;
use crate::zf::ZfOptions;

/// Per-slot policy of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// DPP actuation with SCA transceivers (multi-antenna receivers).
    Sca,
    /// DPP actuation with zero-forcing precoding (single-antenna receivers).
    Zf,
    /// Every user transmits every slot.
    Always,
    /// No user ever transmits.
    Never,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sca" => Ok(Mode::Sca),
            "zf" => Ok(Mode::Zf),
            "always" => Ok(Mode::Always),
            "never" => Ok(Mode::Never),
            other => Err(Error::config(format!("unknown mode `{other}` (expected sca, zf, always or never)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Sca => "sca",
            Mode::Zf => "zf",
            Mode::Always => "always",
            Mode::Never => "never",
        })
    }
}

/// Everything that defines a run. Power and noise are given in dBm and converted to
/// watts by [`SystemConfig::power_budget_w`] and [`SystemConfig::noise_variance_w`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub num_users: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub power_budget_dbm: f64,
    pub delay_budget_s: f64,
    pub bandwidth_hz: f64,
    /// Candidate symbol lengths 𝓛.
    pub symbol_lengths: Vec<usize>,
    /// `b` in `exp(b (t − ε))`, per slot.
    pub penalty_rate: f64,
    /// `ω`.
    pub dpp_weight: f64,
    /// Monte Carlo samples per mismatch estimate.
    pub mc_samples: usize,
    /// Cost per transmission, one per user.
    pub costs: Vec<f64>,
    pub cost_cap: f64,
    pub feature_dim: usize,
    pub task_dim: usize,
    /// Encoder capacity; every entry of `symbol_lengths` must fit.
    pub max_symbols: usize,
    /// AR(1) correlation of the feature source between slots.
    pub source_correlation: f64,
    pub block_length: u64,
    pub noise_psd_dbm_hz: f64,
    /// Overrides the PSD-derived noise power when set.
    pub noise_power_dbm: Option<f64>,
    pub pathloss: PathLossConfig,
    pub slots: u64,
    pub seed: u64,
    pub ao_max_rounds: usize,
    pub ao_rel_tol: f64,
    /// Step order of the alternating optimization; defaults per mode.
    pub ao_order: Option<AoOrder>,
    pub alpha_search_cap: usize,
    pub sca_max_iters: usize,
    pub sca_tol: f64,
    pub zf_iterations: usize,
    pub zf_step: f64,
    pub optimize_receive: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_users: 4,
            tx_antennas: 4,
            rx_antennas: 2,
            power_budget_dbm: 30.0,
            delay_budget_s: 1e-3,
            bandwidth_hz: 5e6,
            symbol_lengths: vec![8, 16, 24, 32],
            penalty_rate: 0.1,
            dpp_weight: 10.0,
            mc_samples: 32,
            costs: vec![1.0; 4],
            cost_cap: 0.5,
            feature_dim: 32,
            task_dim: 8,
            max_symbols: 32,
            source_correlation: 0.95,
            block_length: 10,
            noise_psd_dbm_hz: -174.0,
            noise_power_dbm: None,
            pathloss: PathLossConfig {
                enabled: true,
                distances_km: vec![0.1, 0.15, 0.2, 0.25],
                shadowing: false,
                shadowing_std_db: 6.0,
            },
            slots: 1000,
            seed: 0,
            ao_max_rounds: 10,
            ao_rel_tol: 1e-4,
            ao_order: None,
            alpha_search_cap: 16,
            sca_max_iters: 30,
            sca_tol: 1e-4,
            zf_iterations: 500,
            zf_step: 1e-2,
            optimize_receive: true,
        }
    }
}

impl SystemConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn power_budget_w(&self) -> f64 {
        dbm_to_watts(self.power_budget_dbm)
    }

    /// `σ²` in watts, the same for every user.
    pub fn noise_variance_w(&self) -> Result<f64> {
        match self.noise_power_dbm {
            Some(dbm) => Ok(dbm_to_watts(dbm)),
            None => noise_power(self.bandwidth_hz, self.noise_psd_dbm_hz),
        }
    }

    /// Spatial streams per user.
    pub fn streams(&self, mode: Mode) -> usize {
        match mode {
            Mode::Zf => 1,
            _ => self.rx_antennas.min(self.tx_antennas),
        }
    }

    /// Sorted, deduplicated 𝓛.
    pub fn length_set(&self) -> Vec<usize> {
        let mut set = self.symbol_lengths.clone();
        set.sort_unstable();
        set.dedup();
        set
    }

    pub fn scheduler_options(&self, mode: BeamformingMode) -> SchedulerOptions {
        let mut opts = SchedulerOptions::new(mode);
        opts.order = self.ao_order.unwrap_or(opts.order);
        opts.max_rounds = self.ao_max_rounds;
        opts.rel_tol = self.ao_rel_tol;
        opts.alpha_cap = self.alpha_search_cap;
        opts.sca = ScaOptions {
            max_iters: self.sca_max_iters,
            tol_obj: self.sca_tol,
            optimize_receive: self.optimize_receive,
            ..ScaOptions::default()
        };
        opts.zf = ZfOptions { iterations: self.zf_iterations, step: self.zf_step, optimize_receive: self.optimize_receive };
        opts
    }

    /// Every violated constraint, in field order.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        need(self.num_users >= 1, "num_users must be at least 1".into());
        need(self.tx_antennas >= 1, "tx_antennas must be at least 1".into());
        need(self.rx_antennas >= 1, "rx_antennas must be at least 1".into());
        need(self.power_budget_dbm.is_finite(), "power_budget_dbm must be finite".into());
        need(self.delay_budget_s > 0.0 && self.delay_budget_s.is_finite(), "delay_budget_s must be > 0".into());
        need(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite(), "bandwidth_hz must be > 0".into());
        need(!self.symbol_lengths.is_empty(), "symbol_lengths must be nonempty".into());
        need(self.symbol_lengths.iter().all(|&l| l >= 1), "symbol_lengths entries must be positive".into());
        need(
            self.symbol_lengths.iter().all(|&l| l <= self.max_symbols),
            format!("symbol_lengths entries must not exceed max_symbols = {}", self.max_symbols),
        );
        need(self.penalty_rate > 0.0 && self.penalty_rate.is_finite(), "penalty_rate must be > 0".into());
        need(self.dpp_weight > 0.0 && self.dpp_weight.is_finite(), "dpp_weight must be > 0".into());
        need(self.mc_samples >= 1, "mc_samples must be at least 1".into());
        need(
            self.costs.len() == self.num_users,
            format!("costs has {} entries for {} users", self.costs.len(), self.num_users),
        );
        need(self.costs.iter().all(|c| *c >= 0.0 && c.is_finite()), "costs must be >= 0".into());
        need(self.cost_cap > 0.0 && self.cost_cap.is_finite(), "cost_cap must be > 0".into());
        need(self.feature_dim >= 1 && self.task_dim >= 1, "feature_dim and task_dim must be positive".into());
        need(
            self.feature_dim <= 2 * self.max_symbols,
            "feature_dim must not exceed 2 * max_symbols (the encoder must be injective)".into(),
        );
        need(
            (-1.0..=1.0).contains(&self.source_correlation),
            "source_correlation must lie in [-1, 1]".into(),
        );
        need(self.block_length >= 1, "block_length must be at least 1".into());
        need(self.noise_psd_dbm_hz.is_finite(), "noise_psd_dbm_hz must be finite".into());
        need(self.noise_power_dbm.is_none_or(f64::is_finite), "noise_power_dbm must be finite".into());
        if self.pathloss.enabled {
            need(
                self.pathloss.distances_km.len() == self.num_users,
                format!("pathloss.distances_km has {} entries for {} users", self.pathloss.distances_km.len(), self.num_users),
            );
            need(self.pathloss.distances_km.iter().all(|d| *d > 0.0), "pathloss distances must be > 0".into());
        }
        need(self.ao_max_rounds >= 1, "ao_max_rounds must be at least 1".into());
        need(self.ao_rel_tol >= 0.0, "ao_rel_tol must be >= 0".into());
        need(
            self.num_users <= self.alpha_search_cap,
            format!(
                "num_users = {} exceeds alpha_search_cap = {}; exhaustive actuation search needs 2^U evaluations",
                self.num_users, self.alpha_search_cap
            ),
        );
        need(self.zf_step > 0.0, "zf_step must be > 0".into());
        if mode == Mode::Zf {
            need(self.rx_antennas == 1, "zf mode requires rx_antennas = 1".into());
            need(
                self.num_users <= self.tx_antennas,
                "zf mode requires num_users <= tx_antennas".into(),
            );
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let cfg = SystemConfig::default();
        cfg.validate(Mode::Sca).unwrap();
        let back = SystemConfig::from_json_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!((cfg.power_budget_w() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(SystemConfig::from_json_str(r#"{"num_user": 3}"#), Err(Error::Json(_))));
        let cfg = SystemConfig::from_json_str(r#"{"slots": 7}"#).unwrap();
        assert_eq!(cfg.slots, 7);
    }

    #[test]
    fn validation_lists_every_field() {
        let cfg = SystemConfig { mc_samples: 0, symbol_lengths: vec![], dpp_weight: 0.0, ..Default::default() };
        match cfg.validate(Mode::Zf) {
            Err(Error::Config(msgs)) => {
                let all = msgs.join("\n");
                for key in ["mc_samples", "symbol_lengths", "dpp_weight", "rx_antennas"] {
                    assert!(all.contains(key), "{key} missing from {all}");
                }
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
