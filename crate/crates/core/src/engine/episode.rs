//! Time-slotted episode driver.

use serde::{Deserialize, Serialize};

use crate::aois::{receiver_mismatch, AoisState, Delivery};
use crate::beamformer::BeamformerSet;
use crate::channel::{apply_downlink_with_noise, ChannelState, FadingProcess};
use crate::engine::config::{Mode, SystemConfig};
use crate::error::Result;
use crate::linalg::{frob_sq, identity, sample_cn_vector, CMat, CVec, RVec};
use crate::lyapunov::{prop1_check, QueueState, StabilityReport};
use crate::rate::{mimo_rate, rate_floor, transmission_delay};
use crate::rng::{stream, Stream, StreamRng};
use crate::sca::channel_inversion_init;
use crate::scheduler::{ao_round, BeamformingMode, SlotContext, RATE_TOL};
use crate::semantics::{receive_and_decode, split_chunks, NoiseBank, SemanticModel, SourceProcess};

/// One user in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub user: usize,
    pub alpha: u8,
    pub length: usize,
    /// Queue after the slot's update.
    pub queue: f64,
    pub last_update: u64,
    pub aois: f64,
    /// Mismatch between the current feature and the receiver's estimate.
    pub mismatch: f64,
    pub rate_bps_hz: f64,
    pub delay_s: Option<f64>,
    /// Mismatch of the update delivered this slot, if any.
    pub g_delivered: Option<f64>,
    pub power_w: f64,
    pub delivered: u8,
}

/// One optimizer iteration inside a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    /// Index of the optimizer call within the slot.
    pub call: usize,
    pub iteration: usize,
    pub objective: f64,
    pub std_error: Option<f64>,
    pub power: Option<f64>,
    pub budget_residual: Option<f64>,
}

/// Per-slot Lyapunov audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub slot: u64,
    pub gamma_before: f64,
    pub gamma_after: f64,
    pub bound: f64,
    pub holds: bool,
    /// Smallest `Q_i(t)/t − ((1/t) Σ α_i c_i − c_max)` over users.
    pub min_telescoping_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub seed: u64,
    pub slots: u64,
    pub users: usize,
    /// `(1/T) Σ_t Σ_i Δ_i(t)`.
    pub avg_aois: f64,
    pub avg_aois_per_user: Vec<f64>,
    /// `(1/T) Σ_t α_i(t) c_i`.
    pub avg_cost_per_user: Vec<f64>,
    pub avg_mismatch: f64,
    pub transmit_fraction: f64,
    pub lost_updates: u64,
    pub drift_violations: u64,
    pub telescoping_violations: u64,
    pub max_power_w: f64,
    pub stability: Option<StabilityReport>,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub config: SystemConfig,
    pub records: Vec<SlotRecord>,
    pub trace: Vec<TraceRecord>,
    pub drift: Vec<DriftRecord>,
    pub summary: Summary,
}

/// Slot-level decision before the transmission is realized.
struct Plan {
    alpha: Vec<bool>,
    lengths: Vec<usize>,
    beamformers: BeamformerSet,
}

fn silent(cfg: &SystemConfig, streams: usize) -> Result<BeamformerSet> {
    BeamformerSet::new(
        vec![CMat::zeros(cfg.tx_antennas, streams); cfg.num_users],
        vec![identity(cfg.rx_antennas); cfg.num_users],
    )
}

fn link_rate(channel: &ChannelState, bf: &BeamformerSet, user: usize) -> Result<f64> {
    mimo_rate(&channel.matrices[user], &bf.transmit, user, &bf.receive[user], channel.noise_variance[user])
}

/// Longest length whose rate floor holds, or the shortest one.
fn longest_feasible(rate: f64, set: &[usize], cfg: &SystemConfig) -> usize {
    set.iter()
        .rev()
        .copied()
        .find(|&l| rate + RATE_TOL >= rate_floor(l, cfg.bandwidth_hz, cfg.delay_budget_s))
        .unwrap_or(set[0])
}

/// Transmit every scheduled user's encoded feature and return what each receiver decodes.
fn realize(
    model: &SemanticModel,
    channel: &ChannelState,
    plan: &Plan,
    features: &[RVec],
    streams: usize,
    deliverable: &[bool],
    rng: &mut StreamRng,
) -> Result<Vec<Option<RVec>>> {
    let n = features.len();
    let mut chunks: Vec<Vec<CVec>> = vec![Vec::new(); n];
    for i in 0..n {
        if plan.alpha[i] {
            chunks[i] = split_chunks(&model.encode(&features[i], plan.lengths[i])?, streams);
        }
    }
    let count = chunks.iter().map(Vec::len).max().unwrap_or(0);
    let mut received: Vec<Vec<CVec>> = vec![Vec::with_capacity(count); n];
    for k in 0..count {
        let symbols: Vec<CVec> = (0..n)
            .map(|j| chunks[j].get(k).cloned().unwrap_or_else(|| CVec::zeros(streams)))
            .collect();
        let noise: Vec<CVec> = (0..n).map(|_| sample_cn_vector(channel.rx_antennas(), rng)).collect();
        let y = apply_downlink_with_noise(channel, &plan.beamformers, &symbols, &noise)?;
        for (i, yi) in y.into_iter().enumerate() {
            received[i].push(yi);
        }
    }
    (0..n)
        .map(|i| {
            if plan.alpha[i] && deliverable[i] {
                let used = plan.lengths[i].div_ceil(streams);
                receive_and_decode(model, plan.lengths[i], &plan.beamformers.receive[i], streams, &received[i][..used])
                    .map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Simulate `cfg.slots` slots under `mode`; fully determined by `(cfg, mode)`.
pub fn run_episode(cfg: &SystemConfig, mode: Mode) -> Result<EpisodeResult> {
    cfg.validate(mode)?;
    let n = cfg.num_users;
    let seed = cfg.seed;
    let streams = cfg.streams(mode);
    let p_max = cfg.power_budget_w();
    let sigma2 = cfg.noise_variance_w()?;
    let length_set = cfg.length_set();
    let model = SemanticModel::random(
        cfg.feature_dim,
        cfg.max_symbols,
        cfg.task_dim,
        &mut stream(seed, Stream::Model, 0, 0),
    )?;
    let mut sources = (0..n)
        .map(|i| SourceProcess::new(cfg.feature_dim, cfg.source_correlation, stream(seed, Stream::Source, i as u64, 0)))
        .collect::<Result<Vec<_>>>()?;
    let initial: Vec<RVec> = sources.iter().map(|s| s.current().clone()).collect();
    let mut aois = AoisState::warm_start(&model, &initial, cfg.penalty_rate)?;
    let mut queues = QueueState::new(cfg.costs.clone(), cfg.cost_cap)?;
    let fading = FadingProcess {
        num_users: n,
        rx_antennas: cfg.rx_antennas,
        tx_antennas: cfg.tx_antennas,
        block_length: cfg.block_length,
        noise_variance: vec![sigma2; n],
        pathloss: cfg.pathloss.clone(),
        seed,
    };
    let sched = match mode {
        Mode::Sca => Some(cfg.scheduler_options(BeamformingMode::Sca)),
        Mode::Zf => Some(cfg.scheduler_options(BeamformingMode::Zf)),
        _ => None,
    };
    let chunks = length_set[length_set.len() - 1].div_ceil(streams);

    let mut records = Vec::with_capacity((cfg.slots as usize) * n);
    let mut trace = Vec::new();
    let mut drift = Vec::with_capacity(cfg.slots as usize);
    let mut sum_aois = vec![0.0; n];
    let mut sum_total = 0.0;
    let mut sum_mismatch = 0.0;
    let (mut transmissions, mut lost, mut drift_bad, mut slack_bad) = (0u64, 0u64, 0u64, 0u64);
    let mut max_power: f64 = 0.0;

    for t in 1..=cfg.slots {
        let features: Vec<RVec> = sources.iter_mut().map(|s| s.advance().clone()).collect();
        let channel = fading.state_at(t)?;
        let plan = match (mode, &sched) {
            (Mode::Sca | Mode::Zf, Some(opts)) => {
                let banks = (0..n)
                    .map(|i| {
                        let mut rng = stream(seed, Stream::EstimatorNoise, t, i as u64);
                        NoiseBank::draw(cfg.mc_samples, chunks, cfg.rx_antennas, streams, n, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let ctx = SlotContext {
                    slot: t,
                    model: &model,
                    channel: &channel,
                    features: &features,
                    aois: &aois,
                    queues: &queues.queues,
                    costs: &cfg.costs,
                    c_max: cfg.cost_cap,
                    omega: cfg.dpp_weight,
                    length_set: &length_set,
                    bandwidth_hz: cfg.bandwidth_hz,
                    delay_budget_s: cfg.delay_budget_s,
                    p_max,
                    banks: &banks,
                    streams,
                };
                let out = ao_round(&ctx, opts)?;
                let mut call = 0;
                for rows in &out.sca_traces {
                    trace.extend(rows.iter().map(|r| TraceRecord {
                        slot: t,
                        call,
                        iteration: r.iteration,
                        objective: r.objective,
                        std_error: Some(r.std_error),
                        power: Some(r.power),
                        budget_residual: None,
                    }));
                    call += 1;
                }
                for rows in &out.zf_traces {
                    trace.extend(rows.iter().map(|r| TraceRecord {
                        slot: t,
                        call,
                        iteration: r.iteration,
                        objective: r.objective,
                        std_error: None,
                        power: None,
                        budget_residual: Some(r.budget_residual),
                    }));
                    call += 1;
                }
                Plan { alpha: out.decision.alpha, lengths: out.decision.lengths, beamformers: out.beamformers }
            }
            (Mode::Always, _) => {
                let bf = channel_inversion_init(&channel, &vec![true; n], streams, p_max)?;
                let lengths = (0..n)
                    .map(|i| Ok(longest_feasible(link_rate(&channel, &bf, i)?, &length_set, cfg)))
                    .collect::<Result<Vec<_>>>()?;
                Plan { alpha: vec![true; n], lengths, beamformers: bf }
            }
            _ => Plan { alpha: vec![false; n], lengths: vec![length_set[0]; n], beamformers: silent(cfg, streams)? },
        };

        let rates = (0..n)
            .map(|i| if plan.alpha[i] { link_rate(&channel, &plan.beamformers, i) } else { Ok(0.0) })
            .collect::<Result<Vec<f64>>>()?;
        let deliverable: Vec<bool> = (0..n)
            .map(|i| plan.alpha[i] && rates[i] + RATE_TOL >= rate_floor(plan.lengths[i], cfg.bandwidth_hz, cfg.delay_budget_s))
            .collect();
        let mut link_rng = stream(seed, Stream::LinkNoise, t, 0);
        let decoded = realize(&model, &channel, &plan, &features, streams, &deliverable, &mut link_rng)?;

        let mut slot_total = 0.0;
        let mut values = vec![0.0; n];
        let mut delivered_g = vec![None; n];
        for i in 0..n {
            let value = match &decoded[i] {
                Some(z_hat) => {
                    let g = receiver_mismatch(&model, &features[i], z_hat)?;
                    delivered_g[i] = Some(g);
                    aois.evolve(&model, i, t, &features[i], true, Some(Delivery { g, z_hat: z_hat.clone() }))?
                }
                None => aois.evolve(&model, i, t, &features[i], false, None)?,
            };
            values[i] = value;
            sum_aois[i] += value;
            slot_total += value;
        }
        sum_total += slot_total;
        let step = queues.step(&plan.alpha)?;
        let slack = (0..n).map(|i| queues.telescoping_slack(i)).fold(f64::INFINITY, f64::min);
        if !step.holds() {
            drift_bad += 1;
        }
        if slack < -1e-12 {
            slack_bad += 1;
        }
        drift.push(DriftRecord {
            slot: t,
            gamma_before: step.gamma_before,
            gamma_after: step.gamma_after,
            bound: step.bound,
            holds: step.holds(),
            min_telescoping_slack: slack,
        });
        max_power = max_power.max(plan.beamformers.total_power());
        for i in 0..n {
            let mismatch = receiver_mismatch(&model, &features[i], &aois.recovered[i])?;
            sum_mismatch += mismatch;
            if plan.alpha[i] {
                transmissions += 1;
                if !deliverable[i] {
                    lost += 1;
                }
            }
            records.push(SlotRecord {
                slot: t,
                user: i,
                alpha: plan.alpha[i] as u8,
                length: plan.lengths[i],
                queue: queues.queues[i],
                last_update: aois.last_update[i],
                aois: values[i],
                mismatch,
                rate_bps_hz: rates[i],
                delay_s: plan.alpha[i]
                    .then(|| transmission_delay(plan.lengths[i] as f64, cfg.bandwidth_hz, rates[i])),
                g_delivered: delivered_g[i],
                power_w: frob_sq(&plan.beamformers.transmit[i]),
                delivered: decoded[i].is_some() as u8,
            });
        }
    }

    let t = cfg.slots as f64;
    let per_slot = |x: f64| if cfg.slots == 0 { 0.0 } else { x / t };
    let summary = Summary {
        mode,
        seed,
        slots: cfg.slots,
        users: n,
        avg_aois: per_slot(sum_total),
        avg_aois_per_user: sum_aois.iter().map(|&s| per_slot(s)).collect(),
        avg_cost_per_user: queues.cumulative_cost.iter().map(|&c| per_slot(c)).collect(),
        avg_mismatch: per_slot(sum_mismatch) / n as f64,
        transmit_fraction: per_slot(transmissions as f64) / n as f64,
        lost_updates: lost,
        drift_violations: drift_bad,
        telescoping_violations: slack_bad,
        max_power_w: max_power,
        stability: if cfg.slots > 0 { Some(prop1_check(&queues, 0.01 * cfg.cost_cap, 0.05 * cfg.cost_cap)?) } else { None },
    };
    Ok(EpisodeResult { config: cfg.clone(), records, trace, drift, summary })
}
