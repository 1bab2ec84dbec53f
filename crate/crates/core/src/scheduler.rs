//! Per-slot decisions: actuation search, symbol-length search and the alternating
//! optimization that ties them to beamformer design.

use serde::{Deserialize, Serialize};

use crate::aois::AoisState;
use crate::beamformer::BeamformerSet;
use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::linalg::{RVec, C64};
use crate::lyapunov::dpp_objective;
use crate::rate::{mimo_rate, rate_floor};
use crate::sca::{channel_inversion_init, optimize, ScaOptions, ScaProblem, ScaTraceRow};
use crate::semantics::{estimate_g, GradRequest, LinkView, NoiseBank, SemanticModel};
use crate::zf::{optimize_zf, power_coefficients, rate_floor_powers, ZfOptions, ZfProblem, ZfTraceRow};

/// Rate slack tolerated when checking a rate floor.
pub const RATE_TOL: f64 = 1e-9;

/// Final per-slot decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotDecision {
    pub alpha: Vec<bool>,
    pub lengths: Vec<usize>,
    pub objective_value: f64,
    /// Every transmitting user meets its rate floor.
    pub feasible: bool,
}

/// Exhaustive minimization of `Σ Q_i (α_i c_i − c_max) + ω Σ Δ_i(α_i)` over `α ∈ {0,1}^U`.
///
/// Exact ties go to fewer transmissions, then to the lexicographically smaller vector.
pub fn search_alpha(
    queues: &[f64],
    costs: &[f64],
    c_max: f64,
    omega: f64,
    aois_if_tx: &[f64],
    aois_if_skip: &[f64],
    cap: usize,
) -> Result<(Vec<bool>, f64)> {
    let n = queues.len();
    if costs.len() != n || aois_if_tx.len() != n || aois_if_skip.len() != n {
        return Err(Error::shape("actuation search inputs differ in length"));
    }
    if n > cap || n >= usize::BITS as usize {
        return Err(Error::config(format!(
            "exhaustive actuation search over {n} users needs 2^{n} evaluations; \
             raise alpha_search_cap above {cap} only if that is affordable"
        )));
    }
    let mut best: Option<(f64, u32, Vec<bool>)> = None;
    for mask in 0..(1usize << n) {
        let alpha: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let aois: Vec<f64> = (0..n).map(|i| if alpha[i] { aois_if_tx[i] } else { aois_if_skip[i] }).collect();
        let value = dpp_objective(queues, &alpha, costs, c_max, omega, &aois)?;
        let count = mask.count_ones();
        let better = match &best {
            None => true,
            Some((v, c, a)) => value < *v || (value == *v && (count < *c || (count == *c && alpha < *a))),
        };
        if better {
            best = Some((value, count, alpha));
        }
    }
    let (value, _, alpha) = best.expect("at least the empty action is enumerated");
    Ok((alpha, value))
}

/// Result of a per-user length search.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthChoice {
    pub lengths: Vec<usize>,
    pub feasible: Vec<bool>,
    pub objective: f64,
}

/// Per user, the `L ∈ 𝓛` minimizing `objective[i][k]` (for `L = length_set[k]`) subject to
/// `R_i ≥ L/(B T_max)`. Ties go to the smaller length; users with no feasible length get
/// `min 𝓛` and `feasible = false`.
pub fn search_lengths(
    objective: &[Vec<f64>],
    rates: &[f64],
    bandwidth_hz: f64,
    delay_budget_s: f64,
    length_set: &[usize],
) -> Result<LengthChoice> {
    if length_set.is_empty() {
        return Err(Error::config("symbol length set is empty"));
    }
    if objective.len() != rates.len() || objective.iter().any(|row| row.len() != length_set.len()) {
        return Err(Error::shape("length objective table does not match users and lengths"));
    }
    let min_len = *length_set.iter().min().expect("nonempty");
    let mut choice = LengthChoice { lengths: Vec::new(), feasible: Vec::new(), objective: 0.0 };
    for (row, &rate) in objective.iter().zip(rates) {
        let mut best: Option<(f64, usize)> = None;
        for (k, &l) in length_set.iter().enumerate() {
            if rate + RATE_TOL < rate_floor(l, bandwidth_hz, delay_budget_s) {
                continue;
            }
            let v = row[k];
            let better = match best {
                None => true,
                Some((bv, bl)) => v < bv || (v == bv && l < bl),
            };
            if better {
                best = Some((v, l));
            }
        }
        match best {
            Some((v, l)) => {
                choice.lengths.push(l);
                choice.feasible.push(true);
                choice.objective += v;
            }
            None => {
                choice.lengths.push(min_len);
                choice.feasible.push(false);
            }
        }
    }
    Ok(choice)
}

/// Beamforming family used by a slot's alternating optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamformingMode {
    /// Multi-antenna receivers, SCA transceiver design.
    Sca,
    /// Single-antenna receivers, zero-forcing power design.
    Zf,
}

/// Step order inside one alternating-optimization round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AoOrder {
    /// Actuation, then beamformers, then lengths.
    AlphaFirst,
    /// Beamformers, then actuation, then lengths.
    BeamformFirst,
}

impl AoOrder {
    pub fn default_for(mode: BeamformingMode) -> Self {
        match mode {
            BeamformingMode::Sca => AoOrder::AlphaFirst,
            BeamformingMode::Zf => AoOrder::BeamformFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerOptions {
    pub mode: BeamformingMode,
    pub order: AoOrder,
    pub max_rounds: usize,
    pub rel_tol: f64,
    pub alpha_cap: usize,
    pub sca: ScaOptions,
    pub zf: ZfOptions,
}

impl SchedulerOptions {
    pub fn new(mode: BeamformingMode) -> Self {
        Self {
            mode,
            order: AoOrder::default_for(mode),
            max_rounds: 10,
            rel_tol: 1e-4,
            alpha_cap: 16,
            sca: ScaOptions::default(),
            zf: ZfOptions::default(),
        }
    }
}

/// Everything a slot's decision depends on.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    pub slot: u64,
    pub model: &'a SemanticModel,
    pub channel: &'a ChannelState,
    pub features: &'a [RVec],
    pub aois: &'a AoisState,
    pub queues: &'a [f64],
    pub costs: &'a [f64],
    pub c_max: f64,
    pub omega: f64,
    /// Sorted ascending, no duplicates.
    pub length_set: &'a [usize],
    pub bandwidth_hz: f64,
    pub delay_budget_s: f64,
    pub p_max: f64,
    /// Per-user common random numbers shared by every candidate compared in this slot.
    pub banks: &'a [NoiseBank],
    pub streams: usize,
}

/// Scheduler output for one slot.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    pub decision: SlotDecision,
    /// Transmit matrices of skipped users are zero.
    pub beamformers: BeamformerSet,
    pub rates: Vec<f64>,
    /// Estimated mismatch of each transmitting user.
    pub g_estimate: Vec<Option<f64>>,
    pub aois_if_skip: Vec<f64>,
    /// DPP objective at the starting point and after every round.
    pub dpp_history: Vec<f64>,
    pub sca_traces: Vec<Vec<ScaTraceRow>>,
    pub zf_traces: Vec<Vec<ZfTraceRow>>,
}

/// DPP objective of one candidate `(α, L, beamformers)`.
#[derive(Debug, Clone)]
struct Candidate {
    alpha: Vec<bool>,
    lengths: Vec<usize>,
    beamformers: BeamformerSet,
    value: f64,
    rates: Vec<f64>,
    g: Vec<Option<f64>>,
    feasible: bool,
}

fn masked(bf: &BeamformerSet, alpha: &[bool]) -> BeamformerSet {
    let mut out = bf.clone();
    for (v, &a) in out.transmit.iter_mut().zip(alpha) {
        if !a {
            v.fill(C64::new(0.0, 0.0));
        }
    }
    out
}

impl SlotContext<'_> {
    fn users(&self) -> usize {
        self.channel.num_users()
    }

    fn floor(&self, length: usize) -> f64 {
        rate_floor(length, self.bandwidth_hz, self.delay_budget_s)
    }

    fn rate(&self, bf: &BeamformerSet, user: usize) -> Result<f64> {
        mimo_rate(
            &self.channel.matrices[user],
            &bf.transmit,
            user,
            &bf.receive[user],
            self.channel.noise_variance[user],
        )
    }

    fn g(&self, bf: &BeamformerSet, user: usize, length: usize) -> Result<f64> {
        let link = LinkView {
            channel: &self.channel.matrices[user],
            transmit: &bf.transmit,
            receive: &bf.receive[user],
            noise_variance: self.channel.noise_variance[user],
            user,
        };
        Ok(estimate_g(self.model, &self.features[user], length, &link, &self.banks[user], GradRequest::NONE)?.g_value)
    }

    /// AoIS a user would end the slot with if it transmits: the estimated mismatch when
    /// the rate floor holds, the stale value otherwise (the update is lost).
    fn aois_if_tx(&self, bf: &BeamformerSet, user: usize, length: usize, stale: f64) -> Result<(f64, f64, Option<f64>)> {
        let rate = self.rate(bf, user)?;
        if rate + RATE_TOL >= self.floor(length) {
            let g = self.g(bf, user, length)?;
            Ok((g, rate, Some(g)))
        } else {
            Ok((stale, rate, None))
        }
    }

    fn evaluate(&self, alpha: Vec<bool>, lengths: Vec<usize>, bf: &BeamformerSet, stale: &[f64]) -> Result<Candidate> {
        let beamformers = masked(bf, &alpha);
        let n = self.users();
        let mut aois = stale.to_vec();
        let mut rates = vec![0.0; n];
        let mut g = vec![None; n];
        let mut feasible = true;
        for i in 0..n {
            if !alpha[i] {
                continue;
            }
            let (a, r, gi) = self.aois_if_tx(&beamformers, i, lengths[i], stale[i])?;
            aois[i] = a;
            rates[i] = r;
            g[i] = gi;
            feasible &= gi.is_some();
        }
        let value = dpp_objective(self.queues, &alpha, self.costs, self.c_max, self.omega, &aois)?;
        Ok(Candidate { alpha, lengths, beamformers, value, rates, g, feasible })
    }
}

/// Mutable state carried across the steps of one slot.
struct AoState<'a> {
    ctx: &'a SlotContext<'a>,
    opts: &'a SchedulerOptions,
    stale: Vec<f64>,
    best: Candidate,
    /// Unmasked beamformers used to score transmission of currently silent users.
    probe: BeamformerSet,
    zf_q: Vec<f64>,
    zf_u: Vec<C64>,
    sca_traces: Vec<Vec<ScaTraceRow>>,
    zf_traces: Vec<Vec<ZfTraceRow>>,
}

impl AoState<'_> {
    fn accept(&mut self, cand: Candidate) -> bool {
        if cand.value <= self.best.value {
            self.best = cand;
            true
        } else {
            false
        }
    }

    /// Best transmit-branch AoIS of `user` on `bf` over every length whose floor holds.
    fn best_tx(&self, bf: &BeamformerSet, user: usize) -> Result<(f64, usize)> {
        let ctx = self.ctx;
        let rate = ctx.rate(bf, user)?;
        let mut best = (self.stale[user], self.best.lengths[user]);
        let mut found = false;
        for &l in ctx.length_set {
            if rate + RATE_TOL < ctx.floor(l) {
                continue;
            }
            let g = ctx.g(bf, user, l)?;
            if !found || g < best.0 {
                best = (g, l);
                found = true;
            }
        }
        Ok(best)
    }

    /// Scores each user's transmit branch at its best feasible length, so that a silent
    /// user is not judged by a length chosen for a different precoder.
    fn alpha_step(&mut self) -> Result<()> {
        let ctx = self.ctx;
        let n = ctx.users();
        let mut tx = vec![0.0; n];
        let mut lengths = self.best.lengths.clone();
        for i in 0..n {
            let bf = if self.best.alpha[i] { &self.best.beamformers } else { &self.probe };
            let (value, l) = self.best_tx(bf, i)?;
            tx[i] = value;
            lengths[i] = l;
        }
        let (alpha, _) = search_alpha(ctx.queues, ctx.costs, ctx.c_max, ctx.omega, &tx, &self.stale, self.opts.alpha_cap)?;
        // Newly enabled users transmit on the probe beamformers.
        let mut bf = self.best.beamformers.clone();
        for i in 0..n {
            if alpha[i] && !self.best.alpha[i] {
                bf.transmit[i] = self.probe.transmit[i].clone();
                bf.receive[i] = self.probe.receive[i].clone();
            }
        }
        let cand = ctx.evaluate(alpha, lengths, &bf, &self.stale)?;
        self.accept(cand);
        Ok(())
    }

    fn beamform_step(&mut self, set: &[usize], fresh: bool) -> Result<()> {
        match self.opts.mode {
            BeamformingMode::Sca => self.sca_step(set, fresh),
            BeamformingMode::Zf => self.zf_step(set, &self.opts.zf.clone()),
        }
    }

    fn sca_step(&mut self, set: &[usize], fresh: bool) -> Result<()> {
        let ctx = self.ctx;
        let n = ctx.users();
        if set.is_empty() {
            return Ok(());
        }
        let mut active = vec![false; n];
        for &i in set {
            active[i] = true;
        }
        let init = if fresh {
            channel_inversion_init(ctx.channel, &active, ctx.streams, ctx.p_max)?
        } else {
            masked(&self.best.beamformers, &active)
        };
        let weights: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        let floors: Vec<f64> = self.best.lengths.iter().map(|&l| ctx.floor(l)).collect();
        let problem = ScaProblem {
            model: ctx.model,
            channel: ctx.channel,
            features: ctx.features,
            lengths: &self.best.lengths,
            active: &active,
            weights: &weights,
            banks: ctx.banks,
            p_max: ctx.p_max,
            rate_floors: &floors,
        };
        let out = optimize(&problem, init, &self.opts.sca)?;
        self.sca_traces.push(out.trace);
        let cand = ctx.evaluate(active, self.best.lengths.clone(), &out.beamformers, &self.stale)?;
        self.accept(cand);
        Ok(())
    }

    /// Shrink lengths (and, as a last resort, the user set) until the ZF rate floors fit
    /// the power budget, always relieving the user with the largest `h_i p0_i`.
    fn fit_zf_floors(&self, set: &mut Vec<usize>, lengths: &mut [usize]) -> Result<()> {
        let ctx = self.ctx;
        let full = ctx.channel.stacked_miso()?;
        loop {
            if set.is_empty() {
                return Ok(());
            }
            let cols: Vec<_> = set.iter().map(|&i| full.column(i)).collect();
            let h = power_coefficients(&crate::linalg::CMat::from_columns(&cols))?;
            let ls: Vec<usize> = set.iter().map(|&i| lengths[i]).collect();
            let noise: Vec<f64> = set.iter().map(|&i| ctx.channel.noise_variance[i]).collect();
            let p0 = rate_floor_powers(&ls, ctx.bandwidth_hz, ctx.delay_budget_s, &noise);
            if h.dot(&p0) <= ctx.p_max {
                return Ok(());
            }
            let pos = (0..set.len())
                .max_by(|&a, &b| (h[a] * p0[a]).total_cmp(&(h[b] * p0[b])))
                .expect("nonempty set");
            let user = set[pos];
            match ctx.length_set.iter().rev().find(|&&l| l < lengths[user]) {
                Some(&shorter) => lengths[user] = shorter,
                None => {
                    set.remove(pos);
                }
            }
        }
    }

    /// Optimizes the precoder over `set`; the actuation vector is left unchanged.
    fn zf_step(&mut self, set: &[usize], zf_opts: &ZfOptions) -> Result<()> {
        let ctx = self.ctx;
        let n = ctx.users();
        let mut set = set.to_vec();
        let mut lengths = self.best.lengths.clone();
        self.fit_zf_floors(&mut set, &mut lengths)?;
        if set.is_empty() {
            return Ok(());
        }
        let weights: Vec<f64> = (0..n).map(|i| if set.contains(&i) { 1.0 } else { 0.0 }).collect();
        let problem = ZfProblem {
            model: ctx.model,
            channel: ctx.channel,
            features: ctx.features,
            lengths: &lengths,
            users: &set,
            weights: &weights,
            banks: ctx.banks,
            p_max: ctx.p_max,
            bandwidth_hz: ctx.bandwidth_hz,
            delay_budget_s: ctx.delay_budget_s,
        };
        let q0 = RVec::from_iterator(set.len(), set.iter().map(|&i| self.zf_q[i]));
        let u0: Vec<C64> = set.iter().map(|&i| self.zf_u[i]).collect();
        let out = optimize_zf(&problem, Some(&q0), Some(&u0), zf_opts)?;
        for (col, &i) in set.iter().enumerate() {
            self.zf_q[i] = out.state.q[col];
            self.zf_u[i] = out.state.u[col];
        }
        self.zf_traces.push(out.trace);
        self.probe = out.beamformers.clone();
        let cand = ctx.evaluate(self.best.alpha.clone(), lengths, &out.beamformers, &self.stale)?;
        self.accept(cand);
        Ok(())
    }

    fn length_step(&mut self) -> Result<()> {
        let ctx = self.ctx;
        let users: Vec<usize> = (0..ctx.users()).filter(|&i| self.best.alpha[i]).collect();
        if users.is_empty() {
            return Ok(());
        }
        let bf = &self.best.beamformers;
        let mut table = Vec::with_capacity(users.len());
        let mut rates = Vec::with_capacity(users.len());
        for &i in &users {
            let rate = ctx.rate(bf, i)?;
            let row = ctx
                .length_set
                .iter()
                .map(|&l| if rate + RATE_TOL >= ctx.floor(l) { ctx.g(bf, i, l) } else { Ok(f64::INFINITY) })
                .collect::<Result<Vec<f64>>>()?;
            table.push(row);
            rates.push(rate);
        }
        let choice = search_lengths(&table, &rates, ctx.bandwidth_hz, ctx.delay_budget_s, ctx.length_set)?;
        let mut lengths = self.best.lengths.clone();
        for (k, &i) in users.iter().enumerate() {
            lengths[i] = choice.lengths[k];
        }
        let cand = ctx.evaluate(self.best.alpha.clone(), lengths, bf, &self.stale)?;
        self.accept(cand);
        Ok(())
    }
}

/// Alternating optimization of one slot: rounds of actuation, beamformer and length steps
/// in `opts.order`, each kept only if it does not raise the DPP objective, until the
/// objective changes by less than `rel_tol` or `max_rounds` is reached.
pub fn ao_round(ctx: &SlotContext<'_>, opts: &SchedulerOptions) -> Result<SlotOutcome> {
    let n = ctx.users();
    if ctx.length_set.is_empty() {
        return Err(Error::config("symbol length set is empty"));
    }
    if [ctx.features.len(), ctx.queues.len(), ctx.costs.len(), ctx.banks.len(), ctx.aois.num_users()]
        .iter()
        .any(|&k| k != n)
    {
        return Err(Error::shape("slot context fields differ in user count"));
    }
    let stale = (0..n)
        .map(|i| ctx.aois.stale_value(ctx.model, i, ctx.slot, &ctx.features[i]))
        .collect::<Result<Vec<f64>>>()?;
    let min_len = ctx.length_set[0];
    let all: Vec<usize> = (0..n).collect();
    let silent = vec![false; n];
    let lengths = vec![min_len; n];
    let probe = match opts.mode {
        BeamformingMode::Sca => channel_inversion_init(ctx.channel, &vec![true; n], ctx.streams, ctx.p_max)?,
        BeamformingMode::Zf => {
            // Zero-forcing over every user at the shortest lengths, equal surplus split.
            BeamformerSet::new(
                vec![crate::linalg::CMat::zeros(ctx.channel.tx_antennas(), 1); n],
                vec![crate::linalg::CMat::from_element(1, 1, C64::new(1.0, 0.0)); n],
            )?
        }
    };
    let start = ctx.evaluate(silent, lengths, &probe, &stale)?;
    let mut st = AoState {
        ctx,
        opts,
        stale,
        best: start,
        probe,
        zf_q: vec![1.0; n],
        zf_u: vec![C64::new(1.0, 0.0); n],
        sca_traces: Vec::new(),
        zf_traces: Vec::new(),
    };
    if opts.mode == BeamformingMode::Zf && opts.order == AoOrder::AlphaFirst {
        // The actuation step needs a precoder to score transmissions against: use the
        // feasible starting point of the power parameterization.
        st.zf_step(&all, &ZfOptions { iterations: 0, ..opts.zf })?;
        st.zf_traces.clear();
    }
    let mut history = vec![st.best.value];
    for round in 0..opts.max_rounds {
        let before = st.best.value;
        let set_now = |s: &AoState| -> Vec<usize> { (0..n).filter(|&i| s.best.alpha[i]).collect() };
        match opts.order {
            AoOrder::AlphaFirst => {
                st.alpha_step()?;
                let set = set_now(&st);
                st.beamform_step(&set, round == 0)?;
                st.length_step()?;
            }
            AoOrder::BeamformFirst => {
                let set = if round == 0 { all.clone() } else { set_now(&st) };
                st.beamform_step(&set, round == 0)?;
                st.alpha_step()?;
                st.length_step()?;
            }
        }
        history.push(st.best.value);
        if (before - st.best.value).abs() <= opts.rel_tol * before.abs().max(1e-300) {
            break;
        }
    }
    let best = st.best;
    Ok(SlotOutcome {
        decision: SlotDecision {
            alpha: best.alpha,
            lengths: best.lengths,
            objective_value: best.value,
            feasible: best.feasible,
        },
        beamformers: best.beamformers,
        rates: best.rates,
        g_estimate: best.g,
        aois_if_skip: st.stale,
        dpp_history: history,
        sca_traces: st.sca_traces,
        zf_traces: st.zf_traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_block_fading;
    use crate::semantics::sample_source;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alpha_dominant_transmit_and_cost_only() {
        let (alpha, _) = search_alpha(&[0.0; 3], &[1.0; 3], 0.5, 1.0, &[0.1; 3], &[0.9; 3], 16).unwrap();
        assert_eq!(alpha, vec![true; 3]);
        let (alpha, _) = search_alpha(&[2.0; 3], &[1.0; 3], 0.5, 0.0, &[0.1; 3], &[0.9; 3], 16).unwrap();
        assert_eq!(alpha, vec![false; 3]);
        // Exact tie: skipping wins.
        let (alpha, _) = search_alpha(&[0.0], &[1.0], 0.5, 1.0, &[0.4], &[0.4], 16).unwrap();
        assert_eq!(alpha, vec![false]);
        assert!(matches!(search_alpha(&[0.0; 17], &[0.0; 17], 1.0, 1.0, &[0.0; 17], &[0.0; 17], 16), Err(Error::Config(_))));
    }

    #[test]
    fn lengths_monotone_and_binding() {
        let set = [2, 4, 8, 16];
        let obj = vec![vec![0.8, 0.6, 0.4, 0.2]];
        // B T_max = 1: floor of L is L bps/Hz.
        let c = search_lengths(&obj, &[100.0], 1.0, 1.0, &set).unwrap();
        assert_eq!(c.lengths, vec![16]);
        let c = search_lengths(&obj, &[3.0], 1.0, 1.0, &set).unwrap();
        assert_eq!((c.lengths[0], c.feasible[0]), (2, true));
        let c = search_lengths(&obj, &[1.0], 1.0, 1.0, &set).unwrap();
        assert_eq!((c.lengths[0], c.feasible[0]), (2, false));
        assert!(matches!(search_lengths(&obj, &[1.0], 1.0, 1.0, &[]), Err(Error::Config(_))));
    }

    pub(crate) struct Fixture {
        pub model: SemanticModel,
        pub channel: ChannelState,
        pub features: Vec<RVec>,
        pub aois: AoisState,
        pub banks: Vec<NoiseBank>,
        pub queues: Vec<f64>,
        pub costs: Vec<f64>,
        pub lengths: Vec<usize>,
        pub streams: usize,
    }

    pub(crate) fn fixture(seed: u64, users: usize, nr: usize, nt: usize) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = SemanticModel::random(8, 8, 4, &mut rng).unwrap();
        let h = (0..users).map(|_| sample_block_fading(nr, nt, &mut rng)).collect();
        let channel = ChannelState::new(h, vec![0.05; users], vec![0.0; users], 3).unwrap();
        let old: Vec<RVec> = (0..users).map(|_| sample_source(8, &mut rng)).collect();
        let features: Vec<RVec> = old.iter().map(|z| z * 0.6 + sample_source(8, &mut rng) * 0.8).collect();
        let aois = AoisState::warm_start(&model, &old, 0.2).unwrap();
        let streams = nr.min(nt);
        let banks = (0..users)
            .map(|_| NoiseBank::draw(8, 8usize.div_ceil(streams), nr, streams, users, &mut rng).unwrap())
            .collect();
        Fixture {
            model,
            channel,
            features,
            aois,
            banks,
            queues: (0..users).map(|i| 0.3 * i as f64).collect(),
            costs: vec![1.0; users],
            lengths: vec![2, 4, 8],
            streams,
        }
    }

    pub(crate) fn context(f: &Fixture) -> SlotContext<'_> {
        SlotContext {
            slot: 3,
            model: &f.model,
            channel: &f.channel,
            features: &f.features,
            aois: &f.aois,
            queues: &f.queues,
            costs: &f.costs,
            c_max: 0.5,
            omega: 2.0,
            length_set: &f.lengths,
            bandwidth_hz: 1.0,
            delay_budget_s: 1.0,
            p_max: 4.0,
            banks: &f.banks,
            streams: f.streams,
        }
    }

    fn non_increasing(h: &[f64]) -> bool {
        h.windows(2).all(|w| w[1] <= w[0])
    }

    #[test]
    fn zf_single_user_fills_power_and_maximizes_length() {
        let mut f = fixture(1, 1, 1, 4);
        f.queues = vec![0.0];
        f.channel.noise_variance = vec![1e-3];
        let ctx = context(&f);
        let mut opts = SchedulerOptions::new(BeamformingMode::Zf);
        opts.zf.iterations = 20;
        let out = ao_round(&ctx, &opts).unwrap();
        assert!(non_increasing(&out.dpp_history));
        assert_eq!(out.decision.alpha, vec![true]);
        assert!((out.beamformers.total_power() - 4.0).abs() < 1e-9);
        assert_eq!(out.decision.lengths, vec![8]);
    }

    #[test]
    fn ao_never_increases_dpp_and_is_deterministic() {
        for mode in [BeamformingMode::Sca, BeamformingMode::Zf] {
            let (nr, nt) = if mode == BeamformingMode::Sca { (2, 4) } else { (1, 4) };
            let f = fixture(2, 3, nr, nt);
            let ctx = context(&f);
            let mut opts = SchedulerOptions::new(mode);
            opts.zf.iterations = 30;
            opts.sca.max_iters = 8;
            let a = ao_round(&ctx, &opts).unwrap();
            let b = ao_round(&ctx, &opts).unwrap();
            assert!(non_increasing(&a.dpp_history), "{mode:?}: {:?}", a.dpp_history);
            assert_eq!(a.decision, b.decision);
            assert_eq!(a.beamformers, b.beamformers);
            assert!(a.beamformers.total_power() <= ctx.p_max + 1e-8);
        }
    }
}
