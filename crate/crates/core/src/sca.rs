//! Successive convex approximation for the MIMO transceivers.
//!
//! Each outer iteration linearizes the Monte Carlo mismatch objective around the current
//! beamformers, replaces every rate constraint by a concave quadratic minorizer built
//! from the log-det lower bound, solves the resulting convex QCQP for `{V_i}` and then
//! for each `U_i`, and moves a diminishing step towards the subproblem solution.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::beamformer::BeamformerSet;
use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_part, identity, inverse_hpd, logdet_hpd, realify_hermitian, trace_re, CMat, CVec, RVec,
    C64,
};
use crate::qcqp::{self, QcqpOptions, QuadConstraint};
use crate::rate::{interference_covariance, mimo_rate};
use crate::semantics::{estimate_g, GradRequest, LinkView, MismatchEstimate, NoiseBank, SemanticModel};

/// Right-hand side of the log-det minorizer, in nats:
/// `−tr(F₃⁻¹X₀F₄X₀ᴴF₃⁻¹(Y + XXᴴ)) + 2Re tr(F₄X₀ᴴF₃⁻¹X) + log det F₄ − tr(X₀ᴴY₀⁻¹X₀)`
/// with `F₃ = Y₀ + X₀X₀ᴴ` and `F₄ = I + X₀ᴴY₀⁻¹X₀`.
pub fn lemma1_lower_bound(x: &CMat, y: &CMat, x0: &CMat, y0: &CMat) -> Result<f64> {
    if x.shape() != x0.shape() || y.shape() != y0.shape() || y.nrows() != x.nrows() {
        return Err(Error::shape("X, Y, X0, Y0 shapes are inconsistent"));
    }
    let y0_inv = inverse_hpd(y0)?;
    let f3_inv = inverse_hpd(&(y0 + x0 * x0.adjoint()))?;
    let g = x0.adjoint() * &y0_inv * x0;
    let f4 = hermitian_part(&(identity(x0.ncols()) + &g));
    let f1 = &f3_inv * x0 * &f4 * x0.adjoint() * &f3_inv;
    let quad = trace_re(&(&f1 * (y + x * x.adjoint())));
    let lin = 2.0 * (&f4 * x0.adjoint() * &f3_inv * x).trace().re;
    Ok(-quad + lin + logdet_hpd(&f4)? - trace_re(&g))
}

/// `log det(I + Xᴴ Y⁻¹ X)` in nats.
pub fn logdet_rate_nats(x: &CMat, y: &CMat) -> Result<f64> {
    let y_inv = inverse_hpd(y)?;
    logdet_hpd(&hermitian_part(&(identity(x.ncols()) + x.adjoint() * y_inv * x)))
}

/// Minorizer coefficients of one user's rate at an expansion point.
#[derive(Debug, Clone)]
pub struct SurrogateCoefficients {
    pub f1: CMat,
    pub f2: CMat,
    pub f3: CMat,
    pub f4: CMat,
    pub x0: CMat,
    /// Interference-plus-noise covariance at the expansion point.
    pub y0: CMat,
    /// `log det F₄ − tr(X₀ᴴ Y₀⁻¹ X₀)` in nats.
    pub const_term: f64,
}

impl SurrogateCoefficients {
    pub fn build(h: &CMat, all_v: &[CMat], u: &CMat, sigma2: f64, user: usize) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::domain("rate surrogate requires a positive noise variance"));
        }
        let y0 = interference_covariance(h, all_v, user, u, sigma2);
        let x0 = u.adjoint() * h * &all_v[user];
        let y0_inv = inverse_hpd(&y0)?;
        let f3 = hermitian_part(&(&y0 + &x0 * x0.adjoint()));
        let f3_inv = inverse_hpd(&f3)?;
        let g = x0.adjoint() * &y0_inv * &x0;
        let f4 = hermitian_part(&(identity(x0.ncols()) + &g));
        let f1 = hermitian_part(&(&f3_inv * &x0 * &f4 * x0.adjoint() * &f3_inv));
        let f2 = &f4 * x0.adjoint() * &f3_inv * C64::new(2.0, 0.0);
        let const_term = logdet_hpd(&f4)? - trace_re(&g);
        Ok(Self { f1, f2, f3, f4, x0, y0, const_term })
    }

    /// `R̃_i` in bps/Hz at `(all_v, u)`; concave in either argument with the other fixed.
    pub fn value(&self, h: &CMat, all_v: &[CMat], u: &CMat, sigma2: f64, user: usize) -> f64 {
        let uh_h = u.adjoint() * h;
        let lin = (&self.f2 * &uh_h * &all_v[user]).trace().re;
        let mut quad = sigma2 * trace_re(&self.f1);
        for v in all_v {
            let a = &uh_h * v;
            quad += trace_re(&(&self.f1 * &a * a.adjoint()));
        }
        (lin - quad + self.const_term) / LN_2
    }
}

fn to_real(v: &CVec) -> RVec {
    let n = v.len();
    RVec::from_fn(2 * n, |k, _| if k < n { v[k].re } else { v[k - n].im })
}

fn from_real(y: &RVec) -> CVec {
    let n = y.len() / 2;
    CVec::from_fn(n, |k, _| C64::new(y[k], y[k + n]))
}

/// `f(v) = vᴴ Q v + Re(lᴴ v) + s` in real coordinates.
fn complex_quad(q: &CMat, lin: &CVec, s: f64, tag: Option<usize>) -> QuadConstraint {
    QuadConstraint { p: realify_hermitian(q) * 2.0, q: to_real(lin), s, tag }
}

fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

fn pack(mats: &[&CMat]) -> CVec {
    let n: usize = mats.iter().map(|m| m.len()).sum();
    let mut out = CVec::zeros(n);
    let mut off = 0;
    for m in mats {
        out.rows_mut(off, m.len()).copy_from(&vec_of(m));
        off += m.len();
    }
    out
}

/// Inputs to the transmit-side convex subproblem at the expansion point `current`.
#[derive(Debug, Clone, Copy)]
pub struct VSubproblem<'a> {
    pub channel: &'a ChannelState,
    pub current: &'a BeamformerSet,
    pub active: &'a [bool],
    /// Linear objective coefficient per user: minimize `Σ_j Re⟨G_j, V_j⟩`.
    pub objective: &'a [CMat],
    pub rate_floors: &'a [f64],
    pub p_max: f64,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub value: Vec<CMat>,
    pub kkt: qcqp::KktResidual,
    pub degenerate: bool,
}

/// Minimize the linearized objective over all active `V_j` subject to the power budget
/// and each active user's surrogate rate floor. Inactive users keep `V_j = 0`.
pub fn solve_v_subproblem(p: &VSubproblem<'_>, opts: &QcqpOptions) -> Result<SubproblemSolution> {
    let users = p.channel.num_users();
    if p.active.len() != users || p.objective.len() != users || p.rate_floors.len() != users {
        return Err(Error::shape("per-user subproblem inputs differ in length"));
    }
    let act: Vec<usize> = (0..users).filter(|&i| p.active[i]).collect();
    let cur = &p.current.transmit;
    if act.is_empty() {
        let zeros = cur.iter().map(|v| CMat::zeros(v.nrows(), v.ncols())).collect();
        return Ok(SubproblemSolution { value: zeros, kkt: Default::default(), degenerate: false });
    }
    let (nt, d) = cur[act[0]].shape();
    let block = nt * d;
    let n = act.len() * block;

    let c = to_real(&pack(&act.iter().map(|&j| &p.objective[j]).collect::<Vec<_>>()));
    let x0 = to_real(&pack(&act.iter().map(|&j| &cur[j]).collect::<Vec<_>>()));

    let mut cons = vec![QuadConstraint::ball(2 * n, p.p_max.sqrt())];
    for (pos, &i) in act.iter().enumerate() {
        let h = &p.channel.matrices[i];
        let u = &p.current.receive[i];
        let sigma2 = p.channel.noise_variance[i];
        let co = SurrogateCoefficients::build(h, cur, u, sigma2, i)?;
        let uh_h = u.adjoint() * h;
        let w = hermitian_part(&(uh_h.adjoint() * &co.f1 * &uh_h));
        let mut q = CMat::zeros(n, n);
        for col in 0..act.len() * d {
            q.view_mut((col * nt, col * nt), (nt, nt)).copy_from(&w);
        }
        let a = (&co.f2 * &uh_h).adjoint();
        let mut lin = CVec::zeros(n);
        lin.rows_mut(pos * block, block).copy_from(&vec_of(&a));
        let s = p.rate_floors[i] + (sigma2 * trace_re(&co.f1) - co.const_term) / LN_2;
        cons.push(complex_quad(&(q / C64::new(LN_2, 0.0)), &(-lin / C64::new(LN_2, 0.0)), s, Some(i)));
    }
    let o = QcqpOptions { x_scale: p.p_max.sqrt().max(f64::MIN_POSITIVE), ..*opts };
    let sol = qcqp::solve(&c, &cons, &x0, &o)?;
    let v = from_real(&sol.x);
    let mut value: Vec<CMat> = cur.iter().map(|m| CMat::zeros(m.nrows(), m.ncols())).collect();
    for (pos, &j) in act.iter().enumerate() {
        value[j] = CMat::from_column_slice(nt, d, v.rows(pos * block, block).as_slice());
    }
    Ok(SubproblemSolution { value, kkt: sol.kkt, degenerate: sol.degenerate })
}

/// Receive-side subproblem for one user with the transmit matrices fixed.
///
/// A Frobenius ball of radius `10 · max(‖U⁽ⁿ⁾‖, √N_r)` keeps the problem bounded: the
/// surrogate rate grows without bound along `U → ∞` because the post-combining noise
/// is `σ² I`.
pub fn solve_u_subproblem(
    channel: &ChannelState,
    current: &BeamformerSet,
    user: usize,
    objective: &CMat,
    rate_floor: f64,
    opts: &QcqpOptions,
) -> Result<SubproblemSolution> {
    let h = &channel.matrices[user];
    let u = &current.receive[user];
    let nr = u.nrows();
    if objective.shape() != u.shape() {
        return Err(Error::shape("receive objective must match U"));
    }
    let sigma2 = channel.noise_variance[user];
    let co = SurrogateCoefficients::build(h, &current.transmit, u, sigma2, user)?;
    let mut k = CMat::zeros(nr, nr);
    for v in &current.transmit {
        let hv = h * v;
        k += &hv * hv.adjoint();
    }
    let k = hermitian_part(&k);
    let quad = co.f1.transpose().kronecker(&k);
    let z = h * &current.transmit[user] * &co.f2;
    let s = rate_floor + (sigma2 * trace_re(&co.f1) - co.const_term) / LN_2;
    let n = nr * nr;
    let radius = 10.0 * u.norm().max((nr as f64).sqrt());
    let cons = vec![
        QuadConstraint::ball(2 * n, radius),
        complex_quad(
            &(hermitian_part(&quad) / C64::new(LN_2, 0.0)),
            &(-vec_of(&z) / C64::new(LN_2, 0.0)),
            s,
            Some(user),
        ),
    ];
    let c = to_real(&vec_of(objective));
    let o = QcqpOptions { x_scale: u.norm().max((nr as f64).sqrt()), ..*opts };
    let sol = qcqp::solve(&c, &cons, &to_real(&vec_of(u)), &o)?;
    let value = CMat::from_column_slice(nr, nr, from_real(&sol.x).as_slice());
    Ok(SubproblemSolution { value: vec![value], kkt: sol.kkt, degenerate: sol.degenerate })
}

/// Regularized channel inversion over the active users, first `streams` columns of each
/// user's block, equal power split; silent users get zeros. Receivers start at `I`.
pub fn channel_inversion_init(
    channel: &ChannelState,
    active: &[bool],
    streams: usize,
    p_max: f64,
) -> Result<BeamformerSet> {
    let users = channel.num_users();
    let (nr, nt) = (channel.rx_antennas(), channel.tx_antennas());
    if streams == 0 || streams > nr.min(nt) {
        return Err(Error::shape(format!("{streams} streams do not fit a {nr}x{nt} channel")));
    }
    let act: Vec<usize> = (0..users).filter(|&i| active[i]).collect();
    let mut transmit = vec![CMat::zeros(nt, streams); users];
    let receive = vec![identity(nr); users];
    if act.is_empty() {
        return BeamformerSet::new(transmit, receive);
    }
    let mut stacked = CMat::zeros(act.len() * nr, nt);
    for (pos, &i) in act.iter().enumerate() {
        stacked.view_mut((pos * nr, 0), (nr, nt)).copy_from(&channel.matrices[i]);
    }
    let gram = &stacked * stacked.adjoint();
    let noise: f64 = act.iter().map(|&i| channel.noise_variance[i]).sum::<f64>() / act.len() as f64;
    let reg = (noise * (act.len() * nr) as f64 / p_max).max(1e-12 * trace_re(&gram) / gram.nrows() as f64);
    let inv = inverse_hpd(&(gram + identity(act.len() * nr) * C64::new(reg, 0.0)))?;
    let w = stacked.adjoint() * inv;
    let per_user = p_max / act.len() as f64;
    for (pos, &i) in act.iter().enumerate() {
        let v = w.columns(pos * nr, streams).into_owned();
        let norm = v.norm();
        transmit[i] = if norm > 0.0 { v * C64::new((per_user).sqrt() / norm, 0.0) } else { v };
    }
    BeamformerSet::new(transmit, receive)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    pub max_iters: usize,
    pub tol_obj: f64,
    /// `γ⁽ⁿ⁾ = step0 / (1 + n)`.
    pub step0: f64,
    /// Halve a step (up to `backtracks` times, then skip it) if it would raise the
    /// Monte Carlo objective.
    pub monotone: bool,
    pub backtracks: usize,
    pub kkt_tol: f64,
    pub optimize_receive: bool,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tol_obj: 1e-4,
            step0: 1.0,
            monotone: true,
            backtracks: 5,
            kkt_tol: 1e-6,
            optimize_receive: true,
        }
    }
}

/// One slot's beamforming problem.
#[derive(Debug, Clone, Copy)]
pub struct ScaProblem<'a> {
    pub model: &'a SemanticModel,
    pub channel: &'a ChannelState,
    pub features: &'a [RVec],
    pub lengths: &'a [usize],
    pub active: &'a [bool],
    /// Objective weight of each user's mismatch (its AoIS age factor).
    pub weights: &'a [f64],
    /// Per-user common random numbers, fixed for the whole slot.
    pub banks: &'a [NoiseBank],
    pub p_max: f64,
    pub rate_floors: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub std_error: f64,
    pub power: f64,
    pub surrogate_rates: Vec<f64>,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScaOutcome {
    pub beamformers: BeamformerSet,
    pub objective: f64,
    pub trace: Vec<ScaTraceRow>,
    pub converged: bool,
}

/// Weighted objective and per-user estimates at `bf`.
pub struct Evaluation {
    pub objective: f64,
    pub std_error: f64,
    pub estimates: Vec<Option<MismatchEstimate>>,
}

impl ScaProblem<'_> {
    fn check(&self) -> Result<()> {
        let u = self.channel.num_users();
        let ok = [
            self.features.len(),
            self.lengths.len(),
            self.active.len(),
            self.weights.len(),
            self.banks.len(),
            self.rate_floors.len(),
        ]
        .iter()
        .all(|&n| n == u);
        if ok {
            Ok(())
        } else {
            Err(Error::shape("per-user SCA inputs differ in length"))
        }
    }

    pub fn evaluate(&self, bf: &BeamformerSet, grad: GradRequest) -> Result<Evaluation> {
        let mut objective = 0.0;
        let mut var = 0.0;
        let mut estimates = Vec::with_capacity(self.active.len());
        for i in 0..self.active.len() {
            if !self.active[i] {
                estimates.push(None);
                continue;
            }
            let link = LinkView {
                channel: &self.channel.matrices[i],
                transmit: &bf.transmit,
                receive: &bf.receive[i],
                noise_variance: self.channel.noise_variance[i],
                user: i,
            };
            let est = estimate_g(self.model, &self.features[i], self.lengths[i], &link, &self.banks[i], grad)?;
            objective += self.weights[i] * est.g_unclamped;
            var += (self.weights[i] * est.std_error).powi(2);
            estimates.push(Some(est));
        }
        Ok(Evaluation { objective, std_error: var.sqrt(), estimates })
    }

    pub fn rates(&self, bf: &BeamformerSet) -> Result<Vec<f64>> {
        (0..self.active.len())
            .map(|i| {
                if self.active[i] {
                    mimo_rate(&self.channel.matrices[i], &bf.transmit, i, &bf.receive[i], self.channel.noise_variance[i])
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    }

    fn feasible(&self, rates: &[f64]) -> bool {
        (0..rates.len()).all(|i| !self.active[i] || rates[i] >= self.rate_floors[i] - 1e-9)
    }
}

fn blend(a: &[CMat], b: &[CMat], gamma: f64) -> Vec<CMat> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * C64::new(gamma, 0.0)).collect()
}

/// Run the SCA loop from `init`.
pub fn optimize(problem: &ScaProblem<'_>, init: BeamformerSet, opts: &ScaOptions) -> Result<ScaOutcome> {
    problem.check()?;
    let users = problem.active.len();
    let qopts = QcqpOptions { kkt_tol: opts.kkt_tol, ..Default::default() };
    let mut bf = init;
    let mut eval = problem.evaluate(&bf, GradRequest::TRANSMIT)?;
    let rates0 = problem.rates(&bf)?;
    let mut trace = vec![ScaTraceRow {
        iteration: 0,
        objective: eval.objective,
        std_error: eval.std_error,
        power: bf.total_power(),
        surrogate_rates: rates0.clone(),
        rates: rates0.clone(),
    }];
    let mut rates = rates0;
    let mut converged = false;
    if !problem.active.iter().any(|&a| a) {
        return Ok(ScaOutcome { objective: eval.objective, beamformers: bf, trace, converged: true });
    }

    for n in 0..opts.max_iters {
        let j_start = eval.objective;
        let gamma0 = opts.step0 / (1.0 + n as f64);
        let restoring = !problem.feasible(&rates);

        // Transmit step.
        let mut grad_v: Vec<CMat> = bf.transmit.iter().map(|v| CMat::zeros(v.nrows(), v.ncols())).collect();
        for (i, est) in eval.estimates.iter().enumerate() {
            if let Some(g) = est.as_ref().and_then(|e| e.grad_transmit.as_ref()) {
                for j in 0..users {
                    grad_v[j] += &g[j] * C64::new(problem.weights[i], 0.0);
                }
            }
        }
        let expansion = bf.clone();
        let vsol = solve_v_subproblem(
            &VSubproblem {
                channel: problem.channel,
                current: &bf,
                active: problem.active,
                objective: &grad_v,
                rate_floors: problem.rate_floors,
                p_max: problem.p_max,
            },
            &qopts,
        )?;
        let mut gamma = if restoring { 1.0 } else { gamma0 };
        let mut accepted = None;
        for _ in 0..=opts.backtracks {
            let trial = BeamformerSet::new(blend(&bf.transmit, &vsol.value, gamma), bf.receive.clone())?;
            let e = problem.evaluate(&trial, GradRequest::RECEIVE)?;
            if restoring || !opts.monotone || e.objective <= j_start {
                accepted = Some((trial, e));
                break;
            }
            gamma *= 0.5;
        }
        let (next, mut e_mid) = match accepted {
            Some(x) => x,
            None => (bf.clone(), problem.evaluate(&bf, GradRequest::RECEIVE)?),
        };
        bf = next;

        // Receive step, user by user against the updated transmitters.
        if opts.optimize_receive {
            let j_mid = e_mid.objective;
            let mut new_receive = bf.receive.clone();
            let mut any = false;
            for i in 0..users {
                if !problem.active[i] {
                    continue;
                }
                let g = match e_mid.estimates[i].as_ref().and_then(|e| e.grad_receive.as_ref()) {
                    Some(g) => g * C64::new(problem.weights[i], 0.0),
                    None => continue,
                };
                match solve_u_subproblem(problem.channel, &bf, i, &g, problem.rate_floors[i], &qopts) {
                    Ok(sol) => {
                        new_receive[i] = sol.value.into_iter().next().unwrap_or_else(|| bf.receive[i].clone());
                        any = true;
                    }
                    // The current U stays feasible for its own surrogate; an infeasible
                    // report means the transmit step left this user below its floor.
                    Err(Error::Infeasible { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            if any {
                let mut gamma = gamma0;
                for _ in 0..=opts.backtracks {
                    let trial = BeamformerSet::new(bf.transmit.clone(), blend(&bf.receive, &new_receive, gamma))?;
                    let e = problem.evaluate(&trial, GradRequest::NONE)?;
                    let trial_rates = problem.rates(&trial)?;
                    let keeps_floor = problem.feasible(&trial_rates) || !problem.feasible(&problem.rates(&bf)?);
                    if keeps_floor && (!opts.monotone || e.objective <= j_mid) {
                        bf = trial;
                        e_mid = e;
                        break;
                    }
                    gamma *= 0.5;
                }
            }
        }

        eval = problem.evaluate(&bf, GradRequest::TRANSMIT)?;
        rates = problem.rates(&bf)?;
        let surrogate_rates = (0..users)
            .map(|i| {
                if !problem.active[i] {
                    return Ok(0.0);
                }
                let h = &problem.channel.matrices[i];
                let s2 = problem.channel.noise_variance[i];
                let co = SurrogateCoefficients::build(h, &expansion.transmit, &expansion.receive[i], s2, i)?;
                Ok(co.value(h, &bf.transmit, &expansion.receive[i], s2, i))
            })
            .collect::<Result<Vec<f64>>>()?;
        debug_assert!((eval.objective - e_mid.objective).abs() <= 1e-9 * (1.0 + eval.objective.abs()));
        trace.push(ScaTraceRow {
            iteration: n + 1,
            objective: eval.objective,
            std_error: eval.std_error,
            power: bf.total_power(),
            surrogate_rates,
            rates: rates.clone(),
        });
        if (eval.objective - j_start).abs() <= opts.tol_obj {
            converged = true;
            break;
        }
    }
    Ok(ScaOutcome { objective: eval.objective, beamformers: bf, trace, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sample_cn_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hpd(n: usize, rng: &mut ChaCha8Rng) -> CMat {
        let a = sample_cn_matrix(n, n, rng);
        hermitian_part(&(&a * a.adjoint() + identity(n)))
    }

    #[test]
    fn bound_is_tight_at_expansion_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = sample_cn_matrix(3, 2, &mut rng);
        let y0 = hpd(3, &mut rng);
        let lb = lemma1_lower_bound(&x0, &y0, &x0, &y0).unwrap();
        assert!((lb - logdet_rate_nats(&x0, &y0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn scalar_bound() {
        let one = CMat::from_element(1, 1, C64::new(1.0, 0.0));
        let two = CMat::from_element(1, 1, C64::new(2.0, 0.0));
        let lb = lemma1_lower_bound(&two, &one, &one, &one).unwrap();
        assert!((lb - (-2.5 + 4.0 + 2f64.ln() - 1.0)).abs() < 1e-12);
        assert!(lb <= 5f64.ln());
    }

    #[test]
    fn surrogate_is_tight_and_f1_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = sample_cn_matrix(2, 3, &mut rng);
        let v = vec![sample_cn_matrix(3, 2, &mut rng), sample_cn_matrix(3, 2, &mut rng)];
        let u = sample_cn_matrix(2, 2, &mut rng);
        let co = SurrogateCoefficients::build(&h, &v, &u, 0.4, 1).unwrap();
        let exact = mimo_rate(&h, &v, 1, &u, 0.4).unwrap();
        assert!((co.value(&h, &v, &u, 0.4, 1) - exact).abs() < 1e-8);
        let alt = inverse_hpd(&co.y0).unwrap() - inverse_hpd(&co.f3).unwrap();
        assert!((&co.f1 - alt).norm() < 1e-12 * (1.0 + co.f1.norm()));
    }
}
