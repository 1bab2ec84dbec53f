//! Zero-forcing MISO transmission with a feasibility-preserving power parameterization.
//!
//! With `V = H (HᴴH)⁻¹ diag(√p)` every user sees an interference-free link with SINR
//! `p_i / σ_i²`, so the rate floor becomes `p_i ≥ p0_i` and the power budget becomes
//! `hᵀp ≤ P_max` with `h = diag((HᴴH)⁻¹)`. Writing
//! `p = p0 + (q⊙q) / (hᵀ(q⊙q)) · (P_max − hᵀp0)` makes every `q ≠ 0` feasible, and the
//! mismatch objective is minimized over `(q, u)` without constraints.

use serde::Serialize;

use crate::beamformer::BeamformerSet;
use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermitian_part, inverse_hpd, CMat, RMat, RVec, C64};
use crate::semantics::{estimate_g, GradRequest, LinkView, NoiseBank, SemanticModel};

/// `(HᴴH)⁻¹` for an `N_t × U` stacked channel, with a condition report when singular.
fn gram_inverse(h: &CMat) -> Result<CMat> {
    if h.ncols() > h.nrows() {
        return Err(Error::Numerical {
            what: format!("{} users exceed {} transmit antennas", h.ncols(), h.nrows()),
            condition: f64::INFINITY,
        });
    }
    let gram = hermitian_part(&(h.adjoint() * h));
    let eig = hermitian_eigenvalues(&gram);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    if !(lo > 1e-13 * hi) {
        return Err(Error::Numerical {
            what: "stacked channel is rank deficient".into(),
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    inverse_hpd(&gram)
}

/// `V = H (HᴴH)⁻¹ diag(√p)`; column `i` is user `i`'s precoder.
pub fn zf_matrix(h: &CMat, p: &[f64]) -> Result<CMat> {
    if p.len() != h.ncols() {
        return Err(Error::shape(format!("{} powers for {} users", p.len(), h.ncols())));
    }
    if p.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::domain("powers must be nonnegative"));
    }
    let mut v = h * gram_inverse(h)?;
    for (i, &pi) in p.iter().enumerate() {
        v.column_mut(i).scale_mut(pi.sqrt());
    }
    Ok(v)
}

/// `h = diag((HᴴH)⁻¹)`, so that the ZF transmit power is `hᵀp`.
pub fn power_coefficients(h: &CMat) -> Result<RVec> {
    let inv = gram_inverse(h)?;
    Ok(RVec::from_iterator(inv.nrows(), (0..inv.nrows()).map(|i| inv[(i, i)].re)))
}

/// `p0_i = σ_i² (2^{L_i/(B T_max)} − 1)`.
pub fn rate_floor_powers(lengths: &[usize], bandwidth_hz: f64, delay_budget_s: f64, noise: &[f64]) -> RVec {
    RVec::from_iterator(
        lengths.len(),
        lengths
            .iter()
            .zip(noise)
            .map(|(&l, &s2)| s2 * ((l as f64 / (bandwidth_hz * delay_budget_s)).exp2() - 1.0)),
    )
}

fn check_power_inputs(q: &RVec, p0: &RVec, h: &RVec, p_max: f64) -> Result<(f64, f64)> {
    if q.len() != p0.len() || q.len() != h.len() {
        return Err(Error::shape("q, p0 and h differ in length"));
    }
    let denom: f64 = q.iter().zip(h.iter()).map(|(qi, hi)| hi * qi * qi).sum();
    if !(denom > 0.0) {
        return Err(Error::Degenerate("power parameter q is zero".into()));
    }
    let surplus = p_max - h.dot(p0);
    if surplus < 0.0 {
        let user = (0..h.len())
            .max_by(|&a, &b| (h[a] * p0[a]).total_cmp(&(h[b] * p0[b])))
            .unwrap_or(0);
        return Err(Error::Infeasible {
            user,
            reason: format!("rate floors need {:.3e} W more than the budget", -surplus),
        });
    }
    Ok((denom, surplus))
}

/// `p = p0 + (q⊙q) / (hᵀ(q⊙q)) · (P_max − hᵀp0)`.
pub fn prop2_power(q: &RVec, p0: &RVec, h: &RVec, p_max: f64) -> Result<RVec> {
    let (denom, surplus) = check_power_inputs(q, p0, h, p_max)?;
    Ok(RVec::from_fn(q.len(), |i, _| p0[i] + q[i] * q[i] / denom * surplus))
}

/// `∂p_i/∂q_j = S (2 q_i δ_ij / D − 2 q_i² h_j q_j / D²)` with `S = P_max − hᵀp0`, `D = hᵀ(q⊙q)`.
pub fn prop2_jacobian(q: &RVec, p0: &RVec, h: &RVec, p_max: f64) -> Result<RMat> {
    let (d, s) = check_power_inputs(q, p0, h, p_max)?;
    let n = q.len();
    Ok(RMat::from_fn(n, n, |i, j| {
        let diag = if i == j { 2.0 * q[i] / d } else { 0.0 };
        s * (diag - 2.0 * q[i] * q[i] * h[j] * q[j] / (d * d))
    }))
}

/// Parameters of a ZF solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfState {
    /// Users in the precoder, in column order.
    pub users: Vec<usize>,
    /// `N_t × |users|` stacked channel, columns `h_i`.
    pub stacked: CMat,
    pub p: RVec,
    pub q: RVec,
    pub u: Vec<C64>,
    pub p0: RVec,
    pub h_diag: RVec,
}

impl ZfState {
    /// Beamformers for all `num_users`; users outside the precoder get zeros and `u = 1`.
    pub fn beamformers(&self, num_users: usize) -> Result<BeamformerSet> {
        let nt = self.stacked.nrows();
        let v = zf_matrix(&self.stacked, self.p.as_slice())?;
        let mut transmit = vec![CMat::zeros(nt, 1); num_users];
        let mut receive = vec![CMat::from_element(1, 1, C64::new(1.0, 0.0)); num_users];
        for (col, &i) in self.users.iter().enumerate() {
            transmit[i] = v.columns(col, 1).into_owned();
            receive[i] = CMat::from_element(1, 1, self.u[col]);
        }
        BeamformerSet::new(transmit, receive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZfOptions {
    pub iterations: usize,
    pub step: f64,
    pub optimize_receive: bool,
}

impl Default for ZfOptions {
    fn default() -> Self {
        Self { iterations: 500, step: 1e-2, optimize_receive: true }
    }
}

/// One slot's ZF design problem over the users in `users`.
#[derive(Debug, Clone, Copy)]
pub struct ZfProblem<'a> {
    pub model: &'a SemanticModel,
    pub channel: &'a ChannelState,
    pub features: &'a [RVec],
    pub lengths: &'a [usize],
    pub users: &'a [usize],
    pub weights: &'a [f64],
    pub banks: &'a [NoiseBank],
    pub p_max: f64,
    pub bandwidth_hz: f64,
    pub delay_budget_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZfTraceRow {
    pub iteration: usize,
    pub objective: f64,
    /// `hᵀp − P_max`.
    pub budget_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ZfOutcome {
    pub state: ZfState,
    pub beamformers: BeamformerSet,
    pub objective: f64,
    pub trace: Vec<ZfTraceRow>,
}

/// Objective value and, optionally, its gradient in `q` and in `(Re u, Im u)`.
#[derive(Debug, Clone)]
pub struct ZfEvaluation {
    pub objective: f64,
    pub grad_q: Option<RVec>,
    pub grad_u: Option<Vec<C64>>,
    pub p: RVec,
}

impl<'a> ZfProblem<'a> {
    /// Stacked channel, power coefficients and floor powers of the precoder users.
    pub fn setup(&self) -> Result<(CMat, RVec, RVec)> {
        if self.channel.rx_antennas() != 1 {
            return Err(Error::shape("zero-forcing path requires one receive antenna per user"));
        }
        let full = self.channel.stacked_miso()?;
        let nt = full.nrows();
        let mut stacked = CMat::zeros(nt, self.users.len());
        for (col, &i) in self.users.iter().enumerate() {
            stacked.set_column(col, &full.column(i));
        }
        let h = power_coefficients(&stacked)?;
        let lengths: Vec<usize> = self.users.iter().map(|&i| self.lengths[i]).collect();
        let noise: Vec<f64> = self.users.iter().map(|&i| self.channel.noise_variance[i]).collect();
        let p0 = rate_floor_powers(&lengths, self.bandwidth_hz, self.delay_budget_s, &noise);
        Ok((stacked, h, p0))
    }

    /// Weighted mismatch at `(q, u)` with the analytic gradient when `grad` is set.
    pub fn evaluate(
        &self,
        stacked: &CMat,
        h: &RVec,
        p0: &RVec,
        q: &RVec,
        u: &[C64],
        grad: bool,
    ) -> Result<ZfEvaluation> {
        let p = prop2_power(q, p0, h, self.p_max)?;
        let state = ZfState {
            users: self.users.to_vec(),
            stacked: stacked.clone(),
            p: p.clone(),
            q: q.clone(),
            u: u.to_vec(),
            p0: p0.clone(),
            h_diag: h.clone(),
        };
        let n_all = self.channel.num_users();
        let bf = state.beamformers(n_all)?;
        let req = if grad { GradRequest::ALL } else { GradRequest::NONE };
        let k = self.users.len();
        let mut objective = 0.0;
        let mut g_v = vec![C64::new(0.0, 0.0); k];
        let mut g_u = vec![C64::new(0.0, 0.0); k];
        // Precoder direction a_j = column j of H (HᴴH)⁻¹.
        let dirs = stacked * gram_inverse(stacked)?;
        for (col, &i) in self.users.iter().enumerate() {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            let link = LinkView {
                channel: &self.channel.matrices[i],
                transmit: &bf.transmit,
                receive: &bf.receive[i],
                noise_variance: self.channel.noise_variance[i],
                user: i,
            };
            let est = estimate_g(self.model, &self.features[i], self.lengths[i], &link, &self.banks[i], req)?;
            objective += w * est.g_unclamped;
            if let Some(gt) = &est.grad_transmit {
                for (c2, &j) in self.users.iter().enumerate() {
                    // Re⟨G_j, a_j⟩ / (2√p_j) is ∂/∂p_j of the chain through √p_j.
                    let inner = gt[j].column(0).dotc(&dirs.column(c2));
                    g_v[c2] += inner * w;
                }
            }
            if let Some(gr) = &est.grad_receive {
                g_u[col] = gr[(0, 0)] * w;
            }
        }
        let (grad_q, grad_u) = if grad {
            let dp = RVec::from_fn(k, |j, _| if p[j] > 0.0 { g_v[j].re / (2.0 * p[j].sqrt()) } else { 0.0 });
            let jac = prop2_jacobian(q, p0, h, self.p_max)?;
            (Some(jac.transpose() * dp), Some(g_u))
        } else {
            (None, None)
        };
        Ok(ZfEvaluation { objective, grad_q, grad_u, p })
    }
}

/// Adam on `(q, Re u, Im u)`; the best iterate is returned.
pub fn optimize_zf(
    problem: &ZfProblem<'_>,
    q_init: Option<&RVec>,
    u_init: Option<&[C64]>,
    opts: &ZfOptions,
) -> Result<ZfOutcome> {
    let k = problem.users.len();
    let (stacked, h, p0) = problem.setup()?;
    let mut q = q_init.cloned().unwrap_or_else(|| RVec::from_element(k, 1.0));
    let mut u: Vec<C64> = u_init.map(|x| x.to_vec()).unwrap_or_else(|| vec![C64::new(1.0, 0.0); k]);
    if q.len() != k || u.len() != k {
        return Err(Error::shape("initial q or u does not match the precoder users"));
    }
    let n = 3 * k;
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = RVec::zeros(n);
    let mut v = RVec::zeros(n);
    let mut trace = Vec::with_capacity(opts.iterations + 1);
    let mut best: Option<(f64, RVec, Vec<C64>)> = None;

    for it in 0..=opts.iterations {
        let want_grad = it < opts.iterations;
        let ev = problem.evaluate(&stacked, &h, &p0, &q, &u, want_grad)?;
        trace.push(ZfTraceRow { iteration: it, objective: ev.objective, budget_residual: h.dot(&ev.p) - problem.p_max });
        if best.as_ref().is_none_or(|b| ev.objective < b.0) {
            best = Some((ev.objective, q.clone(), u.clone()));
        }
        if !want_grad {
            break;
        }
        let gq = ev.grad_q.unwrap_or_else(|| RVec::zeros(k));
        let gu = ev.grad_u.unwrap_or_else(|| vec![C64::new(0.0, 0.0); k]);
        let g = RVec::from_fn(n, |idx, _| match idx / k {
            0 => gq[idx],
            1 if opts.optimize_receive => gu[idx - k].re,
            2 if opts.optimize_receive => gu[idx - 2 * k].im,
            _ => 0.0,
        });
        if g.iter().all(|x| *x == 0.0) {
            continue;
        }
        let t = (it + 1) as i32;
        m = &m * b1 + &g * (1.0 - b1);
        v = &v * b2 + g.component_mul(&g) * (1.0 - b2);
        let step = RVec::from_fn(n, |idx, _| {
            let mh = m[idx] / (1.0 - b1.powi(t));
            let vh = v[idx] / (1.0 - b2.powi(t));
            opts.step * mh / (vh.sqrt() + eps)
        });
        let candidate = &q - step.rows(0, k);
        // Keep q away from the all-zero point, where the parameterization degenerates.
        if candidate.iter().any(|x| *x != 0.0) {
            q = candidate;
        }
        for j in 0..k {
            u[j] -= C64::new(step[k + j], step[2 * k + j]);
        }
    }
    let (objective, q, u) = best.ok_or_else(|| Error::Degenerate("no ZF iterate evaluated".into()))?;
    let p = prop2_power(&q, &p0, &h, problem.p_max)?;
    let state = ZfState { users: problem.users.to_vec(), stacked, p, q, u, p0, h_diag: h };
    let beamformers = state.beamformers(problem.channel.num_users())?;
    Ok(ZfOutcome { state, beamformers, objective, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sample_cn_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boundary_power_plugin() {
        let p = prop2_power(
            &RVec::from_element(1, 1.0),
            &RVec::from_element(1, 3.0),
            &RVec::from_element(1, 0.5),
            10.0,
        )
        .unwrap();
        assert!((p[0] - 20.0).abs() < 1e-12);
        assert!(matches!(
            prop2_power(&RVec::zeros(2), &RVec::zeros(2), &RVec::from_element(2, 1.0), 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn zf_diagonalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = sample_cn_matrix(4, 2, &mut rng);
        let p = [0.7, 1.9];
        let v = zf_matrix(&h, &p).unwrap();
        let hv = h.adjoint() * &v;
        assert!(hv[(0, 1)].norm() < 1e-10 && hv[(1, 0)].norm() < 1e-10);
        assert!((hv[(0, 0)].re - p[0].sqrt()).abs() < 1e-10);
        let coeff = power_coefficients(&h).unwrap();
        let power: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        assert!((power - coeff[0] * p[0] - coeff[1] * p[1]).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_channel_reports_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let col = sample_cn_matrix(4, 1, &mut rng);
        let h = CMat::from_columns(&[col.column(0), col.column(0)]);
        assert!(matches!(zf_matrix(&h, &[1.0, 1.0]), Err(Error::Numerical { .. })));
    }

    #[test]
    fn floor_powers() {
        let p0 = rate_floor_powers(&[0, 10], 10.0, 1.0, &[1.0, 1.0]);
        assert_eq!(p0[0], 0.0);
        assert!((p0[1] - 1.0).abs() < 1e-15);
    }

    struct Fixture {
        model: SemanticModel,
        channel: ChannelState,
        features: Vec<RVec>,
        lengths: Vec<usize>,
        weights: Vec<f64>,
        banks: Vec<NoiseBank>,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = 3;
        let model = SemanticModel::random(8, 8, 4, &mut rng).unwrap();
        let h: Vec<_> = (0..u).map(|_| sample_cn_matrix(1, 4, &mut rng)).collect();
        let channel = ChannelState::new(h, vec![0.2; u], vec![0.0; u], 0).unwrap();
        let features: Vec<_> = (0..u).map(|_| crate::semantics::sample_source(8, &mut rng)).collect();
        let banks = (0..u).map(|_| NoiseBank::draw(16, 8, 1, 1, u, &mut rng).unwrap()).collect();
        Fixture { model, channel, features, lengths: vec![6, 4, 8], weights: vec![1.0, 0.5, 2.0], banks }
    }

    fn problem<'a>(f: &'a Fixture, users: &'a [usize]) -> ZfProblem<'a> {
        ZfProblem {
            model: &f.model,
            channel: &f.channel,
            features: &f.features,
            lengths: &f.lengths,
            users,
            weights: &f.weights,
            banks: &f.banks,
            p_max: 5.0,
            bandwidth_hz: 10.0,
            delay_budget_s: 1.0,
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let q = RVec::from_vec(vec![0.3, -1.2, 0.8]);
        let p0 = RVec::from_vec(vec![0.1, 0.4, 0.2]);
        let h = RVec::from_vec(vec![0.5, 1.5, 0.9]);
        let jac = prop2_jacobian(&q, &p0, &h, 4.0).unwrap();
        for j in 0..3 {
            let e = 1e-6;
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += e;
            qm[j] -= e;
            let fd = (prop2_power(&qp, &p0, &h, 4.0).unwrap() - prop2_power(&qm, &p0, &h, 4.0).unwrap()) / (2.0 * e);
            for i in 0..3 {
                assert!((fd[i] - jac[(i, j)]).abs() < 1e-7, "({i},{j}) {} vs {}", fd[i], jac[(i, j)]);
            }
        }
    }

    #[test]
    fn objective_gradient_matches_central_differences() {
        let f = fixture(5);
        let users = [0, 1, 2];
        let pr = problem(&f, &users);
        let (st, h, p0) = pr.setup().unwrap();
        let q = RVec::from_vec(vec![0.9, 0.4, 1.3]);
        let u = vec![C64::new(0.8, 0.1), C64::new(1.1, -0.2), C64::new(0.7, 0.3)];
        let ev = pr.evaluate(&st, &h, &p0, &q, &u, true).unwrap();
        let gq = ev.grad_q.unwrap();
        let gu = ev.grad_u.unwrap();
        let e = 1e-6;
        let f_at = |q: &RVec, u: &[C64]| pr.evaluate(&st, &h, &p0, q, u, false).unwrap().objective;
        for j in 0..3 {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[j] += e;
            qm[j] -= e;
            let fd = (f_at(&qp, &u) - f_at(&qm, &u)) / (2.0 * e);
            assert!((fd - gq[j]).abs() < 1e-5 * (1.0 + fd.abs()), "q{j}: {fd} vs {}", gq[j]);
            for (dir, an) in [(C64::new(e, 0.0), gu[j].re), (C64::new(0.0, e), gu[j].im)] {
                let (mut up, mut um) = (u.clone(), u.clone());
                up[j] += dir;
                um[j] -= dir;
                let fd = (f_at(&q, &up) - f_at(&q, &um)) / (2.0 * e);
                assert!((fd - an).abs() < 1e-5 * (1.0 + fd.abs()), "u{j}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn adam_improves_and_stays_feasible() {
        let f = fixture(6);
        let users = [0, 1, 2];
        let pr = problem(&f, &users);
        let out = optimize_zf(&pr, None, None, &ZfOptions { iterations: 200, ..Default::default() }).unwrap();
        assert!(out.objective <= out.trace[0].objective);
        assert!(out.trace.iter().all(|r| r.budget_residual.abs() < 1e-9));
        assert!(out.state.p.iter().zip(out.state.p0.iter()).all(|(p, p0)| p >= p0));
        assert!(out.beamformers.is_power_feasible(5.0, 1e-9));
    }

    #[test]
    fn zero_weights_keep_initial_q() {
        let mut f = fixture(7);
        f.weights = vec![0.0; 3];
        let users = [0, 2];
        let pr = problem(&f, &users);
        let q0 = RVec::from_vec(vec![0.4, 2.0]);
        let out = optimize_zf(&pr, Some(&q0), None, &ZfOptions { iterations: 20, ..Default::default() }).unwrap();
        assert_eq!(out.state.q, q0);
        assert_eq!(out.beamformers.transmit[1].norm(), 0.0);
    }
}
