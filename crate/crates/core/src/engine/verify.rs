//! Self-checks run by `aois verify`: minorizer bound, power-parameterization
//! equivalence and finite-difference gradients on random instances.

use rand::Rng;

use crate::error::Result;
use crate::linalg::{identity, sample_cn_matrix, CMat, RVec, C64};
use crate::rng::{stream, Stream};
use crate::sca::{lemma1_lower_bound, logdet_rate_nats};
use crate::semantics::{estimate_g, sample_source, GradRequest, LinkView, NoiseBank, SemanticModel};
use crate::zf::{prop2_jacobian, prop2_power};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn random_hpd<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let a = sample_cn_matrix(n, n, rng);
    &a * a.adjoint() + identity(n) * C64::new(0.1, 0.0)
}

/// Surrogate never exceeds the true log-det rate and touches it at the expansion point.
pub fn check_minorizer(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = stream(seed, Stream::Verify, 1, 0);
    let (mut worst_slack, mut worst_gap) = (f64::INFINITY, 0.0f64);
    for _ in 0..instances {
        let n = rng.random_range(1..=4);
        let d = rng.random_range(1..=4);
        let (x0, y0) = (sample_cn_matrix(n, d, &mut rng), random_hpd(n, &mut rng));
        let (x, y) = (sample_cn_matrix(n, d, &mut rng), random_hpd(n, &mut rng));
        let truth = logdet_rate_nats(&x, &y)?;
        worst_slack = worst_slack.min(truth - lemma1_lower_bound(&x, &y, &x0, &y0)?);
        worst_gap = worst_gap.max((logdet_rate_nats(&x0, &y0)? - lemma1_lower_bound(&x0, &y0, &x0, &y0)?).abs());
    }
    Ok(CheckResult {
        name: "minorizer",
        passed: worst_slack >= -1e-9 && worst_gap <= 1e-9,
        detail: format!("{instances} instances, min slack {worst_slack:.3e}, max gap at expansion {worst_gap:.3e}"),
    })
}

/// Feasible powers are reproduced from `q = √(p − p0)` and every output is feasible.
pub fn check_power_parameterization(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = stream(seed, Stream::Verify, 2, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let u = rng.random_range(1..=6);
        let h = RVec::from_fn(u, |_, _| rng.random_range(0.1..3.0));
        let p0 = RVec::from_fn(u, |_, _| rng.random_range(0.0..1.0));
        let extra = RVec::from_fn(u, |_, _| rng.random_range(0.01..2.0));
        let p = &p0 + &extra;
        let p_max = h.dot(&p);
        let q = extra.map(f64::sqrt);
        let back = prop2_power(&q, &p0, &h, p_max)?;
        worst = worst.max((&back - &p).amax() / (1.0 + p.amax()));
        let qr = RVec::from_fn(u, |_, _| rng.random_range(-2.0..2.0));
        let out = prop2_power(&qr, &p0, &h, p_max + 1.0)?;
        worst = worst.max((h.dot(&out) - p_max - 1.0).abs());
        if out.iter().zip(p0.iter()).any(|(a, b)| a < b) {
            worst = f64::INFINITY;
        }
    }
    Ok(CheckResult {
        name: "power-parameterization",
        passed: worst <= 1e-10,
        detail: format!("{instances} instances, max deviation {worst:.3e}"),
    })
}

/// Analytic gradients of the Monte Carlo mismatch and of the power map against central
/// differences on common noise.
pub fn check_gradients(instances: usize, seed: u64) -> Result<CheckResult> {
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let mut rng = stream(seed, Stream::Verify, 3, k as u64);
        let model = SemanticModel::random(8, 6, 3, &mut rng)?;
        let z = sample_source(8, &mut rng);
        let h = sample_cn_matrix(2, 3, &mut rng);
        let v = vec![sample_cn_matrix(3, 2, &mut rng), sample_cn_matrix(3, 2, &mut rng)];
        let u = sample_cn_matrix(2, 2, &mut rng);
        let bank = NoiseBank::draw(8, 3, 2, 2, 2, &mut rng)?;
        let eval = |v: &[CMat], u: &CMat, grad| {
            let link = LinkView { channel: &h, transmit: v, receive: u, noise_variance: 0.2, user: 0 };
            estimate_g(&model, &z, 5, &link, &bank, grad)
        };
        let base = eval(&v, &u, GradRequest::ALL)?;
        let gt = base.grad_transmit.as_ref().expect("requested");
        let gu = base.grad_receive.as_ref().expect("requested");
        let r = rng.random_range(0..3);
        let c = rng.random_range(0..2);
        for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
            let (mut vp, mut vm) = (v.clone(), v.clone());
            vp[1][(r, c)] += dir * step;
            vm[1][(r, c)] -= dir * step;
            let fd = (eval(&vp, &u, GradRequest::NONE)?.g_unclamped - eval(&vm, &u, GradRequest::NONE)?.g_unclamped)
                / (2.0 * step);
            let an = (gt[1][(r, c)].conj() * dir).re;
            worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
            let (mut up, mut um) = (u.clone(), u.clone());
            up[(c, r % 2)] += dir * step;
            um[(c, r % 2)] -= dir * step;
            let fd = (eval(&v, &up, GradRequest::NONE)?.g_unclamped - eval(&v, &um, GradRequest::NONE)?.g_unclamped)
                / (2.0 * step);
            let an = (gu[(c, r % 2)].conj() * dir).re;
            worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
        }
        let n = 3;
        let q = RVec::from_fn(n, |_, _| rng.random_range(0.2..2.0));
        let p0 = RVec::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let hc = RVec::from_fn(n, |_, _| rng.random_range(0.2..2.0));
        let p_max = hc.dot(&p0) + 2.0;
        let jac = prop2_jacobian(&q, &p0, &hc, p_max)?;
        for j in 0..n {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[j] += step;
            qm[j] -= step;
            let fd = (prop2_power(&qp, &p0, &hc, p_max)? - prop2_power(&qm, &p0, &hc, p_max)?) / (2.0 * step);
            for i in 0..n {
                worst = worst.max((fd[i] - jac[(i, j)]).abs() / jac[(i, j)].abs().max(1e-3));
            }
        }
    }
    Ok(CheckResult {
        name: "gradients",
        passed: worst <= 1e-4,
        detail: format!("{instances} instances, max relative error {worst:.3e}"),
    })
}

/// Every self-check with its default instance count.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_minorizer(10_000, seed)?,
        check_power_parameterization(1_000, seed)?,
        check_gradients(100, seed)?,
    ])
}
