//! Small dense convex QCQP solver: minimize `cᵀx` subject to
//! `½ xᵀ P_k x + q_kᵀ x + s_k ≤ 0` with `P_k ⪰ 0`.
//!
//! Log-barrier Newton method with a phase-I search for a strictly feasible start.
//! Variables are rescaled by `x_scale` and each constraint by its own magnitude before
//! solving; residuals are reported in that normalized form.

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};

#[derive(Debug, Clone)]
pub struct QuadConstraint {
    pub p: RMat,
    pub q: RVec,
    pub s: f64,
    /// User responsible for this constraint, for infeasibility reports.
    pub tag: Option<usize>,
}

impl QuadConstraint {
    /// `‖x‖² ≤ r²`.
    pub fn ball(n: usize, radius: f64) -> Self {
        Self { p: RMat::identity(n, n) * 2.0, q: RVec::zeros(n), s: -radius * radius, tag: None }
    }

    pub fn value(&self, x: &RVec) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x) + self.s
    }

    pub fn gradient(&self, x: &RVec) -> RVec {
        &self.p * x + &self.q
    }

    fn scaled(&self, x_scale: f64) -> Self {
        let p = &self.p * (x_scale * x_scale);
        let q = &self.q * x_scale;
        let mag = p.norm().max(q.norm()).max(self.s.abs()).max(f64::MIN_POSITIVE);
        Self { p: p / mag, q: q / mag, s: self.s / mag, tag: self.tag }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QcqpOptions {
    pub kkt_tol: f64,
    /// Typical magnitude of `x`, used to normalize the variables.
    pub x_scale: f64,
    /// Slack below which a constraint violation counts as satisfied.
    pub feas_tol: f64,
    pub max_newton: usize,
}

impl Default for QcqpOptions {
    fn default() -> Self {
        Self { kkt_tol: 1e-6, x_scale: 1.0, feas_tol: 1e-9, max_newton: 200 }
    }
}

/// KKT residuals in normalized units.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub x: RVec,
    pub multipliers: Vec<f64>,
    pub kkt: KktResidual,
    pub newton_steps: usize,
    /// The feasible set had no interior; the feasible starting point was returned.
    pub degenerate: bool,
}

/// KKT residual of `(x, μ)` for the normalized problem.
fn kkt_residual(c: &RVec, cons: &[QuadConstraint], x: &RVec, mu: &[f64]) -> KktResidual {
    let mut grad = c.clone();
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (k, con) in cons.iter().enumerate() {
        grad += con.gradient(x) * mu[k];
        let f = con.value(x);
        primal = primal.max(f);
        comp = comp.max((mu[k] * f).abs());
    }
    KktResidual { stationarity: grad.norm(), primal, complementarity: comp }
}

struct Barrier<'a> {
    c: &'a RVec,
    cons: &'a [QuadConstraint],
    max_stage_steps: usize,
}

impl Barrier<'_> {
    fn feasible(&self, x: &RVec) -> bool {
        self.cons.iter().all(|k| k.value(x) < 0.0)
    }

    /// `φ(x + s·dx) − φ(x)` for `φ = t cᵀx − Σ log(−f_k)`, evaluated in increment form so
    /// that it stays accurate when `t cᵀx` is large. `None` outside the domain.
    fn increment(&self, x: &RVec, dx: &RVec, step: f64, t: f64) -> Option<f64> {
        let mut d = t * step * self.c.dot(dx);
        for con in self.cons {
            let f = con.value(x);
            let pdx = &con.p * dx;
            let df = step * con.gradient(x).dot(dx) + 0.5 * step * step * dx.dot(&pdx);
            if !(f + df < 0.0) {
                return None;
            }
            // −log(−f − df) + log(−f) = −log(1 − df/(−f))
            d -= (df / f).ln_1p();
        }
        Some(d)
    }

    fn newton_system(&self, x: &RVec, t: f64) -> (RVec, RMat) {
        let n = x.len();
        let mut g = self.c * t;
        let mut h = RMat::zeros(n, n);
        for con in self.cons {
            let f = con.value(x);
            let gk = con.gradient(x);
            g += &gk / (-f);
            h += &con.p / (-f);
            h.ger(1.0 / (f * f), &gk, &gk, 1.0);
        }
        (g, h)
    }

    /// Minimize the barrier at fixed `t` from a strictly feasible `x`.
    fn center(&self, x: &mut RVec, t: f64, budget: &mut usize, stop: &dyn Fn(&RVec) -> bool) -> bool {
        if !self.feasible(x) {
            return false;
        }
        let mut stage_steps = 0;
        while *budget > 0 {
            *budget -= 1;
            let (g, h) = self.newton_system(x, t);
            let dx = match solve_pd(&h, &(-&g)) {
                Some(d) => d,
                None => return false,
            };
            let decrement = -g.dot(&dx);
            if decrement <= 1e-14 {
                return true;
            }
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                if let Some(delta) = self.increment(x, &dx, step, t) {
                    if delta <= -0.25 * step * decrement {
                        *x += &dx * step;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            // A damped step this close to the center means round-off dominates.
            if !accepted || stop(x) || (step < 1.0 && decrement < 1e-9) {
                return true;
            }
            stage_steps += 1;
            if stage_steps >= self.max_stage_steps {
                return true;
            }
        }
        true
    }

    /// Path-following from `t0` until `m / t ≤ gap`.
    fn solve(&self, x: &mut RVec, gap: f64, budget: &mut usize, stop: &dyn Fn(&RVec) -> bool) -> f64 {
        let m = self.cons.len().max(1) as f64;
        let mut t = 1.0;
        loop {
            self.center(x, t, budget, stop);
            if stop(x) || m / t <= gap || *budget == 0 {
                return t;
            }
            t *= 10.0;
        }
    }
}

fn solve_pd(h: &RMat, rhs: &RVec) -> Option<RVec> {
    let scale = h.diagonal().iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += reg;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(rhs);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

/// Solve from a starting point `x0`; when the objective vanishes, `x0` is returned.
pub fn solve(c: &RVec, constraints: &[QuadConstraint], x0: &RVec, opts: &QcqpOptions) -> Result<QcqpSolution> {
    let n = c.len();
    if x0.len() != n || constraints.iter().any(|k| k.q.len() != n || k.p.shape() != (n, n)) {
        return Err(Error::shape("QCQP data dimensions disagree"));
    }
    let xs = opts.x_scale;
    let cons: Vec<QuadConstraint> = constraints.iter().map(|k| k.scaled(xs)).collect();
    let c_s = c * xs;
    let c_norm = c_s.norm();
    let y0 = x0 / xs;

    if c_norm == 0.0 {
        let mu = vec![0.0; cons.len()];
        let kkt = kkt_residual(&c_s, &cons, &y0, &mu);
        return Ok(QcqpSolution { x: x0.clone(), multipliers: mu, kkt, newton_steps: 0, degenerate: false });
    }
    let c_n = c_s / c_norm;
    let mut budget = opts.max_newton * 20;

    let mut y = y0.clone();
    let worst = cons.iter().map(|k| k.value(&y)).fold(f64::NEG_INFINITY, f64::max);
    if !(worst < 0.0) {
        match phase_one(&cons, &y, &mut budget) {
            Some(start) => y = start,
            None => {
                let x0_feasible = cons.iter().all(|k| k.value(&y0) <= opts.feas_tol);
                if x0_feasible {
                    let mu = vec![0.0; cons.len()];
                    let kkt = kkt_residual(&c_n, &cons, &y0, &mu);
                    return Ok(QcqpSolution {
                        x: x0.clone(),
                        multipliers: mu,
                        kkt,
                        newton_steps: opts.max_newton * 20 - budget,
                        degenerate: true,
                    });
                }
                let (k, f) = cons
                    .iter()
                    .enumerate()
                    .map(|(k, con)| (k, con.value(&y0)))
                    .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
                return Err(Error::Infeasible {
                    user: cons[k].tag.unwrap_or(usize::MAX),
                    reason: format!("constraint {k} cannot be satisfied (violation {f:.3e} at start)"),
                });
            }
        }
    }

    let barrier = Barrier { c: &c_n, cons: &cons, max_stage_steps: opts.max_newton };
    let gap = (opts.kkt_tol * 1e-2).max(1e-14);
    let t = barrier.solve(&mut y, gap, &mut budget, &|_| false);
    let barrier_mu: Vec<f64> = cons.iter().map(|k| 1.0 / (t * -k.value(&y))).collect();
    let (mu, kkt) = polish_multipliers(&c_n, &cons, &y, barrier_mu);
    Ok(QcqpSolution {
        x: y * xs,
        multipliers: mu.iter().map(|m| m * c_norm).collect(),
        kkt,
        newton_steps: opts.max_newton * 20 - budget,
        degenerate: false,
    })
}

/// Least-squares multipliers on the nearly active constraints; keeps whichever of the
/// barrier and refitted multipliers has the smaller KKT residual.
fn polish_multipliers(c: &RVec, cons: &[QuadConstraint], x: &RVec, barrier_mu: Vec<f64>) -> (Vec<f64>, KktResidual) {
    let base = kkt_residual(c, cons, x, &barrier_mu);
    let active: Vec<usize> = (0..cons.len()).filter(|&k| cons[k].value(x) > -1e-6).collect();
    if active.is_empty() {
        return (barrier_mu, base);
    }
    let mut a = RMat::zeros(x.len(), active.len());
    for (col, &k) in active.iter().enumerate() {
        a.set_column(col, &cons[k].gradient(x));
    }
    let Ok(sol) = a.clone().svd(true, true).solve(&(-c), 1e-12) else {
        return (barrier_mu, base);
    };
    let mut mu = vec![0.0; cons.len()];
    for (col, &k) in active.iter().enumerate() {
        mu[k] = sol[col].max(0.0);
    }
    let refit = kkt_residual(c, cons, x, &mu);
    if refit.max() < base.max() {
        (mu, refit)
    } else {
        (barrier_mu, base)
    }
}

/// Find `x` with every constraint strictly negative by minimizing a shared slack `s`.
fn phase_one(cons: &[QuadConstraint], x0: &RVec, budget: &mut usize) -> Option<RVec> {
    let n = x0.len();
    let lift = |k: &QuadConstraint| {
        let mut p = RMat::zeros(n + 1, n + 1);
        p.view_mut((0, 0), (n, n)).copy_from(&k.p);
        let mut q = RVec::zeros(n + 1);
        q.rows_mut(0, n).copy_from(&k.q);
        q[n] = -1.0;
        QuadConstraint { p, q, s: k.s, tag: k.tag }
    };
    let mut aug: Vec<QuadConstraint> = cons.iter().map(lift).collect();
    let worst = cons.iter().map(|k| k.value(x0)).fold(f64::NEG_INFINITY, f64::max);
    // Keep the slack bounded below so the phase-I problem has a minimizer.
    let mut floor = QuadConstraint { p: RMat::zeros(n + 1, n + 1), q: RVec::zeros(n + 1), s: -1.0, tag: None };
    floor.q[n] = -1.0;
    aug.push(floor);
    let mut c = RVec::zeros(n + 1);
    c[n] = 1.0;
    let mut z = RVec::zeros(n + 1);
    z.rows_mut(0, n).copy_from(x0);
    z[n] = worst.max(0.0) + 1.0;
    let stop = |z: &RVec| z[n] < -1e-9;
    let barrier = Barrier { c: &c, cons: &aug, max_stage_steps: 200 };
    barrier.solve(&mut z, 1e-12, budget, &stop);
    let x = z.rows(0, n).into_owned();
    if cons.iter().all(|k| k.value(&x) < 0.0) {
        Some(x)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_objective_on_ball_hits_boundary() {
        let c = RVec::from_vec(vec![3.0, -4.0]);
        let sol = solve(&c, &[QuadConstraint::ball(2, 2.0)], &RVec::zeros(2), &QcqpOptions::default()).unwrap();
        let expect = -&c / c.norm() * 2.0;
        assert!((&sol.x - expect).norm() < 1e-6);
        assert!(sol.kkt.max() <= 1e-6);
    }

    #[test]
    fn infeasible_start_is_repaired() {
        // ‖x‖² ≤ 1 and x₀ ≥ 0.5 (as -x₀ + 0.5 ≤ 0), minimize x₀ from outside the set.
        let mut half = QuadConstraint { p: RMat::zeros(2, 2), q: RVec::from_vec(vec![-1.0, 0.0]), s: 0.5, tag: Some(3) };
        let cons = vec![QuadConstraint::ball(2, 1.0), half.clone()];
        let sol = solve(&RVec::from_vec(vec![1.0, 0.0]), &cons, &RVec::from_vec(vec![5.0, 5.0]), &QcqpOptions::default()).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-6);
        half.s = 2.0;
        let err = solve(&RVec::from_vec(vec![1.0, 0.0]), &[QuadConstraint::ball(2, 1.0), half], &RVec::zeros(2), &QcqpOptions::default());
        assert!(matches!(err, Err(Error::Infeasible { user: 3, .. })));
    }

    #[test]
    fn zero_objective_returns_start() {
        let x0 = RVec::from_vec(vec![0.1, 0.2]);
        let sol = solve(&RVec::zeros(2), &[QuadConstraint::ball(2, 1.0)], &x0, &QcqpOptions::default()).unwrap();
        assert_eq!(sol.x, x0);
    }
}
