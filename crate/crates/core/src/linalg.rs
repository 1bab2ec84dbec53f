//! Small dense complex linear-algebra helpers shared by the rate, surrogate and
//! beamforming code.
//!
//! Matrices are `nalgebra` dynamic matrices over `Complex<f64>`. The real inner
//! product used throughout is `⟨A, B⟩ = Re tr(Aᴴ B)`, which is the one that makes
//! gradients of real functions of complex matrices well defined
//! (`∂f/∂Re A + i ∂f/∂Im A`).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Relative tolerance used to accept a Hermitian matrix as positive definite.
pub const PD_EIG_TOL: f64 = 1e-10;

/// `(A + Aᴴ)/2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Real inner product `Re tr(Aᴴ B)`.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frob_sq(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let h = hermitian_part(a);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn condition_of(vals: &[f64]) -> f64 {
    let lo = vals.first().copied().unwrap_or(0.0);
    let hi = vals.last().copied().unwrap_or(0.0);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Cholesky factor of the Hermitian-cleaned matrix, with a condition report on failure.
fn cholesky_hpd(a: &CMat, what: &str) -> Result<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(Error::shape(format!(
            "{what}: expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let h = hermitian_part(a);
    if let Some(chol) = nalgebra::Cholesky::new(h.clone()) {
        let l = chol.l_dirty();
        // nalgebra takes complex square roots of negative pivots, so check the diagonal.
        let ok = (0..l.nrows()).all(|i| {
            let d = l[(i, i)];
            d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
        });
        if ok {
            return Ok(chol);
        }
    }
    // Only pay for the eigen-decomposition on the failure path.
    let vals = hermitian_eigenvalues(&h);
    let trace: f64 = vals.iter().map(|v| v.abs()).sum();
    let lo = vals.first().copied().unwrap_or(0.0);
    let kind = if lo < -PD_EIG_TOL * trace {
        "indefinite"
    } else {
        "numerically singular"
    };
    Err(Error::Numerical {
        what: format!("{what}: matrix is {kind} (min eig {lo:.3e})"),
        condition: condition_of(&vals),
    })
}

/// Natural-log determinant of a Hermitian positive definite matrix.
pub fn logdet_hpd(a: &CMat) -> Result<f64> {
    let chol = cholesky_hpd(a, "log-det")?;
    let l = chol.l_dirty();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Inverse of a Hermitian positive definite matrix; the result is re-symmetrized.
pub fn inverse_hpd(a: &CMat) -> Result<CMat> {
    let chol = cholesky_hpd(a, "inverse")?;
    Ok(hermitian_part(&chol.inverse()))
}

/// General inverse via LU, failing on singular input.
pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone().try_inverse().ok_or_else(|| Error::Numerical {
        what: "inverse of singular matrix".into(),
        condition: f64::INFINITY,
    })
}

/// Map a Hermitian `n×n` matrix `W` onto the real symmetric `2n×2n` matrix `M` with
/// `vᴴ W v = [Re v; Im v]ᵀ M [Re v; Im v]`.
pub fn realify_hermitian(w: &CMat) -> RMat {
    let n = w.nrows();
    let mut m = RMat::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let x = w[(r, c)];
            m[(r, c)] = x.re;
            m[(r + n, c + n)] = x.re;
            m[(r, c + n)] = -x.im;
            m[(r + n, c)] = x.im;
        }
    }
    // symmetrize against round-off in the input
    (&m + m.transpose()) * 0.5
}

/// One CN(0,1) draw: real and imaginary parts are independent N(0, 1/2).
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn sample_cn_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    // column-major fill so the draw order is stable
    let mut m = CMat::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = sample_cn(rng);
        }
    }
    m
}

pub fn sample_cn_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVec {
    CVec::from_iterator(len, (0..len).map(|_| sample_cn(rng)))
}

pub fn sample_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> RMat {
    let mut m = RMat::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Pairwise (cascade) summation; result does not depend on how the slice was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

pub fn real_to_complex(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logdet_matches_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sample_cn_matrix(4, 4, &mut rng);
        let h = &a * a.adjoint() + identity(4);
        let via_eig: f64 = hermitian_eigenvalues(&h).iter().map(|x| x.ln()).sum();
        assert!((logdet_hpd(&h).unwrap() - via_eig).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_reports_condition() {
        let mut m = identity(2);
        m[(1, 1)] = C64::new(-1.0, 0.0);
        match logdet_hpd(&m) {
            Err(Error::Numerical { condition, .. }) => assert!(condition.is_infinite()),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn realified_quadratic_form_matches_complex() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = sample_cn_matrix(3, 3, &mut rng);
        let w = &a * a.adjoint();
        let v = sample_cn_vector(3, &mut rng);
        let direct = (v.adjoint() * &w * &v)[(0, 0)].re;
        let x = RVec::from_iterator(6, v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)));
        let real = (x.transpose() * realify_hermitian(&w) * &x)[(0, 0)];
        assert!((direct - real).abs() < 1e-12);
    }

    #[test]
    fn cn_samples_have_unit_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let p: f64 = (0..n).map(|_| sample_cn(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.01);
    }
}
