//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two column vectors, `u ⊗ h`.
pub fn kron_vec(u: &CVec, h: &CVec) -> CVec {
    let m = h.len();
    CVec::from_fn(u.len() * m, |r, _| u[r / m] * h[r % m])
}

/// Adds `scale · x xᴴ` to `acc` in place.
pub fn add_outer(acc: &mut CMat, x: &CVec, scale: f64) {
    let n = x.len();
    for j in 0..n {
        let xj = x[j].conj() * scale;
        for i in 0..n {
            acc[(i, j)] += x[i] * xj;
        }
    }
}

/// Real part of `tr(a b)` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// ‖a − aᴴ‖_F / ‖a‖_F, or 0 for the zero matrix.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.adjoint()).norm() / norm
}

/// Frobenius-relative distance ‖a − b‖_F / ‖b‖_F.
pub fn frobenius_relative(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm()
}

/// Hermitian square-root factor `F` with `F Fᴴ = a`.
///
/// Eigenvalues in `[-tol, 0)` are clipped to zero; anything more negative is
/// reported as a numerical failure.
pub fn psd_factor(a: &CMat, tol: f64) -> Result<(CMat, f64)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((CMat::zeros(0, 0), 0.0));
    }
    let eig = a.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::numerical(format!(
            "matrix is not positive semidefinite (min eigenvalue {min:e}, tolerance {tol:e})"
        )));
    }
    let mut f = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok((f, min))
}

/// Solves `a x = b` for Hermitian positive definite `a`.
pub fn hermitian_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("Cholesky factorization failed; matrix is not positive definite"))?;
    Ok(chol.solve(b))
}

/// Inverse of a Hermitian positive definite matrix, re-symmetrized.
pub fn hermitian_inverse(a: &CMat) -> Result<CMat> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("Cholesky factorization failed; matrix is not positive definite"))?;
    let inv = chol.inverse();
    Ok((&inv + inv.adjoint()).scale(0.5))
}

/// Symmetrizes in place: `a ← (a + aᴴ)/2`.
pub fn hermitize(a: &mut CMat) {
    let n = a.nrows();
    for j in 0..n {
        a[(j, j)] = real(a[(j, j)].re);
        for i in 0..j {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

/// One draw from CN(0, 1).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Vector of i.i.d. CN(0, 1) entries.
pub fn complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng))
}

/// Sample covariance `(1/n) Σ x xᴴ` of a set of equal-length vectors.
pub fn sample_covariance<'a, I>(samples: I, dim: usize) -> CMat
where
    I: IntoIterator<Item = &'a CVec>,
{
    let mut acc = CMat::zeros(dim, dim);
    let mut count = 0usize;
    for x in samples {
        add_outer(&mut acc, x, 1.0);
        count += 1;
    }
    if count > 0 {
        acc /= real(count as f64);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn kron_of_small_matrices() {
        let a = CMat::from_row_slice(2, 1, &[c(1.0, 0.0), c(0.0, 2.0)]);
        let b = CMat::from_row_slice(1, 2, &[c(3.0, 0.0), c(1.0, -1.0)]);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (2, 2));
        assert_eq!(k[(0, 0)], c(3.0, 0.0));
        assert_eq!(k[(0, 1)], c(1.0, -1.0));
        assert_eq!(k[(1, 0)], c(0.0, 6.0));
        assert_eq!(k[(1, 1)], c(2.0, 2.0));
    }

    #[test]
    fn kron_vec_matches_matrix_kron() {
        let u = CVec::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.5)]);
        let h = CVec::from_vec(vec![c(0.3, 0.1), c(2.0, -1.0), c(0.0, 1.0)]);
        let via_mat = kron(&CMat::from_column_slice(2, 1, u.as_slice()), &CMat::from_column_slice(3, 1, h.as_slice()));
        let v = kron_vec(&u, &h);
        for i in 0..6 {
            assert_eq!(v[i], via_mat[(i, 0)]);
        }
    }

    #[test]
    fn psd_factor_reconstructs_singular_matrix() {
        let a = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)]);
        let r = &a * a.adjoint();
        let (f, _) = psd_factor(&r, 1e-12).unwrap();
        assert!(frobenius_relative(&(&f * f.adjoint()), &r) < 1e-12);
    }

    #[test]
    fn psd_factor_rejects_indefinite() {
        let r = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0, 0.0), c(-0.5, 0.0)]));
        assert!(matches!(psd_factor(&r, 1e-10), Err(Error::Numerical(_))));
    }

    #[test]
    fn hermitian_solve_roundtrip() {
        let a = CMat::from_row_slice(2, 2, &[c(4.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)]);
        let b = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 1.0)]);
        let x = hermitian_solve(&a, &b).unwrap();
        assert!((&a * &x - &b).norm() < 1e-14);
    }
}
