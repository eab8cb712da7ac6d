//! Small dense complex linear-algebra helpers.

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::scalar::{real, CMatrix, CVector, Real};

/// Largest entry modulus, `max |A_jk|`.
pub fn max_modulus<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(z.modulus()))
}

/// Largest deviation from Hermiticity, `max |A_jk - conj(A_kj)|`.
pub fn hermitian_defect<T: Real>(m: &CMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for j in 0..n {
        for k in j..n {
            let d = (m[(j, k)] - m[(k, j)].conj()).modulus();
            worst = worst.max(d);
        }
    }
    worst
}

/// Replaces `m` by `(m + m^†)/2` in place and returns half the removed skew part.
pub fn hermitize<T: Real>(m: &mut CMatrix<T>) -> T {
    let n = m.nrows();
    let half = T::lit(0.5);
    let mut worst_sq = T::zero();
    let s = m.as_mut_slice();
    for j in 0..n {
        let d = s[j * n + j];
        worst_sq = worst_sq.max(T::lit(4.0) * d.im * d.im);
        s[j * n + j] = real(d.re);
        for k in (j + 1)..n {
            let a = s[k * n + j];
            let b = s[j * n + k].conj();
            let avg = (a + b).scale(half);
            worst_sq = worst_sq.max((a - b).norm_sqr());
            s[k * n + j] = avg;
            s[j * n + k] = avg.conj();
        }
    }
    worst_sq.sqrt() * half
}

pub fn trace<T: Real>(m: &CMatrix<T>) -> Complex<T> {
    m.diagonal().iter().fold(Complex::new(T::zero(), T::zero()), |acc, z| acc + z)
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    let n = a.nrows();
    let (sa, sb) = (a.as_slice(), b.as_slice());
    let mut acc = Complex::new(T::zero(), T::zero());
    for c in 0..n {
        for r in 0..n {
            acc += sa[r * n + c] * sb[c * n + r];
        }
    }
    acc
}

/// Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm<T: Real>(m: &CMatrix<T>) -> T {
    m.iter()
        .fold(T::zero(), |acc, z| acc + z.modulus_squared())
        .sqrt()
}

pub fn vector_norm_sq<T: Real>(v: &CVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + z.modulus_squared())
}

/// `(u, v) = u^† v`.
pub fn inner<T: Real>(u: &CVector<T>, v: &CVector<T>) -> Complex<T> {
    u.iter()
        .zip(v.iter())
        .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub fn hermitian_eigen<T: Real>(m: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn hermitian_eigenvalues<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    let mut v: Vec<T> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue<T: Real>(m: &CMatrix<T>) -> T {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(T::max_value().unwrap_or_else(T::one), |acc, &x| acc.min(x))
}

/// Largest eigenvalue and a matching unit eigenvector of a Hermitian matrix.
pub fn top_eigenpair<T: Real>(m: &CMatrix<T>) -> (T, CVector<T>) {
    let (values, vectors) = hermitian_eigen(m);
    let n = values.len();
    (values[n - 1], vectors.column(n - 1).into_owned())
}

/// Trace norm `tr|A|` of a Hermitian matrix (sum of absolute eigenvalues).
pub fn trace_norm_hermitian<T: Real>(m: &CMatrix<T>) -> T {
    hermitian_eigenvalues(m)
        .into_iter()
        .fold(T::zero(), |acc, x| acc + x.abs())
}

/// Operator (spectral) norm, computed from singular values.
pub fn spectral_norm<T: Real>(m: &CMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(T::zero(), |acc, &x| acc.max(x))
}

/// Real symmetric matrix promoted to complex entries.
pub fn complexify<T: Real>(m: &DMatrix<T>) -> CMatrix<T> {
    m.map(real)
}
