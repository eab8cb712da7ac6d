//! Hermite-basis constructors for the oscillator-controlled models.
//!
//! Basis vectors are the Hermite functions `h_0, h_1, ...`, the eigenvectors of
//! `x^2 + p^2` with eigenvalues `1, 3, 5, ...` (units with `hbar = 1`).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cplx, CMatrix, Real};

use super::{TruncatedOperator, TruncationLadder};

/// Extra Gauss–Hermite nodes beyond `2m` used when assembling `V(x)`.
pub const QUADRATURE_PADDING: usize = 16;

fn require_dim(m: usize, min: usize) -> Result<()> {
    if m < min {
        return Err(Error::InvalidDimension(format!(
            "dimension {m} below minimum {min}"
        )));
    }
    Ok(())
}

/// Eigenvalues of `(x^2 + p^2)^q` on the first `m` Hermite modes: `(2k - 1)^q`.
pub fn build_oscillator_ladder<T: Real>(m: usize, power: u32) -> Result<TruncationLadder<T>> {
    require_dim(m, 1)?;
    if power == 0 {
        return Err(Error::InvalidInput("control power must be >= 1".into()));
    }
    let values = (0..m)
        .map(|k| T::from_usize_lossy(2 * k + 1).powi(power as i32))
        .collect();
    TruncationLadder::new(values)
}

fn ladder_element<T: Real>(k: usize) -> T {
    // <k| x |k+1> = sqrt((k+1)/2)
    (T::from_usize_lossy(k + 1) * T::lit(0.5)).sqrt()
}

/// Position operator `x = (a + a^+)/sqrt(2)`, tridiagonal.
pub fn build_position<T: Real>(m: usize) -> Result<TruncatedOperator<T>> {
    require_dim(m, 2)?;
    let mut e = CMatrix::zeros(m, m);
    for k in 0..m - 1 {
        let v = cplx(ladder_element::<T>(k), T::zero());
        e[(k, k + 1)] = v;
        e[(k + 1, k)] = v;
    }
    TruncatedOperator::with_band(e, 1)
}

/// Momentum operator `p = -i (a - a^+)/sqrt(2)`, so that `[x, p] = i`.
pub fn build_momentum<T: Real>(m: usize) -> Result<TruncatedOperator<T>> {
    require_dim(m, 2)?;
    let mut e = CMatrix::zeros(m, m);
    for k in 0..m - 1 {
        let v = ladder_element::<T>(k);
        e[(k, k + 1)] = cplx(T::zero(), -v);
        e[(k + 1, k)] = cplx(T::zero(), v);
    }
    TruncatedOperator::with_band(e, 1)
}

/// Annihilation operator `a`; at `m = 2` this is the qubit lowering operator.
pub fn build_annihilation<T: Real>(m: usize) -> Result<TruncatedOperator<T>> {
    require_dim(m, 2)?;
    let mut e = CMatrix::zeros(m, m);
    for k in 0..m - 1 {
        e[(k, k + 1)] = cplx(T::from_usize_lossy(k + 1).sqrt(), T::zero());
    }
    TruncatedOperator::with_band(e, 1)
}

/// Coupling `L = a x + b p` with real coefficients.
pub fn build_coupling<T: Real>(a_coef: T, b_coef: T, m: usize) -> Result<TruncatedOperator<T>> {
    let x = build_position::<T>(m)?;
    let p = build_momentum::<T>(m)?;
    let e = x.entries().map(|z| z.scale(a_coef)) + p.entries().map(|z| z.scale(b_coef));
    TruncatedOperator::with_band(e, 1)
}

/// `P_m p^2 P_m`, pentadiagonal and real.
pub fn build_kinetic<T: Real>(m: usize) -> Result<TruncatedOperator<T>> {
    require_dim(m, 1)?;
    let half = T::lit(0.5);
    let mut e = CMatrix::zeros(m, m);
    for k in 0..m {
        e[(k, k)] = cplx(T::from_usize_lossy(2 * k + 1) * half, T::zero());
        if k + 2 < m {
            let v = -(T::from_usize_lossy((k + 1) * (k + 2))).sqrt() * half;
            e[(k, k + 2)] = cplx(v, T::zero());
            e[(k + 2, k)] = cplx(v, T::zero());
        }
    }
    TruncatedOperator::with_band(e, 2.min(m - 1))
}

/// `P_m V(x) P_m` by Gauss–Hermite quadrature with `2m + 16` nodes.
///
/// Roundoff entries outside the detected band are set to zero.
///
/// The nodes and weights come from the Golub–Welsch eigenproblem of the
/// position matrix at the quadrature size `N`; the eigenvector matrix `U` then
/// gives `V_jk = sum_i U_ji U_ki V(x_i)`, exact for polynomials of degree
/// below `2N - 2m + 1`.
pub fn build_potential<T: Real>(potential: &dyn Fn(T) -> T, m: usize) -> Result<TruncatedOperator<T>> {
    require_dim(m, 1)?;
    let n = 2 * m + QUADRATURE_PADDING;
    let jacobi = DMatrix::<T>::from_fn(n, n, |r, c| {
        if r + 1 == c {
            ladder_element::<T>(r)
        } else if c + 1 == r {
            ladder_element::<T>(c)
        } else {
            T::zero()
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut samples = Vec::with_capacity(n);
    for &node in eig.eigenvalues.iter() {
        let v = potential(node);
        if !v.is_finite() {
            return Err(Error::InvalidPotential { x: node.as_f64() });
        }
        samples.push(v);
    }
    let u = &eig.eigenvectors;
    let mut e = CMatrix::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            let mut acc = T::zero();
            for (i, &v) in samples.iter().enumerate() {
                acc += u[(j, i)] * u[(k, i)] * v;
            }
            e[(j, k)] = cplx(acc, T::zero());
            e[(k, j)] = cplx(acc, T::zero());
        }
    }
    let band = TruncatedOperator::new(e.clone())?.band_width();
    match band {
        Some(b) => {
            for c in 0..m {
                for r in 0..m {
                    if r.abs_diff(c) > b {
                        e[(r, c)] = Complex::new(T::zero(), T::zero());
                    }
                }
            }
            TruncatedOperator::with_band(e, b)
        }
        None => TruncatedOperator::new(e),
    }
}

/// `H = kinetic * p^2 + V(x)` truncated to `m` modes.
pub fn build_hamiltonian_scaled<T: Real>(
    kinetic: T,
    potential: &dyn Fn(T) -> T,
    m: usize,
) -> Result<TruncatedOperator<T>> {
    require_dim(m, 2)?;
    let p2 = build_kinetic::<T>(m)?.scale(Complex::new(kinetic, T::zero()));
    let v = build_potential(potential, m)?;
    p2.add(&v)
}

/// `H = p^2 + V(x)` truncated to `m` modes.
pub fn build_hamiltonian<T: Real>(potential: &dyn Fn(T) -> T, m: usize) -> Result<TruncatedOperator<T>> {
    build_hamiltonian_scaled(T::one(), potential, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_defect, hermitian_eigenvalues};
    use crate::operators::detect_band_width;

    // Hermite functions by three-term recurrence on a grid, integrated by the
    // trapezoid rule. Independent of the ladder-matrix construction.
    fn hermite_table(m: usize, xs: &[f64]) -> Vec<Vec<f64>> {
        let mut h = vec![vec![0.0; xs.len()]; m];
        for (i, &x) in xs.iter().enumerate() {
            h[0][i] = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
            if m > 1 {
                h[1][i] = 2f64.sqrt() * x * h[0][i];
            }
            for k in 1..m - 1 {
                let kf = k as f64;
                h[k + 1][i] = (2.0 / (kf + 1.0)).sqrt() * x * h[k][i] - (kf / (kf + 1.0)).sqrt() * h[k - 1][i];
            }
        }
        h
    }

    fn grid_matrix(m: usize, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = 8001;
        let xs: Vec<f64> = (0..n).map(|i| -20.0 + 40.0 * i as f64 / (n - 1) as f64).collect();
        let dx = xs[1] - xs[0];
        let h = hermite_table(m, &xs);
        DMatrix::from_fn(m, m, |j, k| xs.iter().enumerate().map(|(i, &x)| h[j][i] * f(x) * h[k][i]).sum::<f64>() * dx)
    }

    #[test]
    fn ladder_eigenvalues() {
        let l1 = build_oscillator_ladder::<f64>(1, 1).unwrap();
        assert_eq!(l1.eigenvalues(), &[1.0]);
        let l3 = build_oscillator_ladder::<f64>(3, 1).unwrap();
        assert_eq!(l3.eigenvalues(), &[1.0, 3.0, 5.0]);
        let sq = build_oscillator_ladder::<f64>(2, 2).unwrap();
        assert_eq!(sq.eigenvalues(), &[1.0, 9.0]);
        assert!(matches!(build_oscillator_ladder::<f64>(0, 1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn ladder_matches_oscillator_diagonalisation() {
        let x = build_position::<f64>(8).unwrap();
        let p = build_momentum::<f64>(8).unwrap();
        let c = x.compose(&x).unwrap().add(&p.compose(&p).unwrap()).unwrap();
        let eig = hermitian_eigenvalues(c.entries());
        // the two corner modes are polluted by truncation of x^2 and p^2
        let mut interior: Vec<f64> = eig.clone();
        interior.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, want) in [1.0, 3.0, 5.0].iter().enumerate() {
            assert!((interior[k] - want).abs() < 1e-12, "{interior:?}");
        }
    }

    #[test]
    fn position_matches_quadrature() {
        let x = build_position::<f64>(2).unwrap();
        let e = x.entries();
        assert!(e[(0, 0)].norm() < 1e-15);
        assert!((e[(0, 1)].re - 0.5f64.sqrt()).abs() < 1e-15);
        let oracle = grid_matrix(6, |x| x);
        let x6 = build_position::<f64>(6).unwrap();
        for j in 0..6 {
            for k in 0..6 {
                assert!((x6.entries()[(j, k)].re - oracle[(j, k)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn momentum_hermitian_banded_and_canonical() {
        let p = build_momentum::<f64>(2).unwrap();
        assert!(p.is_hermitian());
        assert_eq!(p.band_width(), Some(1));
        let m = 10;
        let x = build_position::<f64>(m).unwrap();
        let p = build_momentum::<f64>(m).unwrap();
        let comm = x.commutator(&p).unwrap();
        for j in 0..m - 2 {
            for k in 0..m - 2 {
                let want = if j == k { Complex::new(0.0, 1.0) } else { Complex::new(0.0, 0.0) };
                assert!((comm.entries()[(j, k)] - want).norm() < 1e-12);
            }
        }
        assert!((comm.entries()[(m - 1, m - 1)] - Complex::new(0.0, 1.0)).norm() > 1.0);
    }

    #[test]
    fn coupling_combinations() {
        let x = build_position::<f64>(3).unwrap();
        assert_eq!(build_coupling(1.0, 0.0, 3).unwrap().entries(), x.entries());
        let zero = build_coupling(0.0, 0.0, 3).unwrap();
        assert!(zero.entries().iter().all(|z| *z == Complex::new(0.0, 0.0)));
        let mixed = build_coupling(1.0, 1.0, 3).unwrap();
        assert!(mixed.is_hermitian());
        assert_eq!(mixed.band_width(), Some(1));
    }

    #[test]
    fn kinetic_matches_quadrature_of_second_derivative() {
        // (h_j, p^2 h_k) = (h_j, (x^2 + p^2) h_k) - (h_j, x^2 h_k)
        let m = 6;
        let x2 = grid_matrix(m, |x| x * x);
        let kin = build_kinetic::<f64>(m).unwrap();
        for j in 0..m {
            for k in 0..m {
                let c = if j == k { (2 * k + 1) as f64 } else { 0.0 };
                assert!((kin.entries()[(j, k)].re - (c - x2[(j, k)])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let h0 = build_hamiltonian::<f64>(&|_| 0.0, 2).unwrap();
        assert!((h0.entries() - build_kinetic::<f64>(2).unwrap().entries()).norm() < 1e-14);
        let osc = build_hamiltonian::<f64>(&|x| x * x, 4).unwrap();
        let eig = hermitian_eigenvalues(osc.entries());
        for (got, want) in eig.iter().zip([1.0, 3.0, 5.0, 7.0]) {
            assert!((got - want).abs() < 1e-10);
        }
        let cosine = build_hamiltonian::<f64>(&|x: f64| x.cos(), 8).unwrap();
        assert!(hermitian_defect(cosine.entries()) < 1e-10);
        assert!(cosine.is_hermitian());
    }

    #[test]
    fn potential_matches_grid_quadrature() {
        let m = 8;
        let v = build_potential::<f64>(&|x: f64| x.cos(), m).unwrap();
        let oracle = grid_matrix(m, f64::cos);
        for j in 0..m {
            for k in 0..m {
                assert!((v.entries()[(j, k)].re - oracle[(j, k)]).abs() < 1e-9);
            }
        }
        // cos is even: only the odd-parity corner coupling vanishes
        assert_eq!(detect_band_width(&v), Some(m - 2));
    }

    #[test]
    fn potential_rejects_non_finite_samples() {
        let err = build_potential::<f64>(&|x: f64| if x > 1.0 { f64::NAN } else { x }, 3).unwrap_err();
        assert!(matches!(err, Error::InvalidPotential { .. }));
    }

    #[test]
    fn single_precision_builders() {
        let x = build_position::<f32>(4).unwrap();
        assert!(x.is_hermitian());
        let h = build_hamiltonian::<f32>(&|x| x * x, 4).unwrap();
        let eig = hermitian_eigenvalues(h.entries());
        assert!((eig[0] - 1.0).abs() < 1e-4);
    }
}
