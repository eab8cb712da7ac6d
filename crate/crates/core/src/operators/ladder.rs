use nalgebra::ComplexField;

use crate::error::{Error, Result};
use crate::scalar::{CVector, Real};

use super::TruncatedOperator;

/// Spectrum of the control operator `C` in its own eigenbasis.
///
/// The basis is the `C`-eigenbasis, so `C` acts diagonally and the Galerkin
/// subspaces are spanned by the first `m` basis vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationLadder<T: Real> {
    eigenvalues: Vec<T>,
}

impl<T: Real> TruncationLadder<T> {
    pub fn new(eigenvalues: Vec<T>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidDimension("empty ladder".into()));
        }
        if eigenvalues.iter().any(|&l| !(l >= T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidInput(
                "ladder eigenvalues must be finite and nonnegative".into(),
            ));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput(
                "ladder eigenvalues must be nondecreasing".into(),
            ));
        }
        Ok(Self { eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// `lambda_k` with the 1-based index used for the projection-error bound.
    pub fn lambda(&self, k: usize) -> T {
        self.eigenvalues[k - 1]
    }

    pub fn largest(&self) -> T {
        self.eigenvalues[self.dim() - 1]
    }

    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: m,
            });
        }
        Ok(Self {
            eigenvalues: self.eigenvalues[..m].to_vec(),
        })
    }

    pub fn as_operator(&self) -> TruncatedOperator<T> {
        TruncatedOperator::diagonal(&self.eigenvalues)
    }

    /// `C x`.
    pub fn apply(&self, x: &CVector<T>) -> CVector<T> {
        CVector::from_iterator(
            x.len(),
            x.iter().zip(&self.eigenvalues).map(|(z, &l)| z.scale(l)),
        )
    }

    /// `||C x||^2`.
    pub fn c_part_sq(&self, x: &CVector<T>) -> T {
        x.iter()
            .zip(&self.eigenvalues)
            .fold(T::zero(), |acc, (z, &l)| acc + z.modulus_squared() * l * l)
    }
}

/// `||x||_C = (||x||^2 + ||C x||^2)^{1/2}`.
pub fn c_norm<T: Real>(x: &CVector<T>, ladder: &TruncationLadder<T>) -> Result<T> {
    if x.len() != ladder.dim() {
        return Err(Error::DimensionMismatch {
            expected: ladder.dim(),
            found: x.len(),
        });
    }
    let s = x
        .iter()
        .zip(ladder.eigenvalues())
        .fold(T::zero(), |acc, (z, &l)| {
            acc + z.modulus_squared() * (T::one() + l * l)
        });
    Ok(s.sqrt())
}
