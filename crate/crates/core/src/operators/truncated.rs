use nalgebra::ComplexField;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, max_modulus, spectral_norm};
use crate::scalar::{CMatrix, CVector, Real};

/// Dense `m x m` matrix representing `P_m A P_m` in the control-operator eigenbasis.
///
/// Products against vectors and matrices skip entries outside the exact
/// structural band, so tridiagonal couplings cost `O(m)` per column.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedOperator<T: Real> {
    entries: CMatrix<T>,
    is_hermitian: bool,
    band_width: Option<usize>,
    kernel_band: usize,
}

impl<T: Real> TruncatedOperator<T> {
    /// Wraps a square matrix, detecting Hermiticity and band width.
    pub fn new(entries: CMatrix<T>) -> Result<Self> {
        check_square(&entries)?;
        let band_width = band_width_of(&entries);
        Ok(Self::assemble(entries, band_width))
    }

    /// Wraps a matrix whose band width is known from its construction.
    ///
    /// The declared band must satisfy the band invariant at the structural
    /// tolerance.
    pub fn with_band(entries: CMatrix<T>, band: usize) -> Result<Self> {
        check_square(&entries)?;
        let tol = T::structural_tolerance() * max_modulus(&entries);
        let m = entries.nrows();
        for c in 0..m {
            for r in 0..m {
                if r.abs_diff(c) > band && entries[(r, c)].modulus() > tol {
                    return Err(Error::InvalidInput(format!(
                        "entry ({r}, {c}) lies outside declared band {band}"
                    )));
                }
            }
        }
        Ok(Self::assemble(entries, Some(band.min(m.saturating_sub(1)))))
    }

    fn assemble(entries: CMatrix<T>, band_width: Option<usize>) -> Self {
        let scale = max_modulus(&entries);
        let is_hermitian = hermitian_defect(&entries) <= T::structural_tolerance() * scale;
        let kernel_band = structural_band(&entries);
        Self {
            entries,
            is_hermitian,
            band_width,
            kernel_band,
        }
    }

    pub fn identity(m: usize) -> Self {
        Self::assemble(CMatrix::identity(m, m), Some(0))
    }

    pub fn zeros(m: usize) -> Self {
        Self::assemble(CMatrix::zeros(m, m), Some(0))
    }

    pub fn diagonal(values: &[T]) -> Self {
        let m = values.len();
        let entries = CMatrix::from_fn(m, m, |r, c| {
            if r == c {
                Complex::new(values[r], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        });
        Self::assemble(entries, Some(0))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix<T> {
        &self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.is_hermitian
    }

    pub fn band_width(&self) -> Option<usize> {
        self.band_width
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
            is_hermitian: self.is_hermitian,
            band_width: self.band_width,
            kernel_band: self.kernel_band,
        }
    }

    pub fn scale(&self, factor: Complex<T>) -> Self {
        let band = self.band_width;
        let mut out = Self::assemble(self.entries.map(|z| z * factor), band);
        out.band_width = band;
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let band = match (self.band_width, other.band_width) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        Ok(Self::assemble(&self.entries + &other.entries, band).refined_band())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex::new(-T::one(), T::zero())))
    }

    /// Operator product `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let band = match (self.band_width, other.band_width) {
            (Some(a), Some(b)) => Some((a + b).min(self.dim() - 1)),
            _ => None,
        };
        Ok(Self::assemble(self.mul_left(&other.entries), band).refined_band())
    }

    /// `[self, other] = self*other - other*self`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.compose(other)?.sub(&other.compose(self)?)
    }

    /// Top-left `m x m` block, i.e. the Galerkin truncation `P_m A P_m`.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidDimension("truncation to dimension 0".into()));
        }
        if m > self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: m,
            });
        }
        let block = self.entries.view((0, 0), (m, m)).into_owned();
        let band = self.band_width.map(|l| l.min(m - 1));
        Ok(Self::assemble(block, band).refined_band())
    }

    /// Zero-padding embedding into a larger space.
    pub fn embed(&self, m: usize) -> Result<Self> {
        if m < self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: m,
            });
        }
        let mut big = CMatrix::zeros(m, m);
        big.view_mut((0, 0), (self.dim(), self.dim()))
            .copy_from(&self.entries);
        Ok(Self::assemble(big, self.band_width))
    }

    /// Keeps a declared band unless detection finds a narrower one.
    fn refined_band(mut self) -> Self {
        if let Some(detected) = band_width_of(&self.entries) {
            self.band_width = Some(match self.band_width {
                Some(l) => l.min(detected),
                None => detected,
            });
        }
        self
    }

    pub fn spectral_norm(&self) -> T {
        spectral_norm(&self.entries)
    }

    /// Matrix-vector product `A x`.
    pub fn apply(&self, x: &CVector<T>) -> CVector<T> {
        let m = self.dim();
        debug_assert_eq!(x.len(), m);
        let mut y = CVector::zeros(m);
        banded_column(
            self.entries.as_slice(),
            m,
            self.kernel_band,
            x.as_slice(),
            y.as_mut_slice(),
        );
        y
    }

    /// `A M` for an `m x k` matrix `M`.
    pub fn mul_left(&self, rhs: &CMatrix<T>) -> CMatrix<T> {
        let m = self.dim();
        debug_assert_eq!(rhs.nrows(), m);
        let k = rhs.ncols();
        let mut out = CMatrix::zeros(m, k);
        let a = self.entries.as_slice();
        for (src, dst) in rhs
            .as_slice()
            .chunks_exact(m)
            .zip(out.as_mut_slice().chunks_exact_mut(m))
        {
            banded_column(a, m, self.kernel_band, src, dst);
        }
        out
    }

    /// `M A` for a `k x m` matrix `M`.
    pub fn mul_right(&self, lhs: &CMatrix<T>) -> CMatrix<T> {
        let m = self.dim();
        debug_assert_eq!(lhs.ncols(), m);
        let rows = lhs.nrows();
        let mut out = CMatrix::zeros(rows, m);
        let a = self.entries.as_slice();
        let l = lhs.as_slice();
        let band = self.kernel_band;
        let o = out.as_mut_slice();
        for c in 0..m {
            let lo = c.saturating_sub(band);
            let hi = (c + band).min(m - 1);
            let dst = &mut o[c * rows..(c + 1) * rows];
            for r in lo..=hi {
                let coef = a[c * m + r];
                if coef.re == T::zero() && coef.im == T::zero() {
                    continue;
                }
                let src = &l[r * rows..(r + 1) * rows];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += *s * coef;
                }
            }
        }
        out
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> OperatorJson {
        let m = self.dim();
        OperatorJson {
            dim: m,
            re: (0..m)
                .map(|r| (0..m).map(|c| self.entries[(r, c)].re.as_f64()).collect())
                .collect(),
            im: (0..m)
                .map(|r| (0..m).map(|c| self.entries[(r, c)].im.as_f64()).collect())
                .collect(),
            hermitian: self.is_hermitian,
            band_width: self.band_width,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("operator serialises")
    }

    /// Parses the `{dim, re, im, hermitian, band_width}` form and re-validates
    /// the recorded flags against the entries.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: OperatorJson =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::from_json_value(&raw)
    }

    pub fn from_json_value(raw: &OperatorJson) -> Result<Self> {
        let m = raw.dim;
        if raw.re.len() != m || raw.im.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: raw.re.len().min(raw.im.len()),
            });
        }
        for row in raw.re.iter().chain(raw.im.iter()) {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: row.len(),
                });
            }
        }
        let entries = CMatrix::from_fn(m, m, |r, c| {
            Complex::new(T::lit(raw.re[r][c]), T::lit(raw.im[r][c]))
        });
        let op = match raw.band_width {
            Some(l) => Self::with_band(entries, l)?,
            None => Self::new(entries)?,
        };
        if raw.hermitian && !op.is_hermitian {
            return Err(Error::NotHermitian {
                defect: hermitian_defect(&op.entries).as_f64(),
            });
        }
        Ok(op)
    }
}

/// JSON wire form of a [`TruncatedOperator`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    pub hermitian: bool,
    pub band_width: Option<usize>,
}

fn check_square<T: Real>(entries: &CMatrix<T>) -> Result<()> {
    if entries.nrows() == 0 {
        return Err(Error::InvalidDimension("operator of dimension 0".into()));
    }
    if entries.nrows() != entries.ncols() {
        return Err(Error::DimensionMismatch {
            expected: entries.nrows(),
            found: entries.ncols(),
        });
    }
    Ok(())
}

/// Smallest `l` with `|A_jk| <= tol * max|A|` whenever `|j - k| > l`.
///
/// Returns `None` when only the trivial `l = m - 1` works (for `m > 1`).
pub fn detect_band_width<T: Real>(op: &TruncatedOperator<T>) -> Option<usize> {
    band_width_of(op.entries())
}

fn band_width_of<T: Real>(entries: &CMatrix<T>) -> Option<usize> {
    let m = entries.nrows();
    let tol = T::structural_tolerance() * max_modulus(entries);
    let mut l = 0;
    for c in 0..m {
        for r in 0..m {
            if entries[(r, c)].modulus() > tol {
                l = l.max(r.abs_diff(c));
            }
        }
    }
    if m > 1 && l == m - 1 {
        None
    } else {
        Some(l)
    }
}

/// Largest `|j - k|` over exactly nonzero entries.
fn structural_band<T: Real>(entries: &CMatrix<T>) -> usize {
    let m = entries.nrows();
    let mut l = 0;
    for c in 0..m {
        for r in 0..m {
            let z = entries[(r, c)];
            if z.re != T::zero() || z.im != T::zero() {
                l = l.max(r.abs_diff(c));
            }
        }
    }
    l
}

/// `dst += A src` over the band, for column-major `A` of size `m x m`.
#[inline]
fn banded_column<T: Real>(a: &[Complex<T>], m: usize, band: usize, src: &[Complex<T>], dst: &mut [Complex<T>]) {
    for (c, &xc) in src.iter().enumerate() {
        if xc.re == T::zero() && xc.im == T::zero() {
            continue;
        }
        let lo = c.saturating_sub(band);
        let hi = (c + band).min(m - 1);
        let col = &a[c * m..(c + 1) * m];
        for r in lo..=hi {
            dst[r] += col[r] * xc;
        }
    }
}
