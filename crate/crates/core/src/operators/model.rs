use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cplx, Real};

use super::{TruncatedOperator, TruncationLadder};

/// Hamiltonian, coupling channels and control operator on one truncation.
///
/// The Itô drift generator `G = -iH - 1/2 sum_j L_j^+ L_j` is formed from the
/// truncated matrices, i.e. with `P_m L^+ P_m L P_m`.
#[derive(Clone, Debug)]
pub struct ModelSpec<T: Real> {
    hamiltonian: TruncatedOperator<T>,
    couplings: Vec<TruncatedOperator<T>>,
    control: TruncationLadder<T>,
    adjoints: Vec<TruncatedOperator<T>>,
    symmetric: Vec<TruncatedOperator<T>>,
    antisymmetric: Vec<TruncatedOperator<T>>,
    dissipation: TruncatedOperator<T>,
    generator: TruncatedOperator<T>,
}

impl<T: Real> ModelSpec<T> {
    pub fn new(
        hamiltonian: TruncatedOperator<T>,
        couplings: Vec<TruncatedOperator<T>>,
        control: TruncationLadder<T>,
    ) -> Result<Self> {
        let m = hamiltonian.dim();
        if couplings.is_empty() {
            return Err(Error::InvalidInput("at least one coupling channel is required".into()));
        }
        if !hamiltonian.is_hermitian() {
            return Err(Error::NotHermitian {
                defect: crate::linalg::hermitian_defect(hamiltonian.entries()).as_f64(),
            });
        }
        for op in couplings.iter() {
            if op.dim() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: op.dim(),
                });
            }
        }
        if control.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: control.dim(),
            });
        }
        let half = Complex::new(T::lit(0.5), T::zero());
        let adjoints: Vec<_> = couplings.iter().map(|l| l.adjoint()).collect();
        let symmetric = couplings
            .iter()
            .zip(&adjoints)
            .map(|(l, a)| Ok(l.add(a)?.scale(half)))
            .collect::<Result<Vec<_>>>()?;
        let antisymmetric = couplings
            .iter()
            .zip(&adjoints)
            .map(|(l, a)| Ok(l.sub(a)?.scale(cplx(T::zero(), -T::lit(0.5)))))
            .collect::<Result<Vec<_>>>()?;
        let mut dissipation = TruncatedOperator::zeros(m);
        for (l, a) in couplings.iter().zip(&adjoints) {
            dissipation = dissipation.add(&a.compose(l)?)?;
        }
        let generator = hamiltonian
            .scale(cplx(T::zero(), -T::one()))
            .add(&dissipation.scale(-half))?;
        Ok(Self {
            hamiltonian,
            couplings,
            control,
            adjoints,
            symmetric,
            antisymmetric,
            dissipation,
            generator,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn channels(&self) -> usize {
        self.couplings.len()
    }

    pub fn hamiltonian(&self) -> &TruncatedOperator<T> {
        &self.hamiltonian
    }

    pub fn couplings(&self) -> &[TruncatedOperator<T>] {
        &self.couplings
    }

    pub fn control(&self) -> &TruncationLadder<T> {
        &self.control
    }

    pub fn coupling_adjoints(&self) -> &[TruncatedOperator<T>] {
        &self.adjoints
    }

    /// `L_S = (L + L^+)/2` per channel.
    pub fn symmetric_parts(&self) -> &[TruncatedOperator<T>] {
        &self.symmetric
    }

    /// `L_A = (L - L^+)/2i` per channel.
    pub fn antisymmetric_parts(&self) -> &[TruncatedOperator<T>] {
        &self.antisymmetric
    }

    /// `sum_j L_j^+ L_j`.
    pub fn dissipation(&self) -> &TruncatedOperator<T> {
        &self.dissipation
    }

    /// `-iH - 1/2 sum_j L_j^+ L_j`.
    pub fn generator(&self) -> &TruncatedOperator<T> {
        &self.generator
    }

    /// Same model with the Hamiltonian replaced.
    pub fn with_hamiltonian(&self, hamiltonian: TruncatedOperator<T>) -> Result<Self> {
        Self::new(hamiltonian, self.couplings.clone(), self.control.clone())
    }

    /// Galerkin truncation of every operator to the first `m` modes.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        Self::new(
            self.hamiltonian.truncate(m)?,
            self.couplings
                .iter()
                .map(|l| l.truncate(m))
                .collect::<Result<Vec<_>>>()?,
            self.control.truncate(m)?,
        )
    }
}
