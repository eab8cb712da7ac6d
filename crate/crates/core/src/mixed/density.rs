use std::io::Write;
use std::sync::Arc;

use nalgebra::ComplexField;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigen, max_modulus, trace};
use crate::operators::{ModelSpec, TruncationLadder};
use crate::pure::Picture;
use crate::scalar::{real, CMatrix, CVector, Real};
use crate::sde::{BrownianPath, ScalarPath};

/// Hermitian matrix representing `gamma` (any positive trace) or `rho` (unit trace).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator<T: Real> {
    entries: CMatrix<T>,
}

impl<T: Real> DensityOperator<T> {
    /// Validates Hermiticity at the structural tolerance.
    pub fn new(entries: CMatrix<T>) -> Result<Self> {
        if entries.nrows() == 0 || entries.nrows() != entries.ncols() {
            return Err(Error::InvalidDimension("density operator must be square and nonempty".into()));
        }
        let defect = hermitian_defect(&entries);
        if defect > T::structural_tolerance() * max_modulus(&entries) {
            return Err(Error::NotHermitian {
                defect: defect.as_f64(),
            });
        }
        Ok(Self { entries })
    }

    /// `x (x)^+`.
    pub fn pure(x: &CVector<T>) -> Self {
        Self {
            entries: x * x.adjoint(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix<T> {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix<T> {
        self.entries
    }

    pub fn trace(&self) -> T {
        trace(&self.entries).re
    }

    pub fn min_eigenvalue(&self) -> T {
        crate::linalg::min_eigenvalue(&self.entries)
    }

    /// `gamma / tr gamma`.
    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace();
        if !(t > T::zero()) {
            return Err(Error::TraceCollapse { step: 0 });
        }
        Ok(Self {
            entries: &self.entries / real(t),
        })
    }
}

/// `||gamma||_C = tr(C |gamma| C) = sum_j lambda_j^2 |gamma|_jj` in the `C`-eigenbasis.
pub fn c_trace_norm<T: Real>(gamma: &CMatrix<T>, ladder: &TruncationLadder<T>) -> T {
    let (values, vectors) = hermitian_eigen(gamma);
    c_trace_norm_from_eigen(&values, &vectors, ladder)
}

fn c_trace_norm_from_eigen<T: Real>(values: &[T], vectors: &CMatrix<T>, ladder: &TruncationLadder<T>) -> T {
    let lam = ladder.eigenvalues();
    let mut acc = T::zero();
    for (k, &v) in values.iter().enumerate() {
        let col = vectors.column(k);
        let weighted = col
            .iter()
            .zip(lam)
            .fold(T::zero(), |a, (z, &l)| a + z.modulus_squared() * l * l);
        acc += v.abs() * weighted;
    }
    acc
}

/// `tr(C gamma C) = sum_k lambda_k^2 Re gamma_kk`; equals [`c_trace_norm`] on
/// positive operators.
pub fn c_trace<T: Real>(gamma: &CMatrix<T>, ladder: &TruncationLadder<T>) -> T {
    ladder
        .eigenvalues()
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (k, &l)| acc + l * l * gamma[(k, k)].re)
}

/// Minimum eigenvalue and `||gamma||_C` from one eigendecomposition.
pub(crate) fn spectral_diagnostics<T: Real>(gamma: &CMatrix<T>, ladder: &TruncationLadder<T>) -> (T, T) {
    let (values, vectors) = hermitian_eigen(gamma);
    (values[0], c_trace_norm_from_eigen(&values, &vectors, ladder))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityRole {
    /// Solution `gamma` of a linear equation.
    Linear,
    /// Unit-trace `rho`.
    Normalized,
}

/// Density-matrix trajectory on a uniform grid.
///
/// Scalar diagnostics (trace, feedback, hermitisation corrections) are kept on
/// the full grid; matrices, minimum eigenvalues and `C`-norms at the recorded
/// indices.
#[derive(Clone, Debug)]
pub struct DensityTrajectory<T: Real> {
    pub(crate) model: Arc<ModelSpec<T>>,
    pub(crate) driving: Option<Arc<BrownianPath<T>>>,
    pub(crate) picture: Option<Picture>,
    pub(crate) role: DensityRole,
    pub(crate) dt: T,
    pub(crate) steps: usize,
    pub(crate) recorded: Vec<usize>,
    pub(crate) states: Vec<CMatrix<T>>,
    pub(crate) min_eigenvalues: Vec<T>,
    pub(crate) c_norms: Vec<T>,
    pub(crate) traces: Vec<T>,
    pub(crate) feedback: Vec<T>,
    pub(crate) corrections: Vec<T>,
    pub(crate) clipped_steps: usize,
}

impl<T: Real> DensityTrajectory<T> {
    pub fn model(&self) -> &Arc<ModelSpec<T>> {
        &self.model
    }

    /// Driving path; absent for the deterministic Lindblad flow.
    pub fn driving(&self) -> Option<&Arc<BrownianPath<T>>> {
        self.driving.as_ref()
    }

    pub fn picture(&self) -> Option<Picture> {
        self.picture
    }

    pub fn role(&self) -> DensityRole {
        self.role
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn time(&self, k: usize) -> T {
        T::from_usize_lossy(k) * self.dt
    }

    pub fn recorded_steps(&self) -> &[usize] {
        &self.recorded
    }

    pub fn recorded_times(&self) -> Vec<T> {
        self.recorded.iter().map(|&k| self.time(k)).collect()
    }

    pub fn states(&self) -> &[CMatrix<T>] {
        &self.states
    }

    pub fn final_state(&self) -> &CMatrix<T> {
        self.states.last().expect("trajectory keeps its final state")
    }

    pub fn min_eigenvalues(&self) -> &[T] {
        &self.min_eigenvalues
    }

    /// `tr(C |gamma| C)` at the recorded indices.
    pub fn c_norms(&self) -> &[T] {
        &self.c_norms
    }

    /// `tr gamma(t_k)` on the full grid. For a normalised trajectory obtained
    /// from a linear one, this is the carried-over density `tr gamma`.
    pub fn traces(&self) -> &[T] {
        &self.traces
    }

    /// `tr gamma` as a scalar process on the full grid.
    pub fn trace_path(&self) -> ScalarPath<T> {
        ScalarPath {
            times: (0..=self.steps).map(|k| self.time(k)).collect(),
            values: self.traces.clone(),
            regularized: false,
        }
    }

    /// `tr(L_j rho + rho L_j^+)` with `rho = gamma / tr gamma` at grid index `k`.
    pub fn feedback(&self, k: usize, channel: usize) -> T {
        self.feedback[k * self.model.channels() + channel]
    }

    /// Magnitude of the per-step hermitisation correction.
    pub fn hermitian_corrections(&self) -> &[T] {
        &self.corrections
    }

    pub fn clipped_steps(&self) -> usize {
        self.clipped_steps
    }

    /// One JSON object per recorded time:
    /// `{t, re, im, trace, min_eig}` with the upper triangle in row-major order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Record {
            t: f64,
            re: Vec<f64>,
            im: Vec<f64>,
            trace: f64,
            min_eig: f64,
        }
        let m = self.model.dim();
        for (i, (&k, g)) in self.recorded.iter().zip(&self.states).enumerate() {
            let mut re = Vec::with_capacity(m * (m + 1) / 2);
            let mut im = Vec::with_capacity(m * (m + 1) / 2);
            for r in 0..m {
                for c in r..m {
                    re.push(g[(r, c)].re.as_f64());
                    im.push(g[(r, c)].im.as_f64());
                }
            }
            let rec = Record {
                t: self.time(k).as_f64(),
                re,
                im,
                trace: self.traces[k].as_f64(),
                min_eig: self.min_eigenvalues[i].as_f64(),
            };
            let line = serde_json::to_string(&rec).map_err(|e| Error::InvalidInput(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Error::InvalidInput(e.to_string()))?;
        }
        Ok(())
    }
}
