use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, trace};
use crate::operators::ModelSpec;
use crate::pure::{Picture, Recording};
use crate::scalar::{real, CMatrix, Real};
use crate::sde::{integrate, BrownianPath, ScalarPath, SdeSystem};

use super::master::{unit_trace_tolerance, DensityRecorder, POSITIVITY_TOLERANCE, TRACE_FLOOR};
use super::{DensityOperator, DensityRole, DensityTrajectory};

/// Weights below this are dropped by [`spectral_decompose`].
pub const WEIGHT_CUTOFF: f64 = 1e-14;

/// Weighted family `{p_k, e_k}` with `gamma = sum_k p_k e_k e_k^+`.
///
/// Members are the columns of an `m x K` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEnsemble<T: Real> {
    weights: Vec<T>,
    members: CMatrix<T>,
    clipped_mass: T,
}

impl<T: Real> WeightedEnsemble<T> {
    /// Weights must be nonnegative and sum to one.
    pub fn new(weights: Vec<T>, members: CMatrix<T>) -> Result<Self> {
        if weights.is_empty() || weights.len() != members.ncols() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: members.ncols(),
            });
        }
        if weights.iter().any(|&p| !(p >= T::zero())) {
            return Err(Error::InvalidInput("ensemble weights must be nonnegative".into()));
        }
        let total = weights.iter().fold(T::zero(), |a, &p| a + p);
        if (total - T::one()).abs() > unit_trace_tolerance::<T>() {
            return Err(Error::InvalidInput("ensemble weights must sum to one".into()));
        }
        Ok(Self {
            weights,
            members,
            clipped_mass: T::zero(),
        })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn members(&self) -> &CMatrix<T> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    /// Total negative eigenvalue mass removed by [`spectral_decompose`].
    pub fn clipped_mass(&self) -> T {
        self.clipped_mass
    }

    /// `sum_k p_k e_k e_k^+`.
    pub fn density(&self) -> CMatrix<T> {
        weighted_outer(&self.weights, &self.members)
    }
}

fn weighted_outer<T: Real>(weights: &[T], members: &CMatrix<T>) -> CMatrix<T> {
    let mut scaled = members.clone();
    for (mut col, &p) in scaled.column_iter_mut().zip(weights) {
        col *= real(p);
    }
    scaled * members.adjoint()
}

/// Eigendecomposition `rho = sum_k p_k e_k e_k^+` with descending weights.
///
/// Eigenvalues in `[-1e-10, 0)` are clipped to zero and their mass reported;
/// weights below [`WEIGHT_CUTOFF`] are dropped and the rest renormalised.
pub fn spectral_decompose<T: Real>(rho: &DensityOperator<T>) -> Result<WeightedEnsemble<T>> {
    let (values, vectors) = hermitian_eigen(rho.entries());
    if values[0] < -T::lit(POSITIVITY_TOLERANCE) {
        return Err(Error::NotAState {
            eigenvalue: values[0].as_f64(),
        });
    }
    let clipped_mass = values
        .iter()
        .filter(|&&v| v < T::zero())
        .fold(T::zero(), |a, &v| a - v);
    let cutoff = T::lit(WEIGHT_CUTOFF);
    let mut kept: Vec<(T, usize)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= cutoff)
        .map(|(k, &v)| (v, k))
        .collect();
    if kept.is_empty() {
        return Err(Error::NotAState {
            eigenvalue: values[values.len() - 1].as_f64(),
        });
    }
    kept.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite eigenvalues"));
    let total = kept.iter().fold(T::zero(), |a, &(v, _)| a + v);
    let weights = kept.iter().map(|&(v, _)| v / total).collect();
    let members = CMatrix::from_columns(&kept.iter().map(|&(_, k)| vectors.column(k)).collect::<Vec<_>>());
    Ok(WeightedEnsemble {
        weights,
        members,
        clipped_mass,
    })
}

/// Joint system for all members:
/// `de_k = G e_k dt + sum_j L_j e_k (dB_j + pi_j dt)` with the shared
/// `pi_j = sum_k p_k (e_k, (L_j + L_j^+) e_k) / sum_k p_k ||e_k||^2`.
///
/// After each step the members are rescaled by a common factor so that
/// `sum_k p_k ||e_k||^2 = 1`; the scheme is homogeneous, so this leaves the
/// normalised density unchanged.
pub struct UnravelingSystem<'a, T: Real> {
    pub model: &'a ModelSpec<T>,
    pub weights: &'a [T],
}

impl<T: Real> UnravelingSystem<'_, T> {
    /// `sum_k p_k ||e_k||^2`.
    pub fn normalization(&self, e: &CMatrix<T>) -> T {
        e.column_iter()
            .zip(self.weights)
            .fold(T::zero(), |a, (c, &p)| a + p * c.norm_squared())
    }

    /// Shared feedback `pi_j` per channel.
    pub fn feedback(&self, e: &CMatrix<T>) -> Vec<T> {
        let s = self.normalization(e);
        self.model
            .couplings()
            .iter()
            .map(|l| self.feedback_from(e, &l.mul_left(e), s))
            .collect()
    }

    fn feedback_from(&self, e: &CMatrix<T>, le: &CMatrix<T>, s: T) -> T {
        let acc = e
            .column_iter()
            .zip(le.column_iter())
            .zip(self.weights)
            .fold(T::zero(), |a, ((x, lx), &p)| a + p * x.dotc(&lx).re);
        T::lit(2.0) * acc / s
    }
}

impl<T: Real> SdeSystem<T> for UnravelingSystem<'_, T> {
    type State = CMatrix<T>;

    fn channels(&self) -> usize {
        self.model.channels()
    }

    fn drift(&self, e: &CMatrix<T>) -> CMatrix<T> {
        let pi = self.feedback(e);
        let mut out = self.model.generator().mul_left(e);
        for (l, p) in self.model.couplings().iter().zip(pi) {
            out += l.mul_left(e) * real(p);
        }
        out
    }

    fn diffusion(&self, channel: usize, e: &CMatrix<T>) -> CMatrix<T> {
        self.model.couplings()[channel].mul_left(e)
    }

    fn step(&self, e: &CMatrix<T>, dt: T, dw: &[T]) -> CMatrix<T> {
        let s = self.normalization(e);
        let mut next = self.model.generator().mul_left(e);
        next *= real(dt);
        next += e;
        for (l, &d) in self.model.couplings().iter().zip(dw) {
            let le = l.mul_left(e);
            let pi = self.feedback_from(e, &le, s);
            next += le * real(d + pi * dt);
        }
        next
    }

    /// Rescales to unit normalisation and returns `|sum_k p_k ||e_k||^2 - 1|` before it.
    fn post_step(&self, step: usize, e: &mut CMatrix<T>) -> Result<T> {
        let s = self.normalization(e);
        if !(s > T::lit(TRACE_FLOOR)) {
            return Err(Error::DegenerateEnsemble { step });
        }
        *e /= real(s.sqrt());
        Ok((s - T::one()).abs())
    }
}

/// Member states of a [`WeightedEnsemble`] along a driving path.
#[derive(Clone, Debug)]
pub struct EnsembleTrajectory<T: Real> {
    weights: Vec<T>,
    dt: T,
    channels: usize,
    recorded: Vec<usize>,
    members: Vec<CMatrix<T>>,
    feedback: Vec<T>,
    normalizations: Vec<T>,
}

impl<T: Real> EnsembleTrajectory<T> {
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn recorded_steps(&self) -> &[usize] {
        &self.recorded
    }

    /// `m x K` member matrices at the recorded steps.
    pub fn members(&self) -> &[CMatrix<T>] {
        &self.members
    }

    /// Shared feedback `pi_j` at grid index `k`.
    pub fn feedback(&self, k: usize, channel: usize) -> T {
        self.feedback[k * self.channels + channel]
    }

    /// `pi_j(t)` as a scalar process on the full grid.
    pub fn feedback_path(&self, channel: usize) -> ScalarPath<T> {
        let n = self.feedback.len() / self.channels;
        ScalarPath {
            times: (0..n).map(|k| T::from_usize_lossy(k) * self.dt).collect(),
            values: (0..n).map(|k| self.feedback(k, channel)).collect(),
            regularized: false,
        }
    }

    /// `|sum_k p_k ||e_k||^2 - 1|` before each rescaling.
    pub fn normalization_defects(&self) -> &[T] {
        &self.normalizations
    }

    /// Ensemble at the `i`-th recorded step.
    pub fn ensemble(&self, i: usize) -> WeightedEnsemble<T> {
        WeightedEnsemble {
            weights: self.weights.clone(),
            members: self.members[i].clone(),
            clipped_mass: T::zero(),
        }
    }
}

/// Steps all members jointly on the innovation path and reconstructs
/// `rho = gamma / tr gamma` with `gamma = sum_k p_k e_k e_k^+` at every step.
pub fn simulate_vectorized_unraveling<T: Real>(
    model: &Arc<ModelSpec<T>>,
    ensemble0: &WeightedEnsemble<T>,
    path_b: &Arc<BrownianPath<T>>,
    recording: Recording,
) -> Result<(EnsembleTrajectory<T>, DensityTrajectory<T>)> {
    if ensemble0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: ensemble0.dim(),
        });
    }
    if path_b.channels() != model.channels() {
        return Err(Error::DimensionMismatch {
            expected: model.channels(),
            found: path_b.channels(),
        });
    }
    let system = UnravelingSystem {
        model,
        weights: &ensemble0.weights,
    };
    let s0 = system.normalization(&ensemble0.members);
    if !(s0 > T::lit(TRACE_FLOOR)) {
        return Err(Error::DegenerateEnsemble { step: 0 });
    }
    let steps = path_b.steps();
    let mut rec = DensityRecorder::new(recording, steps, model.channels());
    let mut members = Vec::new();
    let mut feedback = Vec::with_capacity((steps + 1) * model.channels());
    let mut normalizations = Vec::with_capacity(steps);
    integrate(&system, ensemble0.members.clone(), path_b, |k, e, defect| {
        let gamma = weighted_outer(&ensemble0.weights, e);
        let rho = &gamma / real(trace(&gamma).re);
        rec.observe(model, k, &rho, None)?;
        feedback.extend(system.feedback(e));
        if k > 0 {
            normalizations.push(defect);
        }
        if recording.keeps(k, steps) {
            members.push(e.clone());
        }
        Ok(())
    })?;
    let ensemble_traj = EnsembleTrajectory {
        weights: ensemble0.weights.clone(),
        dt: path_b.dt(),
        channels: model.channels(),
        recorded: rec.recorded.clone(),
        members,
        feedback,
        normalizations,
    };
    let density = rec.finish(
        model,
        Some(path_b),
        Some(Picture::Innovation),
        DensityRole::Normalized,
        path_b.dt(),
    );
    Ok((ensemble_traj, density))
}
