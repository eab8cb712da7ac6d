use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{inner, vector_norm_sq};
use crate::operators::ModelSpec;
use crate::scalar::{real, CVector, Real};
use crate::sde::{integrate, BrownianPath, SdeSystem};

use super::{Picture, PureTrajectory, Recording, StateRole};

/// Tolerance on `| ||phi_0|| - 1 |` for normalised initial states.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-12;

/// `d chi = G chi dt + sum_j L_j chi dY_j` with `G = -iH - 1/2 sum L_j^+ L_j`.
pub struct LinearPureSystem<'a, T: Real> {
    pub model: &'a ModelSpec<T>,
}

impl<T: Real> SdeSystem<T> for LinearPureSystem<'_, T> {
    type State = CVector<T>;

    fn channels(&self) -> usize {
        self.model.channels()
    }

    fn drift(&self, x: &CVector<T>) -> CVector<T> {
        self.model.generator().apply(x)
    }

    fn diffusion(&self, channel: usize, x: &CVector<T>) -> CVector<T> {
        self.model.couplings()[channel].apply(x)
    }

    fn step(&self, x: &CVector<T>, dt: T, dw: &[T]) -> CVector<T> {
        let mut next = self.model.generator().apply(x);
        next *= real(dt);
        next += x;
        for (l, &d) in self.model.couplings().iter().zip(dw) {
            next += l.apply(x) * real(d);
        }
        next
    }
}

/// Norm-preserving nonlinear filter driven by the innovation `B`:
///
/// `d phi = [G phi + sum_j (s_j L_j phi - s_j^2/2 phi)] dt + sum_j (L_j - s_j) phi dB_j`
/// with `s_j = <L_S^j>_phi`, followed by renormalisation.
pub struct NonlinearPureSystem<'a, T: Real> {
    pub model: &'a ModelSpec<T>,
}

/// `Re(x, L x) / ||x||^2`.
fn symmetric_expectation<T: Real>(x: &CVector<T>, lx: &CVector<T>, norm_sq: T) -> T {
    inner(x, lx).re / norm_sq
}

impl<T: Real> SdeSystem<T> for NonlinearPureSystem<'_, T> {
    type State = CVector<T>;

    fn channels(&self) -> usize {
        self.model.channels()
    }

    fn drift(&self, x: &CVector<T>) -> CVector<T> {
        let n2 = vector_norm_sq(x);
        let mut out = self.model.generator().apply(x);
        for l in self.model.couplings() {
            let lx = l.apply(x);
            let s = symmetric_expectation(x, &lx, n2);
            out += lx * real(s) - x * real(T::lit(0.5) * s * s);
        }
        out
    }

    fn diffusion(&self, channel: usize, x: &CVector<T>) -> CVector<T> {
        let lx = self.model.couplings()[channel].apply(x);
        let s = symmetric_expectation(x, &lx, vector_norm_sq(x));
        lx - x * real(s)
    }

    fn step(&self, x: &CVector<T>, dt: T, dw: &[T]) -> CVector<T> {
        let n2 = vector_norm_sq(x);
        let mut next = self.model.generator().apply(x);
        next *= real(dt);
        next += x;
        for (l, &d) in self.model.couplings().iter().zip(dw) {
            let lx = l.apply(x);
            let s = symmetric_expectation(x, &lx, n2);
            // (s dt + dB) L x - (s^2 dt / 2 + s dB) x
            next += lx * real(s * dt + d);
            next -= x * real(T::lit(0.5) * s * s * dt + s * d);
        }
        next
    }

    /// Renormalises and returns `| ||phi||^2 - 1 |` before the correction.
    fn post_step(&self, step: usize, x: &mut CVector<T>) -> Result<T> {
        let n2 = vector_norm_sq(x);
        if !(n2 > T::default_epsilon() * T::default_epsilon()) || !n2.is_finite() {
            return Err(Error::DegenerateState { step });
        }
        *x /= real(n2.sqrt());
        Ok((n2 - T::one()).abs())
    }
}

fn feedback_row<T: Real>(model: &ModelSpec<T>, x: &CVector<T>, norm_sq: T, out: &mut Vec<T>) {
    for l in model.couplings() {
        out.push(symmetric_expectation(x, &l.apply(x), norm_sq));
    }
}

fn check_dims<T: Real>(model: &ModelSpec<T>, x0: &CVector<T>, path: &BrownianPath<T>) -> Result<()> {
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x0.len(),
        });
    }
    if path.channels() != model.channels() {
        return Err(Error::DimensionMismatch {
            expected: model.channels(),
            found: path.channels(),
        });
    }
    Ok(())
}

struct Recorder<T: Real> {
    recording: Recording,
    steps: usize,
    recorded: Vec<usize>,
    states: Vec<CVector<T>>,
    c_norm_sq: Vec<T>,
    norm_sq: Vec<T>,
    feedback: Vec<T>,
    defects: Vec<T>,
}

impl<T: Real> Recorder<T> {
    fn new(recording: Recording, steps: usize, channels: usize) -> Self {
        Self {
            recording,
            steps,
            recorded: Vec::new(),
            states: Vec::new(),
            c_norm_sq: Vec::new(),
            norm_sq: Vec::with_capacity(steps + 1),
            feedback: Vec::with_capacity((steps + 1) * channels),
            defects: Vec::with_capacity(steps),
        }
    }

    fn observe(&mut self, model: &ModelSpec<T>, k: usize, x: &CVector<T>, defect: Option<T>) -> Result<()> {
        let n2 = vector_norm_sq(x);
        if !(n2 > T::zero()) {
            return Err(Error::DegenerateState { step: k });
        }
        self.norm_sq.push(n2);
        feedback_row(model, x, n2, &mut self.feedback);
        if let Some(d) = defect {
            self.defects.push(d);
        }
        if self.recording.keeps(k, self.steps) {
            self.recorded.push(k);
            self.c_norm_sq.push(model.control().c_part_sq(x));
            self.states.push(x.clone());
        }
        Ok(())
    }

    fn finish(
        self,
        model: &Arc<ModelSpec<T>>,
        path: &Arc<BrownianPath<T>>,
        role: StateRole,
        picture: Picture,
    ) -> PureTrajectory<T> {
        PureTrajectory {
            model: model.clone(),
            driving: path.clone(),
            role,
            picture,
            recorded: self.recorded,
            states: self.states,
            c_norm_sq: self.c_norm_sq,
            norm_sq: self.norm_sq,
            feedback: self.feedback,
            defects: self.defects,
            clipped_steps: 0,
        }
    }
}

/// Euler–Maruyama solution of the truncated linear filter driven by the output `Y`.
pub fn simulate_linear<T: Real>(
    model: &Arc<ModelSpec<T>>,
    chi0: &CVector<T>,
    path_y: &Arc<BrownianPath<T>>,
    recording: Recording,
) -> Result<PureTrajectory<T>> {
    check_dims(model, chi0, path_y)?;
    if !(vector_norm_sq(chi0) > T::zero()) {
        return Err(Error::DegenerateState { step: 0 });
    }
    let system = LinearPureSystem { model };
    let mut rec = Recorder::new(recording, path_y.steps(), model.channels());
    integrate(&system, chi0.clone(), path_y, |k, x, _| rec.observe(model, k, x, None))?;
    Ok(rec.finish(model, path_y, StateRole::Linear, Picture::Output))
}

/// Renormalised Euler–Maruyama solution of the nonlinear filter driven by the
/// innovation `B`.
pub fn simulate_nonlinear<T: Real>(
    model: &Arc<ModelSpec<T>>,
    phi0: &CVector<T>,
    path_b: &Arc<BrownianPath<T>>,
    recording: Recording,
) -> Result<PureTrajectory<T>> {
    check_dims(model, phi0, path_b)?;
    let tol = T::lit(UNIT_NORM_TOLERANCE).max(T::default_epsilon() * T::lit(8.0));
    if (vector_norm_sq(phi0).sqrt() - T::one()).abs() > tol {
        return Err(Error::InvalidInput("initial state must have unit norm".into()));
    }
    let system = NonlinearPureSystem { model };
    let mut rec = Recorder::new(recording, path_b.steps(), model.channels());
    integrate(&system, phi0.clone(), path_b, |k, x, d| {
        rec.observe(model, k, x, (k > 0).then_some(d))
    })?;
    Ok(rec.finish(model, path_b, StateRole::Normalized, Picture::Innovation))
}
