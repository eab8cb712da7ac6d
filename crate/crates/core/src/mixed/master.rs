use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{hermitize, min_eigenvalue, trace, trace_of_product};
use crate::operators::ModelSpec;
use crate::pure::{Picture, Recording};
use crate::scalar::{real, CMatrix, Real};
use crate::sde::{integrate, BrownianPath, SdeState, SdeSystem};

use super::density::spectral_diagnostics;
use super::{DensityOperator, DensityRole, DensityTrajectory};

/// Trace threshold below which the nonlinear master equation stops.
pub const TRACE_FLOOR: f64 = 1e-12;

/// Eigenvalue tolerance for accepting a matrix as a state.
pub const POSITIVITY_TOLERANCE: f64 = 1e-10;

/// `G gamma + gamma G^+ + sum_j L_j gamma L_j^+` together with `A_j = L_j gamma`.
fn lindblad_with_products<T: Real>(model: &ModelSpec<T>, g: &CMatrix<T>) -> (CMatrix<T>, Vec<CMatrix<T>>) {
    let gg = model.generator().mul_left(g);
    let mut out = &gg + gg.adjoint();
    let mut products = Vec::with_capacity(model.channels());
    for (l, la) in model.couplings().iter().zip(model.coupling_adjoints()) {
        let a = l.mul_left(g);
        out += la.mul_right(&a);
        products.push(a);
    }
    (out, products)
}

/// One explicit step `g + dt * lindblad(g) + sum_j dW_j (A_j + A_j^+) - shrink(A) g`.
fn master_step<T: Real>(
    model: &ModelSpec<T>,
    g: &CMatrix<T>,
    dt: T,
    dw: &[T],
    shrink: impl Fn(&[CMatrix<T>]) -> T,
) -> CMatrix<T> {
    let m = g.nrows();
    let gg = model.generator().mul_left(g);
    let mut partial = gg.clone();
    let mut products = Vec::with_capacity(model.channels());
    for (l, la) in model.couplings().iter().zip(model.coupling_adjoints()) {
        let a = l.mul_left(g);
        partial += la.mul_right(&a);
        products.push(a);
    }
    let keep = T::one() - shrink(&products);
    let mut next = CMatrix::zeros(m, m);
    let (sg, sgg, sp) = (g.as_slice(), gg.as_slice(), partial.as_slice());
    let out = next.as_mut_slice();
    for c in 0..m {
        for r in 0..m {
            let (i, t) = (c * m + r, r * m + c);
            let mut v = sg[i].scale(keep) + (sp[i] + sgg[t].conj()).scale(dt);
            for (a, &d) in products.iter().zip(dw) {
                let sa = a.as_slice();
                v += (sa[i] + sa[t].conj()).scale(d);
            }
            out[i] = v;
        }
    }
    next
}

/// Right-hand side of the Lindblad equation `-i[H, gamma] + L gamma`.
pub fn lindblad_rhs<T: Real>(model: &ModelSpec<T>, gamma: &CMatrix<T>) -> CMatrix<T> {
    lindblad_with_products(model, gamma).0
}

/// `tr(L_j gamma + gamma L_j^+) / tr gamma` per channel.
pub fn trace_feedback<T: Real>(model: &ModelSpec<T>, gamma: &CMatrix<T>) -> Vec<T> {
    let t = trace(gamma).re;
    model
        .couplings()
        .iter()
        .map(|l| T::lit(2.0) * trace_of_product(l.entries(), gamma).re / t)
        .collect()
}

/// `d gamma = (-i[H, gamma] + L gamma) dt + sum_j (L_j gamma + gamma L_j^+) dY_j`.
pub struct LinearMasterSystem<'a, T: Real> {
    pub model: &'a ModelSpec<T>,
}

impl<T: Real> SdeSystem<T> for LinearMasterSystem<'_, T> {
    type State = CMatrix<T>;

    fn channels(&self) -> usize {
        self.model.channels()
    }

    fn drift(&self, g: &CMatrix<T>) -> CMatrix<T> {
        lindblad_rhs(self.model, g)
    }

    fn diffusion(&self, channel: usize, g: &CMatrix<T>) -> CMatrix<T> {
        let a = self.model.couplings()[channel].mul_left(g);
        &a + a.adjoint()
    }

    fn step(&self, g: &CMatrix<T>, dt: T, dw: &[T]) -> CMatrix<T> {
        master_step(self.model, g, dt, dw, |_| T::zero())
    }

    /// Hermitises and returns the size of the correction.
    fn post_step(&self, _step: usize, g: &mut CMatrix<T>) -> Result<T> {
        Ok(hermitize(g))
    }
}

/// `d rho = (-i[H, rho] + L rho) dt + sum_j (L_j rho + rho L_j^+ - rho c_j) dB_j`
/// with `c_j = tr(L_j rho + rho L_j^+)`, followed by hermitisation and trace
/// renormalisation.
pub struct NonlinearMasterSystem<'a, T: Real> {
    pub model: &'a ModelSpec<T>,
}

impl<T: Real> SdeSystem<T> for NonlinearMasterSystem<'_, T> {
    type State = CMatrix<T>;

    fn channels(&self) -> usize {
        self.model.channels()
    }

    fn drift(&self, g: &CMatrix<T>) -> CMatrix<T> {
        lindblad_rhs(self.model, g)
    }

    fn diffusion(&self, channel: usize, g: &CMatrix<T>) -> CMatrix<T> {
        let a = self.model.couplings()[channel].mul_left(g);
        let c = T::lit(2.0) * trace(&a).re / trace(g).re;
        &a + a.adjoint() - g * real(c)
    }

    fn step(&self, g: &CMatrix<T>, dt: T, dw: &[T]) -> CMatrix<T> {
        let t = trace(g).re;
        master_step(self.model, g, dt, dw, |products| {
            products
                .iter()
                .zip(dw)
                .fold(T::zero(), |acc, (a, &d)| acc + T::lit(2.0) * trace(a).re / t * d)
        })
    }

    /// Hermitises, then divides by the trace; returns the hermitisation correction.
    fn post_step(&self, step: usize, g: &mut CMatrix<T>) -> Result<T> {
        let correction = hermitize(g);
        let t = trace(g).re;
        if !(t > T::lit(TRACE_FLOOR)) {
            return Err(Error::TraceCollapse { step });
        }
        *g /= real(t);
        Ok(correction)
    }
}

pub(crate) struct DensityRecorder<T: Real> {
    recording: Recording,
    steps: usize,
    pub(crate) recorded: Vec<usize>,
    pub(crate) states: Vec<CMatrix<T>>,
    pub(crate) min_eigenvalues: Vec<T>,
    pub(crate) c_norms: Vec<T>,
    pub(crate) traces: Vec<T>,
    pub(crate) feedback: Vec<T>,
    pub(crate) corrections: Vec<T>,
}

impl<T: Real> DensityRecorder<T> {
    pub(crate) fn new(recording: Recording, steps: usize, channels: usize) -> Self {
        Self {
            recording,
            steps,
            recorded: Vec::new(),
            states: Vec::new(),
            min_eigenvalues: Vec::new(),
            c_norms: Vec::new(),
            traces: Vec::with_capacity(steps + 1),
            feedback: Vec::with_capacity((steps + 1) * channels),
            corrections: Vec::with_capacity(steps),
        }
    }

    pub(crate) fn observe(
        &mut self,
        model: &ModelSpec<T>,
        k: usize,
        g: &CMatrix<T>,
        correction: Option<T>,
    ) -> Result<()> {
        let t = trace(g).re;
        if !(t > T::zero()) {
            return Err(Error::TraceCollapse { step: k });
        }
        self.traces.push(t);
        self.feedback.extend(trace_feedback(model, g));
        if let Some(c) = correction {
            self.corrections.push(c);
        }
        if self.recording.keeps(k, self.steps) {
            let (min_eig, c_norm) = spectral_diagnostics(g, model.control());
            self.recorded.push(k);
            self.min_eigenvalues.push(min_eig);
            self.c_norms.push(c_norm);
            self.states.push(g.clone());
        }
        Ok(())
    }

    pub(crate) fn finish(
        self,
        model: &Arc<ModelSpec<T>>,
        driving: Option<&Arc<BrownianPath<T>>>,
        picture: Option<Picture>,
        role: DensityRole,
        dt: T,
    ) -> DensityTrajectory<T> {
        DensityTrajectory {
            model: model.clone(),
            driving: driving.cloned(),
            picture,
            role,
            dt,
            steps: self.steps,
            recorded: self.recorded,
            states: self.states,
            min_eigenvalues: self.min_eigenvalues,
            c_norms: self.c_norms,
            traces: self.traces,
            feedback: self.feedback,
            corrections: self.corrections,
            clipped_steps: 0,
        }
    }
}

pub(crate) fn check_state_dims<T: Real>(model: &ModelSpec<T>, g: &DensityOperator<T>) -> Result<()> {
    if g.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: g.dim(),
        });
    }
    Ok(())
}

fn check_path<T: Real>(model: &ModelSpec<T>, path: &BrownianPath<T>) -> Result<()> {
    if path.channels() != model.channels() {
        return Err(Error::DimensionMismatch {
            expected: model.channels(),
            found: path.channels(),
        });
    }
    Ok(())
}

pub(crate) fn unit_trace_tolerance<T: Real>() -> T {
    T::structural_tolerance().max(T::default_epsilon() * T::lit(8.0 * 64.0))
}

/// Euler–Maruyama solution of the linear master equation driven by the output `Y`.
pub fn simulate_linear_master<T: Real>(
    model: &Arc<ModelSpec<T>>,
    gamma0: &DensityOperator<T>,
    path_y: &Arc<BrownianPath<T>>,
    recording: Recording,
) -> Result<DensityTrajectory<T>> {
    check_state_dims(model, gamma0)?;
    check_path(model, path_y)?;
    if !(gamma0.trace() > T::zero()) {
        return Err(Error::TraceCollapse { step: 0 });
    }
    let system = LinearMasterSystem { model };
    let mut rec = DensityRecorder::new(recording, path_y.steps(), model.channels());
    integrate(&system, gamma0.entries().clone(), path_y, |k, g, c| {
        rec.observe(model, k, g, (k > 0).then_some(c))
    })?;
    Ok(rec.finish(model, Some(path_y), Some(Picture::Output), DensityRole::Linear, path_y.dt()))
}

/// Euler–Maruyama solution of the nonlinear master equation driven by the
/// innovation `B`, renormalised to unit trace after each step.
pub fn simulate_nonlinear_master<T: Real>(
    model: &Arc<ModelSpec<T>>,
    rho0: &DensityOperator<T>,
    path_b: &Arc<BrownianPath<T>>,
    recording: Recording,
) -> Result<DensityTrajectory<T>> {
    check_state_dims(model, rho0)?;
    check_path(model, path_b)?;
    if (rho0.trace() - T::one()).abs() > unit_trace_tolerance::<T>() {
        return Err(Error::InvalidInput("initial density must have unit trace".into()));
    }
    let low = min_eigenvalue(rho0.entries());
    if low < -T::lit(POSITIVITY_TOLERANCE) {
        return Err(Error::NotAState {
            eigenvalue: low.as_f64(),
        });
    }
    let system = NonlinearMasterSystem { model };
    let mut rec = DensityRecorder::new(recording, path_b.steps(), model.channels());
    integrate(&system, rho0.entries().clone(), path_b, |k, g, c| {
        rec.observe(model, k, g, (k > 0).then_some(c))
    })?;
    Ok(rec.finish(
        model,
        Some(path_b),
        Some(Picture::Innovation),
        DensityRole::Normalized,
        path_b.dt(),
    ))
}

/// Classical fourth-order Runge–Kutta solution of the Lindblad equation on the
/// grid `k dt`, `k = 0..=round(horizon / dt)`, hermitised after every step.
pub fn solve_lindblad<T: Real>(
    model: &Arc<ModelSpec<T>>,
    gamma0: &DensityOperator<T>,
    horizon: T,
    dt: T,
    recording: Recording,
) -> Result<DensityTrajectory<T>> {
    check_state_dims(model, gamma0)?;
    if !(dt > T::zero()) || !(horizon >= T::zero()) {
        return Err(Error::Grid("step and horizon must be positive".into()));
    }
    let ratio = horizon / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > T::lit(1e-9).max(T::default_epsilon() * T::lit(8.0)) * ratio.max(T::one()) {
        return Err(Error::Grid("horizon is not an integer multiple of dt".into()));
    }
    let steps = steps.to_usize().ok_or_else(|| Error::Grid("step count out of range".into()))?;
    let mut rec = DensityRecorder::new(recording, steps, model.channels());
    let mut g = gamma0.entries().clone();
    rec.observe(model, 0, &g, None)?;
    let half = dt * T::lit(0.5);
    for k in 0..steps {
        let k1 = lindblad_rhs(model, &g);
        let mut y = g.clone();
        y.axpy(half, &k1);
        let k2 = lindblad_rhs(model, &y);
        let mut y = g.clone();
        y.axpy(half, &k2);
        let k3 = lindblad_rhs(model, &y);
        let mut y = g.clone();
        y.axpy(dt, &k3);
        let k4 = lindblad_rhs(model, &y);
        let sixth = dt / T::lit(6.0);
        g.axpy(sixth, &k1);
        g.axpy(sixth * T::lit(2.0), &k2);
        g.axpy(sixth * T::lit(2.0), &k3);
        g.axpy(sixth, &k4);
        let c = hermitize(&mut g);
        if !g.is_finite() {
            return Err(Error::BlowUp { step: k + 1 });
        }
        rec.observe(model, k + 1, &g, Some(c))?;
    }
    Ok(rec.finish(model, None, None, DensityRole::Linear, dt))
}
