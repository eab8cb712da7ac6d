//! Explicit Euler–Maruyama stepping on a shared Brownian grid.

use nalgebra::ComplexField;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{CMatrix, CVector, Real};

use super::BrownianPath;

/// State space of an SDE: a real vector space with a finiteness test.
pub trait SdeState<T: Real>: Clone + Send {
    /// `self += a * x`.
    fn axpy(&mut self, a: T, x: &Self);
    fn is_finite(&self) -> bool;
}

impl<T: Real> SdeState<T> for T {
    fn axpy(&mut self, a: T, x: &Self) {
        *self += a * *x;
    }
    fn is_finite(&self) -> bool {
        ComplexField::is_finite(self)
    }
}

impl<T: Real> SdeState<T> for Complex<T> {
    fn axpy(&mut self, a: T, x: &Self) {
        *self += x.scale(a);
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl<T: Real> SdeState<T> for CVector<T> {
    fn axpy(&mut self, a: T, x: &Self) {
        for (s, v) in self.iter_mut().zip(x.iter()) {
            *s += v.scale(a);
        }
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl<T: Real> SdeState<T> for CMatrix<T> {
    fn axpy(&mut self, a: T, x: &Self) {
        for (s, v) in self.iter_mut().zip(x.iter()) {
            *s += v.scale(a);
        }
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// `dX = a(X) dt + sum_j b_j(X) dW_j` with an optional per-step projection.
pub trait SdeSystem<T: Real>: Sync {
    type State: SdeState<T>;

    fn channels(&self) -> usize;

    fn drift(&self, x: &Self::State) -> Self::State;

    fn diffusion(&self, channel: usize, x: &Self::State) -> Self::State;

    /// One explicit step `x + a(x) dt + sum_j b_j(x) dW_j`.
    ///
    /// Systems may override this with a fused evaluation of the same formula.
    fn step(&self, x: &Self::State, dt: T, dw: &[T]) -> Self::State {
        let mut next = x.clone();
        next.axpy(dt, &self.drift(x));
        for (j, &d) in dw.iter().enumerate() {
            next.axpy(d, &self.diffusion(j, x));
        }
        next
    }

    /// Hook applied after every step (renormalisation, hermitisation).
    ///
    /// Receives the index of the step just completed and returns a scalar
    /// diagnostic of the correction it made.
    fn post_step(&self, _step: usize, _x: &mut Self::State) -> Result<T> {
        Ok(T::zero())
    }
}

/// Integrates `system` along `path`, calling `observe(k, x_k, diagnostic)` for
/// `k = 0..=steps`.
///
/// A non-finite state before or after `post_step` stops the run with a
/// blow-up error carrying the step index.
pub fn integrate<T, S, F>(system: &S, x0: S::State, path: &BrownianPath<T>, mut observe: F) -> Result<S::State>
where
    T: Real,
    S: SdeSystem<T> + ?Sized,
    F: FnMut(usize, &S::State, T) -> Result<()>,
{
    if path.channels() != system.channels() {
        return Err(Error::DimensionMismatch {
            expected: system.channels(),
            found: path.channels(),
        });
    }
    if !x0.is_finite() {
        return Err(Error::BlowUp { step: 0 });
    }
    observe(0, &x0, T::zero())?;
    let dt = path.dt();
    let mut x = x0;
    for k in 0..path.steps() {
        let mut next = system.step(&x, dt, path.increments_at(k));
        if !next.is_finite() {
            return Err(Error::BlowUp { step: k + 1 });
        }
        let diagnostic = system.post_step(k + 1, &mut next)?;
        if !next.is_finite() {
            return Err(Error::BlowUp { step: k + 1 });
        }
        observe(k + 1, &next, diagnostic)?;
        x = next;
    }
    Ok(x)
}

type Map<'a, X> = Box<dyn Fn(&X) -> X + Send + Sync + 'a>;

/// [`SdeSystem`] assembled from closures.
pub struct FnSystem<'a, X> {
    drift: Map<'a, X>,
    diffusions: Vec<Map<'a, X>>,
    post_step: Option<Map<'a, X>>,
}

impl<'a, X> FnSystem<'a, X> {
    pub fn new(drift: Map<'a, X>, diffusions: Vec<Map<'a, X>>, post_step: Option<Map<'a, X>>) -> Self {
        Self {
            drift,
            diffusions,
            post_step,
        }
    }
}

impl<T: Real, X: SdeState<T>> SdeSystem<T> for FnSystem<'_, X> {
    type State = X;

    fn channels(&self) -> usize {
        self.diffusions.len()
    }

    fn drift(&self, x: &X) -> X {
        (self.drift)(x)
    }

    fn diffusion(&self, channel: usize, x: &X) -> X {
        (self.diffusions[channel])(x)
    }

    fn post_step(&self, _step: usize, x: &mut X) -> Result<T> {
        if let Some(f) = &self.post_step {
            *x = f(x);
        }
        Ok(T::zero())
    }
}

/// States recorded on the full grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Real, X> {
    pub times: Vec<T>,
    pub states: Vec<X>,
}

impl<T: Real, X> Trajectory<T, X> {
    pub fn last(&self) -> &X {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// `x_{k+1} = post(x_k + a(x_k) dt + sum_j b_j(x_k) dW_j)`, recording every step.
pub fn euler_maruyama<'a, T, X>(
    drift: impl Fn(&X) -> X + Send + Sync + 'a,
    diffusions: Vec<Map<'a, X>>,
    x0: X,
    path: &BrownianPath<T>,
    post_step: Option<Map<'a, X>>,
) -> Result<Trajectory<T, X>>
where
    T: Real,
    X: SdeState<T> + Sync + 'a,
{
    let system = FnSystem::new(Box::new(drift), diffusions, post_step);
    let mut states = Vec::with_capacity(path.steps() + 1);
    integrate(&system, x0, path, |_, x, _| {
        states.push(x.clone());
        Ok(())
    })?;
    Ok(Trajectory {
        times: path.times(),
        states,
    })
}
