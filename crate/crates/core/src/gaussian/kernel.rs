use nalgebra::ComplexField;
use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{cplx, real, Real};
use crate::sde::BrownianPath;

/// Coupling `alpha` and Planck-like constant `h` of
/// `d chi = 1/2 (ih d^2/dx^2 - alpha^2 x^2) chi dt + alpha x chi dY`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelParams<T: Real> {
    pub alpha: T,
    pub h: T,
}

impl<T: Real> KernelParams<T> {
    pub fn new(alpha: T, h: T) -> Result<Self> {
        if alpha == T::zero() || !alpha.is_finite() {
            return Err(Error::InvalidInput("alpha must be finite and nonzero".into()));
        }
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::InvalidInput("h must be finite and positive".into()));
        }
        Ok(Self { alpha, h })
    }

    /// `ih`.
    pub fn ih(&self) -> Complex<T> {
        cplx(T::zero(), self.h)
    }

    /// `sigma^2 = 2 alpha^2 / (ih)`.
    pub fn sigma_sq(&self) -> Complex<T> {
        cplx(T::zero(), -T::lit(2.0) * self.alpha * self.alpha / self.h)
    }

    /// `sigma = sqrt(2 alpha^2 / h) e^{-i pi/4}`.
    pub fn sigma(&self) -> Complex<T> {
        let modulus = (T::lit(2.0) * self.alpha * self.alpha / self.h).sqrt();
        let phase = -T::frac_pi_4();
        cplx(modulus * phase.cos(), modulus * phase.sin())
    }
}

/// Coefficients of the Green function
/// `u(t, x, y) = norm_c exp{-omega/2 (x^2 + y^2) + beta x y - a x - b y - gamma_c}`
/// at time `t > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianKernelState<T: Real> {
    pub t: T,
    pub omega: Complex<T>,
    pub beta: Complex<T>,
    pub a: Complex<T>,
    pub b: Complex<T>,
    pub gamma_c: Complex<T>,
    /// `ln norm_c` with `norm_c = sqrt(beta / 2 pi)` on the branch continued from `t = 0+`.
    pub log_norm_c: Complex<T>,
    /// `omega^2 - beta^2`, evaluated without cancellation.
    pub first_integral: Complex<T>,
    pub params: KernelParams<T>,
}

/// JSON view of a kernel state with complex numbers as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelJson {
    pub t: f64,
    pub alpha: f64,
    pub h: f64,
    pub omega: [f64; 2],
    pub beta: [f64; 2],
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub gamma_c: [f64; 2],
    pub norm_c: [f64; 2],
}

fn pair<T: Real>(z: Complex<T>) -> [f64; 2] {
    [z.re.as_f64(), z.im.as_f64()]
}

impl<T: Real> GaussianKernelState<T> {
    pub fn norm_c(&self) -> Complex<T> {
        self.log_norm_c.exp()
    }

    /// `ln u(t, x, y)`.
    pub fn log_kernel(&self, x: T, y: T) -> Complex<T> {
        let half = T::lit(0.5);
        -self.omega * real(half * (x * x + y * y)) + self.beta * real(x * y) - self.a * real(x) - self.b * real(y)
            - self.gamma_c
            + self.log_norm_c
    }

    pub fn to_json(&self) -> KernelJson {
        KernelJson {
            t: self.t.as_f64(),
            alpha: self.params.alpha.as_f64(),
            h: self.params.h.as_f64(),
            omega: pair(self.omega),
            beta: pair(self.beta),
            a: pair(self.a),
            b: pair(self.b),
            gamma_c: pair(self.gamma_c),
            norm_c: pair(self.norm_c()),
        }
    }
}

/// Deterministic part of the coefficient flow on a uniform grid.
///
/// With `u = 1/omega`, `r = beta/omega` and `s = 1 - r^2`, the ansatz gives
/// `u' = ih - 2 alpha^2 u^2`, `r' = -2 alpha^2 r u`, `s' = 4 alpha^2 r^2 u`
/// from `u = 0`, `r = 1`, `s = 0`; integrated by classical RK4.
#[derive(Clone, Debug)]
pub struct DeterministicFlow<T: Real> {
    params: KernelParams<T>,
    dt: T,
    u: Vec<Complex<T>>,
    r: Vec<Complex<T>>,
    s: Vec<Complex<T>>,
}

impl<T: Real> DeterministicFlow<T> {
    pub fn new(params: KernelParams<T>, dt: T, steps: usize) -> Self {
        let ih = params.ih();
        let two_a2 = real(T::lit(2.0) * params.alpha * params.alpha);
        let f = |(u, r, _s): (Complex<T>, Complex<T>, Complex<T>)| {
            (ih - two_a2 * u * u, -two_a2 * r * u, two_a2 * real(T::lit(2.0)) * r * r * u)
        };
        let mut state = (Complex::new(T::zero(), T::zero()), real(T::one()), Complex::new(T::zero(), T::zero()));
        let (mut u, mut r, mut s) = (Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1));
        let h = real(dt);
        let half = real(dt * T::lit(0.5));
        let sixth = real(dt / T::lit(6.0));
        let two = real(T::lit(2.0));
        for k in 0..=steps {
            u.push(state.0);
            r.push(state.1);
            s.push(state.2);
            if k == steps {
                break;
            }
            let add = |x: (Complex<T>, Complex<T>, Complex<T>), d: (Complex<T>, Complex<T>, Complex<T>), c: Complex<T>| {
                (x.0 + d.0 * c, x.1 + d.1 * c, x.2 + d.2 * c)
            };
            let k1 = f(state);
            let k2 = f(add(state, k1, half));
            let k3 = f(add(state, k2, half));
            let k4 = f(add(state, k3, h));
            state = (
                state.0 + (k1.0 + k2.0 * two + k3.0 * two + k4.0) * sixth,
                state.1 + (k1.1 + k2.1 * two + k3.1 * two + k4.1) * sixth,
                state.2 + (k1.2 + k2.2 * two + k3.2 * two + k4.2) * sixth,
            );
        }
        Self { params, dt, u, r, s }
    }

    pub fn steps(&self) -> usize {
        self.u.len() - 1
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// `omega(t_k)` for `k >= 1`.
    pub fn omega(&self, k: usize) -> Complex<T> {
        self.u[k].inv()
    }

    /// `beta(t_k)` for `k >= 1`.
    pub fn beta(&self, k: usize) -> Complex<T> {
        self.r[k] / self.u[k]
    }

    /// `omega^2 - beta^2 = s / u^2` at `t_k`, `k >= 1`.
    pub fn first_integral(&self, k: usize) -> Complex<T> {
        self.s[k] / (self.u[k] * self.u[k])
    }

    /// `|1 - r^2 - s|` at `t_k`, a consistency check on the integrated triple.
    pub fn consistency_defect(&self, k: usize) -> T {
        (real(T::one()) - self.r[k] * self.r[k] - self.s[k]).modulus()
    }

    /// Coefficients along one driving increment sequence, calling `visit` for
    /// `k = 1..=steps`.
    ///
    /// `a = -alpha beta int dY / beta` and, after exchanging the order of
    /// integration in `b = ih int beta a ds`, `b = -alpha (int dY / r - omega int dY / beta)`,
    /// both as left-point sums. `gamma_c = -(ih/2) int a^2 ds` by the trapezoid rule.
    pub fn visit(
        &self,
        increments: &[T],
        mut visit: impl FnMut(usize, GaussianKernelState<T>) -> Result<()>,
    ) -> Result<()> {
        if increments.len() != self.steps() {
            return Err(Error::DimensionMismatch {
                expected: self.steps(),
                found: increments.len(),
            });
        }
        let alpha = real(self.params.alpha);
        let quarter_ih_dt = self.params.ih() * real(T::lit(0.25) * self.dt);
        let ln_two_pi = (T::two_pi()).ln();
        let zero = Complex::new(T::zero(), T::zero());
        let (mut int_beta, mut int_r) = (zero, zero);
        let mut prev_a = zero;
        let mut gamma_c = zero;
        let mut arg = T::zero();
        let mut prev_phase: Option<T> = None;
        for (k, &dy) in increments.iter().enumerate() {
            let dy = real(dy);
            let inv_r = self.r[k].inv();
            int_beta += self.u[k] * inv_r * dy;
            int_r += inv_r * dy;
            let n = k + 1;
            let t = T::from_usize_lossy(n) * self.dt;
            let omega = self.omega(n);
            let beta = self.beta(n);
            if !(omega.re > T::zero()) {
                return Err(Error::KernelDegeneracy { t: t.as_f64() });
            }
            let a = -alpha * beta * int_beta;
            let b = -alpha * (int_r - omega * int_beta);
            gamma_c -= quarter_ih_dt * (prev_a * prev_a + a * a);
            prev_a = a;
            let phase = beta.argument();
            arg = match prev_phase {
                None => phase,
                Some(p) => arg + wrap(phase - p),
            };
            prev_phase = Some(phase);
            let log_norm_c = cplx(T::lit(0.5) * (beta.modulus().ln() - ln_two_pi), T::lit(0.5) * arg);
            let state = GaussianKernelState {
                t,
                omega,
                beta,
                a,
                b,
                gamma_c,
                log_norm_c,
                first_integral: self.first_integral(n),
                params: self.params,
            };
            if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
                return Err(Error::BlowUp { step: n });
            }
            visit(n, state)?;
        }
        Ok(())
    }
}

fn wrap<T: Real>(d: T) -> T {
    let pi = T::pi();
    let two_pi = T::two_pi();
    let mut d = d;
    while d > pi {
        d -= two_pi;
    }
    while d < -pi {
        d += two_pi;
    }
    d
}

/// Kernel coefficients at every grid time `t_k > 0` of a single-channel path.
pub fn propagate_coefficients<T: Real>(
    params: KernelParams<T>,
    path: &BrownianPath<T>,
) -> Result<Vec<GaussianKernelState<T>>> {
    if path.channels() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: path.channels(),
        });
    }
    let flow = DeterministicFlow::new(params, path.dt(), path.steps());
    let mut out = Vec::with_capacity(path.steps());
    flow.visit(path.increments(), |_, s| {
        out.push(s);
        Ok(())
    })?;
    Ok(out)
}

/// Kernel coefficients at the final time only.
pub fn final_coefficients<T: Real>(flow: &DeterministicFlow<T>, increments: &[T]) -> Result<GaussianKernelState<T>> {
    let mut last = None;
    flow.visit(increments, |_, s| {
        last = Some(s);
        Ok(())
    })?;
    last.ok_or_else(|| Error::Grid("coefficient flow needs at least one step".into()))
}

/// `1/(iht) + 2/3 alpha^2 t`.
pub fn small_time_omega<T: Real>(params: KernelParams<T>, t: T) -> Complex<T> {
    (params.ih() * real(t)).inv() + real(T::lit(2.0 / 3.0) * params.alpha * params.alpha * t)
}

/// `1/(iht) - 1/3 alpha^2 t`.
pub fn small_time_beta<T: Real>(params: KernelParams<T>, t: T) -> Complex<T> {
    (params.ih() * real(t)).inv() - real(T::lit(1.0 / 3.0) * params.alpha * params.alpha * t)
}

/// `omega = sigma coth(sigma G t)` and `beta = sigma / sinh(sigma G t)` at a given `G`.
pub fn closed_form_pair<T: Real>(params: KernelParams<T>, g: Complex<T>, t: T) -> (Complex<T>, Complex<T>) {
    let sigma = params.sigma();
    let z = sigma * g * real(t);
    (sigma * z.cosh() / z.sinh(), sigma / z.sinh())
}

/// Solves `omega = sigma coth(sigma G t)` for `G` at each state and averages.
pub fn fitted_g<T: Real>(states: &[GaussianKernelState<T>]) -> Option<Complex<T>> {
    let first = states.first()?;
    let sigma = first.params.sigma();
    let mut acc = Complex::new(T::zero(), T::zero());
    for s in states {
        acc += (sigma / s.omega).atanh() / (sigma * real(s.t));
    }
    Some(acc / real(T::from_usize_lossy(states.len())))
}
