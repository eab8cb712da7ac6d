use nalgebra::ComplexField;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{real, CVector, Real};

use super::GaussianKernelState;

/// `exp(-18)`: the relative size of a Gaussian six standard deviations out.
const SUPPORT_FLOOR: f64 = 1.522_997_974_471_263e-8;

/// Uniform grid `start + k * step`, `k = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealGrid<T: Real> {
    pub start: T,
    pub step: T,
    pub len: usize,
}

impl<T: Real> RealGrid<T> {
    /// `len` points from `start` to `end` inclusive.
    pub fn spanning(start: T, end: T, len: usize) -> Result<Self> {
        if len < 3 || !(end > start) {
            return Err(Error::Grid("grid needs at least three points and end > start".into()));
        }
        Ok(Self {
            start,
            step: (end - start) / T::from_usize_lossy(len - 1),
            len,
        })
    }

    pub fn point(&self, k: usize) -> T {
        self.start + T::from_usize_lossy(k) * self.step
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.len).map(|k| self.point(k)).collect()
    }

    pub fn end(&self) -> T {
        self.point(self.len - 1)
    }

    /// Trapezoid weight of point `k`.
    pub fn weight(&self, k: usize) -> T {
        if k == 0 || k + 1 == self.len {
            self.step * T::lit(0.5)
        } else {
            self.step
        }
    }

    pub fn sample(&self, f: impl Fn(T) -> Complex<T>) -> Vec<Complex<T>> {
        (0..self.len).map(|k| f(self.point(k))).collect()
    }
}

/// `int |g|^2 dx` by the trapezoid rule.
pub fn l2_norm_sq<T: Real>(grid: &RealGrid<T>, g: &[Complex<T>]) -> T {
    g.iter()
        .enumerate()
        .fold(T::zero(), |acc, (k, z)| acc + grid.weight(k) * z.modulus_squared())
}

/// `||f - g|| / ||g||` on the grid.
pub fn relative_l2_error<T: Real>(grid: &RealGrid<T>, f: &[Complex<T>], g: &[Complex<T>]) -> T {
    let diff: Vec<_> = f.iter().zip(g).map(|(a, b)| a - b).collect();
    (l2_norm_sq(grid, &diff) / l2_norm_sq(grid, g)).sqrt()
}

/// `||g||^2 + ||x g||^2 + ||g'||^2` with central differences for `g'`.
pub fn sobolev_norm_sq<T: Real>(grid: &RealGrid<T>, g: &[Complex<T>]) -> T {
    let n = g.len();
    let mut acc = T::zero();
    for k in 0..n {
        let x = grid.point(k);
        let d = if k == 0 {
            (g[1] - g[0]) / real(grid.step)
        } else if k + 1 == n {
            (g[n - 1] - g[n - 2]) / real(grid.step)
        } else {
            (g[k + 1] - g[k - 1]) / real(T::lit(2.0) * grid.step)
        };
        acc += grid.weight(k) * ((T::one() + x * x) * g[k].modulus_squared() + d.modulus_squared());
    }
    acc
}

/// `g(x) = int u(t, x, y) f(y) dy` by the trapezoid rule on `grid`.
///
/// Fails when the phase of the kernel turns faster than a quarter period per
/// grid step anywhere on the grid, or when `f` is not negligible (below
/// `exp(-18)` of its peak) at both ends.
pub fn apply_kernel<T: Real>(
    state: &GaussianKernelState<T>,
    grid: &RealGrid<T>,
    f: &[Complex<T>],
) -> Result<Vec<Complex<T>>> {
    if f.len() != grid.len {
        return Err(Error::DimensionMismatch {
            expected: grid.len,
            found: f.len(),
        });
    }
    let (lo, hi) = (grid.start, grid.end());
    let mut fastest = T::zero();
    for &x in &[lo, hi] {
        for &y in &[lo, hi] {
            let rate = (-state.omega.im * y + state.beta.im * x - state.b.im).abs();
            fastest = fastest.max(rate);
        }
    }
    if fastest * grid.step > T::frac_pi_2() {
        return Err(Error::Resolution(format!(
            "kernel phase advances {:.3} rad per step (limit pi/2)",
            (fastest * grid.step).as_f64()
        )));
    }
    let peak = f.iter().fold(T::zero(), |m, z| m.max(z.modulus()));
    let floor = T::lit(SUPPORT_FLOOR) * peak;
    if f[0].modulus() > floor || f[f.len() - 1].modulus() > floor {
        return Err(Error::Resolution("grid does not cover the support of the input".into()));
    }
    let ys = grid.points();
    let weighted: Vec<Complex<T>> = f.iter().enumerate().map(|(k, z)| z * real(grid.weight(k))).collect();
    Ok(ys
        .iter()
        .map(|&x| {
            ys.iter()
                .zip(&weighted)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (&y, w)| {
                    acc + state.log_kernel(x, y).exp() * w
                })
        })
        .collect())
}

/// `f(y) = exp(-q y^2 / 2 - r y - s)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianProfile<T: Real> {
    pub q: Complex<T>,
    pub r: Complex<T>,
    pub s: Complex<T>,
}

impl<T: Real> GaussianProfile<T> {
    /// `pi^{-1/4} exp(-y^2/2)`, the ground state of `x^2 + p^2`.
    pub fn ground() -> Self {
        Self {
            q: real(T::one()),
            r: real(T::zero()),
            s: real(T::lit(0.25) * T::pi().ln()),
        }
    }

    pub fn eval(&self, y: T) -> Complex<T> {
        (-self.q * real(T::lit(0.5) * y * y) - self.r * real(y) - self.s).exp()
    }

    pub fn sample(&self, grid: &RealGrid<T>) -> Vec<Complex<T>> {
        grid.sample(|y| self.eval(y))
    }

    /// Closed-form image under the kernel; requires `Re(omega + q) > 0`.
    pub fn propagate(&self, state: &GaussianKernelState<T>) -> Result<Self> {
        let a = state.omega + self.q;
        if !(a.re > T::zero()) {
            return Err(Error::KernelDegeneracy { t: state.t.as_f64() });
        }
        let c = state.b + self.r;
        let half = real(T::lit(0.5));
        Ok(Self {
            q: state.omega - state.beta * state.beta / a,
            r: state.a + state.beta * c / a,
            s: self.s + state.gamma_c - state.log_norm_c - half * real(T::two_pi().ln()) + half * a.ln()
                - c * c / (a * real(T::lit(2.0))),
        })
    }
}

/// Hermite functions `psi_0..psi_{m-1}` at `x` by the three-term recurrence.
pub fn hermite_functions<T: Real>(m: usize, x: T) -> Vec<T> {
    let mut out = Vec::with_capacity(m);
    let psi0 = T::pi().powf(T::lit(-0.25)) * (-x * x * T::lit(0.5)).exp();
    out.push(psi0);
    if m > 1 {
        out.push(T::lit(2.0).sqrt() * x * psi0);
    }
    for n in 1..m.saturating_sub(1) {
        let nf = T::from_usize_lossy(n);
        let next = (T::lit(2.0) / (nf + T::one())).sqrt() * x * out[n] - (nf / (nf + T::one())).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// `sum_n c_n psi_n(x)` on the grid.
pub fn hermite_synthesis<T: Real>(coefficients: &CVector<T>, grid: &RealGrid<T>) -> Vec<Complex<T>> {
    grid.sample(|x| {
        hermite_functions(coefficients.len(), x)
            .iter()
            .zip(coefficients.iter())
            .fold(Complex::new(T::zero(), T::zero()), |acc, (&p, c)| acc + c * real(p))
    })
}

/// `c_n = int psi_n f dx` by the trapezoid rule.
pub fn hermite_coefficients<T: Real>(grid: &RealGrid<T>, f: &[Complex<T>], m: usize) -> CVector<T> {
    let mut out = CVector::zeros(m);
    for (k, z) in f.iter().enumerate() {
        let w = grid.weight(k);
        for (n, p) in hermite_functions(m, grid.point(k)).into_iter().enumerate() {
            out[n] += z * real(p * w);
        }
    }
    out
}
