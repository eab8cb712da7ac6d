//! Derived scalar processes `int f dB` and `int g ds` on a path's grid.

use crate::scalar::Real;

use super::BrownianPath;

/// Values of a scalar process at the grid times of its parent path.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarPath<T: Real> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    /// The integrand was not finite at `t = 0` and the sum started at index 1.
    pub regularized: bool,
}

impl<T: Real> ScalarPath<T> {
    pub fn last(&self) -> T {
        *self.values.last().expect("scalar path holds its initial value")
    }
}

fn leading_term<T: Real>(v: T) -> (T, bool) {
    if v.is_finite() {
        (v, false)
    } else {
        (T::zero(), true)
    }
}

/// Left-point Itô sums `sum_k f(t_k) dB_j(k)`.
///
/// A non-finite `f(0)` (e.g. `1/s^2`) drops the first term.
pub fn stochastic_integral<T: Real>(
    path: &BrownianPath<T>,
    channel: usize,
    integrand: impl Fn(T) -> T,
) -> ScalarPath<T> {
    let times = path.times();
    let mut values = Vec::with_capacity(times.len());
    let mut acc = T::zero();
    values.push(acc);
    let (f0, regularized) = leading_term(integrand(times[0]));
    for k in 0..path.steps() {
        let f = if k == 0 { f0 } else { integrand(times[k]) };
        acc += f * path.increment(k, channel);
        values.push(acc);
    }
    ScalarPath {
        times,
        values,
        regularized,
    }
}

/// Trapezoid sums of `int_0^t g(s) ds`.
///
/// A non-finite `g(0)` replaces the first interval by `g(t_1) dt`.
pub fn time_integral<T: Real>(path: &BrownianPath<T>, integrand: impl Fn(T) -> T) -> ScalarPath<T> {
    let times = path.times();
    let dt = path.dt();
    let half = T::lit(0.5);
    let mut values = Vec::with_capacity(times.len());
    let mut acc = T::zero();
    values.push(acc);
    let (g0, regularized) = leading_term(integrand(times[0]));
    let mut prev = g0;
    for k in 0..path.steps() {
        let next = integrand(times[k + 1]);
        let area = if k == 0 && regularized {
            next * dt
        } else {
            (prev + next) * half * dt
        };
        acc += area;
        values.push(acc);
        prev = next;
    }
    ScalarPath {
        times,
        values,
        regularized,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::sample_path;
    use crate::stats::Welford;

    #[test]
    fn zero_integrand() {
        let p = sample_path::<f64>(1, 1.0, 0.1, 0, 0).unwrap();
        let s = stochastic_integral(&p, 0, |_| 0.0);
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert!(!s.regularized);
    }

    #[test]
    fn unit_integrand_reproduces_path() {
        let p = sample_path::<f64>(2, 1.0, 0.01, 3, 1).unwrap();
        let s = stochastic_integral(&p, 1, |_| 1.0);
        assert_eq!(s.values, p.cumulative(1));
    }

    #[test]
    fn singular_integrand_is_regularized() {
        let p = sample_path::<f64>(1, 1.0, 0.1, 3, 1).unwrap();
        let s = stochastic_integral(&p, 0, |t: f64| 1.0 / (t * t));
        assert!(s.regularized);
        assert!(s.values.iter().all(|v| v.is_finite()));
        let g = time_integral(&p, |t: f64| 1.0 / t.sqrt());
        assert!(g.regularized);
        assert!(g.last().is_finite());
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let p = sample_path::<f64>(1, 2.0, 0.125, 0, 0).unwrap();
        let s = time_integral(&p, |t| 3.0 * t + 1.0);
        assert!((s.last() - (6.0 + 2.0)).abs() < 1e-13);
    }

    #[test]
    fn ito_isometry() {
        let t: f64 = 1.0;
        let n = 10_000;
        let cases: [(fn(f64) -> f64, f64); 3] = [
            (|_| 1.0, t),
            (|s| s, t.powi(3) / 3.0),
            (|s| s * s, t.powi(5) / 5.0),
        ];
        for (f, exact) in cases {
            let mut w = Welford::new();
            let mut sq = Welford::new();
            for idx in 0..n {
                let p = sample_path::<f64>(1, t, 0.001, 21, idx).unwrap();
                let v = stochastic_integral(&p, 0, f).last();
                w.push(v);
                sq.push(v * v);
            }
            let var = w.variance();
            assert!((var - exact).abs() <= 4.0 * sq.standard_error(), "{var} vs {exact}");
        }
    }
}
