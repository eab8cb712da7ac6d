use std::sync::Arc;

use qfilter::pure::{simulate_linear, simulate_nonlinear, Recording};
use qfilter::sde::sample_path;
use qfilter::stats::{run_ensemble, Welford};
use qfilter::{CVector, ModelSpec};
use serde::Serialize;

use crate::config::Functional;

impl Functional {
    /// Value on a state normalised by `norm_sq`.
    pub fn eval(&self, x: &CVector, norm_sq: f64) -> f64 {
        match *self {
            Functional::One => 1.0,
            Functional::Population { index } => x.get(index).map_or(0.0, |z| z.norm_sqr()) / norm_sq,
            Functional::Coherence { i, j } => match (x.get(i), x.get(j)) {
                (Some(a), Some(b)) => (a * b.conj()).re / norm_sq,
                _ => 0.0,
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            Functional::One => "one".into(),
            Functional::Population { index } => format!("population({index})"),
            Functional::Coherence { i, j } => format!("coherence({i},{j})"),
        }
    }
}

/// Output-measure mean of `f(chi/||chi||) ||chi||^2` against the
/// innovation-measure mean of `f(phi)` at the final time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GirsanovRow {
    pub functional: String,
    pub weighted_mean: f64,
    pub weighted_se: f64,
    pub innovation_mean: f64,
    pub innovation_se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GirsanovReport {
    pub trajectories: u64,
    pub rows: Vec<GirsanovRow>,
    pub max_abs_z: f64,
}

fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY * diff.signum()
    } else {
        diff / se
    }
}

/// Runs `count` output-driven linear and `count` innovation-driven nonlinear
/// trajectories from independent seed streams `output_seed` and `innovation_seed`.
#[allow(clippy::too_many_arguments)]
pub fn girsanov_density_check(
    model: &Arc<ModelSpec>,
    x0: &CVector,
    horizon: f64,
    dt: f64,
    count: u64,
    output_seed: u64,
    innovation_seed: u64,
    functionals: &[Functional],
    parallel: bool,
) -> qfilter::Result<GirsanovReport> {
    let n = model.channels();
    let linear = run_ensemble(count, parallel, |i| -> qfilter::Result<Vec<f64>> {
        let y = Arc::new(sample_path(n, horizon, dt, output_seed, i)?);
        let traj = simulate_linear(model, x0, &y, Recording::endpoints())?;
        let chi = traj.final_state();
        let w = chi.norm_squared();
        Ok(functionals.iter().map(|f| f.eval(chi, w) * w).collect())
    })
    .into_iter()
    .collect::<qfilter::Result<Vec<_>>>()?;
    let nonlinear = run_ensemble(count, parallel, |i| -> qfilter::Result<Vec<f64>> {
        let b = Arc::new(sample_path(n, horizon, dt, innovation_seed, i)?);
        let traj = simulate_nonlinear(model, x0, &b, Recording::endpoints())?;
        let phi = traj.final_state();
        let w = phi.norm_squared();
        Ok(functionals.iter().map(|f| f.eval(phi, w)).collect())
    })
    .into_iter()
    .collect::<qfilter::Result<Vec<_>>>()?;
    let rows: Vec<GirsanovRow> = functionals
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let p: Welford = linear.iter().map(|v| v[k]).collect();
            let q: Welford = nonlinear.iter().map(|v| v[k]).collect();
            let se = (p.standard_error().powi(2) + q.standard_error().powi(2)).sqrt();
            GirsanovRow {
                functional: f.label(),
                weighted_mean: p.mean(),
                weighted_se: p.standard_error(),
                innovation_mean: q.mean(),
                innovation_se: q.standard_error(),
                z: z_score(p.mean() - q.mean(), se),
            }
        })
        .collect();
    let max_abs_z = rows.iter().fold(0.0f64, |m, r| m.max(r.z.abs()));
    Ok(GirsanovReport {
        trajectories: count,
        rows,
        max_abs_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::build;
    use crate::config::{CouplingSpec, HamiltonianSpec, InitialState, ModelConfig};

    fn model(scale: f64) -> Arc<ModelSpec> {
        build::model(&ModelConfig {
            dim: 8,
            hamiltonian: HamiltonianSpec::Oscillator,
            couplings: vec![CouplingSpec::Position { scale }],
            control_power: 1,
            channels: None,
        })
        .unwrap()
    }

    fn functionals() -> Vec<Functional> {
        vec![
            Functional::One,
            Functional::Population { index: 1 },
            Functional::Coherence { i: 0, j: 2 },
        ]
    }

    #[test]
    fn without_coupling_weights_are_deterministic() {
        let x0 = build::initial_vector(&InitialState::PowerLaw { modes: 3, exponent: 1.0 }, 8);
        let r = girsanov_density_check(&model(0.0), &x0, 0.1, 1e-2, 20, 1, 2, &functionals(), false).unwrap();
        let weight = r.rows[0].weighted_mean;
        assert!((weight - 1.0).abs() < 1e-2);
        for row in &r.rows {
            assert_eq!(row.weighted_se, 0.0);
            assert_eq!(row.innovation_se, 0.0);
            assert!((row.weighted_mean - weight * row.innovation_mean).abs() < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn constant_functional_has_unit_means() {
        let x0 = build::initial_vector(&InitialState::Ground, 8);
        let r = girsanov_density_check(&model(1.0), &x0, 0.2, 1e-3, 400, 3, 4, &functionals(), false).unwrap();
        let one = &r.rows[0];
        assert_eq!(one.innovation_mean, 1.0);
        assert!((one.weighted_mean - 1.0).abs() <= 4.0 * one.weighted_se, "{one:?}");
        assert!(r.max_abs_z <= 4.0, "{r:?}");
        assert_eq!(r.rows[1].functional, "population(1)");
    }

    #[test]
    fn functionals_normalise() {
        let x = CVector::from_vec(vec![
            num_complex::Complex::new(1.0, 0.0),
            num_complex::Complex::new(0.0, 1.0),
        ]);
        assert_eq!(Functional::Population { index: 1 }.eval(&x, 2.0), 0.5);
        assert_eq!(Functional::Population { index: 5 }.eval(&x, 2.0), 0.0);
        assert_eq!(Functional::Coherence { i: 0, j: 1 }.eval(&x, 2.0), 0.0);
        assert_eq!(Functional::One.eval(&x, 2.0), 1.0);
    }
}
