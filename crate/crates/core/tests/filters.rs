use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex;
use proptest::prelude::*;
use qfilter::mixed::{c_trace, c_trace_norm, simulate_linear_master, solve_lindblad, DensityOperator};
use qfilter::operators::{
    build_annihilation, build_hamiltonian, build_oscillator_ladder, build_position, ModelSpec, TruncatedOperator,
};
use qfilter::pure::{lift_to_linear, normalize_trajectory, simulate_linear, simulate_nonlinear, Recording};
use qfilter::scalar::CVector;
use qfilter::sde::sample_path;

fn oscillator<T: qfilter::Real>(m: usize) -> Arc<ModelSpec<T>> {
    let h = build_hamiltonian::<T>(&|x| x * x * T::lit(0.5), m).unwrap();
    let l = build_position::<T>(m).unwrap();
    Arc::new(ModelSpec::new(h, vec![l], build_oscillator_ladder(m, 1).unwrap()).unwrap())
}

fn decay(m: usize) -> Arc<ModelSpec<f64>> {
    let a = build_annihilation::<f64>(m).unwrap();
    Arc::new(ModelSpec::new(TruncatedOperator::zeros(m), vec![a], build_oscillator_ladder(m, 1).unwrap()).unwrap())
}

fn basis<T: qfilter::Real>(m: usize, coefficients: &[f64]) -> CVector<T> {
    let norm = coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
    CVector::from_fn(m, |k, _| Complex::new(T::lit(coefficients.get(k).copied().unwrap_or(0.0) / norm), T::zero()))
}

fn distance(a: &CVector<f64>, b: &CVector<f64>) -> f64 {
    (a - b).norm()
}

#[test]
fn nonlinear_filter_survives_lift_and_normalisation() {
    let model = oscillator::<f64>(12);
    let phi0 = basis::<f64>(12, &[0.8, 0.6]);
    let path_b = Arc::new(sample_path(1, 0.2, 1e-3, 7, 0).unwrap());
    let normalized = simulate_nonlinear(&model, &phi0, &path_b, Recording::full()).unwrap();
    let (linear, path_y) = lift_to_linear(&normalized).unwrap();
    let (back, recovered_b) = normalize_trajectory(&linear).unwrap();
    assert_eq!(path_y.steps(), path_b.steps());
    for (x, y) in back.states().iter().zip(normalized.states()) {
        assert!(distance(x, y) < 1e-10);
    }
    for (x, y) in recovered_b.increments().iter().zip(path_b.increments()) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn linear_filter_from_lifted_path_tracks_lifted_states() {
    let model = oscillator::<f64>(12);
    let phi0 = basis::<f64>(12, &[0.8, 0.6]);
    let path_b = Arc::new(sample_path(1, 0.1, 1e-4, 3, 0).unwrap());
    let normalized = simulate_nonlinear(&model, &phi0, &path_b, Recording::endpoints()).unwrap();
    let (lifted, path_y) = lift_to_linear(&normalized).unwrap();
    let direct = simulate_linear(&model, &phi0, &path_y, Recording::endpoints()).unwrap();
    let scale = lifted.final_state().norm();
    assert!(distance(direct.final_state(), lifted.final_state()) / scale < 5e-2);
}

#[test]
fn master_equation_from_a_projector_matches_the_outer_product() {
    let model = oscillator::<f64>(10);
    let chi0 = basis::<f64>(10, &[0.6, 0.0, 0.8]);
    let path_y = Arc::new(sample_path(1, 0.05, 1e-5, 5, 0).unwrap());
    let pure = simulate_linear(&model, &chi0, &path_y, Recording::endpoints()).unwrap();
    let mixed = simulate_linear_master(&model, &DensityOperator::pure(&chi0), &path_y, Recording::endpoints()).unwrap();
    let chi = pure.final_state();
    let outer = chi * chi.adjoint();
    let err = (mixed.final_state() - &outer).norm() / outer.norm();
    assert!(err < 2e-2, "relative error {err}");
}

#[test]
fn single_and_double_precision_agree() {
    let p64 = Arc::new(sample_path::<f64>(1, 0.1, 1e-3, 11, 0).unwrap());
    let p32 = Arc::new(sample_path::<f32>(1, 0.1, 1e-3, 11, 0).unwrap());
    let x64 = simulate_linear(&oscillator::<f64>(8), &basis::<f64>(8, &[1.0]), &p64, Recording::endpoints()).unwrap();
    let x32 = simulate_linear(&oscillator::<f32>(8), &basis::<f32>(8, &[1.0]), &p32, Recording::endpoints()).unwrap();
    for (a, b) in x64.final_state().iter().zip(x32.final_state().iter()) {
        assert!((a.re - b.re as f64).abs() < 1e-4 && (a.im - b.im as f64).abs() < 1e-4);
    }
}

#[test]
fn lindblad_excited_population_decays_exponentially() {
    let model = decay(2);
    let gamma0 = DensityOperator::pure(&basis::<f64>(2, &[0.0, 1.0]));
    let traj = solve_lindblad(&model, &gamma0, 1.0, 1e-3, Recording::endpoints()).unwrap();
    let excited = traj.final_state()[(1, 1)].re;
    assert!((excited - (-1.0f64).exp()).abs() < 1e-9);
    assert!((traj.final_state().trace().re - 1.0).abs() < 1e-12);
}

#[test]
fn c_trace_equals_trace_norm_on_positive_operators() {
    let ladder = build_oscillator_ladder::<f64>(4, 1).unwrap();
    let a = DMatrix::from_fn(4, 4, |i, j| Complex::new((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.2));
    let gamma = &a * a.adjoint();
    assert!((c_trace(&gamma, &ladder) - c_trace_norm(&gamma, &ladder)).abs() < 1e-10);
    let indefinite = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Complex::new(1.0, 0.0),
        Complex::new(-0.5, 0.0),
        Complex::new(0.0, 0.0),
        Complex::new(0.0, 0.0),
    ]));
    assert!(c_trace(&indefinite, &ladder) < c_trace_norm(&indefinite, &ladder));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nonlinear_filter_keeps_unit_norm(seed in 0u64..1000, a in 0.1f64..1.0, b in 0.1f64..1.0) {
        let model = oscillator::<f64>(8);
        let path_b = Arc::new(sample_path(1, 0.05, 1e-3, seed, 0).unwrap());
        let traj = simulate_nonlinear(&model, &basis::<f64>(8, &[a, b]), &path_b, Recording::full()).unwrap();
        for s in traj.states() {
            prop_assert!((s.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn lindblad_preserves_trace_and_hermiticity(c0 in 0.1f64..1.0, c1 in 0.1f64..1.0) {
        let model = decay(3);
        let gamma0 = DensityOperator::pure(&basis::<f64>(3, &[c0, c1, 0.3]));
        let traj = solve_lindblad(&model, &gamma0, 0.5, 1e-2, Recording::full()).unwrap();
        for g in traj.states() {
            prop_assert!((g.trace().re - 1.0).abs() < 1e-10);
            prop_assert!((g - g.adjoint()).norm() < 1e-12);
        }
    }
}
