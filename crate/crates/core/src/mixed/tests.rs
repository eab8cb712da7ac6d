use std::sync::Arc;

use num_complex::Complex;
use proptest::prelude::*;

use super::*;
use crate::linalg::{hermitian_defect, hermitian_eigenvalues, hs_norm, max_modulus, trace};
use crate::operators::{
    build_annihilation, build_coupling, build_hamiltonian, build_oscillator_ladder, build_position, ModelSpec,
    TruncatedOperator, TruncationLadder,
};
use crate::pure::{simulate_linear, simulate_nonlinear, Recording};
use crate::scalar::{CMatrix, CVector};
use crate::sde::{sample_path, BrownianPath};
use crate::stats::{least_squares_slope, Welford};

fn c(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

fn model(h: TruncatedOperator<f64>, l: TruncatedOperator<f64>) -> Arc<ModelSpec<f64>> {
    let m = h.dim();
    Arc::new(ModelSpec::new(h, vec![l], build_oscillator_ladder(m, 1).unwrap()).unwrap())
}

fn oscillator(m: usize) -> Arc<ModelSpec<f64>> {
    model(build_hamiltonian(&|x| x * x, m).unwrap(), build_position(m).unwrap())
}

fn qubit_damping() -> Arc<ModelSpec<f64>> {
    model(TruncatedOperator::zeros(2), build_annihilation(2).unwrap())
}

fn unit_vector(m: usize) -> CVector<f64> {
    let x = CVector::from_fn(m, |k, _| c(0.5f64.powi(k as i32), 0.3 * 0.5f64.powi(k as i32) * k as f64 / m as f64));
    let n = x.norm();
    x / c(n, 0.0)
}

fn mixed_density(m: usize, rank: usize) -> DensityOperator<f64> {
    let mut g = CMatrix::zeros(m, m);
    let weights = [0.5, 0.3, 0.2, 0.1];
    let total: f64 = weights[..rank].iter().sum();
    for (r, &w) in weights[..rank].iter().enumerate() {
        let decay = 0.5f64.powi(r as i32);
        let x = CVector::from_fn(m, |k, _| {
            let w = decay * 0.6f64.powi(k as i32);
            c(w * (((r + 1) * (k + 1)) as f64 * 0.37 % 1.0 - 0.5), w * (0.1 * (r + k) as f64 % 0.7))
        });
        let x = &x / c(x.norm(), 0.0);
        g += &x * x.adjoint() * c(w / total, 0.0);
    }
    let t = trace(&g).re;
    DensityOperator::new(g / c(t, 0.0)).unwrap()
}

/// `0.7 |0><0| + 0.3 |1><1|`.
fn low_density(m: usize) -> DensityOperator<f64> {
    let mut g = CMatrix::zeros(m, m);
    g[(0, 0)] = c(0.7, 0.0);
    g[(1, 1)] = c(0.3, 0.0);
    DensityOperator::new(g).unwrap()
}

fn path(t: f64, dt: f64, seed: u64, idx: u64) -> Arc<BrownianPath<f64>> {
    Arc::new(sample_path(1, t, dt, seed, idx).unwrap())
}

#[test]
fn density_operator_rejects_non_hermitian() {
    let g = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    assert!(matches!(DensityOperator::new(g), Err(crate::error::Error::NotHermitian { .. })));
    let rho = DensityOperator::pure(&unit_vector(3));
    assert!((rho.trace() - 1.0).abs() < 1e-15);
    assert!(rho.min_eigenvalue() > -1e-14);
}

#[test]
fn free_linear_master_is_constant() {
    let m = 4;
    let model = model(TruncatedOperator::zeros(m), TruncatedOperator::zeros(m));
    let g0 = mixed_density(m, 2);
    let traj = simulate_linear_master(&model, &g0, &path(0.5, 0.01, 1, 0), Recording::full()).unwrap();
    assert!(traj.states().iter().all(|g| g == g0.entries()));
    assert!(trace_residuals(&traj).unwrap().iter().all(|&r| r == 0.0));
}

#[test]
fn factorised_state_follows_pure_filter() {
    let m = 8;
    let model = oscillator(m);
    let x0 = unit_vector(m);
    let g0 = DensityOperator::pure(&x0);
    let error_at = |factor: usize| {
        let w: Welford = (0..12)
            .map(|idx| {
                let base = path(0.3, 4e-3, 21, idx);
                let p = if factor == 1 { base } else { Arc::new(base.refine(factor).unwrap()) };
                let g = simulate_linear_master(&model, &g0, &p, Recording::endpoints()).unwrap();
                let x = simulate_linear(&model, &x0, &p, Recording::endpoints()).unwrap();
                let outer = x.final_state() * x.final_state().adjoint();
                hs_norm(&(g.final_state() - outer)).powi(2)
            })
            .collect();
        w.mean().sqrt()
    };
    let coarse = error_at(1);
    let fine = error_at(4);
    assert!(coarse < 0.3, "{coarse}");
    assert!(fine < 0.75 * coarse, "{coarse} -> {fine}");
}

#[test]
fn scalar_linear_master_matches_closed_form() {
    // gamma(t) = gamma_0 exp(2Y(t) - 2t) for m = 1, L = 1
    let model = model(TruncatedOperator::zeros(1), TruncatedOperator::identity(1));
    let g0 = DensityOperator::new(CMatrix::from_element(1, 1, c(1.0, 0.0))).unwrap();
    let mut err = Welford::new();
    for idx in 0..50 {
        let p = path(1.0, 1e-4, 3, idx);
        let traj = simulate_linear_master(&model, &g0, &p, Recording::endpoints()).unwrap();
        let exact = (2.0 * p.cumulative(0)[p.steps()] - 2.0).exp();
        err.push((traj.final_state()[(0, 0)].re / exact - 1.0).powi(2));
    }
    assert!(err.mean().sqrt() < 0.05, "{}", err.mean().sqrt());
}

#[test]
fn trace_martingale_holds_for_oscillator() {
    let m = 8;
    let model = oscillator(m);
    let g0 = low_density(m);
    let trajs: Vec<_> = (0..400)
        .map(|i| simulate_linear_master(&model, &g0, &path(0.5, 1e-3, 7, i), Recording::every(100)).unwrap())
        .collect();
    let report = trace_martingale_report(&trajs, 3.0, 0.02).unwrap();
    assert!(!report.any_violated, "{:?} +- {:?}", report.mean, report.se);
    assert!(report.max_residual < 1e-12, "{}", report.max_residual);
    assert_eq!(report.times.len(), 6);
}

#[test]
fn master_growth_estimate_holds() {
    let m = 10;
    let model = oscillator(m);
    let alpha = crate::operators::check_dissipativity(&model, 64, 1).alpha_hat;
    let g0 = mixed_density(m, 2);
    let trajs: Vec<_> = (0..200)
        .map(|i| simulate_linear_master(&model, &g0, &path(0.5, 1e-3, 8, i), Recording::every(100)).unwrap())
        .collect();
    let report = master_growth_report(&trajs, alpha, 0.0, 4.0).unwrap();
    assert!(!report.any_violated, "{:?} vs {:?}", report.mean, report.bound);
}

#[test]
fn identity_coupling_keeps_rho_fixed() {
    let m = 3;
    let model = model(TruncatedOperator::zeros(m), TruncatedOperator::identity(m));
    let rho0 = mixed_density(m, 2);
    let traj = simulate_nonlinear_master(&model, &rho0, &path(1.0, 0.01, 2, 0), Recording::full()).unwrap();
    for g in traj.states() {
        assert!(max_modulus(&(g - rho0.entries())) < 1e-13);
    }
}

#[test]
fn nonlinear_master_keeps_unit_trace() {
    let model = oscillator(10);
    let traj =
        simulate_nonlinear_master(&model, &mixed_density(10, 3), &path(0.5, 1e-3, 4, 0), Recording::every(50))
            .unwrap();
    for g in traj.states() {
        assert!((trace(g).re - 1.0).abs() < 1e-12);
        assert!(hermitian_defect(g) == 0.0);
    }
    assert_eq!(traj.hermitian_corrections().len(), traj.steps());
    let low = traj.min_eigenvalues().iter().cloned().fold(0.0, f64::min);
    assert!(low > -50.0 * 1e-3, "{low}");
}

#[test]
fn nonlinear_master_rejects_bad_start() {
    let model = oscillator(3);
    let p = path(0.1, 0.01, 0, 0);
    let twice = DensityOperator::new(CMatrix::identity(3, 3) * c(2.0, 0.0)).unwrap();
    assert!(simulate_nonlinear_master(&model, &twice, &p, Recording::full()).is_err());
    let negative = DensityOperator::new(CMatrix::from_diagonal(&CVector::from_vec(vec![
        c(1.1, 0.0),
        c(-0.1, 0.0),
        c(0.0, 0.0),
    ])))
    .unwrap();
    assert!(matches!(
        simulate_nonlinear_master(&model, &negative, &p, Recording::full()),
        Err(crate::error::Error::NotAState { .. })
    ));
}

#[test]
fn qubit_damping_mean_matches_decay() {
    let model = qubit_damping();
    let rho0 = DensityOperator::pure(&CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]));
    let trajs: Vec<_> = (0..600)
        .map(|i| simulate_nonlinear_master(&model, &rho0, &path(1.0, 1e-3, 5, i), Recording::every(250)).unwrap())
        .collect();
    for (i, &k) in trajs[0].recorded_steps().iter().enumerate() {
        let t = k as f64 * 1e-3;
        let w: Welford = trajs.iter().map(|tr| tr.states()[i][(1, 1)].re).collect();
        let exact = 0.64 * (-t).exp();
        assert!((w.mean() - exact).abs() <= 3.0 * w.standard_error() + 1e-3, "t={t}: {} vs {exact}", w.mean());
    }
}

#[test]
fn uncoupled_master_conversions_are_trivial() {
    let m = 4;
    let model = model(build_hamiltonian(&|x| x * x, m).unwrap(), TruncatedOperator::zeros(m));
    let g0 = DensityOperator::new(mixed_density(m, 2).entries() * c(3.0, 0.0)).unwrap();
    let p = path(0.2, 0.01, 3, 0);
    let lin = simulate_linear_master(&model, &g0, &p, Recording::full()).unwrap();
    let (norm, innovation) = normalize_master(&lin).unwrap();
    assert_eq!(innovation.increments(), p.increments());
    for (a, b) in norm.states().iter().zip(lin.states()) {
        assert!(max_modulus(&(a - b / c(3.0, 0.0))) < 1e-15);
    }
    let non = simulate_nonlinear_master(&model, &mixed_density(m, 2), &p, Recording::full()).unwrap();
    let (lifted, output) = lift_master(&non).unwrap();
    assert_eq!(output.increments(), p.increments());
    assert!(lifted.traces().iter().all(|&t| t == 1.0));
}

#[test]
fn normalize_after_lift_recovers_rho() {
    let model = oscillator(8);
    let p = path(0.5, 1e-3, 6, 1);
    let non = simulate_nonlinear_master(&model, &mixed_density(8, 2), &p, Recording::every(10)).unwrap();
    let (lifted, _) = lift_master(&non).unwrap();
    assert_eq!(lifted.clipped_steps(), 0);
    let (back, innovation) = normalize_master(&lifted).unwrap();
    for (a, b) in back.states().iter().zip(non.states()) {
        assert!(max_modulus(&(a - b)) < 1e-10);
    }
    for (a, b) in innovation.increments().iter().zip(p.increments()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn lifted_scalar_trace_matches_closed_form() {
    // rho = 1, c = 2, Y = B + 2t, tr gamma = exp(2Y - 2t)
    let model = model(TruncatedOperator::zeros(1), TruncatedOperator::identity(1));
    let rho0 = DensityOperator::new(CMatrix::from_element(1, 1, c(1.0, 0.0))).unwrap();
    let mut err = Welford::new();
    for idx in 0..50 {
        let p = path(1.0, 1e-4, 9, idx);
        let non = simulate_nonlinear_master(&model, &rho0, &p, Recording::endpoints()).unwrap();
        let (lifted, y) = lift_master(&non).unwrap();
        let exact = (2.0 * y.cumulative(0)[p.steps()] - 2.0).exp();
        err.push((lifted.traces()[p.steps()] / exact - 1.0).powi(2));
    }
    assert!(err.mean().sqrt() < 0.05, "{}", err.mean().sqrt());
}

#[test]
fn normalised_linear_master_solves_nonlinear_scheme() {
    let model = oscillator(6);
    let g0 = mixed_density(6, 2);
    let mean_residual = |factor: usize| {
        let w: Welford = (0..10)
            .flat_map(|idx| {
                let base = path(0.2, 2e-3, 11, idx);
                let p = if factor == 1 { base } else { Arc::new(base.refine(factor).unwrap()) };
                let lin = simulate_linear_master(&model, &g0, &p, Recording::full()).unwrap();
                let (norm, _) = normalize_master(&lin).unwrap();
                nonlinear_master_residuals(&norm).unwrap()
            })
            .collect();
        w.mean()
    };
    let ratio = mean_residual(1) / mean_residual(2);
    assert!((1.5..=2.5).contains(&ratio), "{ratio}");
}

#[test]
fn unitary_lindblad_flow_is_isospectral() {
    let m = 6;
    let model = model(build_hamiltonian(&|x| x * x, m).unwrap(), TruncatedOperator::zeros(m));
    let g0 = mixed_density(m, 3);
    let traj = solve_lindblad(&model, &g0, 1.0, 1e-3, Recording::every(100)).unwrap();
    let before = hermitian_eigenvalues(g0.entries());
    for g in traj.states() {
        let after = hermitian_eigenvalues(g);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-8);
        }
    }
    assert!(traj.driving().is_none());
}

#[test]
fn lindblad_qubit_damping_is_exponential() {
    let model = qubit_damping();
    let rho0 = DensityOperator::pure(&CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]));
    let traj = solve_lindblad(&model, &rho0, 2.0, 1e-3, Recording::every(200)).unwrap();
    for (g, &k) in traj.states().iter().zip(traj.recorded_steps()) {
        let t = k as f64 * 1e-3;
        assert!((g[(1, 1)].re - 0.64 * (-t).exp()).abs() < 1e-10);
        assert!((g[(0, 1)] - rho0.entries()[(0, 1)] * (-t / 2.0).exp()).norm() < 1e-10);
    }
    assert!(traj.traces().iter().all(|&t| (t - 1.0).abs() < 1e-10));
}

#[test]
fn lindblad_rejects_misaligned_horizon() {
    let model = qubit_damping();
    let rho0 = DensityOperator::pure(&unit_vector(2));
    assert!(solve_lindblad(&model, &rho0, 1.0, 0.3, Recording::full()).is_err());
}

#[test]
fn linear_master_mean_matches_lindblad() {
    let m = 4;
    let model = oscillator(m);
    let g0 = mixed_density(m, 2);
    let dt = 1e-3;
    let reference = solve_lindblad(&model, &g0, 0.5, dt, Recording::endpoints()).unwrap();
    let finals: Vec<_> = (0..1000)
        .map(|i| {
            simulate_linear_master(&model, &g0, &path(0.5, dt, 13, i), Recording::endpoints())
                .unwrap()
                .final_state()
                .clone()
        })
        .collect();
    let target = reference.final_state();
    for r in 0..m {
        for col in 0..m {
            for part in [|z: Complex<f64>| z.re, |z: Complex<f64>| z.im] {
                let w: Welford = finals.iter().map(|g| part(g[(r, col)])).collect();
                let exact = part(target[(r, col)]);
                assert!(
                    (w.mean() - exact).abs() <= 3.0 * w.standard_error() + 2e-3,
                    "({r},{col}): {} vs {exact} +- {}",
                    w.mean(),
                    w.standard_error()
                );
            }
        }
    }
}

#[test]
fn positivity_violation_scales_with_step() {
    let m = 6;
    let model = oscillator(m);
    let g0 = DensityOperator::pure(&unit_vector(m));
    let worst = |factor: usize| {
        (0..20)
            .map(|idx| {
                let base = path(0.3, 2e-3, 17, idx);
                let p = if factor == 1 { base } else { Arc::new(base.refine(factor).unwrap()) };
                let traj = simulate_linear_master(&model, &g0, &p, Recording::full()).unwrap();
                traj.min_eigenvalues().iter().cloned().fold(0.0, f64::min)
            })
            .fold(0.0, f64::min)
    };
    let c_coarse = -worst(1) / 2e-3;
    let c_fine = -worst(2) / 1e-3;
    assert!(c_coarse < 100.0, "{c_coarse}");
    assert!(c_fine <= 2.0 * c_coarse.max(1e-6), "{c_coarse} {c_fine}");
}

#[test]
fn hermitisation_corrections_are_small() {
    let model = oscillator(8);
    let traj =
        simulate_linear_master(&model, &mixed_density(8, 2), &path(0.2, 1e-3, 2, 0), Recording::endpoints()).unwrap();
    assert!(traj.hermitian_corrections().iter().all(|&c| c < 1e-12));
}

#[test]
fn spectral_decomposition_of_maximally_mixed_qubit() {
    let rho = DensityOperator::new(CMatrix::identity(2, 2) * c(0.5, 0.0)).unwrap();
    let ens = spectral_decompose(&rho).unwrap();
    assert_eq!(ens.len(), 2);
    for &p in ens.weights() {
        assert!((p - 0.5).abs() < 1e-15);
    }
    let gram = ens.members().adjoint() * ens.members();
    assert!(max_modulus(&(gram - CMatrix::identity(2, 2))) < 1e-14);
}

#[test]
fn spectral_decomposition_of_pure_state() {
    let x = unit_vector(5);
    let ens = spectral_decompose(&DensityOperator::pure(&x)).unwrap();
    assert_eq!(ens.len(), 1);
    assert!((ens.weights()[0] - 1.0).abs() < 1e-14);
    assert!((ens.members().column(0).dotc(&x).norm() - 1.0).abs() < 1e-12);
}

#[test]
fn spectral_decomposition_reconstructs() {
    let rho = mixed_density(7, 4);
    let ens = spectral_decompose(&rho).unwrap();
    assert_eq!(ens.len(), 4);
    assert!(ens.weights().windows(2).all(|w| w[0] >= w[1]));
    assert!(max_modulus(&(ens.density() - rho.entries())) < 1e-12);
}

#[test]
fn spectral_decomposition_handles_negative_eigenvalues() {
    let diag = |v: [f64; 3]| {
        DensityOperator::new(CMatrix::from_diagonal(&CVector::from_vec(v.iter().map(|&x| c(x, 0.0)).collect())))
            .unwrap()
    };
    assert!(matches!(
        spectral_decompose(&diag([1.0, -1e-6, 0.0])),
        Err(crate::error::Error::NotAState { .. })
    ));
    let ens = spectral_decompose(&diag([0.6, 0.4, -1e-11])).unwrap();
    assert_eq!(ens.len(), 2);
    assert!((ens.clipped_mass() - 1e-11).abs() < 1e-20);
}

#[test]
fn single_member_unraveling_is_linear_filter() {
    let m = 6;
    let model = oscillator(m);
    let x0 = unit_vector(m);
    let ens = WeightedEnsemble::new(vec![1.0], CMatrix::from_columns(&[x0.clone()])).unwrap();
    let p = path(0.3, 1e-3, 5, 0);
    let (members, density) = simulate_vectorized_unraveling(&model, &ens, &p, Recording::full()).unwrap();
    let pi = members.feedback_path(0);
    let y = Arc::new(p.shifted(|k, _| pi.values[k]));
    let lin = simulate_linear(&model, &x0, &y, Recording::full()).unwrap();
    for (k, e) in members.members().iter().enumerate() {
        let chi = lin.states()[k].clone();
        let phase = chi.dotc(&e.column(0));
        let rescaled = &chi * (phase / phase.norm()) / c(chi.norm(), 0.0);
        assert!((e.column(0) - rescaled).norm() < 1e-10);
    }
    let non = simulate_nonlinear(&model, &x0, &p, Recording::endpoints()).unwrap();
    let rho = density.final_state();
    let phi = non.final_state();
    assert!(max_modulus(&(rho - phi * phi.adjoint())) < 0.05);
}

fn unraveling_error(rank: usize) -> Vec<f64> {
    let m = 8;
    let model = oscillator(m);
    let rho0 = mixed_density(m, rank);
    let ens = spectral_decompose(&rho0).unwrap();
    assert_eq!(ens.len(), rank);
    [1usize, 2, 4]
        .iter()
        .map(|&factor| {
            let w: Welford = (0..16)
                .map(|idx| {
                    let base = path(0.2, 4e-3, 33, idx);
                    let p = if factor == 1 { base } else { Arc::new(base.refine(factor).unwrap()) };
                    let (_, rec) = simulate_vectorized_unraveling(&model, &ens, &p, Recording::endpoints()).unwrap();
                    let direct = simulate_nonlinear_master(&model, &rho0, &p, Recording::endpoints()).unwrap();
                    hs_norm(&(rec.final_state() - direct.final_state())).powi(2)
                })
                .collect();
            w.mean().sqrt()
        })
        .collect()
}

#[test]
fn unraveling_converges_to_nonlinear_master() {
    for rank in [1, 3] {
        let errs = unraveling_error(rank);
        let dts: Vec<f64> = [4e-3f64, 2e-3, 1e-3].iter().map(|d| d.ln()).collect();
        let slope = least_squares_slope(&dts, &errs.iter().map(|e| e.ln()).collect::<Vec<_>>());
        assert!(slope >= 0.4, "rank {rank}: slope {slope}, errors {errs:?}");
    }
}

#[test]
fn unraveling_reconstruction_is_positive() {
    let model = oscillator(8);
    let ens = spectral_decompose(&mixed_density(8, 3)).unwrap();
    let (members, rec) =
        simulate_vectorized_unraveling(&model, &ens, &path(0.5, 1e-3, 3, 2), Recording::every(25)).unwrap();
    assert!(rec.min_eigenvalues().iter().all(|&e| e >= -1e-10));
    assert!(rec.states().iter().all(|g| (trace(g).re - 1.0).abs() < 1e-12));
    assert_eq!(members.members().len(), rec.states().len());
    assert_eq!(members.normalization_defects().len(), rec.steps());
    assert_eq!(members.ensemble(0).weights(), ens.weights());
}

#[test]
fn weighted_ensemble_validates_weights() {
    let e = CMatrix::identity(2, 2);
    assert!(WeightedEnsemble::new(vec![0.5, 0.6], e.clone()).is_err());
    assert!(WeightedEnsemble::new(vec![1.5, -0.5], e.clone()).is_err());
    assert!(WeightedEnsemble::new(vec![1.0], e).is_err());
}

#[test]
fn equal_hamiltonians_give_zero_sensitivity() {
    let m = 6;
    let m1 = oscillator(m);
    let shifted = Arc::new(
        m1.with_hamiltonian(m1.hamiltonian().add(&TruncatedOperator::identity(m).scale(c(0.3, 0.0))).unwrap())
            .unwrap(),
    );
    let paths: Vec<_> = (0..4).map(|i| path(0.2, 1e-3, 1, i)).collect();
    let g0 = mixed_density(m, 2);
    let same = hamiltonian_sensitivity(&m1, &m1, &g0, &paths, Recording::every(50), 4.0, 0.0, false).unwrap();
    assert!(same.lhs_mean.iter().all(|&l| l == 0.0));
    let report =
        hamiltonian_sensitivity(&m1, &shifted, &g0, &paths, Recording::every(50), 4.0, 0.0, false).unwrap();
    assert!(report.lhs_mean.iter().all(|&l| l < 1e-10), "{:?}", report.lhs_mean);
    assert!((report.hamiltonian_distance - 0.3).abs() < 1e-12);
    assert!(report.rhs[1..].iter().all(|&r| r > 0.0));
    assert!(!report.any_violated);
}

#[test]
fn perturbed_hamiltonian_respects_bound() {
    let m = 10;
    let m1 = oscillator(m);
    let v = build_hamiltonian(&|x: f64| x.cos(), m).unwrap();
    let scale = 0.1 / v.spectral_norm();
    let m2 = Arc::new(m1.with_hamiltonian(m1.hamiltonian().add(&v.scale(c(scale, 0.0))).unwrap()).unwrap());
    let paths: Vec<_> = (0..40).map(|i| path(0.5, 1e-3, 4, i)).collect();
    let report = hamiltonian_sensitivity(
        &m1,
        &m2,
        &mixed_density(m, 2),
        &paths,
        Recording::every(100),
        4.0,
        0.0,
        true,
    )
    .unwrap();
    assert!(!report.any_violated, "{:?} vs {:?}", report.lhs_mean, report.rhs);
    assert!(report.lhs_mean[1..].iter().all(|&l| l > 0.0));
}

#[test]
fn sensitivity_rejects_different_couplings() {
    let m1 = oscillator(4);
    let m2 = model(build_hamiltonian(&|x| x * x, 4).unwrap(), build_coupling(0.0, 1.0, 4).unwrap());
    let paths: Vec<_> = (0..2).map(|i| path(0.1, 0.01, 1, i)).collect();
    assert!(matches!(
        hamiltonian_sensitivity(&m1, &m2, &mixed_density(4, 1), &paths, Recording::full(), 4.0, 0.0, false),
        Err(crate::error::Error::IncompatibleModels(_))
    ));
}

#[test]
fn c_trace_norm_examples() {
    let ladder = TruncationLadder::new(vec![1.0, 3.0]).unwrap();
    let mut e1 = CMatrix::zeros(2, 2);
    e1[(0, 0)] = c(1.0, 0.0);
    assert!((c_trace_norm(&e1, &ladder) - 1.0).abs() < 1e-14);
    let half = CMatrix::identity(2, 2) * c(0.5, 0.0);
    assert!((c_trace_norm(&half, &ladder) - 5.0).abs() < 1e-14);
}

#[test]
fn c_trace_norm_matches_root_form() {
    let m = 6;
    let ladder = build_oscillator_ladder::<f64>(m, 1).unwrap();
    let rho = mixed_density(m, 3);
    let (values, vectors) = crate::linalg::hermitian_eigen(rho.entries());
    let sqrt = &vectors
        * CMatrix::from_diagonal(&CVector::from_iterator(m, values.iter().map(|&v| c(v.max(0.0).sqrt(), 0.0))))
        * vectors.adjoint();
    let c_sqrt = ladder.as_operator().mul_left(&sqrt);
    assert!((c_trace_norm(rho.entries(), &ladder) - c_sqrt.norm_squared()).abs() < 1e-10);
}

#[test]
fn jsonl_export_has_one_record_per_time() {
    let model = oscillator(3);
    let traj =
        simulate_linear_master(&model, &mixed_density(3, 2), &path(0.1, 0.01, 1, 0), Recording::every(5)).unwrap();
    let mut buf = Vec::new();
    traj.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let rec: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    assert_eq!(rec["re"].as_array().unwrap().len(), 6);
    assert!((rec["t"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    for key in ["im", "trace", "min_eig"] {
        assert!(rec.get(key).is_some());
    }
    assert_eq!(traj.trace_path().values.len(), traj.steps() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn nonlinear_master_stays_hermitian_unit_trace(seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let m = 5;
        let model = model(build_hamiltonian(&|x: f64| x.cos(), m).unwrap(), build_coupling(a, b, m).unwrap());
        let traj = simulate_nonlinear_master(&model, &mixed_density(m, 2), &path(0.1, 1e-3, seed, 0), Recording::every(20)).unwrap();
        for g in traj.states() {
            prop_assert!((trace(g).re - 1.0).abs() < 1e-12);
            prop_assert_eq!(hermitian_defect(g), 0.0);
        }
    }

    #[test]
    fn decomposition_reconstructs_random_states(entries in proptest::collection::vec(-1.0f64..1.0, 32)) {
        let m = 4;
        let a = CMatrix::from_fn(m, m, |r, col| c(entries[r * m + col], entries[16 + r * m + col]));
        let g = &a * a.adjoint();
        let t = trace(&g).re;
        prop_assume!(t > 1e-3);
        let rho = DensityOperator::new(g / c(t, 0.0)).unwrap();
        let ens = spectral_decompose(&rho).unwrap();
        prop_assert!((ens.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(max_modulus(&(ens.density() - rho.entries())) < 1e-12);
    }
}
