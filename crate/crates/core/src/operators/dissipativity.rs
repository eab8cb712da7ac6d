//! Numerical checks of the control-operator hypotheses on a truncated model.

use nalgebra::ComplexField;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::linalg::{inner, spectral_norm, top_eigenpair, vector_norm_sq};
use crate::scalar::{cplx, CMatrix, CVector, Real};

use super::{ModelSpec, TruncatedOperator, TruncationLadder};

/// Default number of random starting vectors for the `[L, C^2]` ratio.
pub const DEFAULT_SAMPLES: usize = 512;
/// Ascent iterations applied to the best starting vectors.
pub const REFINEMENT_STEPS: usize = 50;
/// Phase offsets tried when seeding the ascent.
const PHASE_GRID: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriteriaSatisfied {
    /// `||Hx||^2 <= K ||x||_C^2` and `||L^+L x||^2 <= K ||x||_C^2` with finite `K`.
    pub mr0: bool,
    /// The dissipativity form is bounded by `alpha ||x||_C^2` with finite `alpha`.
    pub mr1a: bool,
    /// `alpha_hat` does not exceed the bound implied by the two commutator ratios.
    pub commutator_criterion: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Serialize")]
pub struct DissipativityReport<T: Real> {
    /// Smallest `alpha` with `D(x) <= alpha ||x||_C^2` (`beta = 0`), clamped at zero.
    pub alpha_hat: T,
    /// `sup ||[C, H] x|| / ||x||_C`.
    pub commutator_ch_ratio: T,
    /// `sup sum_k |([L_k, C^2] x, L_k x)| / ||x||_C^2`.
    pub commutator_lc2_ratio: T,
    /// `max(4 * ch, 2 * lc2)`, the `alpha` delivered by the commutator criterion.
    pub criterion_alpha: T,
    pub k_hat: T,
    pub satisfied: CriteriaSatisfied,
}

/// `D(x) = -2 Re(Cx, iCHx) - Re(Cx, C L^+L x) + sum_j ||C L_j x||^2`.
pub fn dissipation_functional<T: Real>(model: &ModelSpec<T>, x: &CVector<T>) -> T {
    let c = model.control();
    let cx = c.apply(x);
    let chx = c.apply(&model.hamiltonian().apply(x));
    let ic_hx = chx.map(|z| z * cplx(T::zero(), T::one()));
    let cltlx = c.apply(&model.dissipation().apply(x));
    let mut d = -T::lit(2.0) * inner(&cx, &ic_hx).re - inner(&cx, &cltlx).re;
    for l in model.couplings() {
        d += c.c_part_sq(&l.apply(x));
    }
    d
}

fn whiten<T: Real>(m: &CMatrix<T>, w: &[T]) -> CMatrix<T> {
    CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)].scale(w[r] * w[c]))
}

fn hermitian_part<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    (m + m.adjoint()).map(|z| z.scale(T::lit(0.5)))
}

fn column_scaled<T: Real>(m: &CMatrix<T>, w: &[T]) -> CMatrix<T> {
    CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)].scale(w[c]))
}

/// Evaluates the dissipativity constants of a model.
///
/// `alpha_hat` and `K` are maxima of Hermitian forms against the `C`-norm and
/// are computed exactly from the whitened eigenproblem. The `[L, C^2]` ratio
/// sums moduli over channels, so it is maximised by seeded random starts
/// followed by phase-aligned eigenvector ascent, which never decreases the
/// objective.
pub fn check_dissipativity<T: Real>(
    model: &ModelSpec<T>,
    samples: usize,
    seed: u64,
) -> DissipativityReport<T> {
    let ladder = model.control();
    let lam = ladder.eigenvalues();
    let w: Vec<T> = lam.iter().map(|&l| T::one() / (T::one() + l * l).sqrt()).collect();
    let lam2: Vec<T> = lam.iter().map(|&l| l * l).collect();

    let h = model.hamiltonian().entries();
    let ltl = model.dissipation().entries();
    let m = model.dim();
    let left_diag = |d: &[T], a: &CMatrix<T>| CMatrix::from_fn(m, m, |r, c| a[(r, c)].scale(d[r]));

    // D(x) = x^+ M x with M = Herm(-2i C^2 H - C^2 L^+L) + sum_j L_j^+ C^2 L_j
    let mut form = hermitian_part(
        &(left_diag(&lam2, h).map(|z| z * cplx(T::zero(), -T::lit(2.0))) - left_diag(&lam2, ltl)),
    );
    for l in model.couplings() {
        let le = l.entries();
        form += le.adjoint() * left_diag(&lam2, le);
    }
    let (top, _) = top_eigenpair(&whiten(&form, &w));
    let alpha_hat = top.max(T::zero());

    let comm_ch = CMatrix::from_fn(m, m, |r, c| h[(r, c)].scale(lam[r] - lam[c]));
    let ch = spectral_norm(&column_scaled(&comm_ch, &w));

    let kh = spectral_norm(&column_scaled(h, &w));
    let kl = spectral_norm(&column_scaled(ltl, &w));
    let k_hat = (kh * kh).max(kl * kl);

    let lc2 = lc2_ratio(model, &w, &lam2, samples, seed);

    let criterion_alpha = (T::lit(4.0) * ch).max(T::lit(2.0) * lc2);
    let slack = T::structural_tolerance().sqrt() * (T::one() + criterion_alpha);
    DissipativityReport {
        alpha_hat,
        commutator_ch_ratio: ch,
        commutator_lc2_ratio: lc2,
        criterion_alpha,
        k_hat,
        satisfied: CriteriaSatisfied {
            mr0: k_hat.is_finite(),
            mr1a: alpha_hat.is_finite(),
            commutator_criterion: alpha_hat <= T::lit(2.0) * ch + lc2 + slack,
        },
    }
}

fn lc2_ratio<T: Real>(model: &ModelSpec<T>, w: &[T], lam2: &[T], samples: usize, seed: u64) -> T {
    let m = model.dim();
    // A_j = [L_j, C^2]^+ L_j, whitened so the C-norm becomes Euclidean
    let forms: Vec<CMatrix<T>> = model
        .couplings()
        .iter()
        .map(|l| {
            let le = l.entries();
            let comm = CMatrix::from_fn(m, m, |r, c| le[(r, c)].scale(lam2[c] - lam2[r]));
            whiten(&(comm.adjoint() * le), w)
        })
        .collect();
    if forms.iter().all(|a| a.iter().all(|z| z.re == T::zero() && z.im == T::zero())) {
        return T::zero();
    }
    let objective = |y: &CVector<T>| -> T {
        forms.iter().fold(T::zero(), |acc, a| acc + inner(y, &(a * y)).modulus())
    };

    // top eigenvectors of Herm(e^{i theta} sum_j A_j) over a phase grid
    let total = forms.iter().fold(CMatrix::zeros(m, m), |acc, a| acc + a);
    let mut starts: Vec<CVector<T>> = (0..PHASE_GRID)
        .map(|k| {
            let theta = T::two_pi() * T::from_usize_lossy(k) / T::from_usize_lossy(PHASE_GRID);
            let phase = cplx(theta.cos(), theta.sin());
            top_eigenpair(&hermitian_part(&total.map(|e| e * phase))).1
        })
        .collect();
    starts.extend(forms.iter().map(|a| top_eigenpair(&hermitian_part(a)).1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_random: Option<(T, CVector<T>)> = None;
    for _ in 0..samples {
        let y = CVector::from_fn(m, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            cplx(T::lit(re), T::lit(im))
        });
        let y = &y / cplx(vector_norm_sq(&y).sqrt(), T::zero());
        let v = objective(&y);
        if best_random.as_ref().is_none_or(|(b, _)| v > *b) {
            best_random = Some((v, y));
        }
    }
    if let Some((_, y)) = best_random {
        starts.push(y);
    }

    let mut best = T::zero();
    for mut y in starts {
        let mut value = objective(&y);
        for _ in 0..REFINEMENT_STEPS {
            let mut aligned = CMatrix::zeros(m, m);
            for a in &forms {
                let z = inner(&y, &(a * &y));
                let r = z.modulus();
                let phase = if r > T::zero() {
                    z.conj() / cplx(r, T::zero())
                } else {
                    Complex::new(T::one(), T::zero())
                };
                aligned += hermitian_part(&a.map(|e| e * phase));
            }
            let (_, next) = top_eigenpair(&aligned);
            let next_value = objective(&next);
            if next_value <= value {
                break;
            }
            y = next;
            value = next_value;
        }
        best = best.max(value);
    }
    best
}

/// `||(A - P_m A P_m) x||` for `x` in the ambient truncation of `op`.
pub fn projection_error<T: Real>(op: &TruncatedOperator<T>, m: usize, x: &CVector<T>) -> T {
    let full = op.apply(x);
    let mut projected = x.clone();
    for k in m..projected.len() {
        projected[k] = cplx(T::zero(), T::zero());
    }
    let mut inner_part = op.apply(&projected);
    for k in m..inner_part.len() {
        inner_part[k] = cplx(T::zero(), T::zero());
    }
    vector_norm_sq(&(full - inner_part)).sqrt()
}

/// `sqrt(2R / lambda_{m-l+1})`, the constant in the projection-error estimate
/// for an operator with band `l` and `||Ax||^2 <= R ||x|| ||x||_C`.
pub fn projection_error_bound<T: Real>(r: T, ladder: &TruncationLadder<T>, m: usize, band: usize) -> T {
    (T::lit(2.0) * r / ladder.lambda(m - band + 1)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_hamiltonian, build_oscillator_ladder, build_position, c_norm};

    fn random_vectors(m: usize, count: usize, seed: u64) -> Vec<CVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                CVector::from_fn(m, |_, _| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex::new(re, im)
                })
            })
            .collect()
    }

    fn position_model(m: usize) -> ModelSpec<f64> {
        ModelSpec::new(
            TruncatedOperator::zeros(m),
            vec![build_position(m).unwrap()],
            build_oscillator_ladder(m, 1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_model_reports_zeros() {
        let model = ModelSpec::new(
            TruncatedOperator::<f64>::zeros(6),
            vec![TruncatedOperator::zeros(6)],
            build_oscillator_ladder(6, 1).unwrap(),
        )
        .unwrap();
        let r = check_dissipativity(&model, 64, 1);
        assert_eq!(r.alpha_hat, 0.0);
        assert_eq!(r.commutator_ch_ratio, 0.0);
        assert_eq!(r.commutator_lc2_ratio, 0.0);
        assert_eq!(r.k_hat, 0.0);
    }

    #[test]
    fn position_coupling_is_dissipative() {
        let model = position_model(16);
        let r = check_dissipativity(&model, DEFAULT_SAMPLES, 7);
        assert!(r.alpha_hat.is_finite() && r.alpha_hat > 0.0);
        assert!(r.satisfied.mr0 && r.satisfied.mr1a && r.satisfied.commutator_criterion, "{r:?}");
        assert!(r.alpha_hat <= r.criterion_alpha + 1e-9);
        // brute-force sampling never exceeds the exact supremum
        let ladder = model.control();
        let mut best: f64 = 0.0;
        for x in random_vectors(16, 4000, 11) {
            let n = c_norm(&x, ladder).unwrap();
            best = best.max(dissipation_functional(&model, &x) / (n * n));
        }
        assert!(best <= r.alpha_hat * (1.0 + 1e-10));
        assert!(best > 0.0);
        let again = check_dissipativity(&model, DEFAULT_SAMPLES, 7);
        assert_eq!(r, again);
    }

    #[test]
    fn alpha_hat_is_attained() {
        // the maximiser of the whitened form realises alpha_hat through the
        // vector-level functional
        let h = build_hamiltonian::<f64>(&|x: f64| x.cos(), 10).unwrap();
        let model = ModelSpec::new(h, vec![build_position(10).unwrap()], build_oscillator_ladder(10, 1).unwrap()).unwrap();
        let r = check_dissipativity(&model, 128, 3);
        let lam = model.control().eigenvalues();
        let mut best: f64 = f64::NEG_INFINITY;
        for k in 0..10 {
            let mut x = CVector::zeros(10);
            x[k] = Complex::new(1.0 / (1.0 + lam[k] * lam[k]).sqrt(), 0.0);
            best = best.max(dissipation_functional(&model, &x));
        }
        assert!(best <= r.alpha_hat + 1e-10);
        for x in random_vectors(10, 500, 5) {
            let n = c_norm(&x, model.control()).unwrap();
            assert!(dissipation_functional(&model, &x) / (n * n) <= r.alpha_hat + 1e-10);
        }
    }

    #[test]
    fn commuting_hamiltonian_has_zero_ratio() {
        let ladder = build_oscillator_ladder::<f64>(8, 1).unwrap();
        let model = ModelSpec::new(ladder.as_operator(), vec![build_position(8).unwrap()], ladder).unwrap();
        let r = check_dissipativity(&model, 32, 0);
        assert_eq!(r.commutator_ch_ratio, 0.0);
    }

    #[test]
    fn k_hat_bounds_samples() {
        let h = build_hamiltonian::<f64>(&|x| x * x, 12).unwrap();
        let model = ModelSpec::new(h, vec![build_position(12).unwrap()], build_oscillator_ladder(12, 1).unwrap()).unwrap();
        let r = check_dissipativity(&model, 64, 2);
        for x in random_vectors(12, 500, 17) {
            let n2 = c_norm(&x, model.control()).unwrap().powi(2);
            assert!(model.hamiltonian().apply(&x).norm_squared() <= r.k_hat * n2 * (1.0 + 1e-10));
            assert!(model.dissipation().apply(&x).norm_squared() <= r.k_hat * n2 * (1.0 + 1e-10));
        }
    }

    #[test]
    fn lc2_ratio_dominates_samples() {
        let model = position_model(12);
        let r = check_dissipativity(&model, 256, 4);
        let lam2: Vec<f64> = model.control().eigenvalues().iter().map(|l| l * l).collect();
        let l = model.couplings()[0].entries();
        let comm = CMatrix::from_fn(12, 12, |i, j| l[(i, j)] * (lam2[j] - lam2[i]));
        for x in random_vectors(12, 2000, 23) {
            let n2 = c_norm(&x, model.control()).unwrap().powi(2);
            let v = inner(&(&comm * &x), &(l * &x)).norm() / n2;
            assert!(v <= r.commutator_lc2_ratio * (1.0 + 1e-9));
        }
    }

    #[test]
    fn projection_error_law() {
        // ||x x||^2 = (x, x^2 x) <= (x, C x) <= ||x|| ||x||_C, so R = 1
        let big = 48;
        let m = 16;
        let x_op = build_position::<f64>(big).unwrap();
        let ladder = build_oscillator_ladder::<f64>(big, 1).unwrap();
        let bound = projection_error_bound(1.0, &ladder, m, 1);
        let mut tests = random_vectors(big, 200, 31);
        for k in 0..big {
            let mut e = CVector::zeros(big);
            e[k] = Complex::new(1.0, 0.0);
            tests.push(e);
        }
        for x in tests {
            let err = projection_error(&x_op, m, &x);
            assert!(err <= bound * c_norm(&x, &ladder).unwrap() + 1e-12);
        }
    }
}
