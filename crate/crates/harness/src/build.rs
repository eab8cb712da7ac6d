use std::sync::Arc;

use num_complex::Complex;
use qfilter::operators::{
    build_annihilation, build_coupling, build_hamiltonian, build_hamiltonian_scaled, build_momentum,
    build_oscillator_ladder, build_position, build_potential,
};
use qfilter::{CMatrix, CVector, DensityOperator, ModelSpec, TruncatedOperator};

use crate::config::{CouplingSpec, HamiltonianSpec, InitialState, ModelConfig, PotentialSpec};

pub fn hamiltonian(spec: &HamiltonianSpec, m: usize) -> qfilter::Result<TruncatedOperator> {
    match spec {
        HamiltonianSpec::Zero => Ok(TruncatedOperator::zeros(m)),
        HamiltonianSpec::Oscillator => build_hamiltonian(&|x| x * x, m),
        HamiltonianSpec::Potential { kinetic, potential } => {
            build_hamiltonian_scaled(*kinetic, &|x| potential.eval(x), m)
        }
    }
}

pub fn coupling(spec: &CouplingSpec, m: usize) -> qfilter::Result<TruncatedOperator> {
    let scaled = |op: TruncatedOperator, s: f64| op.scale(Complex::new(s, 0.0));
    match *spec {
        CouplingSpec::Position { scale } => Ok(scaled(build_position(m)?, scale)),
        CouplingSpec::Momentum { scale } => Ok(scaled(build_momentum(m)?, scale)),
        CouplingSpec::Annihilation { scale } => Ok(scaled(build_annihilation(m)?, scale)),
        CouplingSpec::Linear { a, b } => build_coupling(a, b, m),
    }
}

/// Model truncated to `m` modes.
pub fn model_at(config: &ModelConfig, m: usize) -> qfilter::Result<Arc<ModelSpec>> {
    let couplings = config
        .couplings
        .iter()
        .map(|c| coupling(c, m))
        .collect::<qfilter::Result<Vec<_>>>()?;
    Ok(Arc::new(ModelSpec::new(
        hamiltonian(&config.hamiltonian, m)?,
        couplings,
        build_oscillator_ladder(m, config.control_power)?,
    )?))
}

pub fn model(config: &ModelConfig) -> qfilter::Result<Arc<ModelSpec>> {
    model_at(config, config.dim)
}

/// `potential` truncated to `m` modes and rescaled to spectral norm `norm`.
pub fn perturbation(potential: &PotentialSpec, norm: f64, m: usize) -> qfilter::Result<TruncatedOperator> {
    let v = build_potential(&|x| potential.eval(x), m)?;
    let size = v.spectral_norm();
    if !(size > 0.0) {
        return Err(qfilter::Error::InvalidInput("perturbation vanishes on the truncation".into()));
    }
    Ok(v.scale(Complex::new(norm / size, 0.0)))
}

/// Unit state vector in dimension `m`. Diagonal densities map to
/// `sum_k sqrt(w_k) e_k`.
pub fn initial_vector(state: &InitialState, m: usize) -> CVector {
    let mut x = CVector::zeros(m);
    match state {
        InitialState::Ground => x[0] = Complex::new(1.0, 0.0),
        InitialState::Basis { index } => x[*index] = Complex::new(1.0, 0.0),
        InitialState::PowerLaw { modes, exponent } => {
            for k in 0..*modes {
                x[k] = Complex::new((k as f64 + 1.0).powf(-exponent), 0.0);
            }
        }
        InitialState::Coefficients { re, im } => {
            for (k, r) in re.iter().enumerate() {
                x[k] = Complex::new(*r, im.get(k).copied().unwrap_or(0.0));
            }
        }
        InitialState::Diagonal { weights } => {
            for (k, w) in weights.iter().enumerate() {
                x[k] = Complex::new(w.sqrt(), 0.0);
            }
        }
    }
    let n = x.norm();
    x / Complex::new(n, 0.0)
}

/// Unit-trace density operator in dimension `m`; vector states give projectors.
pub fn initial_density(state: &InitialState, m: usize) -> qfilter::Result<DensityOperator> {
    match state {
        InitialState::Diagonal { weights } => {
            let total: f64 = weights.iter().sum();
            let mut g = CMatrix::zeros(m, m);
            for (k, w) in weights.iter().enumerate() {
                g[(k, k)] = Complex::new(w / total, 0.0);
            }
            DensityOperator::new(g)
        }
        other => Ok(DensityOperator::pure(&initial_vector(other, m))),
    }
}
