//! Galerkin representations of the Hamiltonian, couplings and control operator.

mod builders;
mod dissipativity;
mod ladder;
mod model;
mod truncated;

pub use builders::{
    build_annihilation, build_coupling, build_hamiltonian, build_hamiltonian_scaled, build_kinetic,
    build_momentum, build_oscillator_ladder, build_position, build_potential, QUADRATURE_PADDING,
};
pub use dissipativity::{
    check_dissipativity, dissipation_functional, projection_error, projection_error_bound,
    CriteriaSatisfied, DissipativityReport, DEFAULT_SAMPLES, REFINEMENT_STEPS,
};
pub use ladder::{c_norm, TruncationLadder};
pub use model::ModelSpec;
pub use truncated::{detect_band_width, OperatorJson, TruncatedOperator};
