//! Stochastic master equations, the Lindblad flow and the vectorised unraveling.

mod convert;
mod density;
mod diagnostics;
mod master;
mod unraveling;

pub use convert::{lift_master, normalize_master};
pub use density::{c_trace, c_trace_norm, DensityOperator, DensityRole, DensityTrajectory};
pub use diagnostics::{
    hamiltonian_sensitivity, master_growth_report, nonlinear_master_residuals, trace_martingale_report,
    trace_residuals, SensitivityReport, TraceMartingaleReport,
};
pub use master::{
    lindblad_rhs, simulate_linear_master, simulate_nonlinear_master, solve_lindblad, trace_feedback,
    LinearMasterSystem, NonlinearMasterSystem, POSITIVITY_TOLERANCE, TRACE_FLOOR,
};
pub use unraveling::{
    simulate_vectorized_unraveling, spectral_decompose, EnsembleTrajectory, UnravelingSystem, WeightedEnsemble,
    WEIGHT_CUTOFF,
};

#[cfg(test)]
mod tests;
