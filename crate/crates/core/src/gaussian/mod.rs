//! Explicit Gaussian kernel of the position-measurement filter with zero potential.

mod apply;
mod kernel;
mod moments;

pub use apply::{
    apply_kernel, hermite_coefficients, hermite_functions, hermite_synthesis, l2_norm_sq, relative_l2_error,
    sobolev_norm_sq, GaussianProfile, RealGrid,
};
pub use kernel::{
    closed_form_pair, final_coefficients, fitted_g, propagate_coefficients, small_time_beta, small_time_omega,
    DeterministicFlow, GaussianKernelState, KernelJson, KernelParams,
};
pub use moments::{
    coefficient_ensemble, coefficient_stats, divergence_report, estimate_moment, moment_closed_form, moment_values,
    write_moments_csv, CoefficientStats, DivergenceReport, Estimator, MomentEstimate, MomentOutcome,
    HILL_DIVERGENCE_THRESHOLD, MIN_MOMENT_SAMPLES, MOM_BLOCKS,
};
