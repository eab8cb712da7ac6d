//! Linear and nonlinear pure-state filters on a Galerkin truncation.

mod convert;
mod diagnostics;
mod simulate;
mod trajectory;

pub use convert::{lift_to_linear, normalize_trajectory, INVERSE_NORM_FLOOR};
pub use diagnostics::{
    galerkin_convergence, growth_bound, growth_report, halving_allowance, martingale_report, GalerkinTable,
    GrowthReport, MartingaleReport,
};
pub use simulate::{
    simulate_linear, simulate_nonlinear, LinearPureSystem, NonlinearPureSystem, UNIT_NORM_TOLERANCE,
};
pub use trajectory::{Picture, PureTrajectory, Recording, StateRole};
