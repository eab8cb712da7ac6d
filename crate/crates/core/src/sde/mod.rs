//! Brownian driving paths and the shared Euler–Maruyama engine.

mod dump;
mod integrator;
mod path;
mod scalar_path;

pub use dump::{read_dump, write_dump, DumpHeader, DumpRow, DUMP_MAGIC};
pub use integrator::{euler_maruyama, integrate, FnSystem, SdeState, SdeSystem, Trajectory};
pub use path::{derive_seed, sample_path, BrownianPath, PathLineage, GRID_TOLERANCE};
pub use scalar_path::{stochastic_integral, time_integral, ScalarPath};
