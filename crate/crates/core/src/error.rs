use thiserror::Error;

/// Errors raised by operator construction, path generation and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("potential is not finite at x = {x}")]
    InvalidPotential { x: f64 },
    #[error("time grid error: {0}")]
    Grid(String),
    #[error("invalid refinement factor {0} (must be a power of two >= 2)")]
    InvalidFactor(usize),
    #[error("path has no seed lineage and cannot be refined")]
    NoLineage,
    #[error("state blew up (non-finite) at step {step}")]
    BlowUp { step: usize },
    #[error("state degenerated (vanishing norm or trace) at step {step}")]
    DegenerateState { step: usize },
    #[error("trace collapsed below threshold at step {step}")]
    TraceCollapse { step: usize },
    #[error("ensemble normalisation vanished at step {step}")]
    DegenerateEnsemble { step: usize },
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("not a density operator: eigenvalue {eigenvalue:e} below tolerance")]
    NotAState { eigenvalue: f64 },
    #[error("incompatible models: {0}")]
    IncompatibleModels(String),
    #[error("Gaussian kernel degenerated at t = {t}")]
    KernelDegeneracy { t: f64 },
    #[error("quadrature grid too coarse: {0}")]
    Resolution(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
