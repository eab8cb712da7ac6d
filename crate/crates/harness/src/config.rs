use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Experiment to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    PureLinear,
    PureNonlinear,
    Equivalence,
    MasterLinear,
    MasterNonlinear,
    Unravel,
    Lindblad,
    OracleCompare,
    Moments,
    Dissipativity,
    Convergence,
}

impl Task {
    pub const ALL: [Task; 11] = [
        Task::PureLinear,
        Task::PureNonlinear,
        Task::Equivalence,
        Task::MasterLinear,
        Task::MasterNonlinear,
        Task::Unravel,
        Task::Lindblad,
        Task::OracleCompare,
        Task::Moments,
        Task::Dissipativity,
        Task::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::PureLinear => "pure-linear",
            Task::PureNonlinear => "pure-nonlinear",
            Task::Equivalence => "equivalence",
            Task::MasterLinear => "master-linear",
            Task::MasterNonlinear => "master-nonlinear",
            Task::Unravel => "unravel",
            Task::Lindblad => "lindblad",
            Task::OracleCompare => "oracle-compare",
            Task::Moments => "moments",
            Task::Dissipativity => "dissipativity",
            Task::Convergence => "convergence",
        }
    }

    /// Folded into the master seed so that tasks draw independent streams.
    pub fn tag(self) -> u64 {
        Task::ALL.iter().position(|&t| t == self).expect("task listed") as u64 + 1
    }

    fn needs_model(self) -> bool {
        !matches!(self, Task::OracleCompare | Task::Moments)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    /// `coefficient * x^2`.
    Harmonic { coefficient: f64 },
    /// `sum_k c_k x^k`.
    Polynomial { coefficients: Vec<f64> },
    /// `amplitude * cos(frequency * x)`.
    Cosine { amplitude: f64, frequency: f64 },
}

impl PotentialSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Harmonic { coefficient } => coefficient * x * x,
            PotentialSpec::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c),
            PotentialSpec::Cosine { amplitude, frequency } => amplitude * (frequency * x).cos(),
        }
    }

    fn validate(&self, path: &str) -> Result<(), ConfigError> {
        let finite = match self {
            PotentialSpec::Zero => true,
            PotentialSpec::Harmonic { coefficient } => coefficient.is_finite(),
            PotentialSpec::Polynomial { coefficients } => coefficients.iter().all(|c| c.is_finite()),
            PotentialSpec::Cosine { amplitude, frequency } => amplitude.is_finite() && frequency.is_finite(),
        };
        if finite {
            Ok(())
        } else {
            Err(ConfigError::new(path, "coefficients must be finite"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    Zero,
    /// `x^2 + p^2`.
    Oscillator,
    /// `kinetic * p^2 + V(x)`.
    Potential {
        #[serde(default = "one")]
        kinetic: f64,
        potential: PotentialSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CouplingSpec {
    Position {
        #[serde(default = "one")]
        scale: f64,
    },
    Momentum {
        #[serde(default = "one")]
        scale: f64,
    },
    Annihilation {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `a x + b p`.
    Linear { a: f64, b: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub hamiltonian: HamiltonianSpec,
    pub couplings: Vec<CouplingSpec>,
    /// Power `q` of the oscillator control operator.
    #[serde(default = "default_power")]
    pub control_power: u32,
    /// Must equal the number of couplings when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
}

fn default_power() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "default_trajectories")]
    pub trajectories: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_trajectories() -> u64 {
    1
}

fn default_parallelism() -> usize {
    1
}

impl RunConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Starting state; vectors are normalised before use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// Lowest eigenvector of the control operator.
    Ground,
    Basis {
        index: usize,
    },
    /// Coefficients `(k + 1)^{-exponent}` on the first `modes` basis vectors.
    PowerLaw {
        modes: usize,
        exponent: f64,
    },
    Coefficients {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
    /// Density operator diagonal in the basis, normalised to unit trace.
    Diagonal {
        weights: Vec<f64>,
    },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Ground
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Overridden by `--out` and the output directory environment variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Recording stride in steps; defaults to about fifty records per run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Jsonl]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
            stride: None,
        }
    }
}

/// Tolerances of the pass/fail checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Width of Monte Carlo bands in standard errors.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Absolute allowance added to martingale bands.
    #[serde(default = "default_allowance")]
    pub allowance: f64,
    /// Smallest accepted fitted convergence order.
    #[serde(default = "default_min_order")]
    pub min_order: f64,
    /// Number of `dt` halvings in refinement studies.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Largest accepted distance at the finest level of a refinement study.
    #[serde(default = "default_max_distance")]
    pub max_distance: f64,
}

fn default_sigma() -> f64 {
    3.0
}
fn default_allowance() -> f64 {
    0.02
}
fn default_min_order() -> f64 {
    0.4
}
fn default_levels() -> usize {
    2
}
fn default_max_distance() -> f64 {
    5e-2
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            sigma: default_sigma(),
            allowance: default_allowance(),
            min_order: default_min_order(),
            levels: default_levels(),
            max_distance: default_max_distance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "default_oracle_dim")]
    pub dim: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_max_l2")]
    pub max_relative_l2: f64,
    /// Time and step of the small-time coefficient comparison.
    #[serde(default = "default_small_t")]
    pub small_t: f64,
    #[serde(default = "default_small_dt")]
    pub small_dt: f64,
    #[serde(default = "default_small_tol")]
    pub small_time_tolerance: f64,
}

fn default_oracle_dim() -> usize {
    64
}
fn default_half_width() -> f64 {
    9.0
}
fn default_grid_points() -> usize {
    3001
}
fn default_max_l2() -> f64 {
    1e-2
}
fn default_small_t() -> f64 {
    1e-3
}
fn default_small_dt() -> f64 {
    1e-6
}
fn default_small_tol() -> f64 {
    1e-3
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            h: 1.0,
            dim: default_oracle_dim(),
            half_width: default_half_width(),
            grid_points: default_grid_points(),
            max_relative_l2: default_max_l2(),
            small_t: default_small_t(),
            small_dt: default_small_dt(),
            small_time_tolerance: default_small_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "default_orders")]
    pub orders: Vec<f64>,
}

fn default_orders() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0, 2.5]
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            h: 1.0,
            orders: default_orders(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
}

fn default_dims() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { dims: default_dims() }
    }
}

/// Bounded test functional of a normalised state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Functional {
    One,
    /// `|<e_index, phi>|^2`.
    Population { index: usize },
    /// `Re <e_i, phi><phi, e_j>`.
    Coherence { i: usize, j: usize },
}

/// Compares the output-measure ensemble reweighted by `||chi||^2` with the
/// innovation-driven normalised ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovConfig {
    pub functionals: Vec<Functional>,
    #[serde(default = "default_max_z")]
    pub max_z: f64,
}

fn default_max_z() -> f64 {
    4.0
}

/// Second Hamiltonian `H + V`, with `V` rescaled to spectral norm `norm`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub potential: PotentialSpec,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    pub run: RunConfig,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub checks: CheckConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub moments: MomentsConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub girsanov: Option<GirsanovConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
}

/// Invalid configuration, located by a dotted field path.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn require(ok: bool, path: &str, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(path, message))
    }
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        let config = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| format!("<toml {}..{}>", s.start, s.end)).unwrap_or_default();
            ConfigError::new(path, e.message().to_string())
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text)
            .map_err(|e| ConfigError::new(format!("<json line {}>", e.line()), e.to_string()))
    }

    pub fn model(&self) -> Result<&ModelConfig, ConfigError> {
        self.model
            .as_ref()
            .ok_or_else(|| ConfigError::new("model", format!("required for task {}", self.task)))
    }

    /// Recording stride, defaulting to about fifty records.
    pub fn stride(&self) -> usize {
        self.output.stride.unwrap_or_else(|| (self.run.steps() / 50).max(1))
    }

    pub fn writes(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory and
    /// the degree of parallelism.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.directory = None;
        canonical.run.parallelism = 1;
        let bytes = serde_json::to_vec(&canonical).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let run = &self.run;
        require(run.horizon.is_finite() && run.horizon > 0.0, "run.T", "must be positive")?;
        require(run.dt.is_finite() && run.dt > 0.0, "run.dt", "must be positive")?;
        let ratio = run.horizon / run.dt;
        require(
            ratio.round() >= 1.0 && (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0),
            "run.dt",
            "must divide T",
        )?;
        require(run.trajectories >= 1, "run.trajectories", "must be at least 1")?;
        require(run.parallelism >= 1, "run.parallelism", "must be at least 1")?;
        if let Some(stride) = self.output.stride {
            require(stride >= 1, "output.stride", "must be at least 1")?;
        }
        require(self.checks.sigma > 0.0, "checks.sigma", "must be positive")?;
        require(self.checks.allowance >= 0.0, "checks.allowance", "must be nonnegative")?;
        if self.task.needs_model() {
            let model = self.model()?;
            self.validate_model(model)?;
        } else if let Some(model) = &self.model {
            self.validate_model(model)?;
        }
        match self.task {
            Task::Equivalence | Task::Unravel => {
                require(self.checks.levels >= 1, "checks.levels", "need at least one refinement")?;
                require(run.trajectories >= 2, "run.trajectories", "refinement studies need two paths")?;
            }
            Task::PureLinear | Task::MasterLinear | Task::Dissipativity | Task::Convergence => {
                require(run.trajectories >= 2, "run.trajectories", "ensemble statistics need two paths")?;
            }
            Task::Moments => {
                require(
                    run.trajectories >= qfilter::gaussian::MIN_MOMENT_SAMPLES as u64,
                    "run.trajectories",
                    "moment estimates need at least 1000 samples",
                )?;
                require(!self.moments.orders.is_empty(), "moments.orders", "must not be empty")?;
                for (i, p) in self.moments.orders.iter().enumerate() {
                    require(*p > 0.0 && p.is_finite(), &format!("moments.orders[{i}]"), "must be positive")?;
                }
                require(self.moments.alpha != 0.0, "moments.alpha", "must be nonzero")?;
                require(self.moments.h > 0.0, "moments.h", "must be positive")?;
            }
            Task::OracleCompare => {
                let o = &self.oracle;
                require(o.alpha != 0.0 && o.alpha.is_finite(), "oracle.alpha", "must be nonzero")?;
                require(o.h > 0.0, "oracle.h", "must be positive")?;
                require(o.dim >= 2, "oracle.dim", "must be at least 2")?;
                require(o.grid_points >= 3, "oracle.grid_points", "must be at least 3")?;
                require(o.half_width > 0.0, "oracle.half_width", "must be positive")?;
                let ratio = o.small_t / o.small_dt;
                require(
                    ratio.round() >= 1.0 && (ratio - ratio.round()).abs() <= 1e-9 * ratio,
                    "oracle.small_dt",
                    "must divide oracle.small_t",
                )?;
            }
            _ => {}
        }
        if self.task == Task::Convergence {
            let dims = &self.convergence.dims;
            require(dims.len() >= 2, "convergence.dims", "need at least two dimensions")?;
            require(dims.windows(2).all(|w| w[0] < w[1]), "convergence.dims", "must increase")?;
            require(dims[0] >= 2, "convergence.dims", "must be at least 2")?;
        }
        if self.girsanov.is_some() {
            require(self.task == Task::PureLinear, "girsanov", "only used by task pure-linear")?;
        }
        if let Some(p) = &self.perturbation {
            require(self.task == Task::MasterLinear, "perturbation", "only used by task master-linear")?;
            require(p.norm > 0.0 && p.norm.is_finite(), "perturbation.norm", "must be positive")?;
            p.potential.validate("perturbation.potential")?;
        }
        Ok(())
    }

    fn validate_model(&self, model: &ModelConfig) -> Result<(), ConfigError> {
        let min_dim = if self.task == Task::Convergence { 1 } else { 2 };
        require(model.dim >= min_dim, "model.dim", "must be at least 2")?;
        require(!model.couplings.is_empty(), "model.couplings", "need at least one coupling")?;
        if let Some(n) = model.channels {
            require(n == model.couplings.len(), "model.channels", "must equal the number of couplings")?;
        }
        require(
            (1..=4).contains(&model.control_power),
            "model.control_power",
            "must be between 1 and 4",
        )?;
        if let HamiltonianSpec::Potential { kinetic, potential } = &model.hamiltonian {
            require(kinetic.is_finite(), "model.hamiltonian.kinetic", "must be finite")?;
            potential.validate("model.hamiltonian.potential")?;
        }
        for (i, c) in model.couplings.iter().enumerate() {
            let finite = match c {
                CouplingSpec::Position { scale } | CouplingSpec::Momentum { scale } | CouplingSpec::Annihilation { scale } => {
                    scale.is_finite()
                }
                CouplingSpec::Linear { a, b } => a.is_finite() && b.is_finite(),
            };
            require(finite, &format!("model.couplings[{i}]"), "coefficients must be finite")?;
        }
        let dim = if self.task == Task::Convergence {
            self.convergence.dims.first().copied().unwrap_or(model.dim)
        } else {
            model.dim
        };
        match &self.initial {
            InitialState::Ground => Ok(()),
            InitialState::Basis { index } => require(*index < dim, "initial.index", "outside the basis"),
            InitialState::PowerLaw { modes, exponent } => {
                require(*modes >= 1 && *modes <= dim, "initial.modes", "must be between 1 and the dimension")?;
                require(exponent.is_finite(), "initial.exponent", "must be finite")
            }
            InitialState::Coefficients { re, im } => {
                require(!re.is_empty() && re.len() <= dim, "initial.re", "length must be between 1 and the dimension")?;
                require(im.len() <= re.len(), "initial.im", "longer than initial.re")?;
                require(
                    re.iter().chain(im).any(|v| *v != 0.0) && re.iter().chain(im).all(|v| v.is_finite()),
                    "initial.re",
                    "must be finite and not all zero",
                )
            }
            InitialState::Diagonal { weights } => {
                require(
                    !weights.is_empty() && weights.len() <= dim,
                    "initial.weights",
                    "length must be between 1 and the dimension",
                )?;
                require(
                    weights.iter().all(|w| *w >= 0.0 && w.is_finite()) && weights.iter().sum::<f64>() > 0.0,
                    "initial.weights",
                    "must be nonnegative with positive sum",
                )
            }
        }
    }
}
