use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qfilter_harness::acceptance::{criterion, criterion_config, run_criteria};
use qfilter_harness::config::{ConfigError, ExperimentConfig, Task};
use qfilter_harness::error::Result;
use qfilter_harness::manifest::{run, RunManifest, MANIFEST_FILE};
use qfilter_harness::report::{build_report, Report};

/// Simulation and acceptance runner for quantum filtering equations.
#[derive(Parser, Debug)]
#[command(name = "qfilter", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Experiment configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "QFILTER_OUT")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Time step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Horizon.
    #[arg(long = "T", global = true)]
    horizon: Option<f64>,
    /// Number of trajectories.
    #[arg(long, global = true)]
    trajectories: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Runs the task of `--config`.
    Simulate,
    /// Runs acceptance criteria with their bundled configurations and writes a report.
    Check {
        /// Criterion ids such as C01; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Runs the moment task, from `--config` or the bundled configuration.
    Moments {
        /// Moment orders.
        #[arg(long = "p", value_delimiter = ',')]
        orders: Vec<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Runs the Galerkin convergence task, from `--config` or the bundled configuration.
    Convergence {
        /// Truncation dimensions.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
    },
    /// Aggregates manifests into report.json and report.txt.
    Report {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.run.master_seed = seed;
        }
        if let Some(k) = self.parallel {
            config.run.parallelism = k;
        }
        if let Some(dt) = self.dt {
            config.run.dt = dt;
        }
        if let Some(t) = self.horizon {
            config.run.horizon = t;
        }
        if let Some(n) = self.trajectories {
            config.run.trajectories = n;
        }
    }

    /// The `--config` file, or the bundled configuration of `fallback`.
    fn load(&self, fallback: Option<&str>) -> Result<ExperimentConfig> {
        let mut config = match (&self.config, fallback) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(id)) => criterion_config(criterion(id).expect("bundled criterion"))?,
            (None, None) => return Err(ConfigError::new("--config", "required").into()),
        };
        self.apply(&mut config);
        Ok(config)
    }

    fn out_dir(&self, config: Option<&ExperimentConfig>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.and_then(|c| c.output.directory.clone()))
            .unwrap_or_else(|| PathBuf::from("qfilter-out"))
    }
}

fn print_manifest(manifest: &RunManifest, dir: &Path) {
    for c in &manifest.checks {
        println!(
            "{} {:<24} {} [{}]",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.measured,
            c.tolerance
        );
    }
    println!("manifest: {}", dir.join(MANIFEST_FILE).display());
}

fn simulate(mut config: ExperimentConfig, o: &Overrides, task: Task) -> Result<bool> {
    if config.task != task {
        return Err(ConfigError::new("task", format!("expected {task}, found {}", config.task)).into());
    }
    config.validate()?;
    let dir = o.out_dir(Some(&config));
    config.output.directory = Some(dir.clone());
    let manifest = run(&config, &dir)?;
    print_manifest(&manifest, &dir);
    Ok(manifest.all_passed)
}

fn report(paths: &[PathBuf], dir: &Path) -> Result<Report> {
    let report = build_report(paths)?;
    report.write(dir)?;
    print!("{}", report.to_text());
    Ok(report)
}

fn execute(cli: &Cli) -> Result<bool> {
    let o = &cli.overrides;
    match &cli.command {
        Command::Simulate => {
            let config = o.load(None)?;
            let task = config.task;
            simulate(config, o, task)
        }
        Command::Check { only } => {
            let dir = o.out_dir(None);
            let paths = run_criteria(only, &dir, &|c| o.apply(c))?;
            Ok(report(&paths, &dir)?.all_passed)
        }
        Command::Moments { orders, alpha } => {
            let mut config = o.load(Some("C06"))?;
            if !orders.is_empty() {
                config.moments.orders = orders.clone();
            }
            if let Some(a) = alpha {
                config.moments.alpha = *a;
            }
            simulate(config, o, Task::Moments)
        }
        Command::Convergence { dims } => {
            let mut config = o.load(Some("C09"))?;
            if !dims.is_empty() {
                config.convergence.dims = dims.clone();
            }
            simulate(config, o, Task::Convergence)
        }
        Command::Report { manifests } => Ok(report(manifests, &o.out_dir(None))?.all_passed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

