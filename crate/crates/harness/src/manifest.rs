use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Task};
use crate::error::{HarnessError, Result};
use crate::tasks::{run_task, CheckOutcome};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Data file written by a run, relative to the run directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub bytes: u64,
}

/// Record of one run: what was executed, what it wrote and which checks passed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub task: Task,
    pub master_seed: u64,
    pub parallelism: usize,
    pub outputs: Vec<OutputFile>,
    pub wall_time_s: f64,
    pub checks: Vec<CheckOutcome>,
    pub all_passed: bool,
    /// Acceptance criteria decided by this run, keyed by criterion id, with
    /// the id of the deciding check.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub criteria: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn check(&self, id: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.id == id)
    }

    /// Confirms that every listed output exists under `dir` with its recorded length.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.outputs {
            let path = dir.join(&f.path);
            let len = std::fs::metadata(&path)
                .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))?
                .len();
            if len != f.bytes {
                return Err(HarnessError::Report(format!(
                    "{}: {len} bytes, manifest records {}",
                    path.display(),
                    f.bytes
                )));
            }
        }
        Ok(())
    }
}

/// Runs the configured task in `out` on `config.run.parallelism` threads and
/// writes the manifest next to the data files.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let threads = config.run.parallelism;
    let start = Instant::now();
    let output = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| HarnessError::Report(format!("thread pool: {e}")))?;
        pool.install(|| run_task(config, out, true))?
    } else {
        run_task(config, out, false)?
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let outputs = output
        .files
        .iter()
        .map(|p| {
            Ok(OutputFile {
                bytes: std::fs::metadata(out.join(p))?.len(),
                path: p.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        config_hash: config.hash(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        task: config.task,
        master_seed: config.run.master_seed,
        parallelism: threads,
        outputs,
        wall_time_s,
        all_passed: output.checks.iter().all(|c| c.passed),
        checks: output.checks,
        criteria: BTreeMap::new(),
    };
    manifest.write(out)?;
    Ok(manifest)
}
