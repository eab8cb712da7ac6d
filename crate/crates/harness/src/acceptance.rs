use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, Task};
use crate::error::{HarnessError, Result};
use crate::manifest::{run, RunManifest, MANIFEST_FILE};

/// Acceptance criterion decided by one check of one configured run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Criterion {
    pub id: &'static str,
    pub title: &'static str,
    pub task: Task,
    pub check: &'static str,
    /// Stem of the bundled configuration; criteria sharing a stem share a run.
    pub config: &'static str,
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion {
        id: "C01",
        title: "norm martingale",
        task: Task::PureLinear,
        check: "norm-martingale",
        config: "norm_martingale",
    },
    Criterion {
        id: "C02",
        title: "trace martingale",
        task: Task::MasterLinear,
        check: "trace-martingale",
        config: "trace_martingale",
    },
    Criterion {
        id: "C03",
        title: "linear/nonlinear round trip",
        task: Task::Equivalence,
        check: "round-trip",
        config: "equivalence",
    },
    Criterion {
        id: "C04",
        title: "unraveling equivalence",
        task: Task::Unravel,
        check: "unraveling-equivalence",
        config: "unravel",
    },
    Criterion {
        id: "C05",
        title: "Lindblad consistency",
        task: Task::Lindblad,
        check: "lindblad-consistency",
        config: "lindblad",
    },
    Criterion {
        id: "C06",
        title: "moment boundary",
        task: Task::Moments,
        check: "moment-boundary",
        config: "moments",
    },
    Criterion {
        id: "C07",
        title: "coefficient statistics",
        task: Task::Moments,
        check: "coefficient-stats",
        config: "moments",
    },
    Criterion {
        id: "C08",
        title: "Gaussian oracle agreement",
        task: Task::OracleCompare,
        check: "oracle-agreement",
        config: "oracle",
    },
    Criterion {
        id: "C09",
        title: "Galerkin convergence",
        task: Task::Convergence,
        check: "galerkin-convergence",
        config: "convergence",
    },
    Criterion {
        id: "C10",
        title: "growth bounds",
        task: Task::Dissipativity,
        check: "growth-bounds",
        config: "growth",
    },
    Criterion {
        id: "C11",
        title: "Hamiltonian perturbation",
        task: Task::MasterLinear,
        check: "hamiltonian-sensitivity",
        config: "sensitivity",
    },
    Criterion {
        id: "C12",
        title: "Girsanov density",
        task: Task::PureLinear,
        check: "girsanov-density",
        config: "girsanov",
    },
];

/// Bundled configuration text for a criterion's config stem.
pub fn config_text(stem: &str) -> Option<&'static str> {
    Some(match stem {
        "norm_martingale" => include_str!("../configs/norm_martingale.toml"),
        "trace_martingale" => include_str!("../configs/trace_martingale.toml"),
        "equivalence" => include_str!("../configs/equivalence.toml"),
        "unravel" => include_str!("../configs/unravel.toml"),
        "lindblad" => include_str!("../configs/lindblad.toml"),
        "moments" => include_str!("../configs/moments.toml"),
        "oracle" => include_str!("../configs/oracle.toml"),
        "convergence" => include_str!("../configs/convergence.toml"),
        "growth" => include_str!("../configs/growth.toml"),
        "sensitivity" => include_str!("../configs/sensitivity.toml"),
        "girsanov" => include_str!("../configs/girsanov.toml"),
        _ => return None,
    })
}

pub fn criterion(id: &str) -> Option<&'static Criterion> {
    CRITERIA.iter().find(|c| c.id.eq_ignore_ascii_case(id))
}

/// Parsed and validated configuration of a criterion.
pub fn criterion_config(c: &Criterion) -> Result<ExperimentConfig> {
    let text = config_text(c.config).ok_or_else(|| HarnessError::Report(format!("no config {}", c.config)))?;
    let config = ExperimentConfig::from_toml(text)?;
    config.validate()?;
    Ok(config)
}

/// Runs the criteria in `ids` (all when empty), one run per distinct config,
/// under `out/<config>`. `adjust` may override run settings before each run.
/// Returns the manifest paths in criterion order.
pub fn run_criteria(
    ids: &[String],
    out: &Path,
    adjust: &dyn Fn(&mut ExperimentConfig),
) -> Result<Vec<PathBuf>> {
    let selected: Vec<&Criterion> = if ids.is_empty() {
        CRITERIA.iter().collect()
    } else {
        ids.iter()
            .map(|id| criterion(id).ok_or_else(|| HarnessError::Report(format!("unknown criterion {id}"))))
            .collect::<Result<_>>()?
    };
    let mut paths: Vec<PathBuf> = Vec::new();
    for c in &selected {
        let dir = out.join(c.config);
        let manifest_path = dir.join(MANIFEST_FILE);
        if paths.contains(&manifest_path) {
            continue;
        }
        let mut config = criterion_config(c)?;
        adjust(&mut config);
        config.validate()?;
        let mut manifest: RunManifest = run(&config, &dir)?;
        for other in selected.iter().filter(|o| o.config == c.config) {
            manifest.criteria.insert(other.id.into(), other.check.into());
        }
        manifest.write(&dir)?;
        paths.push(manifest_path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_criterion_has_a_valid_config_of_its_task() {
        for c in &CRITERIA {
            let config = criterion_config(c).unwrap();
            assert_eq!(config.task, c.task, "{}", c.id);
        }
    }

    #[test]
    fn criterion_ids_are_unique_and_map_to_one_check() {
        for (i, a) in CRITERIA.iter().enumerate() {
            for b in &CRITERIA[i + 1..] {
                assert_ne!(a.id, b.id);
                assert!(a.config != b.config || a.check != b.check, "{} {}", a.id, b.id);
            }
        }
        assert_eq!(criterion("c05").unwrap().check, "lindblad-consistency");
        assert!(criterion("C13").is_none());
    }
}
