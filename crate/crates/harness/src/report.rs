use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Task;
use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;

/// One check of one run, with the acceptance criterion it decides if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub criterion: Option<String>,
    pub task: Task,
    pub check: String,
    pub passed: bool,
    pub measured: String,
    pub tolerance: String,
    pub manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub manifests: usize,
    pub rows: Vec<ReportRow>,
    pub all_passed: bool,
}

/// Aggregates manifests into one table. Each manifest must exist and its
/// listed outputs must match their recorded lengths. Criteria whose check is
/// missing from their manifest appear as failures.
pub fn build_report(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        return Err(HarnessError::Report("no manifests given".into()));
    }
    let mut rows = Vec::new();
    for path in paths {
        let manifest = RunManifest::load(path)?;
        manifest.verify(path.parent().unwrap_or(Path::new(".")))?;
        for c in &manifest.checks {
            let mapped: Vec<&String> = manifest.criteria.iter().filter(|(_, id)| **id == c.id).map(|(k, _)| k).collect();
            let criteria: Vec<Option<String>> = if mapped.is_empty() {
                vec![None]
            } else {
                mapped.into_iter().map(|k| Some(k.clone())).collect()
            };
            for criterion in criteria {
                rows.push(ReportRow {
                    criterion,
                    task: manifest.task,
                    check: c.id.clone(),
                    passed: c.passed,
                    measured: c.measured.clone(),
                    tolerance: c.tolerance.clone(),
                    manifest: path.clone(),
                });
            }
        }
        for (criterion, check) in &manifest.criteria {
            if manifest.check(check).is_none() {
                rows.push(ReportRow {
                    criterion: Some(criterion.clone()),
                    task: manifest.task,
                    check: check.clone(),
                    passed: false,
                    measured: "check not run".into(),
                    tolerance: String::new(),
                    manifest: path.clone(),
                });
            }
        }
    }
    rows.sort_by(|a, b| match (&a.criterion, &b.criterion) {
        (Some(x), Some(y)) => x.cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(Report {
        manifests: paths.len(),
        all_passed: rows.iter().all(|r| r.passed),
        rows,
    })
}

impl Report {
    /// Fixed-width table, one line per row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<4} {:<4} {:<17} {:<24} {} [{}]",
                r.criterion.as_deref().unwrap_or("-"),
                if r.passed { "PASS" } else { "FAIL" },
                r.task.name(),
                r.check,
                r.measured,
                r.tolerance
            );
        }
        let passed = self.rows.iter().filter(|r| r.passed).count();
        let _ = writeln!(s, "{passed}/{} checks passed over {} manifests", self.rows.len(), self.manifests);
        s
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::manifest::{OutputFile, MANIFEST_FILE};
    use crate::tasks::CheckOutcome;

    fn outcome(id: &str, passed: bool) -> CheckOutcome {
        CheckOutcome {
            id: id.into(),
            passed,
            measured: format!("{id} measured"),
            tolerance: format!("{id} tolerance"),
        }
    }

    fn write_manifest(dir: &Path, checks: Vec<CheckOutcome>, criteria: &[(&str, &str)]) -> PathBuf {
        std::fs::create_dir_all(dir).unwrap();
        std::fs::write(dir.join("data.csv"), "t,x\n0,1\n").unwrap();
        let manifest = RunManifest {
            config_hash: "0".repeat(64),
            code_version: "test".into(),
            task: Task::Lindblad,
            master_seed: 0,
            parallelism: 1,
            outputs: vec![OutputFile {
                path: "data.csv".into(),
                bytes: 8,
            }],
            wall_time_s: 0.0,
            all_passed: checks.iter().all(|c| c.passed),
            checks,
            criteria: criteria.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect::<BTreeMap<_, _>>(),
        };
        manifest.write(dir).unwrap();
        dir.join(MANIFEST_FILE)
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(build_report(&[]), Err(HarnessError::Report(_))));
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(build_report(&[dir.path().join("absent.json")]).is_err());
    }

    #[test]
    fn single_passing_manifest_gives_all_pass_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), vec![outcome("a", true)], &[("C05", "a")]);
        let report = build_report(&[path]).unwrap();
        assert!(report.all_passed);
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].criterion.as_deref(), Some("C05"));
        assert!(report.to_text().contains("1/1 checks passed"));
        report.write(dir.path()).unwrap();
        let back: Report = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn mixed_manifests_list_every_check_with_tolerances() {
        let dir = tempfile::tempdir().unwrap();
        let first = write_manifest(&dir.path().join("x"), vec![outcome("a", true), outcome("b", false)], &[("C02", "b")]);
        let second = write_manifest(&dir.path().join("y"), vec![outcome("c", true)], &[("C01", "c"), ("C09", "gone")]);
        let report = build_report(&[first, second]).unwrap();
        assert!(!report.all_passed);
        let ids: Vec<Option<&str>> = report.rows.iter().map(|r| r.criterion.as_deref()).collect();
        assert_eq!(ids, vec![Some("C01"), Some("C02"), Some("C09"), None]);
        assert!(!report.rows[1].passed && report.rows[1].tolerance == "b tolerance");
        assert!(!report.rows[2].passed && report.rows[2].measured == "check not run");
        assert!(report.to_text().contains("FAIL"));
    }

    #[test]
    fn altered_outputs_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), vec![outcome("a", true)], &[]);
        std::fs::write(dir.path().join("data.csv"), "changed").unwrap();
        assert!(build_report(&[path.clone()]).is_err());
        std::fs::remove_file(dir.path().join("data.csv")).unwrap();
        assert!(build_report(&[path]).is_err());
    }
}
