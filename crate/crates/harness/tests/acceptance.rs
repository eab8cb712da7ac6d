//! Runs every acceptance criterion with its bundled configuration and prints
//! one pass/fail line per criterion.

use std::process::ExitCode;

use qfilter_harness::acceptance::{run_criteria, CRITERIA};
use qfilter_harness::report::build_report;

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let paths = match run_criteria(&[], dir.path(), &|_| {}) {
        Ok(paths) => paths,
        Err(e) => {
            println!("acceptance run failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let report = match build_report(&paths) {
        Ok(r) => r,
        Err(e) => {
            println!("report failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut failures = 0;
    for c in &CRITERIA {
        let row = report.rows.iter().find(|r| r.criterion.as_deref() == Some(c.id));
        let (passed, detail) = match row {
            Some(r) => (r.passed, format!("{} [{}]", r.measured, r.tolerance)),
            None => (false, "no result".into()),
        };
        if !passed {
            failures += 1;
        }
        println!(
            "{} {} {} ({}/{}): {detail}",
            c.id,
            if passed { "PASS" } else { "FAIL" },
            c.title,
            c.task,
            c.check
        );
    }
    println!("acceptance: {}/{} criteria passed", CRITERIA.len() - failures, CRITERIA.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
