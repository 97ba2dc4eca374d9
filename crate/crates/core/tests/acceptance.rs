//! Prints one PASS/FAIL line per acceptance criterion and exits nonzero if
//! any fails. Passing criterion numbers as arguments runs only those
//! (criterion 12 is skipped in that mode).

use std::path::PathBuf;
use std::process::ExitCode;

use qlab::acceptance::{criterion_ids, run_criterion, run_suite, Ctx, DEFAULT_SEED as SEED};

fn main() -> ExitCode {
    let dir = std::env::var_os("QLAB_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance"));
    // libtest flags such as --nocapture may be forwarded; ignore anything non-numeric.
    let only: Vec<u8> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let print = |r: &qlab::acceptance::CriterionResult| println!("{}", r.line());

    let results = if only.is_empty() {
        run_suite(SEED, &dir, print)
    } else {
        let ctx = Ctx::new(SEED, &dir);
        only.iter()
            .filter(|id| criterion_ids().contains(id))
            .map(|&id| run_criterion(id, &ctx).inspect(print))
            .collect()
    };
    match results {
        Ok(rs) => {
            let failed = rs.iter().filter(|r| !r.pass).count();
            println!("acceptance: {} passed, {failed} failed", rs.len() - failed);
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            println!("acceptance: error: {e}");
            ExitCode::FAILURE
        }
    }
}
