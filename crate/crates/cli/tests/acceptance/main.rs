//! Acceptance suite: one check per criterion, each printing a PASS or FAIL
//! line. Criterion numbers given as arguments restrict the run.

mod desk;
mod exact;
mod gradients;
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use support::Outcome;

type Check = fn() -> Outcome;

const CRITERIA: [(u32, &str, Check); 10] = [
    (1, "worked example on the eight-node fixture", exact::worked_example),
    (2, "pattern histograms equal brute-force enumeration", exact::oracle_equivalence),
    (3, "matcher frequency equals histogram entries", exact::matcher_consistency),
    (4, "finite-difference gradient fidelity", gradients::fidelity),
    (5, "masking and normalization", exact::masking_and_normalization),
    (6, "episode structure", exact::episode_structure),
    (7, "desk-scale learning", desk::learning),
    (8, "max-MNI versus a converged policy on the fixture", desk::mni_versus_policy),
    (9, "greedy inference cost", exact::inference_cost),
    (10, "determinism", desk::determinism),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
