//! Runs every acceptance criterion and prints one line per criterion.

use std::process::ExitCode;

use fabflow::experiments::acceptance::{Acceptance, AcceptanceOptions, CRITERIA};

fn main() -> ExitCode {
    let suite = Acceptance::new(AcceptanceOptions::default());
    let mut failed = 0;
    for id in CRITERIA {
        let r = suite.criterion(id);
        println!("{r}");
        if !r.passed {
            failed += 1;
        }
    }
    for (name, value) in suite.info() {
        println!("INFO\t{name}\t{value:.9}");
    }
    if failed == 0 {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", CRITERIA.len());
        ExitCode::FAILURE
    }
}
