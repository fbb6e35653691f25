//! Runs the ten acceptance criteria at full size and prints one line each.

use std::process::ExitCode;
use std::time::Instant;

use qotlab::verify::{Verifier, VerifyOptions};

fn main() -> ExitCode {
    let start = Instant::now();
    let mut verifier = Verifier::new(VerifyOptions::default());
    let mut failed = 0;
    for id in 1..=10 {
        let r = verifier.check(id);
        println!("{r}");
        failed += usize::from(!r.passed);
    }
    println!("acceptance: {} passed, {failed} failed in {:.1}s", 10 - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
