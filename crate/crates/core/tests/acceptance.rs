//! Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

use bubble_lab::acceptance::run_criterion;

fn main() {
    println!("acceptance criteria");
    let mut failed = Vec::new();
    for id in 1..=10 {
        let outcome = run_criterion(id);
        println!("{}", outcome.line());
        if !outcome.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
