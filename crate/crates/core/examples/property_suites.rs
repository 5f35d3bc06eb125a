//! Runs every property suite at full size and prints one line per suite.
//!
//!     cargo run --release --example property_suites [seed]

use sublora::checks;

fn main() -> sublora::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let suites = [
        checks::toy_counterexample()?,
        checks::objective_invariants(1000, seed)?,
        checks::pairwise_equivalence(500, seed)?,
        checks::projection_optimality(100, 10_000, seed)?,
        checks::greedy_ratios(200, 50, 2000, seed)?,
        checks::derivative_oracles(20, seed)?,
        checks::manufactured_consistency(1000, seed)?,
        checks::degeneracies(100, seed)?,
    ];
    for check in &suites {
        println!("{check}");
    }
    if suites.iter().any(|c| !c.passed) {
        std::process::exit(1);
    }
    Ok(())
}
