//! Finite-difference check of every differentiable operation and of the
//! three networks at f64.
//!
//! cargo run --release --example gradcheck -- 5

use tumorseg::verify::{gradient_suite, GRADCHECK_TOL};

fn main() -> tumorseg::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut ok = true;
    for c in gradient_suite(seeds)? {
        println!("{:<24} worst rel. error {:.2e} (seed {})", c.name, c.worst, c.worst_seed);
        ok &= c.passes();
    }
    println!("{} at tolerance {GRADCHECK_TOL:e}", if ok { "all pass" } else { "FAILURES" });
    Ok(())
}
