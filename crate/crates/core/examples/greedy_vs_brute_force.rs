//! Greedy and randomized greedy against the exact optimum on small instances.
//!
//! Monotone instances are scored by `(f(S) - f(empty)) / (OPT - f(empty))`, which greedy
//! keeps above `1 - 1/e`. Non-negative non-monotone instances use the randomized solver
//! averaged over seeds, which keeps `1/e` in expectation.
//!
//!     cargo run --release --example greedy_vs_brute_force [seed]

use std::f64::consts::E;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sublora::checks::gen;
use sublora::solvers::{brute_force_max, greedy_max, randomized_greedy_max};

fn main() -> sublora::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    println!("monotone instances, greedy (bound {:.3})", 1.0 - 1.0 / E);
    for _ in 0..8 {
        let n = rng.random_range(6..=12);
        let b = rng.random_range(1..=6.min(n));
        let obj = gen::monotone_submodular(&mut rng, n)?;
        let base = obj.evaluate(&[])?;
        let opt = brute_force_max(&obj, b)?;
        let greedy = greedy_max(&obj, b, false)?;
        let ratio = if opt.value > base { (greedy.value - base) / (opt.value - base) } else { 1.0 };
        println!("  n={n:>2} b={b} opt {:?} greedy {:?} ratio {ratio:.4}", sorted(&opt.kept), sorted(&greedy.kept));
    }

    println!("non-monotone instances, randomized greedy over 500 seeds (bound {:.3})", 1.0 / E);
    for _ in 0..5 {
        let n = rng.random_range(6..=12);
        let b = rng.random_range(1..=n);
        let obj = gen::nonnegative_submodular(&mut rng, n)?;
        let opt = brute_force_max(&obj, b)?;
        let mut total = 0.0;
        for s in 0..500 {
            total += randomized_greedy_max(&obj, b, s, true)?.value;
        }
        let mean = total / 500.0;
        println!("  n={n:>2} b={b:>2} OPT {:.4} mean {mean:.4} ratio {:.4}", opt.value, mean / opt.value);
    }
    Ok(())
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}
