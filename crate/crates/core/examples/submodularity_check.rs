//! The pairwise sign test against brute-force lattice verification, on random
//! quadratic set functions, before and after projecting the curvature.
//!
//!     cargo run --example submodularity_check [instances] [seed]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sublora::checks::gen;
use sublora::hessproj::{count_violating_pairs, project_to_submodular};
use sublora::quadobj::QuadObjective;

fn main() -> sublora::Result<()> {
    let mut args = std::env::args().skip(1);
    let instances: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    println!("{:>2} {:>10} {:>9} {:>8} {:>10}", "n", "violations", "pairwise", "lattice", "projected");
    for _ in 0..instances {
        let n = rng.random_range(2..=7);
        let obj = gen::mixed(&mut rng, n)?;
        let pairwise = obj.is_pairwise_submodular(obj.structural_tol()).0;
        let lattice = obj.verify_lattice_exhaustive()?;
        assert_eq!(pairwise, lattice);

        let g = project_to_submodular(obj.q(), obj.x())?;
        let projected = QuadObjective::new(obj.c().to_vec(), g, obj.x().to_vec())?;
        println!(
            "{n:>2} {:>10} {pairwise:>9} {lattice:>8} {:>10}",
            count_violating_pairs(obj.q(), obj.x()),
            projected.verify_lattice_exhaustive()?
        );
    }
    Ok(())
}
