//! Two singular values where the first-order score prunes the wrong one.
//!
//! The loss `(s1 - s2 + 1)^2` sits at `(1, 2.1)`. Its gradient ranks `s2` as the
//! cheaper value to drop, but the Hessian knows that zeroing `s2` moves the loss much
//! further. Every curvature-aware method keeps `s2`.
//!
//!     cargo run --example toy_counterexample

use ndarray::array;
use sublora::hessproj::project_to_submodular;
use sublora::pipeline::{Method, RankOptions, RankProblem};
use sublora::quadobj::QuadObjective;

fn main() -> sublora::Result<()> {
    let loss = |a: f64, b: f64| (a - b + 1.0).powi(2);
    let x = vec![1.0, 2.1];
    let c = vec![-0.2, 0.2];
    let h = array![[2.0, -2.0], [-2.0, 2.0]];

    let problem = RankProblem::from_parts(c.clone(), x.clone(), Some(h.clone()));
    for method in [Method::Linear, Method::Diag, Method::SubG, Method::HessG] {
        let kept = problem.select(method, 1, RankOptions::default())?.kept;
        let pruned = 1 - kept[0];
        let after = if pruned == 0 { loss(0.0, x[1]) } else { loss(x[0], 0.0) };
        println!("{:<7} keeps s{} and prunes s{}: loss {:.2} -> {:.2}", method.name(), kept[0] + 1, pruned + 1, loss(x[0], x[1]), after);
    }

    let g = project_to_submodular(&h, &x)?;
    println!("\nprojected curvature G = {g}");
    let obj = QuadObjective::new(c, g, x)?;
    println!("f(keep s2) = {:.4}", obj.evaluate(&[1])?);
    println!("f(keep s1) = {:.4}", obj.evaluate(&[0])?);
    Ok(())
}
