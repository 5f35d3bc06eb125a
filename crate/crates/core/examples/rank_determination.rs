//! Pretrain, fine-tune LoRA adapters on new PDE parameters, then prune them to a rank
//! budget with each method and compare the loss the pruning costs.
//!
//!     cargo run --release --example rank_determination [family] [budget]

use sublora::pinn::{Family, PointCounts};
use sublora::pipeline::config::DeterminationCounts;
use sublora::pipeline::{attach_adapters, finetune_stage, pretrain, sweep_budgets, EvalSets, Method, RunConfig};

fn main() -> sublora::Result<()> {
    let mut args = std::env::args().skip(1);
    let family: Family = args.next().as_deref().unwrap_or("allen_cahn").parse()?;
    let budget: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);

    let mut cfg = RunConfig::new("rank-example", family, [1.0, 1.0]);
    cfg.network.widths = Some(vec![family.input_dim(), 64, 64, 64, 1]);
    cfg.network.rank = 8;
    cfg.counts = PointCounts { interior: 1024, boundary: 256, test: 2000 };
    cfg.determination = DeterminationCounts { interior: 1024, boundary: 256 };
    cfg.pretrain_epochs = 600;
    cfg.finetune_epochs = 300;
    cfg.optimizer.lr = 1e-2;

    let (ck, _, source) = pretrain(&cfg)?;
    println!("pretrained on lambda = {:?}: rel {:.2}%", cfg.problem.pretrain_lambda, 100.0 * source.rel_error);

    let problem = cfg.target_problem()?;
    let eval = EvalSets::new(&cfg, problem)?;
    let mut net = attach_adapters(&ck.net, &cfg)?;
    println!("before fine-tuning on {:?}: rel {:.2}%", cfg.problem.lambda, 100.0 * eval.evaluate(&net)?.rel_error);
    finetune_stage(&mut net, &cfg, problem, cfg.finetune_epochs, 0)?;

    let (tuned, seconds, rows) = sweep_budgets(&net, &eval, &cfg, &Method::ALL, &[budget])?;
    println!(
        "fine-tuned with {} singular values: loss {:.4e}, rel {:.2}% (gradient and Hessian {:.2}s)\n",
        net.num_sigma(),
        tuned.loss,
        100.0 * tuned.rel_error,
        seconds
    );
    println!("{:<7} {:>11} {:>8}  kept per layer", "method", "loss", "rel %");
    for r in &rows {
        println!("{:<7} {:>11.4e} {:>8.2}  {:?}", r.method.name(), r.loss_after, 100.0 * r.rel_after, r.kept_per_layer);
    }
    Ok(())
}
