//! Alternating fine-tuning and pruning, with SubLoRA-G against the linear baseline on
//! the same pretrained network. Prints the train/prune trajectory of each.
//!
//!     cargo run --release --example alternating [family] [rounds] [--freeze]

use sublora::pinn::{Family, PointCounts};
use sublora::pipeline::config::DeterminationCounts;
use sublora::pipeline::{pretrain, run_alternating, Method, RunConfig};

fn main() -> sublora::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family: Family = args.first().map_or("elliptic", String::as_str).parse()?;
    let rounds: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);

    let mut cfg = RunConfig::new("alternating-example", family, [1.0, 1.0]);
    cfg.network.widths = Some(vec![family.input_dim(), 64, 64, 64, 1]);
    cfg.network.rank = 8;
    cfg.counts = PointCounts { interior: 1024, boundary: 256, test: 2000 };
    cfg.determination = DeterminationCounts { interior: 1024, boundary: 256 };
    cfg.pretrain_epochs = 600;
    cfg.finetune_epochs = 200;
    cfg.outer_rounds = rounds;
    cfg.budget = 8;
    cfg.freeze_pruned = args.iter().any(|a| a == "--freeze");

    let (ck, _, _) = pretrain(&cfg)?;
    cfg.optimizer.lr = 1e-2;
    for method in [Method::SubG, Method::Linear] {
        let (report, _) = run_alternating(&cfg, &ck.net, method)?;
        println!("{method} (budget {}, freeze {})", cfg.budget, cfg.freeze_pruned);
        for s in &report.trajectory {
            println!("  round {} {:<5} loss {:.4e} rel {:>7.3}% kept {:?}", s.round, s.stage.name(), s.loss, 100.0 * s.rel_error, s.kept_per_layer);
        }
    }
    Ok(())
}
