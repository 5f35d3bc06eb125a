//! Pruned loss as a function of the rank budget for every method, on one fine-tuned
//! model, written to a metrics CSV.
//!
//!     cargo run --release --example budget_sweep [out.csv]

use sublora::metrics::{write_metrics, MetricsRow};
use sublora::pinn::{Family, PointCounts};
use sublora::pipeline::config::DeterminationCounts;
use sublora::pipeline::{pretrain, run_sublora, Method, RunConfig};

fn main() -> sublora::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs/budget_sweep.csv".into());

    let mut cfg = RunConfig::new("sweep-example", Family::Elliptic, [1.0, 5.0]);
    cfg.network.widths = Some(vec![2, 64, 64, 64, 1]);
    cfg.network.rank = 10;
    cfg.counts = PointCounts { interior: 1024, boundary: 256, test: 2000 };
    cfg.determination = DeterminationCounts { interior: 1024, boundary: 256 };
    cfg.pretrain_epochs = 600;
    cfg.finetune_epochs = 300;
    cfg.budgets = vec![2, 4, 6, 8, 10, 12, 14, 16, 18, 20];

    let (ck, _, _) = pretrain(&cfg)?;
    cfg.optimizer.lr = 1e-2;
    let (report, _) = run_sublora(&cfg, &ck.net)?;
    println!("fine-tuned loss {:.4e}, rel {:.2}%\n", report.finetuned.loss, 100.0 * report.finetuned.rel_error);

    print!("{:>6}", "b");
    for m in Method::ALL {
        print!(" {:>11}", m.name());
    }
    println!();
    for &b in &cfg.budgets {
        print!("{b:>6}");
        for m in Method::ALL {
            let row = report.rows.iter().find(|r| r.method == m && r.budget == b).expect("every cell ran");
            print!(" {:>11.3e}", row.loss_after);
        }
        println!();
    }

    let rows: Vec<MetricsRow> = report.rows.iter().map(|r| MetricsRow::from_rank(&cfg, r)).collect();
    write_metrics(&rows, out.as_ref())?;
    println!("\n{} rows appended to {out}", rows.len());
    Ok(())
}
