//! Pretrains a physics-informed network on the source parameters of a PDE family and
//! reports the loss terms and the relative error on held-out points.
//!
//!     cargo run --release --example pretrain_pinn [elliptic|allen_cahn|hyperbolic] [epochs]

use sublora::pinn::{Family, PointCounts};
use sublora::pipeline::RunConfig;

fn main() -> sublora::Result<()> {
    let mut args = std::env::args().skip(1);
    let family: Family = args.next().as_deref().unwrap_or("elliptic").parse()?;
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);

    let mut cfg = RunConfig::new("pretrain-example", family, [1.0, 1.0]);
    cfg.network.widths = Some(vec![family.input_dim(), 64, 64, 64, 1]);
    cfg.counts = PointCounts { interior: 1024, boundary: 256, test: 2000 };
    cfg.pretrain_epochs = epochs;

    let (ck, log, eval) = sublora::pipeline::pretrain(&cfg)?;
    let every = (epochs / 10).max(1);
    for (epoch, loss) in log.losses.iter().enumerate().step_by(every) {
        println!("epoch {epoch:>5}  loss {loss:.4e}");
    }
    let b = eval.breakdown;
    println!(
        "\n{} at lambda = {:?}: loss {:.4e} (interior {:.3e}, boundary {:.3e}, initial {:.3e}, velocity {:.3e})",
        family.name(),
        cfg.problem.pretrain_lambda,
        eval.loss,
        b.interior,
        b.boundary,
        b.initial,
        b.velocity
    );
    println!("relative error {:.3}%, widths {:?}, {:.1}s", 100.0 * eval.rel_error, ck.net.base.widths, log.seconds);
    Ok(())
}
