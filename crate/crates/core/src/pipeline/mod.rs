//! Training, rank determination and the end-to-end procedures built on them.

pub mod config;
pub mod optim;
pub mod rank;
pub mod runs;
pub mod train;

pub use config::RunConfig;
pub use rank::{determine_rank, prune, Method, RankOptions, RankProblem, RankReport};
pub use runs::{run_alternating, run_sublora, sweep_budgets, AlternatingReport, Stage, StageRecord, SweepReport};
pub use train::{attach_adapters, finetune_stage, pretrain, EvalSets, Evaluation, TrainLog};

#[cfg(test)]
pub(crate) mod testutil {
    use super::RunConfig;
    use crate::pinn::{Family, PointCounts};

    /// A network and point budget small enough for unit tests.
    pub(crate) fn tiny_config(family: Family) -> RunConfig {
        let mut cfg = RunConfig::new("t", family, [1.0, 1.0]);
        let d = family.input_dim();
        cfg.network.widths = Some(vec![d, 12, 12, 12, 1]);
        cfg.network.rank = 3;
        cfg.counts = PointCounts { interior: 64, boundary: 16, test: 200 };
        cfg.determination.interior = 64;
        cfg.determination.boundary = 16;
        cfg.pretrain_epochs = 40;
        cfg.finetune_epochs = 20;
        cfg.budget = 3;
        cfg.budgets = vec![2, 4, 6];
        cfg.optimizer.lr = 1e-2;
        cfg
    }
}
