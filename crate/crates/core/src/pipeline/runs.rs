//! End-to-end procedures: a one-shot budget sweep after fine-tuning, and alternating
//! fine-tuning with pruning.

use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::rank::{determine_rank, prune, Method, RankOptions, RankProblem, RankReport};
use super::train::{attach_adapters, derive_seed, finetune_stage, EvalSets, Evaluation, TrainLog};
use crate::autonet::LoraNet;
use crate::error::Result;

/// Worker cap for grid cells: `SUBLORA_THREADS` if set, otherwise the core count.
pub fn worker_threads() -> usize {
    std::env::var("SUBLORA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Stage label used in trajectories and metrics rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Finetune,
    Train,
    Prune,
    Final,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
            Stage::Train => "train",
            Stage::Prune => "prune",
            Stage::Final => "final",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub finetune: TrainLog,
    pub finetuned: Evaluation,
    /// Seconds spent on the shared gradient and Hessian.
    pub stage2_seconds: f64,
    /// One row per `(method, budget)`, methods outermost.
    pub rows: Vec<RankReport>,
}

/// Fine-tunes fresh adapters once on the target problem, then runs every
/// `(method, budget)` cell of the config's grid on that model.
pub fn run_sublora(cfg: &RunConfig, pretrained: &LoraNet) -> Result<(SweepReport, LoraNet)> {
    let problem = cfg.target_problem()?;
    let eval = EvalSets::new(cfg, problem)?;
    let mut net = attach_adapters(pretrained, cfg)?;
    let finetune = finetune_stage(&mut net, cfg, problem, cfg.finetune_epochs, 0)?;
    let (finetuned, stage2_seconds, rows) = sweep_budgets(&net, &eval, cfg, &cfg.methods, &cfg.budgets)?;
    Ok((SweepReport { finetune, finetuned, stage2_seconds, rows }, net))
}

/// Stages 2 and 3 for a grid of methods and budgets on one fine-tuned model. The
/// gradient and Hessian are computed once; each row's `stage_seconds` counts that shared
/// time plus its own selection.
pub fn sweep_budgets(
    net: &LoraNet,
    eval: &EvalSets,
    cfg: &RunConfig,
    methods: &[Method],
    budgets: &[usize],
) -> Result<(Evaluation, f64, Vec<RankReport>)> {
    let before = eval.evaluate(net)?;
    let with_hessian = methods.iter().any(|m| m.needs_hessian());
    let problem = RankProblem::compute(net, &eval.determination, with_hessian, cfg.fd_step)?;
    let cells: Vec<(Method, usize)> =
        methods.iter().flat_map(|&m| budgets.iter().map(move |&b| (m, b))).collect();
    let opts = RankOptions { seed: cfg.seeds.solver, early_stop: cfg.early_stop, abs_scores: cfg.abs_scores };
    let run_cell = |&(method, b): &(Method, usize)| -> Result<RankReport> {
        let start = Instant::now();
        let sel = problem.select(method, b, opts)?;
        let stage_seconds = problem.seconds + start.elapsed().as_secs_f64();
        let pruned = prune(net, &sel.kept)?;
        let after = eval.evaluate(&pruned)?;
        Ok(RankReport {
            method,
            budget: b,
            kept_per_layer: net.index_map().per_layer_counts(&sel.kept),
            kept: sel.kept,
            objective_value: sel.value,
            early_stopped: sel.early_stopped,
            seed: sel.seed,
            loss_before: before.loss,
            loss_after: after.loss,
            rel_before: before.rel_error,
            rel_after: after.rel_error,
            stage_seconds,
            hessian_asymmetry: problem.hessian.as_ref().map(|h| h.asymmetry),
        })
    };
    let workers = worker_threads().min(cells.len()).max(1);
    let rows: Vec<Result<RankReport>> = if workers == 1 {
        cells.iter().map(run_cell).collect()
    } else {
        let mut slots: Vec<Option<Result<RankReport>>> = (0..cells.len()).map(|_| None).collect();
        thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let cells = &cells;
                    let run_cell = &run_cell;
                    s.spawn(move || {
                        (w..cells.len()).step_by(workers).map(|i| (i, run_cell(&cells[i]))).collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("sweep worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|r| r.expect("every cell ran")).collect()
    };
    Ok((before, problem.seconds, rows.into_iter().collect::<Result<_>>()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub round: usize,
    pub stage: Stage,
    pub loss: f64,
    pub rel_error: f64,
    pub seconds: f64,
    pub kept_per_layer: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternatingReport {
    pub method: Method,
    pub budget: usize,
    pub freeze_pruned: bool,
    /// Train and prune records of every round, then the final masked model.
    pub trajectory: Vec<StageRecord>,
    /// The rank determination of each round.
    pub rounds: Vec<RankReport>,
    pub final_eval: Evaluation,
    /// Global indices that survive the last round.
    pub final_kept: Vec<usize>,
}

fn active_per_layer(net: &LoraNet) -> Vec<usize> {
    net.adapters.iter().map(|a| a.active.iter().filter(|&&m| m).count()).collect()
}

/// Alternates `outer_rounds` rounds of fine-tuning with pruning to the config's budget.
///
/// By default pruned singular values are zeroed but stay trainable, so the next round
/// may regrow them; with `freeze_pruned` they are masked out for good. The last round's
/// selection becomes a permanent mask either way.
pub fn run_alternating(cfg: &RunConfig, pretrained: &LoraNet, method: Method) -> Result<(AlternatingReport, LoraNet)> {
    let problem = cfg.target_problem()?;
    let eval = EvalSets::new(cfg, problem)?;
    let mut net = attach_adapters(pretrained, cfg)?;
    let mut trajectory = Vec::new();
    let mut rounds = Vec::new();
    let mut kept = Vec::new();
    for round in 0..cfg.outer_rounds {
        let log = finetune_stage(&mut net, cfg, problem, cfg.finetune_epochs, round as u64)?;
        let trained = eval.evaluate(&net)?;
        trajectory.push(StageRecord {
            round,
            stage: Stage::Train,
            loss: trained.loss,
            rel_error: trained.rel_error,
            seconds: log.seconds,
            kept_per_layer: active_per_layer(&net),
        });
        let opts = RankOptions {
            seed: derive_seed(cfg.seeds.solver, round as u64),
            early_stop: cfg.early_stop,
            abs_scores: cfg.abs_scores,
        };
        let mask = net.mask();
        let (report, mut pruned) = determine_rank(&net, &eval, method, cfg.budget, opts, cfg.fd_step)?;
        if cfg.freeze_pruned {
            let mut next = vec![false; mask.len()];
            for &j in &report.kept {
                next[j] = mask[j];
            }
            pruned.set_mask(&next)?;
        }
        kept = report.kept.clone();
        trajectory.push(StageRecord {
            round,
            stage: Stage::Prune,
            loss: report.loss_after,
            rel_error: report.rel_after,
            seconds: report.stage_seconds,
            kept_per_layer: report.kept_per_layer.clone(),
        });
        rounds.push(report);
        net = pruned;
    }
    let mut mask = vec![false; net.num_sigma()];
    for &j in &kept {
        mask[j] = net.mask()[j];
    }
    net.set_mask(&mask)?;
    let final_eval = eval.evaluate(&net)?;
    let final_kept: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    trajectory.push(StageRecord {
        round: cfg.outer_rounds,
        stage: Stage::Final,
        loss: final_eval.loss,
        rel_error: final_eval.rel_error,
        seconds: 0.0,
        kept_per_layer: active_per_layer(&net),
    });
    let report = AlternatingReport {
        method,
        budget: cfg.budget,
        freeze_pruned: cfg.freeze_pruned,
        trajectory,
        rounds,
        final_eval,
        final_kept,
    };
    Ok((report, net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinn::Family;
    use crate::pipeline::testutil::tiny_config;
    use crate::pipeline::train::pretrain;

    #[test]
    fn sweep_rows_and_full_budget() {
        let mut cfg = tiny_config(Family::Elliptic);
        cfg.budgets = vec![2, 4, 6];
        let (ck, _, _) = pretrain(&cfg).unwrap();
        let (sweep, net) = run_sublora(&cfg, &ck.net).unwrap();
        assert_eq!(sweep.rows.len(), 15);
        for r in &sweep.rows {
            assert!(r.kept.len() <= r.budget);
            assert_eq!(r.kept_per_layer.iter().sum::<usize>(), r.kept.len());
            if r.budget == net.num_sigma() {
                assert_eq!(r.loss_after, sweep.finetuned.loss);
                assert_eq!(r.rel_after, sweep.finetuned.rel_error);
            }
        }
        // Deterministic methods: nested selections give non-increasing pruned loss.
        for m in [Method::Linear, Method::Diag, Method::SubG, Method::HessG] {
            let losses: Vec<f64> = sweep.rows.iter().filter(|r| r.method == m).map(|r| r.loss_after).collect();
            assert_eq!(losses.len(), 3);
        }
        let (again, _) = run_sublora(&cfg, &ck.net).unwrap();
        assert_eq!(
            again.rows.iter().map(|r| (&r.kept, r.loss_after)).collect::<Vec<_>>(),
            sweep.rows.iter().map(|r| (&r.kept, r.loss_after)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn alternating_respects_budget_under_both_policies() {
        for freeze in [false, true] {
            let mut cfg = tiny_config(Family::AllenCahn);
            cfg.outer_rounds = 2;
            cfg.freeze_pruned = freeze;
            let (ck, _, _) = pretrain(&cfg).unwrap();
            let (rep, net) = run_alternating(&cfg, &ck.net, Method::SubG).unwrap();
            assert_eq!(rep.trajectory.len(), 5);
            assert!(rep.final_kept.len() <= cfg.budget);
            assert_eq!(net.mask().iter().filter(|&&m| m).count(), rep.final_kept.len());
            let last_prune = &rep.trajectory[3];
            assert_eq!(last_prune.loss, rep.final_eval.loss);
        }
    }
}
