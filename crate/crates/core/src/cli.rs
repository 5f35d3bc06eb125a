//! Command-line front end. Every command reads a JSON [`RunConfig`], writes checkpoints and
//! JSON reports next to it, and appends rows to the shared metrics CSV.
//!
//! Exit codes: 0 on success, 1 on usage and input errors, 2 on numerical or training
//! failures (including a failing `selftest` suite).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::autonet::checkpoint::Checkpoint;
use crate::autonet::LoraNet;
use crate::checks;
use crate::error::{Error, Result};
use crate::metrics::{write_json, write_metrics, MetricsRow};
use crate::pipeline::runs::{run_alternating, run_sublora, Stage};
use crate::pipeline::train::{attach_adapters, finetune_stage, pretrain, EvalSets};
use crate::pipeline::{determine_rank, Method, RankOptions, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "sublora", version, about = "LoRA rank determination by submodular maximization, on PINN benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the base network on the pretraining problem.
    Pretrain { config: PathBuf },
    /// Fine-tune fresh adapters on the target problem.
    Finetune { config: PathBuf },
    /// Prune the fine-tuned adapters to a rank budget.
    Prune {
        config: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        budget: Option<usize>,
        /// Solver seed for `sub_r`.
        #[arg(long)]
        seed: Option<u64>,
        /// Allow the greedy solvers to keep fewer than `budget` values.
        #[arg(long)]
        early_stop: bool,
        /// Rank by `|c_j x_j|` in the linear baseline.
        #[arg(long)]
        abs_scores: bool,
    },
    /// Alternate fine-tuning and pruning for `outer_rounds` rounds.
    Alternate {
        config: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        /// Keep pruned singular values masked out in later rounds.
        #[arg(long)]
        freeze_pruned: bool,
    },
    /// Fine-tune once, then prune at every budget with every method.
    Sweep { config: PathBuf },
    /// Loss and relative error of a checkpoint on the config's target problem.
    Eval { checkpoint: PathBuf, config: PathBuf },
    /// Run the property suites.
    Selftest {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_checkpoint(path: &Path, produced_by: &str) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::Usage(format!("{} not found; run `sublora {produced_by}` first", path.display())));
    }
    Checkpoint::load(path)
}

fn matching_base(cfg: &RunConfig, ck: &Checkpoint) -> Result<LoraNet> {
    if ck.net.base.widths != cfg.widths() {
        return Err(Error::Usage(format!(
            "checkpoint widths {:?} do not match config widths {:?}",
            ck.net.base.widths,
            cfg.widths()
        )));
    }
    Ok(ck.net.clone())
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Pretrain { config } => {
            let cfg = RunConfig::load(&config)?;
            let (ck, log, eval) = pretrain(&cfg)?;
            ck.save(&cfg.pretrained_path())?;
            let row = MetricsRow::training(&cfg, Stage::Pretrain, eval.loss, eval.rel_error, log.seconds, cfg.seeds.init);
            write_metrics(&[row], &cfg.metrics_path())?;
            write_json(&json!({ "log": log, "evaluation": eval }), &cfg.report_path("pretrain"))?;
            println!(
                "pretrained {} epochs in {:.1}s: loss {:.4e}, rel {:.4e} -> {}",
                log.epochs(),
                log.seconds,
                eval.loss,
                eval.rel_error,
                cfg.pretrained_path().display()
            );
        }
        Command::Finetune { config } => {
            let cfg = RunConfig::load(&config)?;
            let base = matching_base(&cfg, &load_checkpoint(&cfg.pretrained_path(), "pretrain")?)?;
            let problem = cfg.target_problem()?;
            let eval = EvalSets::new(&cfg, problem)?;
            let mut net = attach_adapters(&base, &cfg)?;
            let before = eval.evaluate(&net)?;
            let log = finetune_stage(&mut net, &cfg, problem, cfg.finetune_epochs, 0)?;
            let after = eval.evaluate(&net)?;
            let metadata = json!({ "stage": "finetune", "problem": problem, "loss": after.loss, "rel_error": after.rel_error });
            Checkpoint { net, seed: cfg.seeds.lora, metadata }.save(&cfg.finetuned_path())?;
            let row = MetricsRow::training(&cfg, Stage::Finetune, after.loss, after.rel_error, log.seconds, cfg.seeds.lora);
            write_metrics(&[row], &cfg.metrics_path())?;
            write_json(&json!({ "log": log, "before": before, "after": after }), &cfg.report_path("finetune"))?;
            println!(
                "fine-tuned {} epochs in {:.1}s: loss {:.4e} -> {:.4e}, rel {:.4e} -> {:.4e}",
                log.epochs(),
                log.seconds,
                before.loss,
                after.loss,
                before.rel_error,
                after.rel_error
            );
        }
        Command::Prune { config, method, budget, seed, early_stop, abs_scores } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.method = method.unwrap_or(cfg.method);
            cfg.budget = budget.unwrap_or(cfg.budget);
            cfg.seeds.solver = seed.unwrap_or(cfg.seeds.solver);
            cfg.early_stop |= early_stop;
            cfg.abs_scores |= abs_scores;
            cfg.validate()?;
            let net = matching_base(&cfg, &load_checkpoint(&cfg.finetuned_path(), "finetune")?)?;
            let eval = EvalSets::new(&cfg, cfg.target_problem()?)?;
            let opts = RankOptions { seed: cfg.seeds.solver, early_stop: cfg.early_stop, abs_scores: cfg.abs_scores };
            let (report, pruned) = determine_rank(&net, &eval, cfg.method, cfg.budget, opts, cfg.fd_step)?;
            let tag = format!("prune-{}-b{}", cfg.method, cfg.budget);
            let metadata = serde_json::to_value(&report)?;
            Checkpoint { net: pruned, seed: cfg.seeds.solver, metadata }.save(&cfg.report_path(&format!("{tag}.model")))?;
            write_metrics(&[MetricsRow::from_rank(&cfg, &report)], &cfg.metrics_path())?;
            write_json(&report, &cfg.report_path(&tag))?;
            println!(
                "{} kept {} of {} (per layer {:?}) in {:.2}s: loss {:.4e} -> {:.4e}, rel {:.4e} -> {:.4e}",
                cfg.method,
                report.kept.len(),
                net.num_sigma(),
                report.kept_per_layer,
                report.stage_seconds,
                report.loss_before,
                report.loss_after,
                report.rel_before,
                report.rel_after
            );
        }
        Command::Alternate { config, method, freeze_pruned } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.method = method.unwrap_or(cfg.method);
            cfg.freeze_pruned |= freeze_pruned;
            let base = matching_base(&cfg, &load_checkpoint(&cfg.pretrained_path(), "pretrain")?)?;
            let (report, net) = run_alternating(&cfg, &base, cfg.method)?;
            let tag = format!("alternate-{}", cfg.method);
            let metadata = json!({ "stage": "alternate", "final": report.final_eval, "kept": report.final_kept });
            Checkpoint { net, seed: cfg.seeds.solver, metadata }.save(&cfg.report_path(&format!("{tag}.model")))?;
            write_metrics(&MetricsRow::from_alternating(&cfg, &report), &cfg.metrics_path())?;
            write_json(&report, &cfg.report_path(&tag))?;
            for s in &report.trajectory {
                println!(
                    "round {} {:<5} loss {:.4e} rel {:.4e} kept {:?}",
                    s.round,
                    s.stage.name(),
                    s.loss,
                    s.rel_error,
                    s.kept_per_layer
                );
            }
        }
        Command::Sweep { config } => {
            let cfg = RunConfig::load(&config)?;
            let base = matching_base(&cfg, &load_checkpoint(&cfg.pretrained_path(), "pretrain")?)?;
            let (report, _) = run_sublora(&cfg, &base)?;
            let rows: Vec<MetricsRow> = report.rows.iter().map(|r| MetricsRow::from_rank(&cfg, r)).collect();
            write_metrics(&rows, &cfg.metrics_path())?;
            write_json(&report, &cfg.report_path("sweep"))?;
            println!(
                "fine-tuned: loss {:.4e}, rel {:.4e}; shared gradient and Hessian {:.2}s",
                report.finetuned.loss, report.finetuned.rel_error, report.stage2_seconds
            );
            for r in &report.rows {
                println!(
                    "{:<6} b={:<4} loss {:.4e} rel {:.4e} kept {:?}",
                    r.method.name(),
                    r.budget,
                    r.loss_after,
                    r.rel_after,
                    r.kept_per_layer
                );
            }
        }
        Command::Eval { checkpoint, config } => {
            let cfg = RunConfig::load(&config)?;
            let net = matching_base(&cfg, &Checkpoint::load(&checkpoint)?)?;
            let eval = EvalSets::new(&cfg, cfg.target_problem()?)?.evaluate(&net)?;
            println!("{}", serde_json::to_string_pretty(&eval)?);
        }
        Command::Selftest { seed } => {
            let results = checks::selftest(seed)?;
            for check in &results {
                println!("{check}");
            }
            if results.iter().any(|c| !c.passed) {
                return Ok(2);
            }
        }
    }
    Ok(0)
}
