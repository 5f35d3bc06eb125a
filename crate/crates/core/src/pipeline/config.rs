//! Run configuration, read from versioned JSON. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::AdamConfig;
use super::rank::Method;
use crate::autonet::sigma::DEFAULT_FD_STEP;
use crate::error::{Error, Result};
use crate::pinn::loss::LossWeights;
use crate::pinn::{Family, PdeProblem, PointCounts};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: Family,
    /// Fine-tuning target.
    pub lambda: [f64; 2],
    /// Pretraining source.
    #[serde(default = "default_pretrain_lambda")]
    pub pretrain_lambda: [f64; 2],
}

fn default_pretrain_lambda() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Defaults to `[d, 1000, 1000, 1000, 1]`.
    #[serde(default)]
    pub widths: Option<Vec<usize>>,
    /// Defaults to every hidden-to-hidden matrix.
    #[serde(default)]
    pub adapted_layers: Option<Vec<usize>>,
    #[serde(default = "default_rank")]
    pub rank: usize,
}

fn default_rank() -> usize {
    50
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { widths: None, adapted_layers: None, rank: default_rank() }
    }
}

/// Fixed point set for gradients and Hessians during rank determination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterminationCounts {
    pub interior: usize,
    pub boundary: usize,
}

impl Default for DeterminationCounts {
    fn default() -> Self {
        Self { interior: 2048, boundary: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Base network initialization.
    pub init: u64,
    /// Collocation resampling and evaluation sets.
    pub data: u64,
    /// Adapter factors.
    pub lora: u64,
    /// Randomized greedy.
    pub solver: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { init: 0, data: 1, lora: 2, solver: 3 }
    }
}

fn default_budgets() -> Vec<usize> {
    (20..=100).step_by(10).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub run_id: String,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub counts: PointCounts,
    #[serde(default)]
    pub determination: DeterminationCounts,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default = "default_pretrain_epochs")]
    pub pretrain_epochs: usize,
    #[serde(default = "default_finetune_epochs")]
    pub finetune_epochs: usize,
    /// Budget for `prune` and `alternate`.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Budget grid for `sweep`.
    #[serde(default = "default_budgets")]
    pub budgets: Vec<usize>,
    /// Method for `prune` and `alternate`.
    #[serde(default = "default_method")]
    pub method: Method,
    /// Method grid for `sweep`.
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Outer rounds `T` of the alternating procedure.
    #[serde(default = "default_outer_rounds")]
    pub outer_rounds: usize,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default)]
    pub early_stop: bool,
    /// Linear baseline on `|c_j sigma_j|`.
    #[serde(default)]
    pub abs_scores: bool,
    /// Keep pruned singular values frozen at zero between alternating rounds.
    #[serde(default)]
    pub freeze_pruned: bool,
    /// Checkpoints, metrics and reports land here. Relative paths resolve against the
    /// config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_pretrain_epochs() -> usize {
    2000
}
fn default_finetune_epochs() -> usize {
    100
}
fn default_budget() -> usize {
    40
}
fn default_method() -> Method {
    Method::SubG
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_outer_rounds() -> usize {
    5
}
fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    /// A valid configuration with every default filled in.
    pub fn new(run_id: impl Into<String>, family: Family, lambda: [f64; 2]) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            run_id: run_id.into(),
            problem: ProblemConfig { family, lambda, pretrain_lambda: default_pretrain_lambda() },
            network: NetworkConfig::default(),
            counts: PointCounts::default(),
            determination: DeterminationCounts::default(),
            weights: LossWeights::default(),
            optimizer: AdamConfig::default(),
            pretrain_epochs: default_pretrain_epochs(),
            finetune_epochs: default_finetune_epochs(),
            budget: default_budget(),
            budgets: default_budgets(),
            method: default_method(),
            methods: default_methods(),
            outer_rounds: default_outer_rounds(),
            seeds: Seeds::default(),
            fd_step: default_fd_step(),
            early_stop: false,
            abs_scores: false,
            freeze_pruned: false,
            output_dir: default_output_dir(),
        }
    }

    /// Reads and validates a config; relative `output_dir` is anchored at the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Usage(format!("{}: invalid config: {e}", path.display())))?;
        if cfg.output_dir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.output_dir = dir.join(&cfg.output_dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn widths(&self) -> Vec<usize> {
        let d = self.problem.family.input_dim();
        self.network.widths.clone().unwrap_or_else(|| vec![d, 1000, 1000, 1000, 1])
    }

    pub fn adapted_layers(&self) -> Vec<usize> {
        let layers = self.widths().len() - 1;
        self.network.adapted_layers.clone().unwrap_or_else(|| (1..layers.saturating_sub(1)).collect())
    }

    /// Ground-set size `n = sum of adapter ranks`.
    pub fn total_rank(&self) -> usize {
        self.adapted_layers().len() * self.network.rank
    }

    pub fn target_problem(&self) -> Result<PdeProblem> {
        PdeProblem::new(self.problem.family, self.problem.lambda)
    }

    pub fn pretrain_problem(&self) -> Result<PdeProblem> {
        PdeProblem::new(self.problem.family, self.problem.pretrain_lambda)
    }

    pub fn pretrained_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.pretrained.json", self.run_id))
    }

    pub fn finetuned_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.finetuned.json", self.run_id))
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.output_dir.join("metrics.csv")
    }

    pub fn report_path(&self, what: &str) -> PathBuf {
        self.output_dir.join(format!("{}.{what}.json", self.run_id))
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        if self.schema != SCHEMA_VERSION {
            return usage(format!("unsupported config schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\', ',']) {
            return usage(format!("run_id {:?} must be non-empty without path separators or commas", self.run_id));
        }
        let widths = self.widths();
        let d = self.problem.family.input_dim();
        if widths.len() < 2 || widths[0] != d || widths[widths.len() - 1] != 1 || widths.contains(&0) {
            return usage(format!("widths {widths:?} must start at {d} and end at 1"));
        }
        let layers = self.adapted_layers();
        for &l in &layers {
            if l + 1 >= widths.len() {
                return usage(format!("adapted layer {l} does not exist"));
            }
            if self.network.rank > widths[l].min(widths[l + 1]) {
                return usage(format!("rank {} exceeds the size of layer {l}", self.network.rank));
            }
        }
        let n = self.total_rank();
        if let Some(&b) = self.budgets.iter().chain([&self.budget]).find(|&&b| b > n) {
            return usage(format!("budget exceeds total rank ({b} > {n})"));
        }
        if self.outer_rounds == 0 || self.pretrain_epochs == 0 || self.finetune_epochs == 0 {
            return usage("outer_rounds and epoch counts must be at least 1".into());
        }
        if self.counts.interior == 0 || self.determination.interior == 0 || self.counts.test == 0 {
            return usage("interior, determination and test sets must be non-empty".into());
        }
        if !(self.fd_step > 0.0) {
            return usage(format!("fd_step must be positive, got {}", self.fd_step));
        }
        self.weights.validate().or_else(|e| usage(e.to_string()))?;
        self.optimizer.validate().or_else(|e| usage(e.to_string()))?;
        self.target_problem()?;
        self.pretrain_problem()?;
        Ok(())
    }
}
