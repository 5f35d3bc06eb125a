//! Metrics CSV rows and JSON reports.
//!
//! Floats are written with 17 significant digits so that reading a file back recovers
//! every value bit for bit.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pinn::Family;
use crate::pipeline::runs::{AlternatingReport, Stage};
use crate::pipeline::{Method, RankReport, RunConfig};

pub const HEADER: [&str; 13] = [
    "run_id",
    "family",
    "lambda1",
    "lambda2",
    "method",
    "budget",
    "outer_round",
    "stage",
    "loss",
    "rel_error",
    "stage_seconds",
    "kept_per_layer",
    "seed",
];

/// One reported stage. `method` and `budget` are empty for training-only stages.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub family: Family,
    pub lambda: [f64; 2],
    pub method: Option<Method>,
    pub budget: Option<usize>,
    pub outer_round: usize,
    pub stage: Stage,
    pub loss: f64,
    pub rel_error: f64,
    pub stage_seconds: f64,
    pub kept_per_layer: Vec<usize>,
    pub seed: u64,
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

impl MetricsRow {
    fn base(cfg: &RunConfig, stage: Stage) -> Self {
        Self {
            run_id: cfg.run_id.clone(),
            family: cfg.problem.family,
            lambda: cfg.problem.lambda,
            method: None,
            budget: None,
            outer_round: 0,
            stage,
            loss: f64::NAN,
            rel_error: f64::NAN,
            stage_seconds: 0.0,
            kept_per_layer: Vec::new(),
            seed: 0,
        }
    }

    /// A training stage (pretraining or fine-tuning) without pruning.
    pub fn training(cfg: &RunConfig, stage: Stage, loss: f64, rel_error: f64, seconds: f64, seed: u64) -> Self {
        let mut row = Self::base(cfg, stage);
        if stage == Stage::Pretrain {
            row.lambda = cfg.problem.pretrain_lambda;
        }
        Self { loss, rel_error, stage_seconds: seconds, seed, ..row }
    }

    /// A single rank determination, reported after pruning.
    pub fn from_rank(cfg: &RunConfig, r: &RankReport) -> Self {
        Self {
            method: Some(r.method),
            budget: Some(r.budget),
            loss: r.loss_after,
            rel_error: r.rel_after,
            stage_seconds: r.stage_seconds,
            kept_per_layer: r.kept_per_layer.clone(),
            seed: r.seed.unwrap_or(cfg.seeds.solver),
            ..Self::base(cfg, Stage::Prune)
        }
    }

    /// Every train, prune and final stage of an alternating run.
    pub fn from_alternating(cfg: &RunConfig, rep: &AlternatingReport) -> Vec<Self> {
        rep.trajectory
            .iter()
            .map(|s| {
                let seed = rep
                    .rounds
                    .get(s.round)
                    .filter(|_| s.stage == Stage::Prune)
                    .and_then(|r| r.seed)
                    .unwrap_or(cfg.seeds.solver);
                Self {
                    method: Some(rep.method),
                    budget: Some(rep.budget),
                    outer_round: s.round,
                    loss: s.loss,
                    rel_error: s.rel_error,
                    stage_seconds: s.seconds,
                    kept_per_layer: s.kept_per_layer.clone(),
                    seed,
                    ..Self::base(cfg, s.stage)
                }
            })
            .collect()
    }

    fn to_record(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.family.name().to_string(),
            float(self.lambda[0]),
            float(self.lambda[1]),
            self.method.map(|m| m.name().to_string()).unwrap_or_default(),
            self.budget.map(|b| b.to_string()).unwrap_or_default(),
            self.outer_round.to_string(),
            self.stage.name().to_string(),
            float(self.loss),
            float(self.rel_error),
            float(self.stage_seconds),
            self.kept_per_layer.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("/"),
            self.seed.to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != HEADER.len() {
            return Err(Error::Usage(format!("metrics row has {} fields, expected {}", rec.len(), HEADER.len())));
        }
        let bad = |field: &str, v: &str| Error::Usage(format!("metrics field {field}: cannot parse {v:?}"));
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(HEADER[i], &rec[i]));
        let u = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(HEADER[i], &rec[i]));
        let stage = match &rec[7] {
            "pretrain" => Stage::Pretrain,
            "finetune" => Stage::Finetune,
            "train" => Stage::Train,
            "prune" => Stage::Prune,
            "final" => Stage::Final,
            other => return Err(bad("stage", other)),
        };
        let kept_per_layer = if rec[11].is_empty() {
            Vec::new()
        } else {
            rec[11].split('/').map(|k| k.parse::<usize>().map_err(|_| bad("kept_per_layer", k))).collect::<Result<_>>()?
        };
        Ok(Self {
            run_id: rec[0].to_string(),
            family: rec[1].parse()?,
            lambda: [f(2)?, f(3)?],
            method: if rec[4].is_empty() { None } else { Some(rec[4].parse()?) },
            budget: if rec[5].is_empty() { None } else { Some(u(5)?) },
            outer_round: u(6)?,
            stage,
            loss: f(8)?,
            rel_error: f(9)?,
            stage_seconds: f(10)?,
            kept_per_layer,
            seed: rec[12].parse::<u64>().map_err(|_| bad("seed", &rec[12]))?,
        })
    }
}

/// Appends rows to `path`, writing the header only when the file is new or empty. An
/// existing file must start with the same header.
pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let existing = match fs::File::open(path) {
        Ok(f) => {
            let mut first = String::new();
            BufReader::new(f).read_line(&mut first).map_err(|e| Error::io(path, e))?;
            Some(first)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(path, e)),
    };
    let needs_header = match existing.as_deref().map(str::trim_end) {
        None | Some("") => true,
        Some(line) if line == HEADER.join(",") => false,
        Some(line) => return Err(Error::Usage(format!("{} has a different header: {line}", path.display()))),
    };
    let mut buf = csv::Writer::from_writer(Vec::new());
    if needs_header {
        buf.write_record(HEADER)?;
    }
    for row in rows {
        buf.write_record(row.to_record())?;
    }
    let bytes = buf.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    if reader.headers()?.iter().ne(HEADER) {
        return Err(Error::Usage(format!("{} is not a metrics file", path.display())));
    }
    reader.records().map(|r| MetricsRow::from_record(&r?)).collect()
}

/// Pretty-printed JSON, creating parent directories as needed.
pub fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(kept: Vec<usize>, loss: f64) -> MetricsRow {
        let cfg = RunConfig::new("r1", Family::AllenCahn, [1.0, 5.0]);
        MetricsRow {
            method: Some(Method::SubG),
            budget: Some(40),
            loss,
            rel_error: 0.1 + 0.2,
            stage_seconds: 1.0 / 3.0,
            kept_per_layer: kept,
            seed: 3,
            ..MetricsRow::base(&cfg, Stage::Prune)
        }
    }

    #[test]
    fn header_once_and_exact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m/metrics.csv");
        let a = row(vec![23, 17], std::f64::consts::PI * 1e-7);
        let b = MetricsRow { method: None, budget: None, ..row(vec![], -0.0) };
        write_metrics(&[a.clone()], &path).unwrap();
        write_metrics(&[b.clone()], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
        assert!(text.contains(",23/17,"));
        let back = read_metrics(&path).unwrap();
        assert_eq!(back, vec![a, b]);
        assert_eq!(back[0].rel_error.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn foreign_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        fs::write(&path, "a,b,c\n").unwrap();
        assert!(matches!(write_metrics(&[row(vec![1], 1.0)], &path), Err(Error::Usage(_))));
    }
}
