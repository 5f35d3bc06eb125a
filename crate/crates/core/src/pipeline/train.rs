//! Pretraining and LoRA fine-tuning loops.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::optim::Adam;
use crate::autonet::checkpoint::Checkpoint;
use crate::autonet::{init_lora, EvalPoint, GradRequest, Grads, LoraNet, MlpParams};
use crate::error::{Error, Result};
use crate::pinn::loss::{LossBreakdown, LossContext};
use crate::pinn::{relative_error, PdeProblem, PointCounts};

/// Random streams carved out of the data seed, one per purpose.
pub mod stream {
    pub const PRETRAIN: u64 = 1;
    pub const DETERMINATION: u64 = 2;
    pub const TEST: u64 = 3;
    /// Fine-tuning phase `k` uses `FINETUNE + k`.
    pub const FINETUNE: u64 = 16;
}

/// Independent seed for `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Per-epoch training losses, measured on that epoch's sample before the update.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<f64>,
    pub seconds: f64,
}

impl TrainLog {
    pub fn epochs(&self) -> usize {
        self.losses.len()
    }
}

/// Loss on the fixed determination set plus relative error on the test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub rel_error: f64,
    pub breakdown: LossBreakdown,
}

/// Fixed evaluation data for one problem: the determination set (loss, gradient and
/// Hessian for rank selection) and the test set (relative error).
#[derive(Debug, Clone)]
pub struct EvalSets {
    pub determination: LossContext,
    pub test: Vec<EvalPoint>,
}

impl EvalSets {
    pub fn new(cfg: &RunConfig, problem: PdeProblem) -> Result<Self> {
        let det = PointCounts { interior: cfg.determination.interior, boundary: cfg.determination.boundary, test: 0 };
        let sets = problem.sample_points(det, derive_seed(cfg.seeds.data, stream::DETERMINATION));
        let determination = LossContext::new(problem, &sets, cfg.weights)?;
        let test_counts = PointCounts { interior: 0, boundary: 0, test: cfg.counts.test };
        let test = problem.sample_points(test_counts, derive_seed(cfg.seeds.data, stream::TEST)).test;
        Ok(Self { determination, test })
    }

    pub fn evaluate(&self, net: &LoraNet) -> Result<Evaluation> {
        let breakdown = self.determination.evaluate(net)?;
        let rel_error = relative_error(net, self.determination.problem(), &self.test)?;
        Ok(Evaluation { loss: breakdown.total, rel_error, breakdown })
    }
}

fn apply(opt: &mut Adam, net: &mut LoraNet, g: &Grads, req: GradRequest) {
    let mut slots: Vec<(&mut [f64], &[f64])> = Vec::new();
    let LoraNet { base, adapters } = net;
    if req.base {
        for (w, gw) in base.weights.iter_mut().zip(&g.weights) {
            slots.push((w.as_slice_mut().unwrap(), gw.as_ref().unwrap().as_slice().unwrap()));
        }
        for (b, gb) in base.biases.iter_mut().zip(&g.biases) {
            slots.push((b.as_slice_mut().unwrap(), gb.as_ref().unwrap().as_slice().unwrap()));
        }
    }
    for (a, ga) in adapters.iter_mut().zip(&g.adapters) {
        let Some(ga) = ga else { continue };
        if req.factors {
            slots.push((a.u.as_slice_mut().unwrap(), ga.u.as_ref().unwrap().as_slice().unwrap()));
            slots.push((a.v.as_slice_mut().unwrap(), ga.v.as_ref().unwrap().as_slice().unwrap()));
        }
        if req.sigma {
            slots.push((a.sigma.as_slice_mut().unwrap(), ga.sigma.as_slice().unwrap()));
        }
    }
    opt.update(slots);
}

/// Full-batch Adam on freshly resampled collocation points every epoch. Singular values
/// that are masked out receive no updates.
pub fn train(
    net: &mut LoraNet,
    cfg: &RunConfig,
    problem: PdeProblem,
    req: GradRequest,
    epochs: usize,
    seed: u64,
) -> Result<TrainLog> {
    let start = Instant::now();
    let mut opt = Adam::new(cfg.optimizer);
    let counts = PointCounts { test: 0, ..cfg.counts };
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let sets = problem.sample_points(counts, derive_seed(seed, epoch as u64));
        let ctx = LossContext::new(problem, &sets, cfg.weights)?;
        let (loss, mut grads) = ctx
            .loss_and_grad(net, req)
            .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
        if !loss.total.is_finite() {
            return Err(Error::Training { epoch, message: format!("loss is {}", loss.total) });
        }
        for (a, ga) in net.adapters.iter().zip(grads.adapters.iter_mut()) {
            if let Some(ga) = ga {
                for (g, &on) in ga.sigma.iter_mut().zip(&a.active) {
                    if !on {
                        *g = 0.0;
                    }
                }
            }
        }
        losses.push(loss.total);
        apply(&mut opt, net, &grads, req);
    }
    Ok(TrainLog { losses, seconds: start.elapsed().as_secs_f64() })
}

/// Trains every base parameter on the pretraining problem from a seeded initialization.
pub fn pretrain(cfg: &RunConfig) -> Result<(Checkpoint, TrainLog, Evaluation)> {
    let problem = cfg.pretrain_problem()?;
    let mut net = LoraNet::plain(MlpParams::glorot(&cfg.widths(), cfg.seeds.init)?)?;
    let seed = derive_seed(cfg.seeds.data, stream::PRETRAIN);
    let log = train(&mut net, cfg, problem, GradRequest::PRETRAIN, cfg.pretrain_epochs, seed)?;
    let eval = EvalSets::new(cfg, problem)?.evaluate(&net)?;
    let metadata = serde_json::json!({
        "stage": "pretrain",
        "problem": problem,
        "epochs": log.epochs(),
        "final_train_loss": log.losses.last(),
        "loss": eval.loss,
        "rel_error": eval.rel_error,
        "seconds": log.seconds,
    });
    Ok((Checkpoint { net, seed: cfg.seeds.init, metadata }, log, eval))
}

/// Fresh seeded adapters (`sigma = 0`) on top of a pretrained network.
pub fn attach_adapters(pretrained: &LoraNet, cfg: &RunConfig) -> Result<LoraNet> {
    let adapters = init_lora(&pretrained.base, &cfg.adapted_layers(), cfg.network.rank, cfg.seeds.lora)?;
    LoraNet::new(pretrained.base.clone(), adapters)
}

/// Trains `U`, `V` and `sigma` with the base network frozen. Phase `k` draws its
/// collocation points from its own stream.
pub fn finetune_stage(net: &mut LoraNet, cfg: &RunConfig, problem: PdeProblem, epochs: usize, phase: u64) -> Result<TrainLog> {
    let seed = derive_seed(cfg.seeds.data, stream::FINETUNE + phase);
    train(net, cfg, problem, GradRequest::LORA, epochs, seed)
}
