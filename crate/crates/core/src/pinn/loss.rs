//! Batched physics-informed loss with exact parameter gradients.

use std::ops::Range;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{Family, PdeProblem, PointSets};
use crate::autonet::{EvalPoint, GradRequest, Grads, JetSpec, LoraNet, Tape};
use crate::error::{Error, Result};

/// Interior weight `mu` and boundary/initial weight `mu_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub mu: f64,
    pub mu_b: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mu: 1.0, mu_b: 1.0 }
    }
}

impl LossWeights {
    pub fn new(mu: f64, mu_b: f64) -> Result<Self> {
        let w = Self { mu, mu_b };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu_b > 0.0 && self.mu.is_finite() && self.mu_b.is_finite()) {
            return Err(Error::arg(format!("loss weights must be positive, got mu = {}, mu_b = {}", self.mu, self.mu_b)));
        }
        Ok(())
    }
}

/// Weighted loss components; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub interior: f64,
    pub boundary: f64,
    pub initial: f64,
    /// Hyperbolic initial-velocity mismatch.
    pub velocity: f64,
    pub total: f64,
}

pub(crate) fn coords(points: &[EvalPoint], d: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((d, points.len()));
    for (j, p) in points.iter().enumerate() {
        let c = p.coords();
        if c.len() != d {
            return Err(Error::arg(format!("point {j} has dimension {}, expected {d}", c.len())));
        }
        for (i, v) in c.into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

/// Network values at `points`.
pub fn predict(net: &LoraNet, points: &[EvalPoint]) -> Result<Vec<f64>> {
    let x = coords(points, net.base.input_dim())?;
    Ok(net.forward_batch(x.view(), &JetSpec::value_only())?.value().to_vec())
}

/// A fixed point set with precomputed targets, ready for repeated loss evaluations.
#[derive(Debug, Clone)]
pub struct LossContext {
    problem: PdeProblem,
    weights: LossWeights,
    interior: Array2<f64>,
    forcing: Vec<f64>,
    boundary: Array2<f64>,
    boundary_target: Vec<f64>,
    initial: Array2<f64>,
    initial_target: Vec<f64>,
    velocity_target: Vec<f64>,
}

/// One reverse-pass block: a tape and its output gradient.
type Block = (Tape, Array2<f64>);

/// Points per forward/backward block.
const BLOCK: usize = 256;

fn blocks(n: usize) -> impl Iterator<Item = Range<usize>> {
    (0..n).step_by(BLOCK).map(move |start| start..(start + BLOCK).min(n))
}

impl LossContext {
    pub fn new(problem: PdeProblem, sets: &PointSets, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        if sets.interior.is_empty() {
            return Err(Error::arg("the loss needs at least one interior point"));
        }
        let d = problem.family.input_dim();
        let forcing = sets.interior.iter().map(|p| problem.forcing(p)).collect::<Result<_>>()?;
        let boundary_target = sets.boundary.iter().map(|p| problem.exact_solution(p)).collect::<Result<_>>()?;
        let (initial_target, velocity_target) = if problem.family.is_time_dependent() {
            let u = sets.initial.iter().map(|p| problem.exact_solution(p)).collect::<Result<_>>()?;
            let v = if problem.family == Family::Hyperbolic {
                sets.initial.iter().map(|p| problem.initial_velocity(p)).collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            (u, v)
        } else {
            (Vec::new(), Vec::new())
        };
        let initial = if problem.family.is_time_dependent() { coords(&sets.initial, d)? } else { Array2::zeros((d, 0)) };
        Ok(Self {
            problem,
            weights,
            interior: coords(&sets.interior, d)?,
            forcing,
            boundary: coords(&sets.boundary, d)?,
            boundary_target,
            initial,
            initial_target,
            velocity_target,
        })
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    pub fn num_interior(&self) -> usize {
        self.forcing.len()
    }

    fn interior_spec(&self) -> JetSpec {
        let spec = match self.problem.family {
            Family::Elliptic => JetSpec::new(vec![0, 1], vec![0, 1]),
            Family::AllenCahn => JetSpec::new(vec![0, 1, 2], vec![0, 1]),
            Family::Hyperbolic => JetSpec::new(vec![0, 1, 2], vec![0, 1, 2]),
        };
        spec.expect("static jet layout")
    }

    /// PDE residuals `D[phi] - g` at the interior points.
    pub fn residuals(&self, net: &LoraNet) -> Result<Vec<f64>> {
        let mut r = Vec::with_capacity(self.num_interior());
        for range in blocks(self.num_interior()) {
            r.extend(self.interior_block(net, range, false)?.0);
        }
        Ok(r)
    }

    /// Residuals on a block of interior points and, if requested, the tape plus
    /// `d(loss)/d(output)`.
    fn interior_block(&self, net: &LoraNet, range: Range<usize>, grad: bool) -> Result<(Vec<f64>, Option<Block>)> {
        let spec = self.interior_spec();
        let pts = self.interior.slice(s![.., range.clone()]);
        let tape = net.forward_batch(pts, &spec)?;
        let n = range.len();
        let total = self.num_interior();
        let forcing = &self.forcing[range];
        let ch = |c: usize| tape.channel(c);
        let (u, ux, uy) = (ch(0), ch(spec.first_channel(0).unwrap()), ch(spec.first_channel(1).unwrap()));
        let (uxx, uyy) = (ch(spec.second_channel(0).unwrap()), ch(spec.second_channel(1).unwrap()));
        let x = pts.row(0);
        let y = pts.row(1);
        let mut r = vec![0.0; n];
        // dr/d(channel) per point, one column block per channel.
        let mut dr = if grad { Array2::zeros((1, spec.channels() * n)) } else { Array2::zeros((1, 0)) };
        let slot = |c: usize, p: usize| c * n + p;
        for p in 0..n {
            let lap = uxx[p] + uyy[p];
            let (d, entries): (f64, [(usize, f64); 4]) = match self.problem.family {
                Family::Elliptic => {
                    let a = 1.0 + 0.5 * (x[p] * x[p] + y[p] * y[p]);
                    let d = -a * lap - (x[p] * ux[p] + y[p] * uy[p]) + ux[p] * ux[p] + uy[p] * uy[p];
                    let grads = [
                        (spec.first_channel(0).unwrap(), 2.0 * ux[p] - x[p]),
                        (spec.first_channel(1).unwrap(), 2.0 * uy[p] - y[p]),
                        (spec.second_channel(0).unwrap(), -a),
                        (spec.second_channel(1).unwrap(), -a),
                    ];
                    (d, grads)
                }
                Family::AllenCahn => {
                    let ut = ch(spec.first_channel(2).unwrap())[p];
                    let d = ut - lap - u[p].powi(3) + u[p];
                    let grads = [
                        (0, 1.0 - 3.0 * u[p] * u[p]),
                        (spec.first_channel(2).unwrap(), 1.0),
                        (spec.second_channel(0).unwrap(), -1.0),
                        (spec.second_channel(1).unwrap(), -1.0),
                    ];
                    (d, grads)
                }
                Family::Hyperbolic => {
                    let utt = ch(spec.second_channel(2).unwrap())[p];
                    let grads = [
                        (spec.second_channel(2).unwrap(), 1.0),
                        (spec.second_channel(0).unwrap(), -1.0),
                        (spec.second_channel(1).unwrap(), -1.0),
                        (0, 0.0),
                    ];
                    (utt - lap, grads)
                }
            };
            r[p] = d - forcing[p];
            if !r[p].is_finite() {
                return Err(Error::numerical(format!("non-finite residual at interior point {:?}", pts.column(p).to_vec())));
            }
            if grad {
                let scale = 2.0 * self.weights.mu / total as f64 * r[p];
                for (c, v) in entries {
                    dr[[0, slot(c, p)]] += scale * v;
                }
            }
        }
        Ok((r, grad.then_some((tape, dr))))
    }

    /// `(weight / m) * sum (phi - target)^2` restricted to a block of a value or
    /// time-derivative set of `m` points.
    fn mismatch_block(
        &self,
        net: &LoraNet,
        (pts, target): (&Array2<f64>, &[f64]),
        range: Range<usize>,
        velocity: bool,
        grad: bool,
    ) -> Result<(f64, Option<Block>)> {
        let w = self.weights.mu_b / target.len() as f64;
        let pts = pts.slice(s![.., range.clone()]);
        let target = &target[range];
        let m = target.len();
        let spec = if velocity { JetSpec::new(vec![2], vec![])? } else { JetSpec::value_only() };
        let tape = net.forward_batch(pts, &spec)?;
        let ch = if velocity { 1 } else { 0 };
        let vals = tape.channel(ch);
        let mut loss = 0.0;
        let mut g = if grad { Array2::zeros((1, spec.channels() * m)) } else { Array2::zeros((1, 0)) };
        for p in 0..m {
            let e = vals[p] - target[p];
            if !e.is_finite() {
                return Err(Error::numerical(format!("non-finite output at point {:?}", pts.column(p).to_vec())));
            }
            loss += e * e;
            if grad {
                g[[0, ch * m + p]] = 2.0 * w * e;
            }
        }
        Ok((w * loss, grad.then_some((tape, g))))
    }

    /// Loss terms and gradients, one block of points at a time so that the channel
    /// matrices stay cache-resident. Blocks are visited in a fixed order.
    fn run(&self, net: &LoraNet, req: Option<GradRequest>) -> Result<(LossBreakdown, Option<Grads>)> {
        let grad = req.is_some();
        let mut grads: Option<Grads> = None;
        let mut absorb = |block: Option<Block>| -> Result<()> {
            if let (Some(req), Some((tape, g))) = (req, block) {
                let part = net.backward(&tape, g, req)?;
                match grads.as_mut() {
                    Some(acc) => acc.accumulate(&part),
                    None => grads = Some(part),
                }
            }
            Ok(())
        };
        let mut sq = 0.0;
        for range in blocks(self.num_interior()) {
            let (r, block) = self.interior_block(net, range, grad)?;
            sq += r.iter().map(|v| v * v).sum::<f64>();
            absorb(block)?;
        }
        let interior = self.weights.mu * sq / self.num_interior() as f64;
        let mut mismatch = |set: (&Array2<f64>, &[f64]), velocity: bool| -> Result<f64> {
            let mut acc = 0.0;
            for range in blocks(set.1.len()) {
                let (v, block) = self.mismatch_block(net, set, range, velocity, grad)?;
                acc += v;
                absorb(block)?;
            }
            Ok(acc)
        };
        let boundary = mismatch((&self.boundary, &self.boundary_target), false)?;
        let initial = mismatch((&self.initial, &self.initial_target), false)?;
        let velocity = mismatch((&self.initial, &self.velocity_target), true)?;
        let total = interior + boundary + initial + velocity;
        Ok((LossBreakdown { interior, boundary, initial, velocity, total }, grads))
    }

    pub fn evaluate(&self, net: &LoraNet) -> Result<LossBreakdown> {
        Ok(self.run(net, None)?.0)
    }

    pub fn loss_and_grad(&self, net: &LoraNet, req: GradRequest) -> Result<(LossBreakdown, Grads)> {
        let (loss, grads) = self.run(net, Some(req))?;
        Ok((loss, grads.expect("interior block always contributes")))
    }

    /// Exact gradient of the total loss with respect to the concatenated singular values.
    pub fn sigma_gradient(&self, net: &LoraNet) -> Result<Vec<f64>> {
        Ok(self.loss_and_grad(net, GradRequest::SIGMA)?.1.sigma())
    }

}
