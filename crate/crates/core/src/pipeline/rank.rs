//! Rank determination: build the pruning objective from the loss at the current singular
//! values, then pick the kept set with one of five methods.
//!
//! With gradient `c`, values `x` and curvature `Q`, every method scores a kept set `S` by
//! the max-form objective over the pruned complement `C`:
//!
//! ```text
//! f(S) = <c_C, x_C> - 1/2 x_C^T Q x_C
//! ```
//!
//! `linear` uses `Q = 0`, `diag` the Hessian diagonal, `sub_g`/`sub_r` the projected
//! Hessian and `hess_g` the raw Hessian.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::train::EvalSets;
use crate::autonet::sigma::{fd_sigma_hessian, SigmaHessian};
use crate::autonet::LoraNet;
use crate::error::{Error, Result};
use crate::hessproj::project_to_submodular;
use crate::pinn::loss::LossContext;
use crate::quadobj::QuadObjective;
use crate::solvers::{greedy_max, randomized_greedy_max, top_k_select, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Linear,
    Diag,
    SubG,
    SubR,
    HessG,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Linear, Method::Diag, Method::SubG, Method::SubR, Method::HessG];

    pub fn name(self) -> &'static str {
        match self {
            Method::Linear => "linear",
            Method::Diag => "diag",
            Method::SubG => "sub_g",
            Method::SubR => "sub_r",
            Method::HessG => "hess_g",
        }
    }

    pub fn needs_hessian(self) -> bool {
        self != Method::Linear
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method {s:?} (expected linear, diag, sub_g, sub_r or hess_g)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankOptions {
    /// Randomized greedy seed.
    pub seed: u64,
    pub early_stop: bool,
    /// Linear baseline on `|c_j x_j|`.
    pub abs_scores: bool,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self { seed: 0, early_stop: false, abs_scores: false }
    }
}

/// Gradient, values and (optionally) Hessian at the current singular values. Shared by
/// every method and budget evaluated on the same model.
#[derive(Debug, Clone)]
pub struct RankProblem {
    pub c: Vec<f64>,
    /// Effective singular values (masked entries are zero).
    pub x: Vec<f64>,
    pub hessian: Option<SigmaHessian>,
    /// Wall-clock seconds spent building the gradient and Hessian.
    pub seconds: f64,
}

impl RankProblem {
    /// Exact gradient and, if requested, the finite-difference Hessian of the loss on the
    /// determination set.
    pub fn compute(net: &LoraNet, ctx: &LossContext, with_hessian: bool, fd_step: f64) -> Result<Self> {
        let start = Instant::now();
        let c = ctx.sigma_gradient(net)?;
        let x: Vec<f64> = net.adapters.iter().flat_map(|a| a.effective_sigma().to_vec()).collect();
        let hessian = if with_hessian {
            let mut probe = net.clone();
            let mut grad = |s: &[f64]| -> Result<Vec<f64>> {
                probe.set_sigma(s)?;
                ctx.sigma_gradient(&probe)
            };
            Some(fd_sigma_hessian(&mut grad, &net.sigma(), fd_step)?)
        } else {
            None
        };
        Ok(Self { c, x, hessian, seconds: start.elapsed().as_secs_f64() })
    }

    /// Problem from explicit data, e.g. an analytic toy loss.
    pub fn from_parts(c: Vec<f64>, x: Vec<f64>, hessian: Option<Array2<f64>>) -> Self {
        let hessian = hessian.map(|h| SigmaHessian { h, asymmetry: 0.0 });
        Self { c, x, hessian, seconds: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    fn hessian_for(&self, method: Method) -> Result<&Array2<f64>> {
        self.hessian
            .as_ref()
            .map(|h| &h.h)
            .ok_or_else(|| Error::arg(format!("method {method} needs the Hessian")))
    }

    /// The curvature matrix `Q` a method plugs into the max-form objective.
    pub fn curvature(&self, method: Method) -> Result<Array2<f64>> {
        let n = self.n();
        Ok(match method {
            Method::Linear => Array2::zeros((n, n)),
            Method::Diag => Array2::from_diag(&self.hessian_for(method)?.diag()),
            Method::SubG | Method::SubR => project_to_submodular(self.hessian_for(method)?, &self.x)?,
            Method::HessG => self.hessian_for(method)?.clone(),
        })
    }

    pub fn objective(&self, method: Method) -> Result<QuadObjective> {
        QuadObjective::new(self.c.clone(), self.curvature(method)?, self.x.clone())
    }

    /// Stage 3: the kept set for `method` under budget `b`.
    pub fn select(&self, method: Method, b: usize, opts: RankOptions) -> Result<Selection> {
        let n = self.n();
        if b > n {
            return Err(Error::arg(format!("budget exceeds total rank ({b} > {n})")));
        }
        let obj = self.objective(method)?;
        let separable = |scores: Vec<f64>| -> Result<Selection> {
            let kept = top_k_select(&scores, b)?;
            let mut state = obj.gain_state(&[])?;
            let mut gains = Vec::with_capacity(kept.len());
            for &j in &kept {
                gains.push(state.marginal_gain(j)?);
                state.add(j)?;
            }
            Ok(Selection {
                value: obj.evaluate(&kept)?,
                kept,
                gains,
                budget: b,
                early_stopped: false,
                seed: None,
                method: method.name().into(),
            })
        };
        let mut sel = match method {
            Method::Linear => {
                let cx = self.c.iter().zip(&self.x).map(|(c, x)| c * x);
                separable(if opts.abs_scores { cx.map(f64::abs).collect() } else { cx.map(|v| -v).collect() })?
            }
            Method::Diag => {
                let h = self.hessian_for(method)?;
                let scores = (0..n).map(|j| -self.c[j] * self.x[j] + 0.5 * h[[j, j]] * self.x[j] * self.x[j]);
                separable(scores.collect())?
            }
            Method::SubG | Method::HessG => greedy_max(&obj, b, opts.early_stop)?,
            Method::SubR => randomized_greedy_max(&obj, b, opts.seed, opts.early_stop)?,
        };
        sel.method = method.name().into();
        Ok(sel)
    }
}

/// Outcome of one rank determination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub method: Method,
    pub budget: usize,
    /// Global indices, in selection order.
    pub kept: Vec<usize>,
    pub kept_per_layer: Vec<usize>,
    /// Max-form objective value of the kept set under the method's curvature.
    pub objective_value: f64,
    pub early_stopped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub loss_before: f64,
    pub loss_after: f64,
    pub rel_before: f64,
    pub rel_after: f64,
    /// Stages 2 and 3: gradient, Hessian and selection.
    pub stage_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian_asymmetry: Option<f64>,
}

/// The network with every singular value outside `kept` set to zero.
pub fn prune(net: &LoraNet, kept: &[usize]) -> Result<LoraNet> {
    let mut pruned = net.clone();
    pruned.zero_complement(kept)?;
    Ok(pruned)
}

/// Stages 2 and 3 on a fine-tuned model: returns the report and the pruned network.
pub fn determine_rank(
    net: &LoraNet,
    eval: &EvalSets,
    method: Method,
    b: usize,
    opts: RankOptions,
    fd_step: f64,
) -> Result<(RankReport, LoraNet)> {
    let n = net.num_sigma();
    if b > n {
        return Err(Error::arg(format!("budget exceeds total rank ({b} > {n})")));
    }
    let before = eval.evaluate(net)?;
    let start = Instant::now();
    let problem = RankProblem::compute(net, &eval.determination, method.needs_hessian(), fd_step)?;
    let sel = problem.select(method, b, opts)?;
    let stage_seconds = start.elapsed().as_secs_f64();
    let pruned = prune(net, &sel.kept)?;
    let after = eval.evaluate(&pruned)?;
    let report = RankReport {
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
    };
    Ok((report, pruned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> RankProblem {
        RankProblem::from_parts(vec![-0.2, 0.2], vec![1.0, 2.1], Some(array![[2.0, -2.0], [-2.0, 2.0]]))
    }

    fn pruned(sel: &Selection, n: usize) -> Vec<usize> {
        (0..n).filter(|j| !sel.kept.contains(j)).collect()
    }

    #[test]
    fn toy_counterexample() {
        let p = toy();
        let opts = RankOptions::default();
        assert_eq!(pruned(&p.select(Method::Linear, 1, opts).unwrap(), 2), vec![1]);
        for m in [Method::Diag, Method::SubG, Method::HessG] {
            assert_eq!(pruned(&p.select(m, 1, opts).unwrap(), 2), vec![0], "{m}");
        }
        assert_eq!(p.curvature(Method::SubG).unwrap(), array![[2.0, 0.0], [0.0, 2.0]]);
        let sub = p.select(Method::SubG, 1, opts).unwrap();
        assert!((sub.value + 1.2).abs() < 1e-12);
    }

    #[test]
    fn budget_equal_to_n_keeps_everything() {
        let p = toy();
        for m in Method::ALL {
            let sel = p.select(m, 2, RankOptions::default()).unwrap();
            let mut kept = sel.kept.clone();
            kept.sort_unstable();
            assert_eq!(kept, vec![0, 1]);
            assert_eq!(sel.value, 0.0);
        }
        let err = p.select(Method::SubG, 3, RankOptions::default()).unwrap_err();
        assert!(err.to_string().contains("budget exceeds total rank"));
    }

    #[test]
    fn zero_hessian_reduces_to_linear() {
        let c = vec![0.3, -0.1, 0.5, 0.0, -0.4];
        let x = vec![1.0, 2.0, -0.5, 0.7, 0.2];
        let p = RankProblem::from_parts(c, x, Some(Array2::zeros((5, 5))));
        let lin = p.select(Method::Linear, 3, RankOptions::default()).unwrap();
        let sort = |mut v: Vec<usize>| {
            v.sort_unstable();
            v
        };
        for m in [Method::Diag, Method::SubG, Method::HessG] {
            assert_eq!(sort(p.select(m, 3, RankOptions::default()).unwrap().kept), sort(lin.kept.clone()), "{m}");
        }
    }

    #[test]
    fn abs_scores_flag() {
        let p = toy();
        let opts = RankOptions { abs_scores: true, ..RankOptions::default() };
        // |c x| = (0.2, 0.42): keeps index 1.
        assert_eq!(p.select(Method::Linear, 1, opts).unwrap().kept, vec![1]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("greedy".parse::<Method>().is_err());
    }
}
