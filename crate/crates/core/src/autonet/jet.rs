//! Batched second-order Taylor ("jet") evaluation of an MLP and its reverse pass.
//!
//! Every layer carries, for each point, the value channel plus first derivatives along a
//! set of input axes and pure second derivatives along a subset of them. Channels are laid
//! out as contiguous column blocks of `N` points, so a dense layer is one gemm over
//! `C * N` columns:
//!
//! ```text
//! [ value | d/dx_a ... | d2/dx_a2 ... ]
//! ```
//!
//! Through `h = tanh(a)` the channels transform as
//!
//! ```text
//! h   = t(a)
//! h'  = t'(a) a'
//! h'' = t''(a) a'^2 + t'(a) a''
//! ```
//!
//! and the reverse pass differentiates exactly these expressions, so parameter gradients
//! of losses built from derivatives of the network (PDE residuals) are exact.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::lora::LoraNet;
use crate::error::{Error, Result};

/// Which derivative channels to propagate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetSpec {
    first: Vec<usize>,
    second: Vec<usize>,
}

impl JetSpec {
    pub fn value_only() -> Self {
        Self { first: Vec::new(), second: Vec::new() }
    }

    /// First derivatives along `first`, pure second derivatives along `second`.
    /// Every axis in `second` must also appear in `first`.
    pub fn new(first: Vec<usize>, second: Vec<usize>) -> Result<Self> {
        let distinct = |v: &[usize]| v.iter().enumerate().all(|(i, a)| !v[..i].contains(a));
        if !distinct(&first) || !distinct(&second) {
            return Err(Error::arg("jet axes must be distinct"));
        }
        if let Some(a) = second.iter().find(|a| !first.contains(a)) {
            return Err(Error::arg(format!("second derivative along axis {a} needs the first derivative too")));
        }
        Ok(Self { first, second })
    }

    pub fn channels(&self) -> usize {
        1 + self.first.len() + self.second.len()
    }

    pub fn first_channel(&self, axis: usize) -> Option<usize> {
        self.first.iter().position(|&a| a == axis).map(|i| 1 + i)
    }

    pub fn second_channel(&self, axis: usize) -> Option<usize> {
        self.second.iter().position(|&a| a == axis).map(|i| 1 + self.first.len() + i)
    }

    fn max_axis(&self) -> Option<usize> {
        self.first.iter().copied().max()
    }

    /// For each second-order channel, the first-order channel along the same axis.
    fn second_sources(&self) -> Vec<usize> {
        self.second.iter().map(|&a| self.first_channel(a).unwrap()).collect()
    }
}

/// Everything the reverse pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct Tape {
    spec: JetSpec,
    n_points: usize,
    weights: Vec<Array2<f64>>,
    /// `inputs[l]` is the channel matrix fed into layer `l`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Tape {
    pub fn spec(&self) -> &JetSpec {
        &self.spec
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Output row 0 restricted to channel `ch`, one entry per point.
    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.n_points;
        &self.output.as_slice().expect("standard layout")[ch * n..(ch + 1) * n]
    }

    pub fn value(&self) -> &[f64] {
        self.channel(0)
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Which parameter gradients to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GradRequest {
    /// Base weights and biases of every layer.
    pub base: bool,
    /// Adapter factors `U` and `V`.
    pub factors: bool,
    /// Adapter singular values.
    pub sigma: bool,
}

impl GradRequest {
    pub const PRETRAIN: Self = Self { base: true, factors: false, sigma: false };
    pub const LORA: Self = Self { base: false, factors: true, sigma: true };
    pub const SIGMA: Self = Self { base: false, factors: false, sigma: true };
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads {
    pub u: Option<Array2<f64>>,
    pub v: Option<Array2<f64>>,
    /// Reported for inactive entries too, as the derivative at the masked value `0`.
    pub sigma: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Option<Array2<f64>>>,
    pub biases: Vec<Option<Array1<f64>>>,
    pub adapters: Vec<Option<AdapterGrads>>,
}

impl Grads {
    /// Concatenated singular-value gradient in global index order.
    pub fn sigma(&self) -> Vec<f64> {
        self.adapters.iter().flatten().flat_map(|a| a.sigma.iter().copied()).collect()
    }

    /// `self += other`, for gradients produced under the same request.
    pub fn accumulate(&mut self, other: &Grads) {
        fn add(a: &mut Option<Array2<f64>>, b: &Option<Array2<f64>>) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                *a += b;
            }
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            add(a, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                *a += b;
            }
        }
        for (a, b) in self.adapters.iter_mut().zip(&other.adapters) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                a.sigma += &b.sigma;
                add(&mut a.u, &b.u);
                add(&mut a.v, &b.v);
            }
        }
    }
}

impl LoraNet {
    /// Evaluates the network and the derivative channels of `spec` at the points stored as
    /// columns of `coords` (shape `(n_0, N)`).
    pub fn forward_batch(&self, coords: ArrayView2<'_, f64>, spec: &JetSpec) -> Result<Tape> {
        let d = self.base.input_dim();
        if coords.nrows() != d {
            return Err(Error::arg(format!("points have dimension {}, network expects {d}", coords.nrows())));
        }
        if spec.max_axis().is_some_and(|a| a >= d) {
            return Err(Error::arg(format!("jet axis out of range for input dimension {d}")));
        }
        let n = coords.ncols();
        let c = spec.channels();
        let mut z = Array2::zeros((d, c * n));
        z.slice_mut(s![.., 0..n]).assign(&coords);
        for (i, &axis) in spec.first.iter().enumerate() {
            z.slice_mut(s![axis, (1 + i) * n..(2 + i) * n]).fill(1.0);
        }

        let weights = self.effective_weights();
        let layers = weights.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers.saturating_sub(1));
        let sources = spec.second_sources();
        for (l, w) in weights.iter().enumerate() {
            let mut a = w.dot(&z);
            let bias = &self.base.biases[l];
            for (mut row, &b) in a.axis_iter_mut(Axis(0)).zip(bias.iter()) {
                row.slice_mut(s![0..n]).mapv_inplace(|v| v + b);
            }
            inputs.push(z);
            if l + 1 == layers {
                return Ok(Tape { spec: spec.clone(), n_points: n, weights, inputs, pre, output: a });
            }
            z = tanh_forward(&a, n, spec.first.len(), &sources);
            pre.push(a);
        }
        unreachable!("networks have at least one layer")
    }

    /// Reverse pass. `g_out` holds `dLoss/d(output channel)` in the tape's output layout.
    pub fn backward(&self, tape: &Tape, g_out: Array2<f64>, req: GradRequest) -> Result<Grads> {
        if g_out.dim() != tape.output.dim() {
            return Err(Error::arg("output gradient does not match the tape"));
        }
        let layers = tape.weights.len();
        let n = tape.n_points;
        let spec = &tape.spec;
        let sources = spec.second_sources();
        let mut grads = Grads {
            weights: vec![None; layers],
            biases: vec![None; layers],
            adapters: vec![None; self.adapters.len()],
        };
        let adapter_pos = |l: usize| self.adapters.iter().position(|a| a.layer == l);
        let want_adapters = req.factors || req.sigma;
        let lowest = if req.base {
            0
        } else if want_adapters && !self.adapters.is_empty() {
            self.adapters[0].layer
        } else {
            return Ok(grads);
        };

        let mut g = g_out;
        for l in (lowest..layers).rev() {
            let z = &tape.inputs[l];
            if req.base {
                grads.weights[l] = Some(g.dot(&z.t()));
                grads.biases[l] = Some(g.slice(s![.., 0..n]).sum_axis(Axis(1)));
            }
            if let (true, Some(pos)) = (want_adapters, adapter_pos(l)) {
                grads.adapters[pos] = Some(adapter_grads(&self.adapters[pos], &g, z, req));
            }
            if l == lowest {
                break;
            }
            let gz = tape.weights[l].t().dot(&g);
            g = tanh_backward(&tape.pre[l - 1], z, &gz, n, spec.first.len(), &sources);
        }
        Ok(grads)
    }
}

fn adapter_grads(
    adapter: &super::lora::LoraSvdAdapter,
    g: &Array2<f64>,
    z: &Array2<f64>,
    req: GradRequest,
) -> AdapterGrads {
    // With P = V Z and Q = U^T G:
    //   dU = G P^T diag(s), dV = diag(s) Q Z^T, dsigma_k = <P_k, Q_k>.
    let p = adapter.v.dot(z);
    let q = adapter.u.t().dot(g);
    let sigma = Array1::from_iter(p.outer_iter().zip(q.outer_iter()).map(|(pk, qk)| pk.dot(&qk)));
    let (u, v) = if req.factors {
        let s = adapter.effective_sigma();
        let mut du = g.dot(&p.t());
        for (mut col, &sk) in du.columns_mut().into_iter().zip(s.iter()) {
            col *= sk;
        }
        let mut dv = q.dot(&z.t());
        for (mut row, &sk) in dv.rows_mut().into_iter().zip(s.iter()) {
            row *= sk;
        }
        (Some(du), Some(dv))
    } else {
        (None, None)
    };
    AdapterGrads { u, v, sigma }
}

fn tanh_forward(a: &Array2<f64>, n: usize, n_first: usize, sources: &[usize]) -> Array2<f64> {
    let mut h = Array2::zeros(a.raw_dim());
    for (arow, mut hrow) in a.outer_iter().zip(h.outer_iter_mut()) {
        let arow = arow.as_slice().expect("standard layout");
        let hrow = hrow.as_slice_mut().expect("standard layout");
        let (h0, hd) = hrow.split_at_mut(n);
        for (hp, &ap) in h0.iter_mut().zip(&arow[..n]) {
            *hp = ap.tanh();
        }
        for k in 0..n_first {
            let a1 = &arow[(1 + k) * n..(2 + k) * n];
            let h1 = &mut hd[k * n..(k + 1) * n];
            for p in 0..n {
                let t = h0[p];
                h1[p] = (1.0 - t * t) * a1[p];
            }
        }
        for (j, &src) in sources.iter().enumerate() {
            let ch = 1 + n_first + j;
            let a1 = &arow[src * n..(src + 1) * n];
            let a2 = &arow[ch * n..(ch + 1) * n];
            let h2 = &mut hd[(ch - 1) * n..ch * n];
            for p in 0..n {
                let t = h0[p];
                let t1 = 1.0 - t * t;
                let t2 = -2.0 * t * t1;
                h2[p] = t2 * a1[p] * a1[p] + t1 * a2[p];
            }
        }
    }
    h
}

/// Gradient with respect to the pre-activation channels, given the gradient `gh` with
/// respect to the activation channels `h = tanh_forward(a)`.
fn tanh_backward(
    a: &Array2<f64>,
    h: &Array2<f64>,
    gh: &Array2<f64>,
    n: usize,
    n_first: usize,
    sources: &[usize],
) -> Array2<f64> {
    let mut ga = Array2::zeros(a.raw_dim());
    for ((arow, hrow), (ghrow, mut garow)) in
        a.outer_iter().zip(h.outer_iter()).zip(gh.outer_iter().zip(ga.outer_iter_mut()))
    {
        let arow = arow.as_slice().expect("standard layout");
        let t0 = &hrow.as_slice().expect("standard layout")[..n];
        let ghrow = ghrow.as_slice().expect("standard layout");
        let garow = garow.as_slice_mut().expect("standard layout");
        let (ga0, gad) = garow.split_at_mut(n);
        for p in 0..n {
            let t = t0[p];
            ga0[p] = ghrow[p] * (1.0 - t * t);
        }
        for k in 0..n_first {
            let a1 = &arow[(1 + k) * n..(2 + k) * n];
            let gh1 = &ghrow[(1 + k) * n..(2 + k) * n];
            let ga1 = &mut gad[k * n..(k + 1) * n];
            for p in 0..n {
                let t = t0[p];
                let t1 = 1.0 - t * t;
                let t2 = -2.0 * t * t1;
                ga1[p] = gh1[p] * t1;
                ga0[p] += gh1[p] * t2 * a1[p];
            }
        }
        for (j, &src) in sources.iter().enumerate() {
            let ch = 1 + n_first + j;
            let a2 = &arow[ch * n..(ch + 1) * n];
            let gh2 = &ghrow[ch * n..(ch + 1) * n];
            for p in 0..n {
                let t = t0[p];
                let t1 = 1.0 - t * t;
                let t2 = -2.0 * t * t1;
                let t3 = t1 * (6.0 * t * t - 2.0);
                let a1 = arow[src * n + p];
                gad[(ch - 1) * n + p] = gh2[p] * t1;
                gad[(src - 1) * n + p] += gh2[p] * 2.0 * t2 * a1;
                ga0[p] += gh2[p] * (t3 * a1 * a1 + t2 * a2[p]);
            }
        }
    }
    ga
}
