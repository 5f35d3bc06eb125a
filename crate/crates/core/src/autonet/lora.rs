//! LoRA adapters in singular-value form, `W_ft = W_pt + U diag(sigma) V`.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::mlp::MlpParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LoraSvdAdapter {
    pub layer: usize,
    /// `(n_{l+1}, r)`.
    pub u: Array2<f64>,
    /// `(r, n_l)`.
    pub v: Array2<f64>,
    pub sigma: Array1<f64>,
    /// Inactive entries contribute nothing to the effective weight.
    pub active: Vec<bool>,
}

impl LoraSvdAdapter {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `sigma` with inactive entries replaced by zero.
    pub fn effective_sigma(&self) -> Array1<f64> {
        Array1::from_iter(self.sigma.iter().zip(&self.active).map(|(&s, &a)| if a { s } else { 0.0 }))
    }

    /// `U diag(sigma ⊙ active) V`.
    pub fn delta(&self) -> Array2<f64> {
        let s = self.effective_sigma();
        let mut us = self.u.clone();
        for (mut col, &sk) in us.columns_mut().into_iter().zip(s.iter()) {
            col *= sk;
        }
        us.dot(&self.v)
    }

    fn check_against(&self, base: &MlpParams) -> Result<()> {
        let l = self.layer;
        if l >= base.num_layers() {
            return Err(Error::arg(format!("adapter targets missing layer {l}")));
        }
        let (out, inp) = base.weights[l].dim();
        let r = self.rank();
        if self.u.dim() != (out, r) || self.v.dim() != (r, inp) || self.active.len() != r {
            return Err(Error::arg(format!("adapter on layer {l} has inconsistent shapes")));
        }
        Ok(())
    }
}

/// Seeded LoRA-SVD adapters with `sigma = 0`, so the adapted network starts out equal to
/// the base network. Columns of `U` and rows of `V` are Gaussian with variance
/// `1 / width`.
pub fn init_lora(params: &MlpParams, layers: &[usize], rank: usize, seed: u64) -> Result<Vec<LoraSvdAdapter>> {
    let mut sorted = layers.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != layers.len() {
        return Err(Error::arg("adapted layers must be distinct"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted
        .into_iter()
        .map(|l| {
            if l >= params.num_layers() {
                return Err(Error::arg(format!("cannot adapt layer {l}; network has {}", params.num_layers())));
            }
            let (out, inp) = params.weights[l].dim();
            if rank > out.min(inp) {
                return Err(Error::arg(format!("rank {rank} exceeds min({out}, {inp}) on layer {l}")));
            }
            let nu = Normal::new(0.0, 1.0 / (out as f64).sqrt()).expect("positive std");
            let nv = Normal::new(0.0, 1.0 / (inp as f64).sqrt()).expect("positive std");
            let u = Array2::from_shape_simple_fn((out, rank), || nu.sample(&mut rng));
            let v = Array2::from_shape_simple_fn((rank, inp), || nv.sample(&mut rng));
            Ok(LoraSvdAdapter { layer: l, u, v, sigma: Array1::zeros(rank), active: vec![true; rank] })
        })
        .collect()
}

/// `W_pt + U diag(sigma ⊙ active) V` on adapted layers; other layers unchanged.
pub fn effective_weights(params: &MlpParams, adapters: &[LoraSvdAdapter]) -> Result<Vec<Array2<f64>>> {
    let mut w = params.weights.clone();
    for a in adapters {
        a.check_against(params)?;
        w[a.layer] += &a.delta();
    }
    Ok(w)
}

/// Global ordering of all singular values: adapters in layer order, contiguous per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmaIndexMap {
    layers: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl SigmaIndexMap {
    pub fn new(adapters: &[LoraSvdAdapter]) -> Self {
        let mut offsets = Vec::with_capacity(adapters.len());
        let mut total = 0;
        for a in adapters {
            offsets.push(total);
            total += a.rank();
        }
        Self { layers: adapters.iter().map(|a| a.layer).collect(), offsets, total }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// `(adapter position, local index)` of a global index.
    pub fn locate(&self, global: usize) -> Option<(usize, usize)> {
        if global >= self.total {
            return None;
        }
        let pos = self.offsets.partition_point(|&o| o <= global) - 1;
        Some((pos, global - self.offsets[pos]))
    }

    /// Network layer index of a global index.
    pub fn layer_of(&self, global: usize) -> Option<usize> {
        self.locate(global).map(|(pos, _)| self.layers[pos])
    }

    pub fn global(&self, adapter_pos: usize, local: usize) -> usize {
        self.offsets[adapter_pos] + local
    }

    /// Counts of `kept` indices per adapter, in adapter order.
    pub fn per_layer_counts(&self, kept: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.layers.len()];
        for &g in kept {
            if let Some((pos, _)) = self.locate(g) {
                counts[pos] += 1;
            }
        }
        counts
    }
}

/// A base network together with its LoRA adapters.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraNet {
    pub base: MlpParams,
    /// Sorted by layer.
    pub adapters: Vec<LoraSvdAdapter>,
}

impl LoraNet {
    pub fn new(base: MlpParams, mut adapters: Vec<LoraSvdAdapter>) -> Result<Self> {
        base.validate()?;
        adapters.sort_by_key(|a| a.layer);
        for pair in adapters.windows(2) {
            if pair[0].layer == pair[1].layer {
                return Err(Error::arg(format!("two adapters on layer {}", pair[0].layer)));
            }
        }
        for a in &adapters {
            a.check_against(&base)?;
        }
        Ok(Self { base, adapters })
    }

    /// Network without adapters.
    pub fn plain(base: MlpParams) -> Result<Self> {
        Self::new(base, Vec::new())
    }

    pub fn index_map(&self) -> SigmaIndexMap {
        SigmaIndexMap::new(&self.adapters)
    }

    pub fn num_sigma(&self) -> usize {
        self.adapters.iter().map(|a| a.rank()).sum()
    }

    pub fn adapter_on(&self, layer: usize) -> Option<&LoraSvdAdapter> {
        self.adapters.iter().find(|a| a.layer == layer)
    }

    pub fn effective_weights(&self) -> Vec<Array2<f64>> {
        let mut w = self.base.weights.clone();
        for a in &self.adapters {
            w[a.layer] += &a.delta();
        }
        w
    }

    /// Concatenated raw singular values (mask not applied).
    pub fn sigma(&self) -> Vec<f64> {
        self.adapters.iter().flat_map(|a| a.sigma.iter().copied()).collect()
    }

    pub fn set_sigma(&mut self, sigma: &[f64]) -> Result<()> {
        if sigma.len() != self.num_sigma() {
            return Err(Error::arg(format!("expected {} singular values, got {}", self.num_sigma(), sigma.len())));
        }
        let mut it = sigma.iter();
        for a in &mut self.adapters {
            for s in a.sigma.iter_mut() {
                *s = *it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn mask(&self) -> Vec<bool> {
        self.adapters.iter().flat_map(|a| a.active.iter().copied()).collect()
    }

    pub fn set_mask(&mut self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.num_sigma() {
            return Err(Error::arg(format!("expected mask of length {}, got {}", self.num_sigma(), mask.len())));
        }
        let mut it = mask.iter();
        for a in &mut self.adapters {
            for m in a.active.iter_mut() {
                *m = *it.next().unwrap();
            }
        }
        Ok(())
    }

    /// Zeroes every singular value outside `kept` and marks all entries active.
    pub fn zero_complement(&mut self, kept: &[usize]) -> Result<()> {
        let n = self.num_sigma();
        let mut keep = vec![false; n];
        for &k in kept {
            if k >= n {
                return Err(Error::arg(format!("index {k} out of range for {n} singular values")));
            }
            keep[k] = true;
        }
        let sigma: Vec<f64> = self.sigma().iter().zip(&keep).map(|(&s, &k)| if k { s } else { 0.0 }).collect();
        self.set_sigma(&sigma)?;
        self.set_mask(&vec![true; n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn base() -> MlpParams {
        MlpParams::glorot(&[2, 6, 5, 1], 3).unwrap()
    }

    #[test]
    fn init_is_identity_and_deterministic() {
        let p = base();
        let a = init_lora(&p, &[1], 3, 9).unwrap();
        assert_eq!(effective_weights(&p, &a).unwrap(), p.weights);
        assert_eq!(a, init_lora(&p, &[1], 3, 9).unwrap());
        assert_ne!(a, init_lora(&p, &[1], 3, 10).unwrap());
        let empty = init_lora(&p, &[1], 0, 9).unwrap();
        assert_eq!(empty[0].rank(), 0);
        assert_eq!(effective_weights(&p, &empty).unwrap(), p.weights);
    }

    #[test]
    fn init_rejects_bad_requests() {
        let p = base();
        assert!(init_lora(&p, &[1], 6, 0).is_err());
        assert!(init_lora(&p, &[5], 1, 0).is_err());
        assert!(init_lora(&p, &[1, 1], 1, 0).is_err());
    }

    #[test]
    fn rank_one_update() {
        let p = MlpParams::zeros(&[2, 2, 1]).unwrap();
        let a = LoraSvdAdapter {
            layer: 0,
            u: array![[1.0], [0.0]],
            v: array![[1.0, 0.0]],
            sigma: array![3.0],
            active: vec![true],
        };
        let w = effective_weights(&p, &[a]).unwrap();
        assert_eq!(w[0], array![[3.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn delta_matches_dense_product_with_mask() {
        let p = base();
        let mut a = init_lora(&p, &[1], 4, 5).unwrap().remove(0);
        a.sigma = array![0.5, -1.0, 2.0, 0.3];
        a.active = vec![true, false, true, true];
        let dense_sigma = Array2::from_diag(&array![0.5, 0.0, 2.0, 0.3]);
        let expect = a.u.dot(&dense_sigma).dot(&a.v);
        let got = effective_weights(&p, std::slice::from_ref(&a)).unwrap();
        let diff = &got[1] - &p.weights[1] - &expect;
        assert!(diff.iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn index_map_round_trip() {
        let p = MlpParams::glorot(&[2, 8, 8, 8, 1], 1).unwrap();
        let net = LoraNet::new(p.clone(), init_lora(&p, &[1, 2], 3, 2).unwrap()).unwrap();
        let map = net.index_map();
        assert_eq!(map.len(), 6);
        for g in 0..6 {
            let (pos, local) = map.locate(g).unwrap();
            assert_eq!(map.global(pos, local), g);
        }
        assert_eq!(map.layer_of(4), Some(2));
        assert_eq!(map.locate(6), None);
        assert_eq!(map.per_layer_counts(&[0, 4, 5]), vec![1, 2]);
    }

    #[test]
    fn zero_complement_keeps_selected() {
        let p = MlpParams::glorot(&[2, 8, 8, 1], 1).unwrap();
        let mut net = LoraNet::new(p.clone(), init_lora(&p, &[1], 4, 2).unwrap()).unwrap();
        net.set_sigma(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        net.set_mask(&[true, false, true, true]).unwrap();
        net.zero_complement(&[1, 3]).unwrap();
        assert_eq!(net.sigma(), vec![0.0, 2.0, 0.0, 4.0]);
        assert!(net.mask().iter().all(|&m| m));
    }
}
