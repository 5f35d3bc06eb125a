//! Set-valued quadratic pruning objective in maximization form.
//!
//! For a ground set `[n]` of singular values `x`, a linear term `c` and a symmetric
//! quadratic term `Q`, the objective of a kept set `S` is evaluated on its complement
//! `C = [n] \ S` (the pruned entries):
//!
//! ```text
//! f(S) = <c_C, x_C> - 1/2 x_C^T Q_C x_C
//! ```
//!
//! With `c` the loss gradient and `Q` the loss Hessian with respect to `x`, `-f(S)` is the
//! second-order estimate of the loss increase caused by zeroing the entries in `C`. The
//! minimization form of the same problem is never stored; callers negate at the boundary.
//!
//! Index sets are 0-based slices of distinct indices.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest ground set accepted by the exhaustive lattice and monotonicity checks.
pub const EXHAUSTIVE_LIMIT: usize = 12;

/// Absolute slack for equalities and inequalities checked by enumeration.
pub const EVAL_TOL: f64 = 1e-9;

/// Pre-averaging asymmetry accepted by [`QuadObjective::new`].
pub const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadObjective {
    c: Vec<f64>,
    q: Array2<f64>,
    x: Vec<f64>,
}

/// A pair `(i, j)`, `i < j`, whose interaction `Q_ij x_i x_j` is below `-tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub product: f64,
}

impl QuadObjective {
    /// Builds an objective, symmetrizing `q` as `(Q + Q^T) / 2`.
    ///
    /// Rejects mismatched lengths, non-finite entries and an asymmetry above
    /// [`SYMMETRY_TOL`] before averaging.
    pub fn new(c: Vec<f64>, q: Array2<f64>, x: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if c.len() != n || q.nrows() != n || q.ncols() != n {
            return Err(Error::arg(format!(
                "shape mismatch: c has {}, Q is {}x{}, x has {}",
                c.len(),
                q.nrows(),
                q.ncols(),
                n
            )));
        }
        if !c.iter().chain(q.iter()).chain(x.iter()).all(|v| v.is_finite()) {
            return Err(Error::arg("objective data contains NaN or infinity"));
        }
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((q[[i, j]] - q[[j, i]]).abs());
            }
        }
        if asym > SYMMETRY_TOL {
            return Err(Error::arg(format!("Q is not symmetric (max |Q - Q^T| = {asym:e})")));
        }
        let q = (&q + &q.t()) * 0.5;
        Ok(Self { c, q, x })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Scale-aware tolerance for structural sign checks:
    /// `1e-12 * max(1, max|Q_ij| * max|x_i|^2)`.
    pub fn structural_tol(&self) -> f64 {
        let qmax = self.q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let xmax = self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        1e-12 * (qmax * xmax * xmax).max(1.0)
    }

    /// Objective value `f(S)` of the kept set `kept`.
    pub fn evaluate(&self, kept: &[usize]) -> Result<f64> {
        let mask = self.kept_mask(kept)?;
        Ok(self.evaluate_mask(&mask))
    }

    /// `f` for a kept-membership mask of length `n`.
    pub(crate) fn evaluate_mask(&self, kept: &[bool]) -> f64 {
        let pruned: Vec<usize> = (0..self.n()).filter(|&i| !kept[i]).collect();
        let mut lin = 0.0;
        let mut quad = 0.0;
        for &i in &pruned {
            lin += self.c[i] * self.x[i];
            let row = self.q.row(i);
            let mut acc = 0.0;
            for &k in &pruned {
                acc += row[k] * self.x[k];
            }
            quad += self.x[i] * acc;
        }
        lin - 0.5 * quad
    }

    fn kept_mask(&self, kept: &[usize]) -> Result<Vec<bool>> {
        let n = self.n();
        let mut mask = vec![false; n];
        for &i in kept {
            if i >= n {
                return Err(Error::arg(format!("index {i} out of range for n = {n}")));
            }
            if mask[i] {
                return Err(Error::arg(format!("index {i} appears twice in the set")));
            }
            mask[i] = true;
        }
        Ok(mask)
    }

    /// Incremental marginal-gain bookkeeping for the kept set `kept`. Costs `O(n^2)` once.
    pub fn gain_state(&self, kept: &[usize]) -> Result<GainState<'_>> {
        let mask = self.kept_mask(kept)?;
        let n = self.n();
        let mut partial = vec![0.0; n];
        for i in (0..n).filter(|&i| !mask[i]) {
            let xi = self.x[i];
            for (j, s) in partial.iter_mut().enumerate() {
                *s += self.q[[i, j]] * xi;
            }
        }
        Ok(GainState { obj: self, kept: mask, order: kept.to_vec(), partial })
    }

    /// Pairwise submodularity test: `Q_ij x_i x_j >= -tol` for every `i != j`.
    ///
    /// A quadratic set function of this form is submodular exactly when the test passes.
    pub fn is_pairwise_submodular(&self, tol: f64) -> (bool, Vec<Violation>) {
        let n = self.n();
        let mut violations = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let product = self.q[[i, j]] * self.x[i] * self.x[j];
                if product < -tol {
                    violations.push(Violation { i, j, product });
                }
            }
        }
        (violations.is_empty(), violations)
    }

    /// Ground-truth submodularity by enumerating the lattice inequality
    /// `f(X) + f(Y) >= f(X | Y) + f(X & Y)` over all pairs of subsets.
    pub fn verify_lattice_exhaustive(&self) -> Result<bool> {
        let values = self.all_subset_values()?;
        let full = values.len();
        for a in 0..full {
            for b in (a + 1)..full {
                let lhs = values[a] + values[b];
                let rhs = values[a | b] + values[a & b];
                if lhs < rhs - EVAL_TOL {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Sufficient monotonicity condition: vanished linear term, non-negative diagonal and
    /// the pairwise submodularity test, all within `tol`.
    pub fn is_monotone_sufficient(&self, tol: f64) -> bool {
        let grad_ok = self.c.iter().all(|v| v.abs() <= tol);
        let diag_ok = self.q.diag().iter().all(|&d| d >= -tol);
        grad_ok && diag_ok && self.is_pairwise_submodular(tol).0
    }

    /// Exhaustive monotonicity: every marginal gain over every `(S, j)` is `>= -EVAL_TOL`.
    pub fn verify_monotone_exhaustive(&self) -> Result<bool> {
        let values = self.all_subset_values()?;
        let n = self.n();
        for (s, &fs) in values.iter().enumerate() {
            for j in (0..n).filter(|j| s & (1 << j) == 0) {
                if values[s | (1 << j)] - fs < -EVAL_TOL {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// `f` of every subset, indexed by its kept-set bitmask.
    pub(crate) fn all_subset_values(&self) -> Result<Vec<f64>> {
        let n = self.n();
        if n > EXHAUSTIVE_LIMIT {
            return Err(Error::Capacity {
                what: "exhaustive subset enumeration",
                n,
                limit: EXHAUSTIVE_LIMIT,
            });
        }
        Ok((0..1usize << n)
            .map(|bits| {
                let mask: Vec<bool> = (0..n).map(|i| bits & (1 << i) != 0).collect();
                self.evaluate_mask(&mask)
            })
            .collect())
    }
}

/// Mutable cursor over a growing kept set, holding `s_j = sum_{i pruned} Q_ij x_i`.
#[derive(Debug, Clone)]
pub struct GainState<'a> {
    obj: &'a QuadObjective,
    kept: Vec<bool>,
    order: Vec<usize>,
    partial: Vec<f64>,
}

impl<'a> GainState<'a> {
    pub fn objective(&self) -> &'a QuadObjective {
        self.obj
    }

    /// Kept indices in insertion order.
    pub fn kept(&self) -> &[usize] {
        &self.order
    }

    pub fn is_kept(&self, j: usize) -> bool {
        self.kept.get(j).copied().unwrap_or(false)
    }

    pub fn partial_sums(&self) -> &[f64] {
        &self.partial
    }

    /// `f(S + j) - f(S)`, in `O(1)`.
    pub fn marginal_gain(&self, j: usize) -> Result<f64> {
        self.check_candidate(j)?;
        Ok(self.gain_unchecked(j))
    }

    #[inline]
    pub(crate) fn gain_unchecked(&self, j: usize) -> f64 {
        let xj = self.obj.x[j];
        -self.obj.c[j] * xj - 0.5 * self.obj.q[[j, j]] * xj * xj + xj * self.partial[j]
    }

    /// Moves `j` from the pruned complement into the kept set, in `O(n)`.
    pub fn add(&mut self, j: usize) -> Result<()> {
        self.check_candidate(j)?;
        self.add_unchecked(j);
        Ok(())
    }

    pub(crate) fn add_unchecked(&mut self, j: usize) {
        let xj = self.obj.x[j];
        for (i, s) in self.partial.iter_mut().enumerate() {
            *s -= self.obj.q[[i, j]] * xj;
        }
        self.kept[j] = true;
        self.order.push(j);
    }

    /// Current objective value, recomputed from scratch.
    pub fn value(&self) -> f64 {
        self.obj.evaluate_mask(&self.kept)
    }

    fn check_candidate(&self, j: usize) -> Result<()> {
        let n = self.obj.n();
        if j >= n {
            return Err(Error::arg(format!("index {j} out of range for n = {n}")));
        }
        if self.kept[j] {
            return Err(Error::arg(format!("index {j} is already kept")));
        }
        Ok(())
    }
}

/// JSON fixture layout: `{n, c, Q (row-major), x}`.
#[derive(Serialize, Deserialize)]
struct ObjectiveDoc {
    n: usize,
    c: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<f64>,
    x: Vec<f64>,
}

impl Serialize for QuadObjective {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ObjectiveDoc {
            n: self.n(),
            c: self.c.clone(),
            q: self.q.iter().copied().collect(),
            x: self.x.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for QuadObjective {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = ObjectiveDoc::deserialize(de)?;
        let q = Array2::from_shape_vec((doc.n, doc.n), doc.q).map_err(D::Error::custom)?;
        QuadObjective::new(doc.c, q, doc.x).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Gradient and projected Hessian of `(s1 - s2 + 1)^2` at `(1, 2.1)`.
    fn toy() -> QuadObjective {
        QuadObjective::new(vec![-0.2, 0.2], array![[2.0, 0.0], [0.0, 2.0]], vec![1.0, 2.1]).unwrap()
    }

    fn toy_loss(s1: f64, s2: f64) -> f64 {
        (s1 - s2 + 1.0).powi(2)
    }

    #[test]
    fn toy_values_match_loss_differences() {
        let obj = toy();
        let keep_second = obj.evaluate(&[1]).unwrap();
        let keep_first = obj.evaluate(&[0]).unwrap();
        assert!((keep_second - (-1.2)).abs() < 1e-12);
        assert!((keep_first - (-3.99)).abs() < 1e-12);
        assert!((-keep_second - (toy_loss(0.0, 2.1) - toy_loss(1.0, 2.1))).abs() < 1e-12);
        assert!((-keep_first - (toy_loss(1.0, 0.0) - toy_loss(1.0, 2.1))).abs() < 1e-12);
        assert_eq!(obj.evaluate(&[0, 1]).unwrap(), 0.0);
        assert!((obj.evaluate(&[]).unwrap() - (-5.19)).abs() < 1e-12);
    }

    #[test]
    fn evaluate_rejects_bad_indices() {
        let obj = toy();
        assert!(matches!(obj.evaluate(&[2]), Err(Error::Argument(_))));
        assert!(matches!(obj.evaluate(&[1, 1]), Err(Error::Argument(_))));
    }

    #[test]
    fn gain_state_partial_sums() {
        let obj = toy();
        let st = obj.gain_state(&[]).unwrap();
        assert_eq!(st.partial_sums(), &[2.0, 4.2]);
        let full = obj.gain_state(&[0, 1]).unwrap();
        assert_eq!(full.partial_sums(), &[0.0, 0.0]);
        let scalar = QuadObjective::new(vec![0.5], array![[3.0]], vec![2.0]).unwrap();
        assert_eq!(scalar.gain_state(&[]).unwrap().partial_sums(), &[6.0]);
    }

    #[test]
    fn toy_marginal_gains() {
        let obj = toy();
        let st = obj.gain_state(&[]).unwrap();
        assert!((st.marginal_gain(1).unwrap() - 3.99).abs() < 1e-12);
        assert!((st.marginal_gain(0).unwrap() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn add_updates_partial_sums() {
        let obj = toy();
        let mut st = obj.gain_state(&[]).unwrap();
        st.add(1).unwrap();
        assert!((st.partial_sums()[0] - 2.0).abs() < 1e-15);
        assert!(st.partial_sums()[1].abs() < 1e-15);
        assert!(matches!(st.add(1), Err(Error::Argument(_))));
        assert!(matches!(st.marginal_gain(1), Err(Error::Argument(_))));
        st.add(0).unwrap();
        assert!(st.partial_sums().iter().all(|s| s.abs() < 1e-15));
        assert_eq!(st.kept(), &[1, 0]);
    }

    #[test]
    fn add_matches_fresh_state() {
        let q = array![[1.0, -0.3, 0.7], [-0.3, 2.0, 0.4], [0.7, 0.4, -0.5]];
        let obj = QuadObjective::new(vec![0.1, -0.4, 0.9], q, vec![1.3, -0.6, 2.2]).unwrap();
        let mut st = obj.gain_state(&[]).unwrap();
        st.add(2).unwrap();
        st.add(0).unwrap();
        let fresh = obj.gain_state(&[2, 0]).unwrap();
        for (a, b) in st.partial_sums().iter().zip(fresh.partial_sums()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn pairwise_test_reports_products() {
        let h = QuadObjective::new(vec![0.0; 2], array![[2.0, -2.0], [-2.0, 2.0]], vec![1.0, 2.1])
            .unwrap();
        let (ok, v) = h.is_pairwise_submodular(h.structural_tol());
        assert!(!ok);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].i, v[0].j), (0, 1));
        assert!((v[0].product + 4.2).abs() < 1e-12);
        assert!(!h.verify_lattice_exhaustive().unwrap());
        assert!(toy().is_pairwise_submodular(0.0).0);
        assert!(toy().verify_lattice_exhaustive().unwrap());
    }

    #[test]
    fn lattice_trivial_sizes() {
        let empty = QuadObjective::new(vec![], Array2::zeros((0, 0)), vec![]).unwrap();
        assert!(empty.verify_lattice_exhaustive().unwrap());
        let one = QuadObjective::new(vec![1.0], array![[-4.0]], vec![3.0]).unwrap();
        assert!(one.verify_lattice_exhaustive().unwrap());
        let big = QuadObjective::new(vec![0.0; 13], Array2::zeros((13, 13)), vec![1.0; 13]).unwrap();
        assert!(matches!(big.verify_lattice_exhaustive(), Err(Error::Capacity { .. })));
    }

    #[test]
    fn monotone_sufficient_examples() {
        let q = array![[2.0, 0.0], [0.0, 2.0]];
        let flat = QuadObjective::new(vec![0.0; 2], q.clone(), vec![1.0, 2.1]).unwrap();
        assert!(flat.is_monotone_sufficient(flat.structural_tol()));
        assert!(flat.verify_monotone_exhaustive().unwrap());
        assert!(!toy().is_monotone_sufficient(toy().structural_tol()));
        let neg = QuadObjective::new(vec![0.0; 2], array![[-1.0, 0.0], [0.0, 2.0]], vec![1.0, 2.1])
            .unwrap();
        assert!(!neg.is_monotone_sufficient(neg.structural_tol()));
    }

    #[test]
    fn zero_value_has_zero_gain() {
        let q = array![[1.0, 5.0, -2.0], [5.0, 3.0, 1.0], [-2.0, 1.0, 4.0]];
        let obj = QuadObjective::new(vec![7.0, -3.0, 2.0], q, vec![1.5, 0.0, -2.0]).unwrap();
        for kept in [vec![], vec![0], vec![2], vec![0, 2]] {
            assert_eq!(obj.gain_state(&kept).unwrap().marginal_gain(1).unwrap(), 0.0);
        }
    }

    #[test]
    fn construction_symmetrizes_and_validates() {
        let q = array![[1.0, 2.0 + 1e-10], [2.0, 1.0]];
        let obj = QuadObjective::new(vec![0.0; 2], q, vec![1.0; 2]).unwrap();
        assert_eq!(obj.q()[[0, 1]], obj.q()[[1, 0]]);
        let bad = array![[1.0, 2.0], [2.5, 1.0]];
        assert!(QuadObjective::new(vec![0.0; 2], bad, vec![1.0; 2]).is_err());
        let nan = array![[f64::NAN, 0.0], [0.0, 1.0]];
        assert!(QuadObjective::new(vec![0.0; 2], nan, vec![1.0; 2]).is_err());
        assert!(QuadObjective::new(vec![0.0], Array2::zeros((2, 2)), vec![1.0; 2]).is_err());
    }

    #[test]
    fn json_layout() {
        let json = serde_json::to_value(toy()).unwrap();
        assert_eq!(json["n"], 2);
        assert_eq!(json["Q"].as_array().unwrap().len(), 4);
        let back: QuadObjective = serde_json::from_value(json).unwrap();
        assert_eq!(back, toy());
    }
}
