//! Cardinality-constrained maximizers for [`QuadObjective`].
//!
//! All solvers break ties toward the lowest index, so selections are reproducible across
//! platforms. The randomized solver draws from a seeded ChaCha8 stream.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadobj::QuadObjective;

/// Largest ground set accepted by [`brute_force_max`].
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Kept indices in the order they were added.
    pub kept: Vec<usize>,
    /// Marginal gain realized at each step.
    pub gains: Vec<f64>,
    pub value: f64,
    pub budget: usize,
    #[serde(default)]
    pub early_stopped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub method: String,
}

fn check_budget(n: usize, b: usize) -> Result<()> {
    if b > n {
        return Err(Error::arg(format!("budget {b} exceeds ground set size {n}")));
    }
    Ok(())
}

/// Greedy maximization: `b` rounds, each adding the element of largest marginal gain.
///
/// With `allow_early_stop` the loop ends at the first round whose best gain is negative,
/// which is still feasible for the `|S| <= b` constraint.
pub fn greedy_max(obj: &QuadObjective, b: usize, allow_early_stop: bool) -> Result<Selection> {
    let n = obj.n();
    check_budget(n, b)?;
    let mut state = obj.gain_state(&[])?;
    let mut gains = Vec::with_capacity(b);
    let mut early_stopped = false;
    for _ in 0..b {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| !state.is_kept(j)) {
            let g = state.gain_unchecked(j);
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((j, g));
            }
        }
        let (j, g) = best.expect("budget <= n leaves a candidate");
        if allow_early_stop && g < 0.0 {
            early_stopped = true;
            break;
        }
        state.add_unchecked(j);
        gains.push(g);
    }
    Ok(Selection {
        value: state.value(),
        kept: state.kept().to_vec(),
        gains,
        budget: b,
        early_stopped,
        seed: None,
        method: "greedy".into(),
    })
}

/// Randomized greedy: each round samples a remaining element with probability proportional
/// to its clipped gain `max(gain, 0)`.
///
/// When every clipped gain is zero the round samples uniformly among the remaining
/// elements, so exactly `b` elements are returned. With `allow_early_stop` the loop ends
/// there instead, returning fewer than `b`; only this variant keeps the `1/e` guarantee
/// on non-monotone objectives, since forced picks can only lose value.
pub fn randomized_greedy_max(obj: &QuadObjective, b: usize, seed: u64, allow_early_stop: bool) -> Result<Selection> {
    let n = obj.n();
    check_budget(n, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = obj.gain_state(&[])?;
    let mut gains = Vec::with_capacity(b);
    let mut early_stopped = false;
    for _ in 0..b {
        let remaining: Vec<usize> = (0..n).filter(|&j| !state.is_kept(j)).collect();
        let clipped: Vec<f64> = remaining.iter().map(|&j| state.gain_unchecked(j).max(0.0)).collect();
        let pick = match WeightedIndex::new(&clipped) {
            Ok(dist) => dist.sample(&mut rng),
            Err(_) if allow_early_stop => {
                early_stopped = true;
                break;
            }
            Err(_) => rng.random_range(0..remaining.len()),
        };
        let j = remaining[pick];
        gains.push(state.gain_unchecked(j));
        state.add_unchecked(j);
    }
    Ok(Selection {
        value: state.value(),
        kept: state.kept().to_vec(),
        gains,
        budget: b,
        early_stopped,
        seed: Some(seed),
        method: "randomized_greedy".into(),
    })
}

/// Exact maximizer over all kept sets with `|S| <= b`, by enumeration.
///
/// Ties go to the lexicographically smallest sorted index list. Used as a test oracle.
pub fn brute_force_max(obj: &QuadObjective, b: usize) -> Result<Selection> {
    let n = obj.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Capacity { what: "brute-force maximization", n, limit: BRUTE_FORCE_LIMIT });
    }
    check_budget(n, b)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut mask = vec![false; n];
    for bits in 0u32..(1u32 << n) {
        if bits.count_ones() as usize > b {
            continue;
        }
        for (i, m) in mask.iter_mut().enumerate() {
            *m = bits & (1 << i) != 0;
        }
        let v = obj.evaluate_mask(&mask);
        let better = match &best {
            None => true,
            Some((bv, bs)) => {
                v > *bv || (v == *bv && {
                    let set: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
                    set < *bs
                })
            }
        };
        if better {
            best = Some((v, (0..n).filter(|&i| mask[i]).collect()));
        }
    }
    let (value, kept) = best.expect("the empty set is always feasible");
    // Gains along the sorted kept list, for reporting.
    let mut state = obj.gain_state(&[])?;
    let mut gains = Vec::with_capacity(kept.len());
    for &j in &kept {
        gains.push(state.gain_unchecked(j));
        state.add_unchecked(j);
    }
    Ok(Selection { kept, gains, value, budget: b, early_stopped: false, seed: None, method: "brute_force".into() })
}

/// Indices of the `b` largest scores, ordered by decreasing score with ties to the lower
/// index. Closed-form maximizer of any separable objective.
pub fn top_k_select(scores: &[f64], b: usize) -> Result<Vec<usize>> {
    check_budget(scores.len(), b)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::arg("scores contain NaN"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(b);
    Ok(idx)
}
