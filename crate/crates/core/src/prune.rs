//! Magnitude pruning to an exact target sparsity.

use crate::error::PruneError;

/// Zero/non-zero pattern of a pruned weight vector. A set bit marks a kept weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityMask {
    bits: Vec<bool>,
    nonzero_count: usize,
}

impl SparsityMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let nonzero_count = bits.iter().filter(|&&b| b).count();
        SparsityMask {
            bits,
            nonzero_count,
        }
    }

    /// Mask of the non-zero entries of `w`.
    pub fn of_nonzeros(w: &[f64]) -> Self {
        Self::from_bits(w.iter().map(|&v| v != 0.0).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn nonzero_count(&self) -> usize {
        self.nonzero_count
    }

    pub fn sparsity(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        1.0 - self.nonzero_count as f64 / self.bits.len() as f64
    }

    /// The kept entries of `w`, in index order.
    pub fn gather(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(&self.bits)
            .filter(|(_, &b)| b)
            .map(|(&v, _)| v)
            .collect()
    }
}

/// Number of weights to zero for a target sparsity: `ceil(sparsity * d)`.
///
/// The product is nudged down by a relative 1e-12 first so that values like
/// `0.7 * 1000` that land a hair above an integer do not round up.
pub fn zero_count_for(sparsity: f64, d: usize) -> Result<usize, PruneError> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(PruneError::Argument(format!(
            "sparsity must be in [0, 1), got {sparsity}"
        )));
    }
    let raw = sparsity * d as f64;
    let count = (raw - raw * 1e-12).ceil().max(0.0) as usize;
    Ok(count.min(d))
}

/// Indices of `w` ordered by ascending magnitude, ties by ascending index.
fn magnitude_order(w: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(a.cmp(&b)));
    order
}

/// The magnitude threshold that zeroes `ceil(sparsity * d)` weights.
pub fn threshold_for_sparsity(w: &[f64], sparsity: f64) -> Result<f64, PruneError> {
    if w.is_empty() {
        return Err(PruneError::Argument("empty weight vector".into()));
    }
    let count = zero_count_for(sparsity, w.len())?;
    if count == 0 {
        return Ok(0.0);
    }
    let order = magnitude_order(w);
    Ok(w[order[count - 1]].abs())
}

/// Zeroes every weight with `|w_i| <= theta`.
pub fn prune(w: &[f64], theta: f64) -> Result<(Vec<f64>, SparsityMask), PruneError> {
    if theta.is_nan() || theta < 0.0 {
        return Err(PruneError::Argument(format!(
            "threshold must be >= 0, got {theta}"
        )));
    }
    let pruned: Vec<f64> = w
        .iter()
        .map(|&v| if v.abs() <= theta { 0.0 } else { v })
        .collect();
    finish(pruned)
}

/// Zeroes exactly `ceil(sparsity * d)` weights: the smallest magnitudes,
/// breaking ties at the threshold by ascending index.
pub fn prune_to_sparsity(w: &[f64], sparsity: f64) -> Result<(Vec<f64>, SparsityMask), PruneError> {
    let count = zero_count_for(sparsity, w.len())?;
    let mut pruned = w.to_vec();
    for &i in magnitude_order(w).iter().take(count) {
        pruned[i] = 0.0;
    }
    finish(pruned)
}

fn finish(pruned: Vec<f64>) -> Result<(Vec<f64>, SparsityMask), PruneError> {
    let mask = SparsityMask::of_nonzeros(&pruned);
    if mask.nonzero_count() == 0 {
        return Err(PruneError::PrunedEverything);
    }
    Ok((pruned, mask))
}
