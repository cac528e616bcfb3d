//! The L1/L2 compressibility loss, its gradient and critical-point diagnostics.
//!
//! The loss `L(x) = ||x||_1 / ||x||_2` is scale invariant and bounded by
//! `1 <= L(x) <= sqrt(d)`. Its critical points are exactly the ternary
//! vectors with entries in `{-c, 0, c}`, `c = ||x||_2^2 / ||x||_1`, where it
//! takes the value `sqrt(n)` for `n` non-zero entries.

use std::ops::{Deref, DerefMut};

use crate::error::LossError;

/// Default magnitude below which an element is counted as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// A flat vector of weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Self {
        WeightVector(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(values: Vec<f64>) -> Self {
        WeightVector(values)
    }
}

impl From<&[f64]> for WeightVector {
    fn from(values: &[f64]) -> Self {
        WeightVector(values.to_vec())
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for WeightVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// L1 norm and squared L2 norm of a vector, accumulated in one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2_sq: f64,
}

impl Norms {
    pub fn of(x: &[f64]) -> Result<Self, LossError> {
        if x.is_empty() {
            return Err(LossError::Empty);
        }
        let mut l1 = 0.0;
        let mut l2_sq = 0.0;
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(LossError::NonFinite(i));
            }
            l1 += v.abs();
            l2_sq += v * v;
        }
        if l2_sq == 0.0 {
            return Err(LossError::AllZero);
        }
        Ok(Norms { l1, l2_sq })
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq.sqrt()
    }

    pub fn loss(&self) -> f64 {
        self.l1 / self.l2()
    }

    /// The magnitude `||x||_2^2 / ||x||_1` shared by the non-zero entries of a critical point.
    pub fn critical_c(&self) -> f64 {
        self.l2_sq / self.l1
    }
}

/// `||x||_1 / ||x||_2`.
pub fn compressibility_loss(x: &[f64]) -> Result<f64, LossError> {
    Ok(Norms::of(x)?.loss())
}

/// Gradient of the compressibility loss, with `sign(0) = 0`.
pub fn compressibility_grad(x: &[f64]) -> Result<Vec<f64>, LossError> {
    let mut out = vec![0.0; x.len()];
    compressibility_grad_into(x, &mut out)?;
    Ok(out)
}

/// Writes the gradient into `out` (which must have the length of `x`) and
/// returns the norms used to compute it.
pub fn compressibility_grad_into(x: &[f64], out: &mut [f64]) -> Result<Norms, LossError> {
    assert_eq!(x.len(), out.len(), "gradient buffer length mismatch");
    let norms = Norms::of(x)?;
    let l2 = norms.l2();
    let inv_l2 = 1.0 / l2;
    // x_i * l1 / l2^3 == (x_i / c) / l2
    let inv_c = norms.l1 / norms.l2_sq;
    for (g, &v) in out.iter_mut().zip(x) {
        *g = (sign(v) - v * inv_c) * inv_l2;
    }
    Ok(norms)
}

pub fn critical_point_c(x: &[f64]) -> Result<f64, LossError> {
    Ok(Norms::of(x)?.critical_c())
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// How far a vector is from being a critical point of the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPointReport {
    pub c: f64,
    /// `max_i min(|x_i|, ||x_i| - c|)`.
    pub ternary_deviation: f64,
    pub loss_value: f64,
    pub nonzero_count_n: usize,
    /// `|L(x) - sqrt(n)|`.
    pub sqrt_n_gap: f64,
}

impl CriticalPointReport {
    pub fn relative_deviation(&self) -> f64 {
        self.ternary_deviation / self.c
    }
}

pub fn diagnose_critical_point(x: &[f64], zero_tol: f64) -> Result<CriticalPointReport, LossError> {
    let norms = Norms::of(x)?;
    let c = norms.critical_c();
    let loss_value = norms.loss();
    let mut ternary_deviation: f64 = 0.0;
    let mut n = 0usize;
    for &v in x {
        let a = v.abs();
        if a > zero_tol {
            n += 1;
        }
        ternary_deviation = ternary_deviation.max(a.min((a - c).abs()));
    }
    Ok(CriticalPointReport {
        c,
        ternary_deviation,
        loss_value,
        nonzero_count_n: n,
        sqrt_n_gap: (loss_value - (n as f64).sqrt()).abs(),
    })
}

/// Returns the common magnitude if every non-zero entry of `x` has exactly
/// the same absolute value, i.e. `x` is an exact ternary signal.
pub fn ternary_magnitude(x: &[f64]) -> Option<f64> {
    let mut mag: Option<f64> = None;
    for &v in x {
        if v == 0.0 {
            continue;
        }
        let a = v.abs();
        match mag {
            None => mag = Some(a),
            Some(m) if m == a => {}
            Some(_) => return None,
        }
    }
    mag
}
