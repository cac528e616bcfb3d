//! Numerical checks of the critical-point structure of the compressibility loss.
//!
//! Descent on the loss alone should end on a ternary vector whose loss equals
//! `sqrt(n)`, and every exact ternary vector should be a strict local minimum
//! along any small perturbation that touches its zero support.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::TheoryError;
use crate::loss::{
    compressibility_grad_into, compressibility_loss, diagnose_critical_point, ternary_magnitude,
    CriticalPointReport, Norms,
};

pub const DEFAULT_STEP_SIZE: f64 = 1e-2;
pub const DEFAULT_MAX_STEPS: usize = 200_000;
/// Consecutive rejected (loss-increasing) steps after which descent gives up.
pub const DIVERGENCE_PATIENCE: usize = 100;
/// Threshold on `max_i |sign(x_i) - x_i / c|`, the scale-free gradient.
pub const STATIONARY_TOL: f64 = 1e-12;
/// Convergence thresholds for a descent endpoint.
pub const CONVERGED_REL_DEVIATION: f64 = 1e-3;
pub const CONVERGED_SQRT_N_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step_index: usize,
    pub loss_value: f64,
    pub ternary_deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentStatus {
    /// The scale-free gradient fell below [`STATIONARY_TOL`].
    Stationary,
    /// Ran out of steps.
    MaxSteps,
    /// [`DIVERGENCE_PATIENCE`] consecutive steps would have increased the loss.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentTrace {
    pub iterates: Vec<TraceRecord>,
    pub final_report: CriticalPointReport,
    pub final_x: Vec<f64>,
    pub status: DescentStatus,
    /// Number of accepted steps.
    pub steps_taken: usize,
}

impl DescentTrace {
    /// True if the endpoint is ternary and satisfies the `sqrt(n)` identity
    /// within the convergence thresholds.
    pub fn converged(&self) -> bool {
        self.status != DescentStatus::Diverged
            && self.final_report.relative_deviation() < CONVERGED_REL_DEVIATION
            && self.final_report.sqrt_n_gap < CONVERGED_SQRT_N_GAP
    }

    /// Writes one `step_index,loss,ternary_deviation` line per record.
    pub fn write_records<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step_index,loss,ternary_deviation")?;
        for r in &self.iterates {
            writeln!(
                out,
                "{},{:.17e},{:.17e}",
                r.step_index, r.loss_value, r.ternary_deviation
            )?;
        }
        Ok(())
    }
}

/// Gradient descent on the compressibility loss alone.
///
/// Entries that fall below `zero_tol` or cross zero are clamped to exactly 0
/// and frozen. A step that would increase the loss is rejected and the step
/// size halved.
#[derive(Debug, Clone)]
pub struct Descent {
    pub step_size: f64,
    pub max_steps: usize,
    pub zero_tol: f64,
    /// Record every n-th accepted step (the first and last are always kept).
    pub record_every: usize,
}

impl Default for Descent {
    fn default() -> Self {
        Descent {
            step_size: DEFAULT_STEP_SIZE,
            max_steps: DEFAULT_MAX_STEPS,
            zero_tol: crate::loss::DEFAULT_ZERO_TOL,
            record_every: 1,
        }
    }
}

impl Descent {
    pub fn run(&self, x0: &[f64]) -> Result<DescentTrace, TheoryError> {
        if self.step_size.is_nan() || self.step_size <= 0.0 {
            return Err(TheoryError::Argument("step_size must be > 0".into()));
        }
        if self.zero_tol.is_nan() || self.zero_tol < 0.0 {
            return Err(TheoryError::Argument("zero_tol must be >= 0".into()));
        }
        let record_every = self.record_every.max(1);
        let mut x = x0.to_vec();
        let mut loss = compressibility_loss(&x)?;
        let mut grad = vec![0.0; x.len()];
        let mut candidate = vec![0.0; x.len()];
        let mut step = self.step_size;
        let mut rejects = 0usize;
        let mut accepted = 0usize;
        let mut status = DescentStatus::MaxSteps;

        let deviation =
            |x: &[f64]| diagnose_critical_point(x, self.zero_tol).map(|r| r.ternary_deviation);
        let mut iterates = vec![TraceRecord {
            step_index: 0,
            loss_value: loss,
            ternary_deviation: deviation(&x)?,
        }];
        let mut last_recorded = 0;

        let mut attempts = 0usize;
        while accepted < self.max_steps {
            attempts += 1;
            let norms = compressibility_grad_into(&x, &mut grad)?;
            let l2 = norms.l2();
            let scale_free = grad.iter().fold(0.0f64, |m, g| m.max((g * l2).abs()));
            if scale_free < STATIONARY_TOL {
                status = DescentStatus::Stationary;
                break;
            }
            for ((c, &xi), &g) in candidate.iter_mut().zip(&x).zip(&grad) {
                if xi == 0.0 {
                    *c = 0.0;
                    continue;
                }
                let next = xi - step * g;
                *c = if next.abs() < self.zero_tol || next.signum() != xi.signum() {
                    0.0
                } else {
                    next
                };
            }
            let next_loss = match Norms::of(&candidate) {
                Ok(n) => n.loss(),
                Err(_) => f64::INFINITY,
            };
            if next_loss <= loss {
                std::mem::swap(&mut x, &mut candidate);
                loss = next_loss;
                accepted += 1;
                rejects = 0;
                if accepted.is_multiple_of(record_every) {
                    iterates.push(TraceRecord {
                        step_index: accepted,
                        loss_value: loss,
                        ternary_deviation: deviation(&x)?,
                    });
                    last_recorded = accepted;
                }
            } else {
                step *= 0.5;
                rejects += 1;
                if rejects >= DIVERGENCE_PATIENCE {
                    status = DescentStatus::Diverged;
                    break;
                }
            }
            // A pathological input could otherwise spin on rejected steps forever.
            if attempts
                > self
                    .max_steps
                    .saturating_mul(2)
                    .saturating_add(DIVERGENCE_PATIENCE)
            {
                break;
            }
        }
        if last_recorded != accepted {
            iterates.push(TraceRecord {
                step_index: accepted,
                loss_value: loss,
                ternary_deviation: deviation(&x)?,
            });
        }
        let final_report = diagnose_critical_point(&x, self.zero_tol)?;
        Ok(DescentTrace {
            iterates,
            final_report,
            final_x: x,
            status,
            steps_taken: accepted,
        })
    }
}

pub fn minimize_loss(
    x0: &[f64],
    step_size: f64,
    max_steps: usize,
    zero_tol: f64,
) -> Result<DescentTrace, TheoryError> {
    Descent {
        step_size,
        max_steps,
        zero_tol,
        record_every: 1,
    }
    .run(x0)
}

/// A perturbation `epsilon * pattern` applied to a ternary point.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    pub pattern: Vec<i8>,
    /// Number of non-zero pattern entries on the zero support of the point.
    pub zero_support_hits: usize,
}

impl PerturbationSpec {
    /// Builds a spec for the point `x`, counting the zero-support hits.
    pub fn for_point(x: &[f64], epsilon: f64, pattern: Vec<i8>) -> Result<Self, TheoryError> {
        if pattern.len() != x.len() {
            return Err(TheoryError::Argument(format!(
                "pattern length {} does not match dimension {}",
                pattern.len(),
                x.len()
            )));
        }
        if pattern.iter().any(|p| !(-1..=1).contains(p)) {
            return Err(TheoryError::Argument(
                "pattern entries must be in {-1, 0, 1}".into(),
            ));
        }
        Ok(PerturbationSpec {
            epsilon,
            zero_support_hits: zero_support_hits(x, &pattern),
            pattern,
        })
    }
}

fn zero_support_hits(x: &[f64], pattern: &[i8]) -> usize {
    x.iter()
        .zip(pattern)
        .filter(|(&v, &p)| v == 0.0 && p != 0)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationOutcome {
    pub loss_before: f64,
    pub loss_after: f64,
    pub increased: bool,
}

fn require_ternary(x: &[f64]) -> Result<f64, TheoryError> {
    ternary_magnitude(x)
        .ok_or_else(|| TheoryError::Precondition("point is not an exact ternary vector".into()))
}

pub fn perturbation_test(
    x: &[f64],
    spec: &PerturbationSpec,
) -> Result<PerturbationOutcome, TheoryError> {
    let c = require_ternary(x)?;
    if spec.pattern.len() != x.len() {
        return Err(TheoryError::Argument(
            "pattern length does not match dimension".into(),
        ));
    }
    if spec.pattern.iter().all(|&p| p == 0) {
        return Err(TheoryError::Argument(
            "pattern has no non-zero entry".into(),
        ));
    }
    if spec.epsilon.is_nan() || spec.epsilon <= 0.0 || spec.epsilon > c / 1000.0 {
        return Err(TheoryError::Argument(format!(
            "epsilon must satisfy 0 < epsilon <= c/1000 (c = {c}, epsilon = {})",
            spec.epsilon
        )));
    }
    if spec.zero_support_hits != zero_support_hits(x, &spec.pattern) {
        return Err(TheoryError::Argument(
            "zero_support_hits does not match the point".into(),
        ));
    }
    let loss_before = compressibility_loss(x)?;
    let moved: Vec<f64> = x
        .iter()
        .zip(&spec.pattern)
        .map(|(&v, &p)| v + spec.epsilon * f64::from(p))
        .collect();
    let loss_after = compressibility_loss(&moved)?;
    Ok(PerturbationOutcome {
        loss_before,
        loss_after,
        increased: loss_after > loss_before,
    })
}

/// Draws a pattern with entries uniform over {-1, 0, 1}, redrawn until it
/// touches the zero support of `x` at least once.
pub fn sample_pattern<R: Rng>(x: &[f64], rng: &mut R) -> Vec<i8> {
    loop {
        let pattern: Vec<i8> = (0..x.len()).map(|_| rng.random_range(-1i8..=1)).collect();
        if zero_support_hits(x, &pattern) >= 1 {
            return pattern;
        }
    }
}

/// Fraction of random zero-support-touching perturbations that increase the loss.
pub fn sweep_perturbations(
    x: &[f64],
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<f64, TheoryError> {
    require_ternary(x)?;
    if trials == 0 {
        return Err(TheoryError::Argument("trials must be >= 1".into()));
    }
    if !x.contains(&0.0) {
        return Err(TheoryError::Precondition(
            "point has an empty zero support; no admissible direction exists".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut increased = 0usize;
    for _ in 0..trials {
        let pattern = sample_pattern(x, &mut rng);
        let spec = PerturbationSpec::for_point(x, epsilon, pattern)?;
        if perturbation_test(x, &spec)?.increased {
            increased += 1;
        }
    }
    Ok(increased as f64 / trials as f64)
}

/// Builds an exact ternary vector of dimension `d` with `n` non-zeros of magnitude `c`
/// at random positions with random signs.
pub fn random_ternary<R: Rng>(d: usize, n: usize, c: f64, rng: &mut R) -> Vec<f64> {
    assert!(n <= d);
    let mut idx: Vec<usize> = (0..d).collect();
    for i in 0..n {
        let j = rng.random_range(i..d);
        idx.swap(i, j);
    }
    let mut x = vec![0.0; d];
    for &i in &idx[..n] {
        x[i] = if rng.random_bool(0.5) { c } else { -c };
    }
    x
}

/// Draws a start uniformly from `[-1, 1]^d`, redrawing entries closer than `min_abs` to zero.
pub fn random_start<R: Rng>(d: usize, min_abs: f64, rng: &mut R) -> Vec<f64> {
    (0..d)
        .map(|_| loop {
            let v: f64 = rng.random_range(-1.0..=1.0);
            if v.abs() >= min_abs {
                break v;
            }
        })
        .collect()
}

/// Summary of a verification run over random starts and perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationSummary {
    pub trials: usize,
    pub converged: usize,
    pub sqrt_n_failures: Vec<u64>,
    pub descent_failures: Vec<u64>,
    pub perturbation_checks: usize,
    pub perturbation_failures: Vec<u64>,
}

/// Minimum fraction of random starts that must converge.
pub const MIN_CONVERGED_FRACTION: f64 = 0.95;

impl VerificationSummary {
    pub fn passed(&self) -> bool {
        self.converged as f64 >= MIN_CONVERGED_FRACTION * self.trials as f64
            && self.sqrt_n_failures.is_empty()
            && self.perturbation_failures.is_empty()
    }
}

/// Runs descent from `trials` random starts (trial `t` uses seed `seed + t`),
/// checks the `sqrt(n)` identity on every converged endpoint and runs a
/// perturbation sweep around each endpoint and around a constructed ternary
/// vector of the same dimension.
pub fn verify_theory(
    dimension: usize,
    trials: usize,
    seed: u64,
) -> Result<VerificationSummary, TheoryError> {
    if dimension < 2 {
        return Err(TheoryError::Argument("dimension must be >= 2".into()));
    }
    if trials == 0 {
        return Err(TheoryError::Argument("trials must be >= 1".into()));
    }
    const PATTERNS_PER_POINT: usize = 100;
    let descent = Descent {
        record_every: 1000,
        ..Descent::default()
    };
    let mut summary = VerificationSummary {
        trials,
        converged: 0,
        sqrt_n_failures: Vec::new(),
        descent_failures: Vec::new(),
        perturbation_checks: 0,
        perturbation_failures: Vec::new(),
    };
    for t in 0..trials as u64 {
        let trial_seed = seed.wrapping_add(t);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        let x0 = random_start(dimension, 1e-3, &mut rng);
        let trace = descent.run(&x0)?;
        if !trace.converged() {
            summary.descent_failures.push(trial_seed);
            continue;
        }
        summary.converged += 1;
        if trace.final_report.sqrt_n_gap >= CONVERGED_SQRT_N_GAP {
            summary.sqrt_n_failures.push(trial_seed);
        }

        let n = rng.random_range(1..dimension);
        let mut points = vec![random_ternary(
            dimension,
            n,
            rng.random_range(0.1..10.0),
            &mut rng,
        )];
        // Snap the endpoint onto its exact ternary form before perturbing.
        if let Some(snapped) = snap_ternary(&trace.final_x) {
            if snapped.contains(&0.0) {
                points.push(snapped);
            }
        }
        for p in points {
            let c = ternary_magnitude(&p).expect("constructed point is ternary");
            let frac = sweep_perturbations(&p, c / 1e4, PATTERNS_PER_POINT, trial_seed)?;
            summary.perturbation_checks += PATTERNS_PER_POINT;
            if frac < 1.0 {
                summary.perturbation_failures.push(trial_seed);
            }
        }
    }
    Ok(summary)
}

/// Replaces every non-zero entry by `sign(x_i) * c`.
fn snap_ternary(x: &[f64]) -> Option<Vec<f64>> {
    let c = crate::loss::critical_point_c(x).ok()?;
    Some(
        x.iter()
            .map(|&v| if v == 0.0 { 0.0 } else { c.copysign(v) })
            .collect(),
    )
}
