//! One-dimensional k-means quantization of the surviving weights.
//!
//! Seeding is k-means++ from a ChaCha8 stream, iterations are plain Lloyd.
//! Centroids are kept at `f32` precision throughout so that a codebook can
//! be stored in the codec without changing the quantized values; since the
//! previous centroid is itself an `f32`, rounding the new mean never
//! increases the distortion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::PruneError;
use crate::prune::SparsityMask;

pub const DEFAULT_K: usize = 256;
pub const DEFAULT_MAX_ITERS: usize = 300;
/// Cluster counts swept when studying the quantization level.
pub const K_SWEEP: [usize; 5] = [256, 128, 64, 32, 16];

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centroids: Vec<f64>,
    pub labels: Vec<u32>,
    pub counts: Vec<usize>,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Checks that labels index valid centroids and counts match the labels.
    pub fn validate(&self) -> Result<(), PruneError> {
        if self.centroids.is_empty() {
            return Err(PruneError::Structure("codebook has no centroids".into()));
        }
        if self.counts.len() != self.centroids.len() {
            return Err(PruneError::Structure(
                "counts and centroids differ in length".into(),
            ));
        }
        let mut counts = vec![0usize; self.k()];
        for &l in &self.labels {
            let l = l as usize;
            if l >= self.k() {
                return Err(PruneError::Structure(format!(
                    "label {l} out of range for k = {}",
                    self.k()
                )));
            }
            counts[l] += 1;
        }
        if counts != self.counts {
            return Err(PruneError::Structure("counts do not match labels".into()));
        }
        Ok(())
    }

    /// Largest distance between a point and its assigned centroid.
    pub fn max_radius(&self, points: &[f64]) -> f64 {
        points
            .iter()
            .zip(&self.labels)
            .map(|(&p, &l)| (p - self.centroids[l as usize]).abs())
            .fold(0.0, f64::max)
    }

    pub fn distortion(&self, points: &[f64]) -> f64 {
        points
            .iter()
            .zip(&self.labels)
            .map(|(&p, &l)| {
                let d = p - self.centroids[l as usize];
                d * d
            })
            .sum()
    }
}

/// A fitted codebook together with the distortion after every assignment step.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub codebook: Codebook,
    pub distortion_history: Vec<f64>,
    pub iterations: usize,
}

fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

/// Nearest-centroid lookup. Among equidistant centroids the lowest index wins.
struct Assigner {
    /// Distinct centroid values ascending, each with the lowest index holding it.
    sorted: Vec<(f64, u32)>,
}

impl Assigner {
    fn new(centroids: &[f64]) -> Self {
        let mut sorted: Vec<(f64, u32)> = centroids
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32))
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        sorted.dedup_by(|later, earlier| later.0 == earlier.0);
        Assigner { sorted }
    }

    fn nearest(&self, x: f64) -> u32 {
        let pos = self.sorted.partition_point(|&(c, _)| c < x);
        let mut best: Option<(f64, u32)> = None;
        for j in [pos.wrapping_sub(1), pos] {
            if let Some(&(c, idx)) = self.sorted.get(j) {
                let d = (x - c).abs();
                best = match best {
                    Some((bd, bi)) if bd < d || (bd == d && bi < idx) => Some((bd, bi)),
                    _ => Some((d, idx)),
                };
            }
        }
        best.expect("at least one centroid").1
    }
}

fn assign(points: &[f64], centroids: &[f64], labels: &mut [u32]) -> f64 {
    let assigner = Assigner::new(centroids);
    let mut distortion = 0.0;
    for (l, &p) in labels.iter_mut().zip(points) {
        *l = assigner.nearest(p);
        let d = p - centroids[*l as usize];
        distortion += d * d;
    }
    distortion
}

fn kmeans_pp_seed(points: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k);
    let first = points[rng.random_range(0..points.len())];
    centroids.push(to_f32_precision(first));
    let mut d2: Vec<f64> = points.iter().map(|&p| (p - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            to_f32_precision(points[chosen])
        } else {
            // Every point already coincides with a centroid; the rest stay empty.
            *centroids.last().expect("non-empty")
        };
        centroids.push(next);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min((p - next).powi(2));
        }
    }
    centroids
}

pub fn kmeans_fit(
    nonzeros: &[f64],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Codebook, PruneError> {
    kmeans_fit_traced(nonzeros, k, seed, max_iters).map(|f| f.codebook)
}

/// Lloyd iterations until the labels stop changing or `max_iters` updates ran.
pub fn kmeans_fit_traced(
    nonzeros: &[f64],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansFit, PruneError> {
    if k == 0 {
        return Err(PruneError::Argument("k must be >= 1".into()));
    }
    if nonzeros.is_empty() {
        return Err(PruneError::Argument("no points to cluster".into()));
    }
    if let Some(i) = nonzeros.iter().position(|v| !v.is_finite()) {
        return Err(PruneError::Argument(format!(
            "non-finite point at index {i}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_seed(nonzeros, k, &mut rng);
    let mut labels = vec![0u32; nonzeros.len()];
    let mut next_labels = labels.clone();
    let mut history = vec![assign(nonzeros, &centroids, &mut labels)];
    let mut iterations = 0;

    let mut sums = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    while iterations < max_iters {
        iterations += 1;
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for (&p, &l) in nonzeros.iter().zip(&labels) {
            sums[l as usize] += p;
            counts[l as usize] += 1;
        }
        for ((c, &s), &n) in centroids.iter_mut().zip(&sums).zip(&counts) {
            if n > 0 {
                *c = to_f32_precision(s / n as f64);
            }
        }
        history.push(assign(nonzeros, &centroids, &mut next_labels));
        let fixpoint = next_labels == labels;
        std::mem::swap(&mut labels, &mut next_labels);
        if fixpoint {
            break;
        }
    }

    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l as usize] += 1;
    }
    Ok(KMeansFit {
        codebook: Codebook {
            centroids,
            labels,
            counts,
        },
        distortion_history: history,
        iterations,
    })
}

/// Replaces every kept weight by its centroid; pruned positions stay zero.
pub fn quantize(
    w: &[f64],
    mask: &SparsityMask,
    codebook: &Codebook,
) -> Result<Vec<f64>, PruneError> {
    if w.len() != mask.len() {
        return Err(PruneError::Structure(format!(
            "weights have length {} but mask has length {}",
            w.len(),
            mask.len()
        )));
    }
    if codebook.labels.len() != mask.nonzero_count() {
        return Err(PruneError::Structure(format!(
            "{} labels for {} kept weights",
            codebook.labels.len(),
            mask.nonzero_count()
        )));
    }
    let mut labels = codebook.labels.iter();
    mask.bits()
        .iter()
        .map(|&keep| {
            if !keep {
                return Ok(0.0);
            }
            let l = *labels.next().expect("label count checked") as usize;
            codebook
                .centroids
                .get(l)
                .copied()
                .ok_or_else(|| PruneError::Structure(format!("label {l} out of range")))
        })
        .collect()
}

/// Shannon entropy in bits of the cluster populations (`0 log 0 = 0`).
pub fn entropy_of_counts(counts: &[usize]) -> Result<f64, PruneError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(PruneError::Argument(
            "cluster populations sum to zero".into(),
        ));
    }
    let total = total as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

pub fn cluster_entropy(codebook: &Codebook) -> Result<f64, PruneError> {
    entropy_of_counts(&codebook.counts)
}
