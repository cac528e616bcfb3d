//! Labeled feature sets: loading, splitting and synthetic generators.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::DataError;
use crate::tensor_io::{self, Tensor, TensorData};

/// Row-major features with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::Invalid("feature dimension is zero".into()));
        }
        if labels.is_empty() {
            return Err(DataError::Invalid("no samples".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(DataError::Invalid(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!(
                "non-finite feature in sample {}",
                i / dim
            )));
        }
        let classes = labels.iter().max().map_or(0, |&m| m + 1);
        Ok(Dataset {
            dim,
            classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.sample(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let mut d = Dataset::new(self.dim, features, labels)?;
        d.classes = d.classes.max(self.classes);
        Ok(d)
    }

    /// Seeded shuffle, then the first `1 - eval_fraction` of rows train.
    pub fn split(&self, eval_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
        if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
            return Err(DataError::Invalid(format!(
                "eval fraction {eval_fraction} not in (0, 1)"
            )));
        }
        let n = self.len();
        let n_eval = ((n as f64) * eval_fraction).round() as usize;
        if n_eval == 0 || n_eval == n {
            return Err(DataError::Invalid(format!(
                "cannot split {n} samples with fraction {eval_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (train, eval) = order.split_at(n - n_eval);
        Ok((self.subset(train)?, self.subset(eval)?))
    }

    /// Comma- or whitespace-separated rows; the last column is the integer
    /// label. Blank lines and lines starting with `#` are skipped, as is a
    /// first line that does not parse as numbers.
    pub fn parse_delimited(text: &str) -> Result<Self, DataError> {
        let mut dim = None;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if labels.is_empty() && dim.is_none() => {
                    dim = Some(0);
                    continue;
                }
                Err(e) => {
                    return Err(DataError::Parse {
                        line: lineno + 1,
                        reason: e.to_string(),
                    })
                }
            };
            let parse_err = |reason: String| DataError::Parse {
                line: lineno + 1,
                reason,
            };
            if values.len() < 2 {
                return Err(parse_err("need at least one feature and a label".into()));
            }
            let row_dim = values.len() - 1;
            match dim {
                Some(d) if d != 0 && d != row_dim => {
                    return Err(parse_err(format!(
                        "expected {} columns, found {}",
                        d + 1,
                        values.len()
                    )))
                }
                _ => dim = Some(row_dim),
            }
            let label = values[row_dim];
            if label < 0.0 || label.fract() != 0.0 {
                return Err(parse_err(format!(
                    "label {label} is not a non-negative integer"
                )));
            }
            features.extend_from_slice(&values[..row_dim]);
            labels.push(label as usize);
        }
        Dataset::new(dim.unwrap_or(0), features, labels)
    }

    pub fn to_delimited(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            for v in self.sample(i) {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{}\n", self.labels[i]));
        }
        out
    }

    /// Reads a tensor file holding `features` (n x dim) and `labels` (n).
    pub fn from_tensors(tensors: &[Tensor]) -> Result<Self, DataError> {
        let feats = tensor_io::find(tensors, "features")?;
        let labels = tensor_io::find(tensors, "labels")?;
        if feats.dims.len() != 2 {
            return Err(DataError::Invalid("`features` must be rank 2".into()));
        }
        let labels: Vec<usize> = match &labels.data {
            TensorData::I64(v) => v
                .iter()
                .map(|&l| {
                    usize::try_from(l)
                        .map_err(|_| DataError::Invalid(format!("negative label {l}")))
                })
                .collect::<Result<_, _>>()?,
            _ => return Err(DataError::Invalid("`labels` must be i64".into())),
        };
        Dataset::new(feats.dims[1] as usize, feats.data.to_f64(), labels)
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        vec![
            Tensor::new(
                "features",
                vec![self.len() as u64, self.dim as u64],
                TensorData::F64(self.features.clone()),
            ),
            Tensor::new(
                "labels",
                vec![self.len() as u64],
                TensorData::I64(self.labels.iter().map(|&l| l as i64).collect()),
            ),
        ]
    }

    /// Loads by extension: `.csv`/`.txt`/`.tsv` as delimited text, anything
    /// else as a tensor file.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if matches!(ext, "csv" | "txt" | "tsv") {
            Self::parse_delimited(&fs::read_to_string(path)?)
        } else {
            Self::from_tensors(&tensor_io::read_tensors(path)?)
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if matches!(ext, "csv" | "txt" | "tsv") {
            fs::write(path, self.to_delimited())?;
        } else {
            tensor_io::write_tensors(path, &self.to_tensors())?;
        }
        Ok(())
    }
}

/// Two classes in the plane separated by a random line through the origin
/// with a margin, points drawn uniformly from `[-1, 1]^2`.
pub fn linearly_separable(n: usize, margin: f64, seed: u64) -> Result<Dataset, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let normal = [angle.cos(), angle.sin()];
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let side = p[0] * normal[0] + p[1] * normal[1];
        if side.abs() < margin {
            continue;
        }
        features.extend_from_slice(&p);
        labels.push(usize::from(side > 0.0));
    }
    Dataset::new(2, features, labels)
}

/// Parameters of a Gaussian-mixture classification task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub samples: usize,
    pub dim: usize,
    pub classes: usize,
    /// Mixture components per class.
    pub modes: usize,
    /// Standard deviation around each component centre.
    pub spread: f64,
}

/// Each class owns `modes` centres drawn uniformly from `[-1, 1]^dim`;
/// samples cycle through the classes and pick a centre uniformly.
pub fn gaussian_blobs(spec: BlobSpec, seed: u64) -> Result<Dataset, DataError> {
    if spec.classes < 2
        || spec.modes == 0
        || spec.dim == 0
        || spec.spread.is_nan()
        || spec.spread <= 0.0
    {
        return Err(DataError::Invalid(format!("bad blob spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..spec.classes * spec.modes)
        .map(|_| (0..spec.dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let noise = Normal::new(0.0, spec.spread).map_err(|e| DataError::Invalid(e.to_string()))?;
    let mut features = Vec::with_capacity(spec.samples * spec.dim);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let class = i % spec.classes;
        let centre = &centres[class * spec.modes + rng.random_range(0..spec.modes)];
        features.extend(centre.iter().map(|c| c + noise.sample(&mut rng)));
        labels.push(class);
    }
    Dataset::new(spec.dim, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delimited_parsing() {
        let d = Dataset::parse_delimited("x,y,label\n1,2,0\n# c\n\n3 4 1\n").unwrap();
        assert_eq!(d.dim, 2);
        assert_eq!(d.classes, 2);
        assert_eq!(d.features, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.labels, vec![0, 1]);
        assert_eq!(Dataset::parse_delimited(&d.to_delimited()).unwrap(), d);

        assert!(matches!(
            Dataset::parse_delimited("1,2,0\n1,0\n"),
            Err(DataError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Dataset::parse_delimited("1,2,0.5\n"),
            Err(DataError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Dataset::parse_delimited("1,2,0\nx,1,0\n"),
            Err(DataError::Parse { line: 2, .. })
        ));
        assert!(Dataset::parse_delimited("").is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let d = gaussian_blobs(
            BlobSpec {
                samples: 30,
                dim: 3,
                classes: 3,
                modes: 2,
                spread: 0.1,
            },
            1,
        )
        .unwrap();
        assert_eq!(Dataset::from_tensors(&d.to_tensors()).unwrap(), d);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let d = linearly_separable(100, 0.05, 3).unwrap();
        let (a, b) = d.split(0.25, 9).unwrap();
        assert_eq!((a.len(), b.len()), (75, 25));
        assert_eq!(d.split(0.25, 9).unwrap(), (a.clone(), b.clone()));
        let mut all: Vec<Vec<u64>> = a
            .features
            .chunks(2)
            .chain(b.features.chunks(2))
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn separable_set_respects_margin() {
        let d = linearly_separable(200, 0.1, 5).unwrap();
        assert_eq!(d.len(), 200);
        assert!(d.labels.contains(&0) && d.labels.contains(&1));
    }
}
