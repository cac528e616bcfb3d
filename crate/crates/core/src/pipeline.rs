//! Prune, quantize, encode and measure a flat weight vector or a model.

use crate::codec::{registry, Backend, CompressedArtifact, CompressionReport, EncodeInput};
use crate::error::PipelineError;
use crate::kmeans::{kmeans_fit, quantize, DEFAULT_MAX_ITERS};
use crate::nn::ModelParams;
use crate::prune::prune_to_sparsity;

/// Scheme choice for the post-training pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressMode {
    /// Pruning only; survivors stored as raw `f32`.
    MaskOnly,
    /// Pruning and k-means, with a separate mask stream.
    Masked,
    /// Pruning and k-means, zeros coded as an extra cluster.
    ZeroCluster,
}

impl CompressMode {
    pub const ALL: [CompressMode; 3] = [
        CompressMode::MaskOnly,
        CompressMode::Masked,
        CompressMode::ZeroCluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CompressMode::MaskOnly => "mask_only",
            CompressMode::Masked => "masked",
            CompressMode::ZeroCluster => "zero_cluster",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn quantizes(self) -> bool {
        self != CompressMode::MaskOnly
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressSettings {
    pub sparsity: f64,
    pub k: usize,
    pub mode: CompressMode,
    pub seed: u64,
    pub max_iters: usize,
}

impl CompressSettings {
    pub fn new(sparsity: f64, k: usize, mode: CompressMode) -> Self {
        CompressSettings {
            sparsity,
            k,
            mode,
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Compressed {
    pub artifact: CompressedArtifact,
    pub report: CompressionReport,
    /// Weights as recovered by decoding the artifact.
    pub decoded: Vec<f64>,
}

/// Runs the full pipeline on `w`. Sparsity 0 applies no compression at all
/// and stores the dense reference, whose ratio is 1.
pub fn compress_weights(
    w: &[f64],
    settings: &CompressSettings,
) -> Result<Compressed, PipelineError> {
    let reg = registry();
    let backend = Backend::default();
    let artifact = if settings.sparsity == 0.0 {
        let mask = crate::prune::SparsityMask::from_bits(vec![true; w.len()]);
        reg.get("dense")?
            .encode(&EncodeInput::raw(w, &mask), backend)?
    } else {
        let (pruned, mask) = prune_to_sparsity(w, settings.sparsity)?;
        let scheme = reg.get(settings.mode.name())?;
        if settings.mode.quantizes() {
            let codebook = kmeans_fit(
                &mask.gather(&pruned),
                settings.k,
                settings.seed,
                settings.max_iters,
            )?;
            scheme.encode(&EncodeInput::quantized(&mask, &codebook), backend)?
        } else {
            scheme.encode(&EncodeInput::raw(&pruned, &mask), backend)?
        }
    };
    let decoded = reg.decode(&artifact)?;
    let report = reg.compression_ratio(&artifact, w)?;
    Ok(Compressed {
        artifact,
        report,
        decoded,
    })
}

/// Compresses every parameter of `model` as one vector and returns the
/// model rebuilt from the decoded artifact.
pub fn compress_model(
    model: &ModelParams,
    settings: &CompressSettings,
) -> Result<(Compressed, ModelParams), PipelineError> {
    let c = compress_weights(&model.flatten(), settings)?;
    let rebuilt = model.unflatten(&c.decoded)?;
    Ok((c, rebuilt))
}

/// Prune-and-quantize without encoding, for accuracy-only evaluation.
pub fn prune_and_quantize(
    w: &[f64],
    sparsity: f64,
    k: Option<usize>,
    seed: u64,
) -> Result<Vec<f64>, PipelineError> {
    if sparsity == 0.0 {
        return Ok(w.to_vec());
    }
    let (pruned, mask) = prune_to_sparsity(w, sparsity)?;
    match k {
        None => Ok(pruned),
        Some(k) => {
            let cb = kmeans_fit(&mask.gather(&pruned), k, seed, DEFAULT_MAX_ITERS)?;
            Ok(quantize(&pruned, &mask, &cb)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(d: usize) -> Vec<f64> {
        (1..=d)
            .map(|i| ((i as f64) * 0.37).sin() * (1.0 + i as f64 / d as f64))
            .collect()
    }

    #[test]
    fn zero_sparsity_is_reference() {
        let w = weights(100);
        let c =
            compress_weights(&w, &CompressSettings::new(0.0, 16, CompressMode::Masked)).unwrap();
        assert_eq!(c.report.ratio, 1.0);
        assert_eq!(c.report.scheme, "dense");
        let f32_round: Vec<f64> = w.iter().map(|&v| v as f32 as f64).collect();
        assert_eq!(c.decoded, f32_round);
    }

    #[test]
    fn decoded_matches_quantized() {
        let w = weights(300);
        for mode in CompressMode::ALL {
            let s = CompressSettings::new(0.5, 8, mode);
            let c = compress_weights(&w, &s).unwrap();
            let expected = prune_and_quantize(&w, 0.5, mode.quantizes().then_some(8), 0).unwrap();
            let expected: Vec<f64> = expected.iter().map(|&v| v as f32 as f64).collect();
            assert_eq!(c.decoded, expected, "{mode:?}");
            assert_eq!(c.decoded.iter().filter(|&&v| v == 0.0).count(), 150);
            assert!(c.report.ratio > 1.0, "{mode:?} {}", c.report.ratio);
        }
    }

    #[test]
    fn zero_cluster_has_no_mask_stream() {
        let c = compress_weights(
            &weights(64),
            &CompressSettings::new(0.5, 4, CompressMode::ZeroCluster),
        )
        .unwrap();
        assert_eq!(c.artifact.mask_stream.len(), 0);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in CompressMode::ALL {
            assert_eq!(CompressMode::parse(m.name()), Some(m));
        }
        assert_eq!(CompressMode::parse("dense"), None);
    }
}
