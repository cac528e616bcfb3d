//! Coding of pruned and quantized weights into a [`CompressedArtifact`].
//!
//! Each way of laying out the streams is an [`EncodingScheme`]. Schemes are
//! looked up by name (for configuration and the command line) or by the id
//! byte stored in the artifact header (for decoding).

pub mod artifact;
pub mod backend;
pub mod bitpack;
pub mod schemes;

use std::sync::OnceLock;

pub use artifact::{ArtifactHeader, CompressedArtifact, StreamSizes, HEADER_LEN};
pub use backend::Backend;

use crate::error::{CodecError, StreamKind};
use crate::kmeans::{entropy_of_counts, Codebook};
use crate::prune::SparsityMask;

/// What an encoder gets to work with. Quantizing schemes read the codebook,
/// raw-value schemes read the weights.
#[derive(Debug, Clone, Copy)]
pub struct EncodeInput<'a> {
    pub mask: &'a SparsityMask,
    pub codebook: Option<&'a Codebook>,
    pub weights: Option<&'a [f64]>,
}

impl<'a> EncodeInput<'a> {
    pub fn quantized(mask: &'a SparsityMask, codebook: &'a Codebook) -> Self {
        EncodeInput {
            mask,
            codebook: Some(codebook),
            weights: None,
        }
    }

    /// `weights` must already be pruned to `mask`.
    pub fn raw(weights: &'a [f64], mask: &'a SparsityMask) -> Self {
        EncodeInput {
            mask,
            codebook: None,
            weights: Some(weights),
        }
    }
}

pub trait EncodingScheme: Send + Sync {
    /// Name used in configuration files and on the command line.
    fn name(&self) -> &'static str;

    /// Scheme byte written to the artifact header.
    fn id(&self) -> u8;

    /// Whether the scheme stores k-means labels (and so needs a codebook).
    fn quantizes(&self) -> bool;

    fn encode(
        &self,
        input: &EncodeInput<'_>,
        backend: Backend,
    ) -> Result<CompressedArtifact, CodecError>;

    fn decode(&self, artifact: &CompressedArtifact) -> Result<Vec<f64>, CodecError>;

    /// Populations of the non-zero clusters, if the scheme stores labels.
    fn label_counts(
        &self,
        _artifact: &CompressedArtifact,
    ) -> Result<Option<Vec<usize>>, CodecError> {
        Ok(None)
    }

    /// True for a scheme that applies no compression method at all; its
    /// ratio is reported as exactly 1.
    fn is_uncompressed_reference(&self) -> bool {
        false
    }
}

/// Name- and id-indexed set of encoding schemes.
pub struct SchemeRegistry {
    schemes: Vec<Box<dyn EncodingScheme>>,
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        SchemeRegistry {
            schemes: Vec::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(schemes::Masked));
        r.register(Box::new(schemes::ZeroCluster));
        r.register(Box::new(schemes::MaskOnly));
        r.register(Box::new(schemes::Dense));
        r
    }

    /// Adds a scheme, replacing any scheme with the same name or id.
    pub fn register(&mut self, scheme: Box<dyn EncodingScheme>) {
        self.schemes
            .retain(|s| s.name() != scheme.name() && s.id() != scheme.id());
        self.schemes.push(scheme);
    }

    pub fn get(&self, name: &str) -> Result<&dyn EncodingScheme, CodecError> {
        self.schemes
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| CodecError::UnknownScheme(name.to_string()))
    }

    pub fn by_id(&self, id: u8) -> Option<&dyn EncodingScheme> {
        self.schemes
            .iter()
            .find(|s| s.id() == id)
            .map(|s| s.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.schemes.iter().map(|s| s.name()).collect()
    }

    pub fn decode(&self, artifact: &CompressedArtifact) -> Result<Vec<f64>, CodecError> {
        self.scheme_of(artifact)?.decode(artifact)
    }

    fn scheme_of(&self, artifact: &CompressedArtifact) -> Result<&dyn EncodingScheme, CodecError> {
        self.by_id(artifact.header.scheme).ok_or_else(|| {
            CodecError::decode(
                StreamKind::Header,
                format!("unknown scheme id {}", artifact.header.scheme),
            )
        })
    }

    pub fn compression_ratio(
        &self,
        artifact: &CompressedArtifact,
        original: &[f64],
    ) -> Result<CompressionReport, CodecError> {
        let h = &artifact.header;
        if original.len() as u64 != h.d {
            return Err(CodecError::Argument(format!(
                "original has {} weights, artifact has {}",
                original.len(),
                h.d
            )));
        }
        let scheme = self.scheme_of(artifact)?;
        let baseline_size = baseline_size(original, h.backend);
        let stream_sizes = artifact.stream_sizes();
        let total_size = stream_sizes.total();
        let ratio = if scheme.is_uncompressed_reference() {
            1.0
        } else {
            baseline_size as f64 / total_size as f64
        };
        let entropy_bits = match scheme.label_counts(artifact)? {
            Some(counts) if counts.iter().any(|&c| c > 0) => {
                Some(entropy_of_counts(&counts).expect("non-empty counts"))
            }
            _ => None,
        };
        let sparsity = if h.d == 0 {
            0.0
        } else {
            1.0 - h.nonzero_count as f64 / h.d as f64
        };
        Ok(CompressionReport {
            scheme: scheme.name(),
            sparsity,
            ratio,
            entropy_bits,
            stream_sizes,
            total_size,
            baseline_size,
        })
    }
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

/// The process-wide registry of built-in schemes.
pub fn registry() -> &'static SchemeRegistry {
    static REGISTRY: OnceLock<SchemeRegistry> = OnceLock::new();
    REGISTRY.get_or_init(SchemeRegistry::with_builtin)
}

/// Quantized coding modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Masked,
    ZeroCluster,
}

impl Mode {
    pub fn scheme_name(self) -> &'static str {
        match self {
            Mode::Masked => "masked",
            Mode::ZeroCluster => "zero_cluster",
        }
    }
}

/// Bit-packs a mask LSB-first (before backend compression).
pub fn pack_mask(mask: &SparsityMask) -> Vec<u8> {
    bitpack::pack_bits(mask.bits())
}

pub fn encode(
    mask: &SparsityMask,
    codebook: &Codebook,
    mode: Mode,
) -> Result<CompressedArtifact, CodecError> {
    registry()
        .get(mode.scheme_name())?
        .encode(&EncodeInput::quantized(mask, codebook), Backend::default())
}

pub fn decode(artifact: &CompressedArtifact) -> Result<Vec<f64>, CodecError> {
    registry().decode(artifact)
}

pub fn compression_ratio(
    artifact: &CompressedArtifact,
    original: &[f64],
) -> Result<CompressionReport, CodecError> {
    registry().compression_ratio(artifact, original)
}

/// Size of the original weights as `f32` little-endian through the same backend.
pub fn baseline_size(original: &[f64], backend: Backend) -> usize {
    let raw: Vec<u8> = original
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    backend.compress(&raw).len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub scheme: &'static str,
    pub sparsity: f64,
    pub ratio: f64,
    /// Entropy of the non-zero cluster populations, for schemes that store labels.
    pub entropy_bits: Option<f64>,
    pub stream_sizes: StreamSizes,
    pub total_size: usize,
    pub baseline_size: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans::kmeans_fit;

    fn fixture() -> (Vec<f64>, SparsityMask, Codebook) {
        let mut w = vec![0.0; 16];
        w[3] = 0.5;
        w[11] = 0.5;
        let mask = SparsityMask::of_nonzeros(&w);
        let cb = kmeans_fit(&mask.gather(&w), 1, 0, 10).unwrap();
        (w, mask, cb)
    }

    #[test]
    fn two_survivor_fixture_round_trips() {
        let (w, mask, cb) = fixture();
        for mode in [Mode::Masked, Mode::ZeroCluster] {
            let a = encode(&mask, &cb, mode).unwrap();
            assert_eq!(decode(&a).unwrap(), w, "{mode:?}");
            let bytes = a.to_bytes().unwrap();
            assert_eq!(bytes.len(), a.total_size());
            assert_eq!(CompressedArtifact::from_bytes(&bytes).unwrap(), a);
        }
    }

    #[test]
    fn zero_cluster_has_empty_mask_and_extra_centroid() {
        let (_, mask, cb) = fixture();
        let a = encode(&mask, &cb, Mode::ZeroCluster).unwrap();
        assert!(a.mask_stream.is_empty());
        assert!(a.header.zero_cluster_mode());
        assert_eq!(a.header.k, 2);
        assert_eq!(a.header.label_bit_width, 1);
    }

    #[test]
    fn truncated_label_stream_is_an_error() {
        let (_, mask, cb) = fixture();
        let mut a = encode(&mask, &cb, Mode::Masked).unwrap();
        a.label_stream.truncate(a.label_stream.len() - 2);
        match decode(&a) {
            Err(CodecError::Decode { stream, .. }) => assert_eq!(stream, StreamKind::Labels),
            other => panic!("expected label stream error, got {other:?}"),
        }
        let mut bytes = encode(&mask, &cb, Mode::Masked)
            .unwrap()
            .to_bytes()
            .unwrap();
        bytes.pop();
        assert!(matches!(
            CompressedArtifact::from_bytes(&bytes),
            Err(CodecError::Decode {
                stream: StreamKind::Centroids,
                ..
            })
        ));
    }

    #[test]
    fn out_of_range_label_is_an_error() {
        // k = 3 uses two bits, so label 3 is representable but invalid.
        let w = [1.0, 2.0, 3.0, 0.0];
        let mask = SparsityMask::of_nonzeros(&w);
        let cb = kmeans_fit(&mask.gather(&w), 3, 0, 10).unwrap();
        let mut a = encode(&mask, &cb, Mode::Masked).unwrap();
        let b = a.header.backend;
        a.label_stream = b.compress(&bitpack::pack_fixed(&[0, 3, 1], 2));
        match decode(&a) {
            Err(CodecError::Decode { stream, reason }) => {
                assert_eq!(stream, StreamKind::Labels);
                assert!(reason.contains("out of range"), "{reason}");
            }
            other => panic!("expected label range error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_input_rejected_before_encoding() {
        let (_, mask, mut cb) = fixture();
        cb.labels.push(0);
        cb.counts[0] += 1;
        assert!(matches!(
            encode(&mask, &cb, Mode::Masked),
            Err(CodecError::Structure(_))
        ));
        let raw = registry().get("mask_only").unwrap();
        let w = vec![1.0; 3];
        assert!(raw
            .encode(&EncodeInput::raw(&w, &mask), Backend::default())
            .is_err());
    }

    #[test]
    fn bad_magic_and_version() {
        let (_, mask, cb) = fixture();
        let mut bytes = encode(&mask, &cb, Mode::Masked)
            .unwrap()
            .to_bytes()
            .unwrap();
        bytes[4] = 9;
        assert!(CompressedArtifact::from_bytes(&bytes).is_err());
        bytes[0] = b'X';
        assert!(CompressedArtifact::from_bytes(&bytes).is_err());
    }

    #[test]
    fn registry_lookup() {
        let r = SchemeRegistry::with_builtin();
        assert_eq!(
            r.names(),
            vec!["masked", "zero_cluster", "mask_only", "dense"]
        );
        assert!(matches!(
            r.get("huffman"),
            Err(CodecError::UnknownScheme(_))
        ));
        assert_eq!(r.by_id(2).unwrap().name(), "mask_only");
        assert!(r.by_id(200).is_none());
    }

    #[test]
    fn dense_reports_unit_ratio() {
        let w: Vec<f64> = (1..65).map(|i| (i as f64 * 0.37).sin()).collect();
        let mask = SparsityMask::of_nonzeros(&w);
        let a = registry()
            .get("dense")
            .unwrap()
            .encode(&EncodeInput::raw(&w, &mask), Backend::default())
            .unwrap();
        let report = compression_ratio(&a, &w).unwrap();
        assert_eq!(report.ratio, 1.0);
        assert_eq!(report.sparsity, 0.0);
        assert_eq!(report.stream_sizes.labels, report.baseline_size);
        assert!(compression_ratio(&a, &w[1..]).is_err());
    }

    #[test]
    fn mask_stream_raw_size() {
        for d in [1usize, 7, 8, 9, 17] {
            let mask = SparsityMask::from_bits((0..d).map(|i| i % 3 == 0).collect());
            assert_eq!(pack_mask(&mask).len(), d.div_ceil(8));
        }
    }
}
