//! The built-in encoding schemes.

use super::artifact::{ArtifactHeader, CompressedArtifact, FLAG_ZERO_CLUSTER, VERSION};
use super::backend::Backend;
use super::bitpack::{label_bit_width, pack_bits, pack_fixed, unpack_bits, unpack_fixed};
use super::{EncodeInput, EncodingScheme};
use crate::error::{CodecError, StreamKind};
use crate::kmeans::Codebook;
use crate::prune::SparsityMask;

pub const MASKED_ID: u8 = 0;
pub const ZERO_CLUSTER_ID: u8 = 1;
pub const MASK_ONLY_ID: u8 = 2;
pub const DENSE_ID: u8 = 3;

/// Width used for label streams that carry raw `f32` values.
const RAW_WIDTH: u8 = 32;

fn f32_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

fn f32_values(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect()
}

fn require_codebook<'a>(input: &EncodeInput<'a>) -> Result<&'a Codebook, CodecError> {
    let cb = input
        .codebook
        .ok_or_else(|| CodecError::Structure("this scheme needs a codebook".into()))?;
    if cb.labels.len() != input.mask.nonzero_count() {
        return Err(CodecError::Structure(format!(
            "{} labels for {} kept weights",
            cb.labels.len(),
            input.mask.nonzero_count()
        )));
    }
    cb.validate()
        .map_err(|e| CodecError::Structure(e.to_string()))?;
    Ok(cb)
}

fn require_weights<'a>(input: &EncodeInput<'a>) -> Result<&'a [f64], CodecError> {
    let w = input
        .weights
        .ok_or_else(|| CodecError::Structure("this scheme needs the weight values".into()))?;
    if w.len() != input.mask.len() {
        return Err(CodecError::Structure(format!(
            "{} weights for a mask of length {}",
            w.len(),
            input.mask.len()
        )));
    }
    if let Some(i) = w
        .iter()
        .zip(input.mask.bits())
        .position(|(&v, &b)| !b && v != 0.0)
    {
        return Err(CodecError::Structure(format!(
            "weight {i} is non-zero but masked out"
        )));
    }
    Ok(w)
}

fn to_u32(v: usize, what: &str) -> Result<u32, CodecError> {
    u32::try_from(v).map_err(|_| CodecError::Structure(format!("{what} does not fit in 32 bits")))
}

struct Expected {
    d: usize,
    nonzero: usize,
    k: usize,
}

/// Checks the header fields shared by every scheme and returns them as sizes.
fn check_header(
    a: &CompressedArtifact,
    scheme: u8,
    zero_cluster: bool,
) -> Result<Expected, CodecError> {
    let h = &a.header;
    let bad = |r: String| CodecError::decode(StreamKind::Header, r);
    if h.version != VERSION {
        return Err(bad(format!("unsupported version {}", h.version)));
    }
    if h.scheme != scheme {
        return Err(bad(format!(
            "scheme id {} handled by scheme {}",
            h.scheme, scheme
        )));
    }
    if h.zero_cluster_mode() != zero_cluster || h.flags & !FLAG_ZERO_CLUSTER != 0 {
        return Err(bad(format!("unexpected flags {:#04x}", h.flags)));
    }
    let d = usize::try_from(h.d).map_err(|_| bad("d too large".into()))?;
    let nonzero =
        usize::try_from(h.nonzero_count).map_err(|_| bad("nonzero_count too large".into()))?;
    if nonzero > d {
        return Err(bad(format!("nonzero_count {nonzero} exceeds d {d}")));
    }
    Ok(Expected {
        d,
        nonzero,
        k: h.k as usize,
    })
}

fn decode_mask(a: &CompressedArtifact, d: usize, nonzero: usize) -> Result<Vec<bool>, CodecError> {
    let raw = a
        .header
        .backend
        .decompress(&a.mask_stream, d.div_ceil(8))
        .map_err(|e| CodecError::decode(StreamKind::Mask, e))?;
    let bits = unpack_bits(&raw, d)
        .ok_or_else(|| CodecError::decode(StreamKind::Mask, "non-zero padding bits"))?;
    let set = bits.iter().filter(|&&b| b).count();
    if set != nonzero {
        return Err(CodecError::decode(
            StreamKind::Mask,
            format!("{set} set bits but header says {nonzero}"),
        ));
    }
    Ok(bits)
}

fn decode_labels(a: &CompressedArtifact, count: usize, k: usize) -> Result<Vec<u32>, CodecError> {
    let width = a.header.label_bit_width;
    if width != label_bit_width(k) {
        return Err(CodecError::decode(
            StreamKind::Header,
            format!("label width {width} does not match k = {k}"),
        ));
    }
    let raw_len = (count * width as usize).div_ceil(8);
    let raw = a
        .header
        .backend
        .decompress(&a.label_stream, raw_len)
        .map_err(|e| CodecError::decode(StreamKind::Labels, e))?;
    let labels = unpack_fixed(&raw, width, count)
        .ok_or_else(|| CodecError::decode(StreamKind::Labels, "non-zero padding bits"))?;
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(CodecError::decode(
            StreamKind::Labels,
            format!("label {l} out of range for k = {k}"),
        ));
    }
    Ok(labels)
}

fn decode_f32_stream(
    a: &CompressedArtifact,
    stream: &[u8],
    kind: StreamKind,
    count: usize,
) -> Result<Vec<f64>, CodecError> {
    let raw = a
        .header
        .backend
        .decompress(stream, count * 4)
        .map_err(|e| CodecError::decode(kind, e))?;
    Ok(f32_values(&raw))
}

fn header(
    scheme: u8,
    flags: u8,
    backend: Backend,
    width: u8,
    d: usize,
    nonzero: usize,
    k: usize,
) -> Result<ArtifactHeader, CodecError> {
    Ok(ArtifactHeader {
        version: VERSION,
        scheme,
        flags,
        backend,
        label_bit_width: width,
        d: d as u64,
        nonzero_count: nonzero as u64,
        k: to_u32(k, "k")?,
    })
}

/// Bit-packed mask, labels over the kept weights, `f32` centroids.
#[derive(Debug, Clone, Copy, Default)]
pub struct Masked;

impl EncodingScheme for Masked {
    fn name(&self) -> &'static str {
        "masked"
    }

    fn id(&self) -> u8 {
        MASKED_ID
    }

    fn quantizes(&self) -> bool {
        true
    }

    fn encode(
        &self,
        input: &EncodeInput<'_>,
        backend: Backend,
    ) -> Result<CompressedArtifact, CodecError> {
        let cb = require_codebook(input)?;
        let k = cb.k();
        let width = label_bit_width(k);
        Ok(CompressedArtifact {
            header: header(
                MASKED_ID,
                0,
                backend,
                width,
                input.mask.len(),
                input.mask.nonzero_count(),
                k,
            )?,
            mask_stream: backend.compress(&pack_bits(input.mask.bits())),
            label_stream: backend.compress(&pack_fixed(&cb.labels, width)),
            centroid_stream: backend.compress(&f32_bytes(cb.centroids.iter().copied())),
        })
    }

    fn decode(&self, a: &CompressedArtifact) -> Result<Vec<f64>, CodecError> {
        let e = check_header(a, MASKED_ID, false)?;
        if e.k == 0 {
            return Err(CodecError::decode(StreamKind::Header, "k must be >= 1"));
        }
        let bits = decode_mask(a, e.d, e.nonzero)?;
        let labels = decode_labels(a, e.nonzero, e.k)?;
        let centroids = decode_f32_stream(a, &a.centroid_stream, StreamKind::Centroids, e.k)?;
        let mut labels = labels.into_iter();
        Ok(bits
            .into_iter()
            .map(|b| {
                if b {
                    centroids[labels.next().unwrap() as usize]
                } else {
                    0.0
                }
            })
            .collect())
    }

    fn label_counts(&self, a: &CompressedArtifact) -> Result<Option<Vec<usize>>, CodecError> {
        let e = check_header(a, MASKED_ID, false)?;
        let labels = decode_labels(a, e.nonzero, e.k)?;
        Ok(Some(histogram(&labels, e.k)))
    }
}

fn histogram(labels: &[u32], k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l as usize] += 1;
    }
    counts
}

/// No mask: pruned weights become an extra cluster with centroid 0 stored
/// last, and labels cover every position.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroCluster;

impl EncodingScheme for ZeroCluster {
    fn name(&self) -> &'static str {
        "zero_cluster"
    }

    fn id(&self) -> u8 {
        ZERO_CLUSTER_ID
    }

    fn quantizes(&self) -> bool {
        true
    }

    fn encode(
        &self,
        input: &EncodeInput<'_>,
        backend: Backend,
    ) -> Result<CompressedArtifact, CodecError> {
        let cb = require_codebook(input)?;
        let zero_label = to_u32(cb.k(), "k")?;
        let k = cb.k() + 1;
        let width = label_bit_width(k);
        let mut kept = cb.labels.iter();
        let labels: Vec<u32> = input
            .mask
            .bits()
            .iter()
            .map(|&b| if b { *kept.next().unwrap() } else { zero_label })
            .collect();
        let centroids = cb.centroids.iter().copied().chain(std::iter::once(0.0));
        Ok(CompressedArtifact {
            header: header(
                ZERO_CLUSTER_ID,
                FLAG_ZERO_CLUSTER,
                backend,
                width,
                input.mask.len(),
                input.mask.nonzero_count(),
                k,
            )?,
            mask_stream: Vec::new(),
            label_stream: backend.compress(&pack_fixed(&labels, width)),
            centroid_stream: backend.compress(&f32_bytes(centroids)),
        })
    }

    fn decode(&self, a: &CompressedArtifact) -> Result<Vec<f64>, CodecError> {
        let e = check_header(a, ZERO_CLUSTER_ID, true)?;
        if e.k < 2 {
            return Err(CodecError::decode(
                StreamKind::Header,
                "k must be >= 2 in zero-cluster mode",
            ));
        }
        if !a.mask_stream.is_empty() {
            return Err(CodecError::decode(
                StreamKind::Mask,
                "must be empty in zero-cluster mode",
            ));
        }
        let labels = decode_labels(a, e.d, e.k)?;
        let centroids = decode_f32_stream(a, &a.centroid_stream, StreamKind::Centroids, e.k)?;
        if centroids[e.k - 1] != 0.0 {
            return Err(CodecError::decode(
                StreamKind::Centroids,
                "last centroid must be 0",
            ));
        }
        let zero_label = (e.k - 1) as u32;
        let kept = labels.iter().filter(|&&l| l != zero_label).count();
        if kept != e.nonzero {
            return Err(CodecError::decode(
                StreamKind::Labels,
                format!("{kept} non-zero labels but header says {}", e.nonzero),
            ));
        }
        Ok(labels.into_iter().map(|l| centroids[l as usize]).collect())
    }

    fn label_counts(&self, a: &CompressedArtifact) -> Result<Option<Vec<usize>>, CodecError> {
        let e = check_header(a, ZERO_CLUSTER_ID, true)?;
        let labels = decode_labels(a, e.d, e.k)?;
        let mut counts = histogram(&labels, e.k);
        // The zero cluster is not part of the quantized non-zero population.
        counts.pop();
        Ok(Some(counts))
    }
}

/// Bit-packed mask plus the kept weights as raw `f32` values, no quantization.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskOnly;

impl EncodingScheme for MaskOnly {
    fn name(&self) -> &'static str {
        "mask_only"
    }

    fn id(&self) -> u8 {
        MASK_ONLY_ID
    }

    fn quantizes(&self) -> bool {
        false
    }

    fn encode(
        &self,
        input: &EncodeInput<'_>,
        backend: Backend,
    ) -> Result<CompressedArtifact, CodecError> {
        let w = require_weights(input)?;
        Ok(CompressedArtifact {
            header: header(
                MASK_ONLY_ID,
                0,
                backend,
                RAW_WIDTH,
                input.mask.len(),
                input.mask.nonzero_count(),
                0,
            )?,
            mask_stream: backend.compress(&pack_bits(input.mask.bits())),
            label_stream: backend.compress(&f32_bytes(input.mask.gather(w).into_iter())),
            centroid_stream: Vec::new(),
        })
    }

    fn decode(&self, a: &CompressedArtifact) -> Result<Vec<f64>, CodecError> {
        let e = check_header(a, MASK_ONLY_ID, false)?;
        check_raw(a, e.k)?;
        let bits = decode_mask(a, e.d, e.nonzero)?;
        let values = decode_f32_stream(a, &a.label_stream, StreamKind::Labels, e.nonzero)?;
        let mut values = values.into_iter();
        Ok(bits
            .into_iter()
            .map(|b| if b { values.next().unwrap() } else { 0.0 })
            .collect())
    }
}

fn check_raw(a: &CompressedArtifact, k: usize) -> Result<(), CodecError> {
    if k != 0 || a.header.label_bit_width != RAW_WIDTH {
        return Err(CodecError::decode(
            StreamKind::Header,
            "raw-value schemes need k = 0 and width 32",
        ));
    }
    if !a.centroid_stream.is_empty() {
        return Err(CodecError::decode(
            StreamKind::Centroids,
            "must be empty for raw-value schemes",
        ));
    }
    Ok(())
}

/// Every weight as a raw `f32`; the uncompressed reference at sparsity 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct Dense;

impl EncodingScheme for Dense {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn id(&self) -> u8 {
        DENSE_ID
    }

    fn quantizes(&self) -> bool {
        false
    }

    fn encode(
        &self,
        input: &EncodeInput<'_>,
        backend: Backend,
    ) -> Result<CompressedArtifact, CodecError> {
        let w = require_weights(input)?;
        let nonzero = SparsityMask::of_nonzeros(w).nonzero_count();
        Ok(CompressedArtifact {
            header: header(DENSE_ID, 0, backend, RAW_WIDTH, w.len(), nonzero, 0)?,
            mask_stream: Vec::new(),
            label_stream: backend.compress(&f32_bytes(w.iter().copied())),
            centroid_stream: Vec::new(),
        })
    }

    fn decode(&self, a: &CompressedArtifact) -> Result<Vec<f64>, CodecError> {
        let e = check_header(a, DENSE_ID, false)?;
        check_raw(a, e.k)?;
        if !a.mask_stream.is_empty() {
            return Err(CodecError::decode(
                StreamKind::Mask,
                "must be empty for the dense scheme",
            ));
        }
        decode_f32_stream(a, &a.label_stream, StreamKind::Labels, e.d)
    }

    fn is_uncompressed_reference(&self) -> bool {
        true
    }
}
