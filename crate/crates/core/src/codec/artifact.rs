//! On-disk container for compressed weights.
//!
//! Layout (all integers little-endian), 44-byte header followed by the
//! three streams in order:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `CWCA`                            |
//! | 4      | 2    | version (1)                             |
//! | 6      | 1    | scheme id                               |
//! | 7      | 1    | flags, bit 0 = zero-cluster mode        |
//! | 8      | 1    | backend id (1 = zlib)                   |
//! | 9      | 1    | backend level                           |
//! | 10     | 1    | label bit width                         |
//! | 11     | 1    | reserved, 0                             |
//! | 12     | 8    | d, total weight count                   |
//! | 20     | 8    | non-zero count                          |
//! | 28     | 4    | k, number of stored centroids           |
//! | 32     | 4    | mask stream length                      |
//! | 36     | 4    | label stream length                     |
//! | 40     | 4    | centroid stream length                  |

use super::backend::Backend;
use crate::error::{CodecError, StreamKind};

pub const MAGIC: [u8; 4] = *b"CWCA";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 44;
pub const FLAG_ZERO_CLUSTER: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArtifactHeader {
    pub version: u16,
    pub scheme: u8,
    pub flags: u8,
    pub backend: Backend,
    pub label_bit_width: u8,
    pub d: u64,
    pub nonzero_count: u64,
    pub k: u32,
}

impl ArtifactHeader {
    pub fn zero_cluster_mode(&self) -> bool {
        self.flags & FLAG_ZERO_CLUSTER != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedArtifact {
    pub header: ArtifactHeader,
    pub mask_stream: Vec<u8>,
    pub label_stream: Vec<u8>,
    pub centroid_stream: Vec<u8>,
}

/// Byte sizes of the parts of a container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSizes {
    pub header: usize,
    pub mask: usize,
    pub labels: usize,
    pub centroids: usize,
}

impl StreamSizes {
    pub fn total(&self) -> usize {
        self.header + self.mask + self.labels + self.centroids
    }
}

fn stream_len(s: &[u8], kind: StreamKind) -> Result<u32, CodecError> {
    u32::try_from(s.len()).map_err(|_| CodecError::Structure(format!("{kind} exceeds 4 GiB")))
}

impl CompressedArtifact {
    pub fn stream_sizes(&self) -> StreamSizes {
        StreamSizes {
            header: HEADER_LEN,
            mask: self.mask_stream.len(),
            labels: self.label_stream.len(),
            centroids: self.centroid_stream.len(),
        }
    }

    pub fn total_size(&self) -> usize {
        self.stream_sizes().total()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CodecError> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.total_size());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.push(h.scheme);
        out.push(h.flags);
        out.push(h.backend.id());
        out.push(h.backend.level());
        out.push(h.label_bit_width);
        out.push(0);
        out.extend_from_slice(&h.d.to_le_bytes());
        out.extend_from_slice(&h.nonzero_count.to_le_bytes());
        out.extend_from_slice(&h.k.to_le_bytes());
        out.extend_from_slice(&stream_len(&self.mask_stream, StreamKind::Mask)?.to_le_bytes());
        out.extend_from_slice(&stream_len(&self.label_stream, StreamKind::Labels)?.to_le_bytes());
        out.extend_from_slice(
            &stream_len(&self.centroid_stream, StreamKind::Centroids)?.to_le_bytes(),
        );
        debug_assert_eq!(out.len(), HEADER_LEN);
        out.extend_from_slice(&self.mask_stream);
        out.extend_from_slice(&self.label_stream);
        out.extend_from_slice(&self.centroid_stream);
        Ok(out)
    }

    /// Parses a container, checking magic, version and that the stream
    /// lengths account for every byte.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let header_err = |r: &str| CodecError::decode(StreamKind::Header, r);
        if bytes.len() < HEADER_LEN {
            return Err(header_err("truncated header"));
        }
        if bytes[0..4] != MAGIC {
            return Err(header_err("bad magic"));
        }
        let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != VERSION {
            return Err(header_err(&format!("unsupported version {version}")));
        }
        let backend = Backend::from_header(bytes[8], bytes[9])
            .ok_or_else(|| header_err("unknown compression backend"))?;
        let header = ArtifactHeader {
            version,
            scheme: bytes[6],
            flags: bytes[7],
            backend,
            label_bit_width: bytes[10],
            d: u64_at(12),
            nonzero_count: u64_at(20),
            k: u32_at(28),
        };
        let lens = [
            u32_at(32) as usize,
            u32_at(36) as usize,
            u32_at(40) as usize,
        ];
        let kinds = [StreamKind::Mask, StreamKind::Labels, StreamKind::Centroids];
        let mut offset = HEADER_LEN;
        let mut streams = Vec::with_capacity(3);
        for (len, kind) in lens.into_iter().zip(kinds) {
            let end = offset
                .checked_add(len)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| CodecError::decode(kind, "truncated"))?;
            streams.push(bytes[offset..end].to_vec());
            offset = end;
        }
        if offset != bytes.len() {
            return Err(header_err(&format!(
                "{} unexpected trailing bytes",
                bytes.len() - offset
            )));
        }
        let centroid_stream = streams.pop().unwrap();
        let label_stream = streams.pop().unwrap();
        let mask_stream = streams.pop().unwrap();
        Ok(CompressedArtifact {
            header,
            mask_stream,
            label_stream,
            centroid_stream,
        })
    }
}
