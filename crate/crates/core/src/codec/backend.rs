use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

/// Lossless general-purpose compressor applied to every stream.
///
/// Only zlib (deflate with an adler32 trailer, as used inside npz archives)
/// is defined. The id and level are written to the artifact header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Zlib { level: u8 },
}

pub const ZLIB_ID: u8 = 1;
pub const DEFAULT_ZLIB_LEVEL: u8 = 6;

impl Default for Backend {
    fn default() -> Self {
        Backend::Zlib {
            level: DEFAULT_ZLIB_LEVEL,
        }
    }
}

impl Backend {
    pub fn id(&self) -> u8 {
        match self {
            Backend::Zlib { .. } => ZLIB_ID,
        }
    }

    pub fn level(&self) -> u8 {
        match self {
            Backend::Zlib { level } => *level,
        }
    }

    pub fn from_header(id: u8, level: u8) -> Option<Self> {
        match (id, level) {
            (ZLIB_ID, 0..=9) => Some(Backend::Zlib { level }),
            _ => None,
        }
    }

    /// Compresses `raw`. An empty input maps to an empty stream.
    pub fn compress(&self, raw: &[u8]) -> Vec<u8> {
        if raw.is_empty() {
            return Vec::new();
        }
        match self {
            Backend::Zlib { level } => {
                let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(u32::from(*level)));
                enc.write_all(raw).expect("writing to a Vec cannot fail");
                enc.finish().expect("writing to a Vec cannot fail")
            }
        }
    }

    /// Decompresses `stream`, requiring exactly `expected_len` output bytes.
    pub fn decompress(&self, stream: &[u8], expected_len: usize) -> Result<Vec<u8>, String> {
        if stream.is_empty() {
            return if expected_len == 0 {
                Ok(Vec::new())
            } else {
                Err(format!("empty stream, expected {expected_len} bytes"))
            };
        }
        match self {
            Backend::Zlib { .. } => {
                let mut dec = ZlibDecoder::new(stream);
                let mut out = Vec::with_capacity(expected_len);
                // Read one byte past the expectation to detect oversized payloads.
                dec.by_ref()
                    .take(expected_len as u64 + 1)
                    .read_to_end(&mut out)
                    .map_err(|e| format!("corrupt stream: {e}"))?;
                if out.len() != expected_len {
                    return Err(format!(
                        "decoded {} bytes, expected {expected_len}",
                        out.len()
                    ));
                }
                let consumed = dec.total_in() as usize;
                if consumed != stream.len() {
                    return Err(format!(
                        "{} trailing bytes after compressed data",
                        stream.len() - consumed
                    ));
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let b = Backend::default();
        let raw: Vec<u8> = (0..1000u32).map(|i| (i % 7) as u8).collect();
        let z = b.compress(&raw);
        assert!(z.len() < raw.len());
        assert_eq!(b.decompress(&z, raw.len()).unwrap(), raw);
        assert!(b.decompress(&z[..z.len() - 3], raw.len()).is_err());
        assert!(b.decompress(&z, raw.len() + 1).is_err());
        assert!(b.decompress(&z, raw.len() - 1).is_err());
        assert!(b.compress(&[]).is_empty());
        assert!(b.decompress(&[], 0).unwrap().is_empty());
        assert!(b.decompress(&[], 4).is_err());
    }

    #[test]
    fn compression_is_deterministic() {
        let b = Backend::default();
        let raw = b"abcabcabcabcabcabc0123".repeat(20);
        assert_eq!(b.compress(&raw), b.compress(&raw));
    }
}
