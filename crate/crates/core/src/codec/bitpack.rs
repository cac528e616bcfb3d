//! LSB-first bit packing for masks and fixed-width labels.

/// Packs bits LSB-first within each byte; the last byte is zero-padded.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

/// Inverse of [`pack_bits`]. Returns `None` if `bytes` is not exactly
/// `ceil(len / 8)` long or the padding bits are not zero.
pub fn unpack_bits(bytes: &[u8], len: usize) -> Option<Vec<bool>> {
    if bytes.len() != len.div_ceil(8) {
        return None;
    }
    if !len.is_multiple_of(8) {
        let pad = bytes[bytes.len() - 1] >> (len % 8);
        if pad != 0 {
            return None;
        }
    }
    Some((0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}

/// Minimum label width for `k` symbols: `ceil(log2 k)`, at least 1.
pub fn label_bit_width(k: usize) -> u8 {
    if k <= 2 {
        return 1;
    }
    (usize::BITS - (k - 1).leading_zeros()) as u8
}

/// Packs each value into `width` bits, value LSB first, into an LSB-first bit stream.
pub fn pack_fixed(values: &[u32], width: u8) -> Vec<u8> {
    assert!((1..=32).contains(&width), "width must be in 1..=32");
    let total_bits = values.len() * width as usize;
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    let mut bit = 0usize;
    for &v in values {
        debug_assert!(
            width == 32 || v >> width == 0,
            "value does not fit in width"
        );
        for b in 0..width {
            if v >> b & 1 == 1 {
                out[bit / 8] |= 1 << (bit % 8);
            }
            bit += 1;
        }
    }
    out
}

/// Inverse of [`pack_fixed`]. Returns `None` on a length mismatch or non-zero padding.
pub fn unpack_fixed(bytes: &[u8], width: u8, count: usize) -> Option<Vec<u32>> {
    if !(1..=32).contains(&width) {
        return None;
    }
    let total_bits = count * width as usize;
    if bytes.len() != total_bits.div_ceil(8) {
        return None;
    }
    if !total_bits.is_multiple_of(8) && bytes[bytes.len() - 1] >> (total_bits % 8) != 0 {
        return None;
    }
    let mut out = Vec::with_capacity(count);
    let mut bit = 0usize;
    for _ in 0..count {
        let mut v = 0u32;
        for b in 0..width {
            if bytes[bit / 8] >> (bit % 8) & 1 == 1 {
                v |= 1 << b;
            }
            bit += 1;
        }
        out.push(v);
    }
    Some(out)
}
