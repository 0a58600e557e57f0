//! Binary descriptors, Hamming kernels and substring keys.
//!
//! Bit `i` of a descriptor is bit `i % 8` (least significant first) of byte
//! `i / 8`. Descriptors are held as little-endian 64-bit words, so bit `i`
//! is also bit `i % 64` of word `i / 64`.

use rand::Rng;

use crate::error::{Error, Result};

/// Largest supported descriptor length in bits.
pub const MAX_BITS: usize = 512;
/// ORB descriptor length.
pub const DEFAULT_BITS: usize = 256;
pub const DEFAULT_PREFIX_BITS: usize = 64;
pub const DEFAULT_PARTIAL_THRESHOLD: u32 = 24;

const MAX_WORDS: usize = MAX_BITS / 64;
/// Widest substring that still fits a `u32` hash key.
pub const MAX_SUBSTRING_BITS: u32 = 32;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor {
    words: [u64; MAX_WORDS],
    bits: u16,
}

impl std::fmt::Debug for BinaryDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BinaryDescriptor({} bits, ", self.bits)?;
        for b in self.to_bytes() {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

fn check_bits(bits: usize) -> Result<()> {
    if bits == 0 || bits % 8 != 0 || bits > MAX_BITS {
        return Err(Error::invalid(format!(
            "descriptor length must be a positive multiple of 8 up to {MAX_BITS}, got {bits}"
        )));
    }
    Ok(())
}

impl BinaryDescriptor {
    pub fn zeros(bits: usize) -> Result<Self> {
        check_bits(bits)?;
        Ok(Self {
            words: [0; MAX_WORDS],
            bits: bits as u16,
        })
    }

    pub fn ones(bits: usize) -> Result<Self> {
        Ok(Self::zeros(bits)?.complement())
    }

    /// Builds a descriptor from its byte serialization; the length is `8 * bytes.len()`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Self::zeros(bytes.len() * 8)?;
        for (w, chunk) in d.words.iter_mut().zip(bytes.chunks(8)) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            *w = u64::from_le_bytes(buf);
        }
        Ok(d)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, bits: usize) -> Result<Self> {
        let mut d = Self::zeros(bits)?;
        let n = d.word_count();
        for w in d.words[..n].iter_mut() {
            *w = rng.random();
        }
        d.clear_padding();
        Ok(d)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len_bits() / 8;
        self.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(n)
            .collect()
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        let n = self.len_bits() / 8;
        let start = out.len();
        for w in &self.words[..self.word_count()] {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(start + n);
    }

    #[inline]
    pub fn len_bits(&self) -> usize {
        self.bits as usize
    }

    #[inline]
    fn word_count(&self) -> usize {
        (self.bits as usize).div_ceil(64)
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words[..self.word_count()]
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len_bits(), "bit index {i} out of range");
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        assert!(i < self.len_bits(), "bit index {i} out of range");
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip_bit(&mut self, i: usize) {
        assert!(i < self.len_bits(), "bit index {i} out of range");
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn complement(&self) -> Self {
        let mut out = *self;
        let n = self.word_count();
        for w in out.words[..n].iter_mut() {
            *w = !*w;
        }
        out.clear_padding();
        out
    }

    fn clear_padding(&mut self) {
        let bits = self.len_bits();
        let full = bits / 64;
        if bits % 64 != 0 {
            self.words[full] &= (1u64 << (bits % 64)) - 1;
        }
        let n = self.word_count();
        for w in self.words.iter_mut().skip(n) {
            *w = 0;
        }
    }

    /// Hamming distance without the length check. Both descriptors must share a length.
    #[inline]
    pub fn distance(&self, other: &Self) -> u32 {
        debug_assert_eq!(self.bits, other.bits);
        self.words[..self.word_count()]
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    /// Hamming distance over the first `prefix_bits` bits, unchecked.
    #[inline]
    pub fn prefix_distance(&self, other: &Self, prefix_bits: usize) -> u32 {
        let full = prefix_bits / 64;
        let mut acc: u32 = self.words[..full]
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum();
        let rem = prefix_bits % 64;
        if rem != 0 {
            let mask = (1u64 << rem) - 1;
            acc += ((self.words[full] ^ other.words[full]) & mask).count_ones();
        }
        acc
    }

    /// Reads `len` bits starting at bit `offset` as an unsigned integer (bit `offset` is the LSB).
    #[inline]
    pub fn bits_at(&self, offset: usize, len: u32) -> u32 {
        debug_assert!(len >= 1 && len <= MAX_SUBSTRING_BITS);
        debug_assert!(offset + len as usize <= self.len_bits());
        let w = offset / 64;
        let shift = offset % 64;
        let mut v = self.words[w] >> shift;
        if shift + len as usize > 64 {
            v |= self.words[w + 1] << (64 - shift);
        }
        (v & ((1u64 << len) - 1)) as u32
    }
}

/// A frame identifier and its ordered descriptors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameFeatures {
    pub frame_id: u32,
    pub descriptors: Vec<BinaryDescriptor>,
}

impl FrameFeatures {
    pub fn new(frame_id: u32, descriptors: Vec<BinaryDescriptor>) -> Self {
        Self {
            frame_id,
            descriptors,
        }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

fn check_same_len(a: &BinaryDescriptor, b: &BinaryDescriptor) -> Result<()> {
    if a.bits != b.bits {
        return Err(Error::LengthMismatch {
            expected: a.len_bits(),
            found: b.len_bits(),
        });
    }
    Ok(())
}

pub fn hamming_distance(a: &BinaryDescriptor, b: &BinaryDescriptor) -> Result<u32> {
    check_same_len(a, b)?;
    Ok(a.distance(b))
}

pub fn partial_hamming(a: &BinaryDescriptor, b: &BinaryDescriptor, prefix_bits: usize) -> Result<u32> {
    check_same_len(a, b)?;
    check_prefix(prefix_bits, a.len_bits())?;
    Ok(a.prefix_distance(b, prefix_bits))
}

/// True when `b` can be discarded from its prefix distance alone.
pub fn early_reject(
    a: &BinaryDescriptor,
    b: &BinaryDescriptor,
    partial_threshold: u32,
    prefix_bits: usize,
) -> Result<bool> {
    Ok(partial_hamming(a, b, prefix_bits)? > partial_threshold)
}

fn check_prefix(prefix_bits: usize, total_bits: usize) -> Result<()> {
    if prefix_bits == 0 || prefix_bits > total_bits || prefix_bits % 8 != 0 {
        return Err(Error::invalid(format!(
            "prefix of {prefix_bits} bits must be a positive multiple of 8 no longer than {total_bits}"
        )));
    }
    Ok(())
}

/// Partial-distance filter applied before full Hamming evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EarlyTermination {
    pub prefix_bits: usize,
    pub partial_threshold: u32,
}

impl Default for EarlyTermination {
    fn default() -> Self {
        Self {
            prefix_bits: DEFAULT_PREFIX_BITS,
            partial_threshold: DEFAULT_PARTIAL_THRESHOLD,
        }
    }
}

impl EarlyTermination {
    pub fn validate(&self, total_bits: usize) -> Result<()> {
        check_prefix(self.prefix_bits, total_bits)
    }

    #[inline]
    pub fn rejects(&self, a: &BinaryDescriptor, b: &BinaryDescriptor) -> bool {
        a.prefix_distance(b, self.prefix_bits) > self.partial_threshold
    }
}

/// Split of an `L`-bit descriptor into `m` contiguous substrings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstringLayout {
    lengths: Vec<u32>,
    offsets: Vec<usize>,
    total_bits: usize,
}

impl SubstringLayout {
    /// Balanced split: lengths differ by at most one, longer substrings first.
    pub fn balanced(total_bits: usize, m: usize) -> Result<Self> {
        if m == 0 || m > total_bits {
            return Err(Error::invalid(format!(
                "cannot split {total_bits} bits into {m} substrings"
            )));
        }
        let q = (total_bits / m) as u32;
        let rem = total_bits % m;
        let lengths = (0..m).map(|k| if k < rem { q + 1 } else { q }).collect();
        Self::from_lengths(lengths)
    }

    pub fn from_lengths(lengths: Vec<u32>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::invalid("layout needs at least one substring"));
        }
        if let Some(&bad) = lengths
            .iter()
            .find(|&&l| l == 0 || l > MAX_SUBSTRING_BITS)
        {
            return Err(Error::invalid(format!(
                "substring length {bad} outside 1..={MAX_SUBSTRING_BITS}"
            )));
        }
        let mut offsets = Vec::with_capacity(lengths.len());
        let mut acc = 0usize;
        for &l in &lengths {
            offsets.push(acc);
            acc += l as usize;
        }
        check_bits(acc)?;
        Ok(Self {
            lengths,
            offsets,
            total_bits: acc,
        })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[u32] {
        &self.lengths
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    pub fn check_descriptor(&self, d: &BinaryDescriptor) -> Result<()> {
        if d.len_bits() != self.total_bits {
            return Err(Error::LengthMismatch {
                expected: self.total_bits,
                found: d.len_bits(),
            });
        }
        Ok(())
    }

    /// Key of substring `k`, unchecked.
    #[inline]
    pub fn key(&self, d: &BinaryDescriptor, k: usize) -> u32 {
        d.bits_at(self.offsets[k], self.lengths[k])
    }
}

pub fn extract_substrings(d: &BinaryDescriptor, layout: &SubstringLayout) -> Result<Vec<u32>> {
    layout.check_descriptor(d)?;
    Ok((0..layout.m()).map(|k| layout.key(d, k)).collect())
}

/// Inverse of [`extract_substrings`].
pub fn assemble_substrings(keys: &[u32], layout: &SubstringLayout) -> Result<BinaryDescriptor> {
    if keys.len() != layout.m() {
        return Err(Error::invalid(format!(
            "expected {} keys, got {}",
            layout.m(),
            keys.len()
        )));
    }
    let mut d = BinaryDescriptor::zeros(layout.total_bits())?;
    for (k, &key) in keys.iter().enumerate() {
        let len = layout.lengths()[k];
        if len < 32 && key >> len != 0 {
            return Err(Error::invalid(format!("key {key} does not fit {len} bits")));
        }
        for b in 0..len as usize {
            if (key >> b) & 1 == 1 {
                d.set_bit(layout.offsets()[k] + b, true);
            }
        }
    }
    Ok(d)
}
