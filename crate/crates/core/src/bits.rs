//! Packed bit sequences flowing between pipeline stages.
//!
//! One convention repo-wide: bits are packed MSB-first within each byte,
//! and trailing pad bits in the last byte are always zero.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitStream {
    bytes: Vec<u8>,
    bit_count: usize,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self { bytes: Vec::with_capacity(bits.div_ceil(8)), bit_count: 0 }
    }

    /// Wraps packed bytes, keeping only the first `bit_count` bits.
    pub fn from_packed(mut bytes: Vec<u8>, bit_count: usize) -> Result<Self> {
        if bit_count > bytes.len() * 8 {
            return Err(Error::LengthMismatch(format!(
                "bit_count {bit_count} exceeds {} stored bits",
                bytes.len() * 8
            )));
        }
        bytes.truncate(bit_count.div_ceil(8));
        // Enforce the zero-pad invariant.
        if bit_count % 8 != 0 {
            if let Some(last) = bytes.last_mut() {
                *last &= 0xFFu8 << (8 - bit_count % 8);
            }
        }
        Ok(Self { bytes, bit_count })
    }

    /// Every bit of every byte, MSB-first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self { bytes: bytes.to_vec(), bit_count: bytes.len() * 8 }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::with_capacity(bits.len());
        for &b in bits {
            s.push_bit(b);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.bit_count
    }

    pub fn is_empty(&self) -> bool {
        self.bit_count == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.bit_count);
        (self.bytes[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    #[inline]
    pub fn push_bit(&mut self, bit: bool) {
        if self.bit_count % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            let i = self.bit_count;
            self.bytes[i / 8] |= 1 << (7 - i % 8);
        }
        self.bit_count += 1;
    }

    /// Appends the low `width` bits of `value`, MSB-first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        for shift in (0..width).rev() {
            self.push_bit((value >> shift) & 1 == 1);
        }
    }

    pub fn extend(&mut self, other: &BitStream) {
        for i in 0..other.len() {
            self.push_bit(other.get(i));
        }
    }

    /// Reads `width` bits starting at `offset` as an MSB-first integer.
    pub fn read_bits(&self, offset: usize, width: u32) -> u64 {
        debug_assert!(offset + width as usize <= self.bit_count);
        let mut v = 0u64;
        for i in 0..width as usize {
            v = (v << 1) | self.get(offset + i) as u64;
        }
        v
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.bit_count).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        // Pad bits are zero, so whole-byte popcount is exact.
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first_packing() {
        let mut s = BitStream::new();
        s.push_bits(0b1011, 4);
        assert_eq!(s.as_bytes(), &[0b1011_0000]);
        assert_eq!(s.len(), 4);
        assert!(s.get(0) && !s.get(1) && s.get(2) && s.get(3));
        s.push_bits(0b0101, 4);
        assert_eq!(s.as_bytes(), &[0b1011_0101]);
    }

    #[test]
    fn from_packed_clears_pad_bits() {
        let s = BitStream::from_packed(vec![0xFF, 0xFF], 10).unwrap();
        assert_eq!(s.as_bytes(), &[0xFF, 0b1100_0000]);
        assert_eq!(s.count_ones(), 10);
        assert!(BitStream::from_packed(vec![0xFF], 9).is_err());
    }

    #[test]
    fn read_back_words() {
        let mut s = BitStream::new();
        s.push_bits(0xABC, 12);
        s.push_bits(0x123, 12);
        assert_eq!(s.read_bits(0, 12), 0xABC);
        assert_eq!(s.read_bits(12, 12), 0x123);
    }

    proptest! {
        #[test]
        fn push_read_roundtrip(words in prop::collection::vec(0u64..1 << 20, 1..50)) {
            let mut s = BitStream::new();
            for &w in &words {
                s.push_bits(w, 20);
            }
            prop_assert_eq!(s.len(), words.len() * 20);
            for (i, &w) in words.iter().enumerate() {
                prop_assert_eq!(s.read_bits(i * 20, 20), w);
            }
            // Pad invariant survives repacking.
            let repacked = BitStream::from_packed(s.as_bytes().to_vec(), s.len()).unwrap();
            prop_assert_eq!(repacked, s);
        }
    }
}
