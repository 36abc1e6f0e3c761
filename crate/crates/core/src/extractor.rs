//! Toeplitz-hashing randomness extraction over GF(2).
//!
//! An m x n Toeplitz matrix T defined by m + n - 1 seed bits is multiplied
//! by n raw bits per block to produce m extracted bits. The convention used
//! throughout (locked by the dense oracle test, not claimed to match any
//! particular hardware bit-for-bit):
//!
//!   T[i][j] = seed[i - j + n - 1]
//!
//! so the first column is seed[n-1 .. m+n-2] top-down and the first row is
//! seed[n-1], seed[n-2], .., seed[0] left-to-right. The product is computed
//! blockwise, accumulating n/k submatrix-times-subvector partial products.

use crate::bits::BitStream;
use crate::error::{Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorParams {
    /// Output bits per block.
    pub m: usize,
    /// Input bits per block.
    pub n: usize,
    /// Submatrix column width.
    pub k: usize,
}

impl Default for ExtractorParams {
    fn default() -> Self {
        Self { m: 1024, n: 1536, k: 64 }
    }
}

impl ExtractorParams {
    pub fn new(m: usize, n: usize, k: usize) -> Result<Self> {
        let p = Self { m, n, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("m, n, k must be positive".into()));
        }
        if self.m >= self.n {
            return Err(Error::InvalidConfig(format!(
                "m = {} must be below n = {}",
                self.m, self.n
            )));
        }
        if self.n % self.k != 0 {
            return Err(Error::InvalidConfig(format!(
                "k = {} must divide n = {}",
                self.k, self.n
            )));
        }
        Ok(())
    }

    pub fn seed_len(&self) -> usize {
        self.m + self.n - 1
    }
}

/// The m + n - 1 seed bits defining the Toeplitz matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzSeed {
    bits: BitStream,
    /// Seed bits repacked LSB-first into words for windowed XOR.
    words: Vec<u64>,
}

impl ToeplitzSeed {
    pub fn from_bits(bits: BitStream) -> Self {
        let mut words = vec![0u64; (bits.len() + 63) / 64 + 1];
        for i in 0..bits.len() {
            if bits.get(i) {
                words[i / 64] |= 1u64 << (i % 64);
            }
        }
        Self { bits, words }
    }

    /// The fixed published default seed: a ChaCha8 stream keyed with a
    /// constant, so every build reproduces the same matrix. Override with
    /// caller-supplied bits for production use.
    pub fn default_for(params: &ExtractorParams) -> Self {
        const DEFAULT_SEED_KEY: u64 = 0x7065_6c74_2d77_676e;
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED_KEY);
        let mut bytes = vec![0u8; params.seed_len().div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        let bits = BitStream::from_packed(bytes, params.seed_len()).expect("sized above");
        Self::from_bits(bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &BitStream {
        &self.bits
    }

    #[cfg(test)]
    fn bit(&self, i: usize) -> bool {
        self.bits.get(i)
    }

    /// XORs the seed window [start, start + len) into `out` (LSB-first words).
    #[inline]
    fn xor_window(&self, out: &mut [u64], start: usize, len: usize) {
        let word = start / 64;
        let shift = (start % 64) as u32;
        let n_words = len.div_ceil(64);
        if shift == 0 {
            for t in 0..n_words {
                out[t] ^= self.words[word + t];
            }
        } else {
            for t in 0..n_words {
                out[t] ^= (self.words[word + t] >> shift)
                    | (self.words[word + t + 1] << (64 - shift));
            }
        }
        // Bits past `len` in the top word are cleared by the caller's final mask.
    }
}

/// One block: multiplies the Toeplitz matrix by `raw` (n bits starting at
/// `raw_offset`), accumulating n/k submatrix partial products.
pub fn extract_block(
    seed: &ToeplitzSeed,
    params: &ExtractorParams,
    raw: &BitStream,
) -> Result<BitStream> {
    if raw.len() != params.n {
        return Err(Error::LengthMismatch(format!(
            "raw block has {} bits, expected n = {}",
            raw.len(),
            params.n
        )));
    }
    extract_block_at(seed, params, raw, 0)
}

fn extract_block_at(
    seed: &ToeplitzSeed,
    params: &ExtractorParams,
    raw: &BitStream,
    raw_offset: usize,
) -> Result<BitStream> {
    params.validate()?;
    if seed.len() != params.seed_len() {
        return Err(Error::LengthMismatch(format!(
            "seed has {} bits, expected m + n - 1 = {}",
            seed.len(),
            params.seed_len()
        )));
    }
    let (m, n, k) = (params.m, params.n, params.k);
    let out_words = m.div_ceil(64);
    let mut acc = vec![0u64; out_words];
    let mut partial = vec![0u64; out_words];
    for chunk in 0..n / k {
        // Submatrix-times-subvector over columns [chunk*k, (chunk+1)*k).
        partial.iter_mut().for_each(|w| *w = 0);
        for j in chunk * k..(chunk + 1) * k {
            if raw.get(raw_offset + j) {
                // Column j of T is the seed window starting at n - 1 - j.
                seed.xor_window(&mut partial, n - 1 - j, m);
            }
        }
        for (a, p) in acc.iter_mut().zip(&partial) {
            *a ^= *p;
        }
    }
    // Clear junk above bit m - 1 in the top word.
    if m % 64 != 0 {
        acc[out_words - 1] &= (1u64 << (m % 64)) - 1;
    }
    let mut out = BitStream::with_capacity(m);
    for i in 0..m {
        out.push_bit((acc[i / 64] >> (i % 64)) & 1 == 1);
    }
    Ok(out)
}

/// Streaming extraction: consumes `raw` in n-bit blocks (discarding a final
/// partial block) and emits m bits per block.
pub fn extract_stream(
    seed: &ToeplitzSeed,
    params: &ExtractorParams,
    raw: &BitStream,
) -> Result<BitStream> {
    if raw.len() < params.n {
        return Err(Error::InsufficientData(format!(
            "raw stream has {} bits, below one block of n = {}",
            raw.len(),
            params.n
        )));
    }
    let blocks = raw.len() / params.n;
    let mut out = BitStream::with_capacity(blocks * params.m);
    for b in 0..blocks {
        let block = extract_block_at(seed, params, raw, b * params.n)?;
        out.extend(&block);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Dense O(mn) GF(2) Toeplitz multiply, the independent reference for
    /// the blockwise path.
    pub fn dense_multiply(seed: &ToeplitzSeed, m: usize, n: usize, raw: &BitStream) -> BitStream {
        let mut out = BitStream::with_capacity(m);
        for i in 0..m {
            let mut bit = false;
            for j in 0..n {
                bit ^= seed.bit(i + n - 1 - j) && raw.get(j);
            }
            out.push_bit(bit);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::dense_multiply;
    use super::*;
    use rand::Rng;

    fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> BitStream {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        BitStream::from_packed(bytes, len).unwrap()
    }

    #[test]
    fn zero_inputs_give_zero_output() {
        let params = ExtractorParams::new(8, 12, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seed = ToeplitzSeed::from_bits(random_bits(&mut rng, params.seed_len()));
        let zeros = BitStream::from_bits(&[false; 12]);
        assert_eq!(extract_block(&seed, &params, &zeros).unwrap().count_ones(), 0);

        let zero_seed = ToeplitzSeed::from_bits(BitStream::from_bits(&[false; 19]));
        let raw = random_bits(&mut rng, 12);
        assert_eq!(extract_block(&zero_seed, &params, &raw).unwrap().count_ones(), 0);
    }

    #[test]
    fn small_case_matches_dense_oracle() {
        let params = ExtractorParams::new(8, 12, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let seed = ToeplitzSeed::from_bits(random_bits(&mut rng, params.seed_len()));
            let raw = random_bits(&mut rng, 12);
            let got = extract_block(&seed, &params, &raw).unwrap();
            let want = dense_multiply(&seed, 8, 12, &raw);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn random_geometries_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let k = *[1usize, 2, 4, 8, 16].get(rng.gen_range(0..5)).unwrap();
            let n = k * rng.gen_range(1..=64 / k).max(2);
            let m = rng.gen_range(1..n.min(64));
            let params = match ExtractorParams::new(m, n, k) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let seed = ToeplitzSeed::from_bits(random_bits(&mut rng, params.seed_len()));
            let raw = random_bits(&mut rng, n);
            let got = extract_block(&seed, &params, &raw).unwrap();
            let want = dense_multiply(&seed, m, n, &raw);
            assert_eq!(got, want, "m={m} n={n} k={k}");
        }
    }

    #[test]
    fn default_geometry_matches_dense_oracle() {
        let params = ExtractorParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seed = ToeplitzSeed::from_bits(random_bits(&mut rng, params.seed_len()));
        let raw = random_bits(&mut rng, params.n);
        let got = extract_block(&seed, &params, &raw).unwrap();
        let want = dense_multiply(&seed, params.m, params.n, &raw);
        assert_eq!(got, want);
    }

    #[test]
    fn gf2_linearity() {
        let params = ExtractorParams::new(16, 24, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seed = ToeplitzSeed::from_bits(random_bits(&mut rng, params.seed_len()));
        for _ in 0..20 {
            let a = random_bits(&mut rng, 24);
            let b = random_bits(&mut rng, 24);
            let xor: BitStream =
                BitStream::from_bits(&(0..24).map(|i| a.get(i) ^ b.get(i)).collect::<Vec<_>>());
            let ea = extract_block(&seed, &params, &a).unwrap();
            let eb = extract_block(&seed, &params, &b).unwrap();
            let exor = extract_block(&seed, &params, &xor).unwrap();
            for i in 0..16 {
                assert_eq!(exor.get(i), ea.get(i) ^ eb.get(i));
            }
        }
    }

    #[test]
    fn stream_block_accounting() {
        let params = ExtractorParams::default();
        let seed = ToeplitzSeed::default_for(&params);
        let mut rng = ChaCha8Rng::seed_from_u64(6);

        // 3072 raw bits -> 2048 output bits: the 3:2 extraction ratio.
        let raw = random_bits(&mut rng, 3072);
        assert_eq!(extract_stream(&seed, &params, &raw).unwrap().len(), 2048);

        // Below one block.
        let raw = random_bits(&mut rng, 1535);
        assert!(extract_stream(&seed, &params, &raw).is_err());

        // Partial final block discarded.
        let raw = random_bits(&mut rng, 4000);
        assert_eq!(extract_stream(&seed, &params, &raw).unwrap().len(), 2048);
    }

    #[test]
    fn length_mismatch_errors() {
        let params = ExtractorParams::default();
        let seed = ToeplitzSeed::default_for(&params);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw = random_bits(&mut rng, 100);
        assert!(extract_block(&seed, &params, &raw).is_err());
        let short_seed = ToeplitzSeed::from_bits(random_bits(&mut rng, 100));
        let raw = random_bits(&mut rng, params.n);
        assert!(extract_block(&short_seed, &params, &raw).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ExtractorParams::new(10, 10, 2).is_err()); // m >= n
        assert!(ExtractorParams::new(8, 12, 5).is_err()); // k does not divide n
        assert!(ExtractorParams::new(0, 12, 4).is_err());
        assert_eq!(ExtractorParams::default().seed_len(), 1024 + 1536 - 1);
    }

    #[test]
    fn default_seed_is_reproducible() {
        let params = ExtractorParams::default();
        assert_eq!(ToeplitzSeed::default_for(&params), ToeplitzSeed::default_for(&params));
    }
}
