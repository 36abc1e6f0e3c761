//! File formats for every stage boundary.
//!
//! - Raw ADC blocks: one code per byte (u16 little-endian above 8 ADC
//!   bits) plus a `.json` sidecar holding the producing configuration.
//! - Bit streams: packed MSB-first bytes plus a `.json` sidecar with
//!   bit count, extractor params, and a SHA-256 seed fingerprint.
//! - Toeplitz seeds: packed bits of length m + n - 1, no sidecar.
//! - Coefficient tables: binary header (magic, version, width, exponents)
//!   followed by 4(w-1) little-endian records of (c0: i64, c1: i32, c2: i8).
//! - Noise output: raw i16 little-endian codes, CSV voltages, or packed
//!   GRN words behind a JSON metadata header.

use crate::bits::BitStream;
use crate::entropy::{HomodyneConfig, RawBlock};
use crate::error::{Error, Result};
use crate::extractor::{ExtractorParams, ToeplitzSeed};
use crate::icdf::{CoefficientTable, GrnWord, TableEntry};
use crate::pipeline::NoiseSample;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

// ---------------------------------------------------------------------------
// Raw ADC blocks

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawMeta {
    pub config: HomodyneConfig,
    pub count: usize,
}

pub fn write_raw_block(path: &Path, block: &RawBlock) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if block.config.adc_bits <= 8 {
        for &c in &block.codes {
            w.write_all(&[c as u8])?;
        }
    } else {
        for &c in &block.codes {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.flush()?;
    let meta = RawMeta { config: block.config.clone(), count: block.codes.len() };
    serde_json::to_writer_pretty(File::create(sidecar(path))?, &meta)?;
    Ok(())
}

pub fn read_raw_block(path: &Path) -> Result<RawBlock> {
    let meta: RawMeta = serde_json::from_reader(File::open(sidecar(path))?)?;
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let codes: Vec<u16> = if meta.config.adc_bits <= 8 {
        bytes.iter().map(|&b| b as u16).collect()
    } else {
        if bytes.len() % 2 != 0 {
            return Err(Error::Format("odd byte count for 16-bit codes".into()));
        }
        bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
    };
    if codes.len() != meta.count {
        return Err(Error::Format(format!(
            "sidecar claims {} codes, file holds {}",
            meta.count,
            codes.len()
        )));
    }
    Ok(RawBlock { codes, config: meta.config })
}

// ---------------------------------------------------------------------------
// Bit streams and seeds

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BitStreamMeta {
    pub bit_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ExtractorParams>,
    /// SHA-256 of the packed Toeplitz seed bytes, hex.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_fingerprint: Option<String>,
}

pub fn seed_fingerprint(seed: &ToeplitzSeed) -> String {
    let mut h = Sha256::new();
    h.update(seed.bits().as_bytes());
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_bitstream(path: &Path, bits: &BitStream, meta: &BitStreamMeta) -> Result<()> {
    std::fs::write(path, bits.as_bytes())?;
    serde_json::to_writer_pretty(File::create(sidecar(path))?, meta)?;
    Ok(())
}

pub fn read_bitstream(path: &Path) -> Result<(BitStream, BitStreamMeta)> {
    let meta: BitStreamMeta = serde_json::from_reader(File::open(sidecar(path))?)?;
    let bytes = std::fs::read(path)?;
    let bits = BitStream::from_packed(bytes, meta.bit_count)?;
    Ok((bits, meta))
}

/// Seed file: packed bits, length implied by the extractor params.
pub fn write_seed(path: &Path, seed: &ToeplitzSeed) -> Result<()> {
    std::fs::write(path, seed.bits().as_bytes())?;
    Ok(())
}

pub fn read_seed(path: &Path, params: &ExtractorParams) -> Result<ToeplitzSeed> {
    let bytes = std::fs::read(path)?;
    let bits = BitStream::from_packed(bytes, params.seed_len()).map_err(|_| {
        Error::Format(format!(
            "seed file too short for m + n - 1 = {} bits",
            params.seed_len()
        ))
    })?;
    Ok(ToeplitzSeed::from_bits(bits))
}

// ---------------------------------------------------------------------------
// Coefficient tables

const TABLE_MAGIC: &[u8; 4] = b"QWGT";
const TABLE_VERSION: u16 = 1;

pub fn write_table(path: &Path, table: &CoefficientTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TABLE_MAGIC)?;
    w.write_all(&TABLE_VERSION.to_le_bytes())?;
    w.write_all(&[table.width() as u8, table.f0 as u8, table.f1 as u8, table.f2 as u8])?;
    for e in table.entries() {
        w.write_all(&e.c0.to_le_bytes())?;
        w.write_all(&e.c1.to_le_bytes())?;
        w.write_all(&e.c2.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<CoefficientTable> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 10];
    r.read_exact(&mut head)?;
    if &head[..4] != TABLE_MAGIC {
        return Err(Error::Format("not a coefficient table file".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != TABLE_VERSION {
        return Err(Error::Format(format!("unsupported table version {version}")));
    }
    let (width, f0, f1, f2) = (head[6] as u32, head[7] as u32, head[8] as u32, head[9] as u32);
    let count = 4 * (width.saturating_sub(1)) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let mut rec = [0u8; 13];
        r.read_exact(&mut rec)?;
        entries.push(TableEntry {
            c0: i64::from_le_bytes(rec[0..8].try_into().expect("8 bytes")),
            c1: i32::from_le_bytes(rec[8..12].try_into().expect("4 bytes")),
            c2: rec[12] as i8,
            max_fit_err: 0.0, // fitting metadata is not persisted
        });
    }
    CoefficientTable::from_parts(width, f0, f1, f2, entries)
}

// ---------------------------------------------------------------------------
// Noise sample output

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    /// Raw little-endian i16 of the signed magnitude (sign applied).
    I16Le,
    /// CSV of voltages, one per line.
    Csv,
    /// Packed 14-bit GRN codes (u16 little-endian) behind a JSON header.
    Grn,
}

impl std::str::FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i16le" => Ok(Self::I16Le),
            "csv" => Ok(Self::Csv),
            "grn" => Ok(Self::Grn),
            other => Err(Error::InvalidConfig(format!(
                "unknown format {other:?}, expected i16le, csv, or grn"
            ))),
        }
    }
}

const GRN_MAGIC: &[u8; 4] = b"QWGN";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrnHeader {
    pub urn_width: u32,
    pub gain: f64,
    pub count: u64,
}

pub fn write_samples(
    path: &Path,
    samples: &[NoiseSample],
    format: SampleFormat,
    header: &GrnHeader,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        SampleFormat::I16Le => {
            for s in samples {
                w.write_all(&s.grn.as_i16().to_le_bytes())?;
            }
        }
        SampleFormat::Csv => {
            writeln!(w, "voltage")?;
            for s in samples {
                writeln!(w, "{}", s.voltage)?;
            }
        }
        SampleFormat::Grn => {
            let json = serde_json::to_vec(header)?;
            w.write_all(GRN_MAGIC)?;
            w.write_all(&(json.len() as u32).to_le_bytes())?;
            w.write_all(&json)?;
            for s in samples {
                w.write_all(&s.grn.raw14().to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads back a `Grn`-format file.
pub fn read_grn(path: &Path) -> Result<(GrnHeader, Vec<GrnWord>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != GRN_MAGIC {
        return Err(Error::Format("not a GRN sample file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: GrnHeader = serde_json::from_slice(&json)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 2 != 0 {
        return Err(Error::Format("odd payload length".into()));
    }
    let words = rest
        .chunks_exact(2)
        .map(|c| GrnWord::from_raw14(u16::from_le_bytes([c[0], c[1]])))
        .collect();
    Ok((header, words))
}

/// Reads an i16le sample file back into signed code values.
pub fn read_i16le(path: &Path) -> Result<Vec<i16>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 2 != 0 {
        return Err(Error::Format("odd byte count in i16le file".into()));
    }
    Ok(bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect())
}

/// Export extracted bits as raw packed bytes, the input format consumed by
/// the external full SP 800-22 suite.
pub fn export_nist_bits(path: &Path, bits: &BitStream) -> Result<()> {
    std::fs::write(path, bits.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::simulate_raw;
    use crate::icdf::build_table;
    use crate::pipeline::{run_pipeline, PipelineConfig};
    use tempfile::tempdir;

    #[test]
    fn raw_block_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("raw.bin");
        let cfg = HomodyneConfig::chip_reference().with_seed(1);
        let block = simulate_raw(&cfg, 5000).unwrap();
        write_raw_block(&path, &block).unwrap();
        assert_eq!(read_raw_block(&path).unwrap(), block);
    }

    #[test]
    fn bitstream_roundtrip_with_fingerprint() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("stream.bits");
        let params = ExtractorParams::default();
        let seed = ToeplitzSeed::default_for(&params);
        let mut bits = BitStream::new();
        bits.push_bits(0xDEADBEEF, 32);
        bits.push_bits(0x5, 3);
        let meta = BitStreamMeta {
            bit_count: bits.len(),
            params: Some(params),
            seed_fingerprint: Some(seed_fingerprint(&seed)),
        };
        write_bitstream(&path, &bits, &meta).unwrap();
        let (back, meta2) = read_bitstream(&path).unwrap();
        assert_eq!(back, bits);
        assert_eq!(meta2.seed_fingerprint, meta.seed_fingerprint);
    }

    #[test]
    fn seed_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("seed.bin");
        let params = ExtractorParams::default();
        let seed = ToeplitzSeed::default_for(&params);
        write_seed(&path, &seed).unwrap();
        assert_eq!(read_seed(&path, &params).unwrap(), seed);
    }

    #[test]
    fn table_roundtrip_preserves_evaluation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("w12.tbl");
        let table = build_table(12).unwrap();
        write_table(&path, &table).unwrap();
        let back = read_table(&path).unwrap();
        assert_eq!(back.width(), 12);
        assert_eq!((back.f0, back.f1, back.f2), (table.f0, table.f1, table.f2));
        assert_eq!(back.max_magnitude(), table.max_magnitude());
        for (a, b) in table.entries().iter().zip(back.entries()) {
            assert_eq!((a.c0, a.c1, a.c2), (b.c0, b.c1, b.c2));
        }
    }

    #[test]
    fn rejects_malformed_table() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.tbl");
        std::fs::write(&path, b"NOPE000000").unwrap();
        assert!(read_table(&path).is_err());
    }

    #[test]
    fn sample_formats_roundtrip() {
        let dir = tempdir().unwrap();
        let config = PipelineConfig::new(12, 500).with_seed(3);
        let run = run_pipeline(&config).unwrap();
        let header = GrnHeader { urn_width: 12, gain: 2.5, count: 500 };

        let grn_path = dir.path().join("out.grn");
        write_samples(&grn_path, &run.samples, SampleFormat::Grn, &header).unwrap();
        let (h, words) = read_grn(&grn_path).unwrap();
        assert_eq!(h.count, 500);
        assert_eq!(words.len(), 500);
        assert!(words.iter().zip(&run.samples).all(|(w, s)| *w == s.grn));

        let i16_path = dir.path().join("out.i16");
        write_samples(&i16_path, &run.samples, SampleFormat::I16Le, &header).unwrap();
        let vals = read_i16le(&i16_path).unwrap();
        assert!(vals.iter().zip(&run.samples).all(|(v, s)| *v == s.grn.as_i16()));

        let csv_path = dir.path().join("out.csv");
        write_samples(&csv_path, &run.samples, SampleFormat::Csv, &header).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), 501);
        let first: f64 = text.lines().nth(1).unwrap().parse().unwrap();
        assert_eq!(first, run.samples[0].voltage);
    }

    #[test]
    fn format_parsing() {
        use std::str::FromStr;
        assert_eq!(SampleFormat::from_str("csv").unwrap(), SampleFormat::Csv);
        assert!(SampleFormat::from_str("wav").is_err());
    }
}
