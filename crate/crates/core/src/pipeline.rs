//! End-to-end noise synthesis: entropy source, extraction, rate
//! adaptation, ICDF conversion, and the DAC amplitude model.

use crate::bits::BitStream;
use crate::entropy::{HomodyneConfig, HomodyneSim};
use crate::error::{Error, Result};
use crate::extractor::{self, ExtractorParams, ToeplitzSeed};
use crate::icdf::{self, CoefficientTable, GrnWord, UrnWord, URN_WIDTHS};
use serde::{Deserialize, Serialize};

/// The hardware's adjustable peak-to-peak output range caps the gain.
pub const MAX_GAIN_VPP: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub homodyne: HomodyneConfig,
    pub extractor: ExtractorParams,
    pub urn_width: u32,
    /// Output peak-to-peak full scale in volts.
    pub gain: f64,
    pub sample_count: u64,
}

impl PipelineConfig {
    pub fn new(urn_width: u32, sample_count: u64) -> Self {
        Self {
            homodyne: HomodyneConfig::chip_reference(),
            extractor: ExtractorParams::default(),
            urn_width,
            gain: MAX_GAIN_VPP,
            sample_count,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.homodyne.seed = seed;
        self
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.homodyne.validate()?;
        self.extractor.validate()?;
        if !URN_WIDTHS.contains(&self.urn_width) {
            return Err(Error::InvalidConfig(format!(
                "urn_width {} not in {URN_WIDTHS:?}",
                self.urn_width
            )));
        }
        if !(self.gain > 0.0 && self.gain <= MAX_GAIN_VPP) {
            return Err(Error::InvalidConfig(format!(
                "gain {} V outside (0, {MAX_GAIN_VPP}]",
                self.gain
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSample {
    pub grn: GrnWord,
    pub voltage: f64,
}

/// Diagnostic counters for one pipeline run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub raw_codes: u64,
    pub blocks_extracted: u64,
    pub extracted_bits: u64,
    /// Extracted bits left over after the final full URN word.
    pub bits_dropped: u64,
    pub saturations: u64,
}

/// Regroups extracted bits MSB-first into exact w-bit words, discarding a
/// final partial group. Every bit is used at most once, in order.
pub fn regroup(bits: &BitStream, width: u32) -> Vec<UrnWord> {
    let count = bits.len() / width as usize;
    (0..count)
        .map(|i| {
            UrnWord::new(bits.read_bits(i * width as usize, width) as u32, width)
                .expect("width-bit value")
        })
        .collect()
}

/// DAC plus output-amplifier model: full scale is anchored at the table's
/// extreme magnitude (the crest-factor point), so the largest GRN maps
/// exactly to +/- gain/2.
pub fn dac_map(grn: GrnWord, gain: f64, table: &CoefficientTable) -> f64 {
    debug_assert!(gain > 0.0);
    let norm = grn.magnitude as f64 / table.max_magnitude() as f64;
    let v = norm * gain / 2.0;
    if grn.sign { -v } else { v }
}

pub struct PipelineRun {
    pub samples: Vec<NoiseSample>,
    pub counters: Counters,
}

/// Streaming pipeline state: pulls ADC codes, extracts per block, and
/// yields GRN samples in generation order. Deterministic given the seeds.
pub struct Pipeline {
    sim: HomodyneSim,
    seed: ToeplitzSeed,
    params: ExtractorParams,
    table: CoefficientTable,
    gain: f64,
    width: u32,
    /// Raw bits awaiting a full n-bit extraction block.
    raw_buf: BitStream,
    /// Extracted bits awaiting regrouping, with read cursor.
    urn_buf: BitStream,
    urn_pos: usize,
    counters: Counters,
}

impl Pipeline {
    pub fn new(config: &PipelineConfig) -> Result<Self> {
        Self::with_seed_bits(config, ToeplitzSeed::default_for(&config.extractor))
    }

    pub fn with_seed_bits(config: &PipelineConfig, seed: ToeplitzSeed) -> Result<Self> {
        config.validate()?;
        if seed.len() != config.extractor.seed_len() {
            return Err(Error::LengthMismatch(format!(
                "Toeplitz seed has {} bits, expected {}",
                seed.len(),
                config.extractor.seed_len()
            )));
        }
        Ok(Self {
            sim: HomodyneSim::new(config.homodyne.clone())?,
            seed,
            params: config.extractor,
            table: icdf::build_table(config.urn_width)?,
            gain: config.gain,
            width: config.urn_width,
            raw_buf: BitStream::new(),
            urn_buf: BitStream::new(),
            urn_pos: 0,
            counters: Counters::default(),
        })
    }

    pub fn table(&self) -> &CoefficientTable {
        &self.table
    }

    pub fn counters(&self) -> Counters {
        let mut c = self.counters;
        // Whatever sits unconsumed in the URN buffer would be dropped on
        // shutdown.
        c.bits_dropped = (self.urn_buf.len() - self.urn_pos) as u64;
        c
    }

    fn refill(&mut self) {
        // One extraction block per refill.
        let adc_bits = self.sim.config().adc_bits;
        while self.raw_buf.len() < self.params.n {
            let code = self.sim.next_code();
            self.counters.raw_codes += 1;
            self.raw_buf.push_bits(code as u64, adc_bits);
        }
        let block = extractor::extract_stream(&self.seed, &self.params, &self.raw_buf)
            .expect("raw_buf holds at least one block");
        let consumed = (self.raw_buf.len() / self.params.n) * self.params.n;
        let mut rest = BitStream::new();
        for i in consumed..self.raw_buf.len() {
            rest.push_bit(self.raw_buf.get(i));
        }
        self.raw_buf = rest;
        self.counters.blocks_extracted += (block.len() / self.params.m) as u64;
        self.counters.extracted_bits += block.len() as u64;
        // Compact the URN buffer before appending.
        let mut kept = BitStream::new();
        for i in self.urn_pos..self.urn_buf.len() {
            kept.push_bit(self.urn_buf.get(i));
        }
        kept.extend(&block);
        self.urn_buf = kept;
        self.urn_pos = 0;
    }

    pub fn next_sample(&mut self) -> NoiseSample {
        while self.urn_buf.len() - self.urn_pos < self.width as usize {
            self.refill();
        }
        let value = self.urn_buf.read_bits(self.urn_pos, self.width) as u32;
        self.urn_pos += self.width as usize;
        let urn = UrnWord::new(value, self.width).expect("width-bit value");
        let (grn, saturated) = icdf::evaluate_checked(&self.table, icdf::decompose(urn));
        if saturated {
            self.counters.saturations += 1;
        }
        let voltage = dac_map(grn, self.gain, &self.table);
        NoiseSample { grn, voltage }
    }
}

/// Runs the full pipeline for `config.sample_count` samples.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun> {
    let mut p = Pipeline::new(config)?;
    let samples = (0..config.sample_count).map(|_| p.next_sample()).collect();
    Ok(PipelineRun { samples, counters: p.counters() })
}

/// Default chunk size for stream mode.
pub const STREAM_CHUNK: usize = 1 << 16;

/// Stream mode: a producer thread fills fixed-size chunks through a bounded
/// queue; the consumer side blocks the producer when it falls behind.
/// Chunk order equals generation order, so the stream stays deterministic.
pub fn stream_chunks(
    config: &PipelineConfig,
    chunk_size: usize,
    queue_depth: usize,
) -> Result<std::sync::mpsc::IntoIter<Vec<NoiseSample>>> {
    let mut p = Pipeline::new(config)?;
    let total = config.sample_count;
    let (tx, rx) = std::sync::mpsc::sync_channel(queue_depth.max(1));
    std::thread::spawn(move || {
        let mut remaining = total;
        while remaining > 0 {
            let take = chunk_size.min(remaining as usize);
            let chunk: Vec<NoiseSample> = (0..take).map(|_| p.next_sample()).collect();
            remaining -= take as u64;
            if tx.send(chunk).is_err() {
                return; // consumer dropped
            }
        }
    });
    Ok(rx.into_iter())
}
