//! Simulated vacuum-state homodyne entropy source.
//!
//! The measurement chain is modeled as Gaussian noise (quantum plus
//! classical variance contributions) centered on a DC operating point and
//! digitized by an ideal ADC. Randomness of the raw codes is quantified
//! with the plug-in min-entropy estimator.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomodyneConfig {
    /// Quantum-noise variance, ADC-code^2 units.
    pub sigma_q2: f64,
    /// Classical-noise variance, ADC-code^2 units.
    pub sigma_c2: f64,
    pub adc_bits: u32,
    /// DC operating point in ADC codes.
    pub mid_code: u32,
    /// Normalized one-pole low-pass cutoff in (0, 1]; `None` = white.
    pub bandwidth_pole: Option<f64>,
    pub seed: u64,
}

impl HomodyneConfig {
    pub fn new(sigma_q2: f64, sigma_c2: f64) -> Self {
        Self {
            sigma_q2,
            sigma_c2,
            adc_bits: 8,
            mid_code: 128,
            bandwidth_pole: None,
            seed: 0,
        }
    }

    /// Operating point of the chip reported in the characterization:
    /// sigma_q^2 = 767.4, sigma_c^2 = 7.9.
    pub fn chip_reference() -> Self {
        Self::new(767.4, 7.9)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_pole(mut self, pole: f64) -> Self {
        self.bandwidth_pole = Some(pole);
        self
    }

    pub fn sigma_total2(&self) -> f64 {
        self.sigma_q2 + self.sigma_c2
    }

    pub fn max_code(&self) -> u32 {
        (1u32 << self.adc_bits) - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_q2 < 0.0 || self.sigma_c2 < 0.0 {
            return Err(Error::InvalidConfig("variances must be non-negative".into()));
        }
        if !(4..=16).contains(&self.adc_bits) {
            return Err(Error::InvalidConfig(format!(
                "adc_bits {} outside [4, 16]",
                self.adc_bits
            )));
        }
        if self.mid_code > self.max_code() {
            return Err(Error::InvalidConfig(format!(
                "mid_code {} outside ADC range",
                self.mid_code
            )));
        }
        if let Some(p) = self.bandwidth_pole {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "bandwidth_pole {p} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// A block of raw ADC codes together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBlock {
    pub codes: Vec<u16>,
    pub config: HomodyneConfig,
}

/// Streaming form of the simulator; [`simulate_raw`] is a convenience
/// wrapper, the synthesis pipeline pulls codes incrementally.
pub struct HomodyneSim {
    config: HomodyneConfig,
    rng: ChaCha8Rng,
    /// One-pole filter state and coefficients (a, b), variance-preserving.
    filter: Option<(f64, f64, f64)>,
}

impl HomodyneSim {
    pub fn new(config: HomodyneConfig) -> Result<Self> {
        config.validate()?;
        let filter = config.bandwidth_pole.map(|fc| {
            let a = (-2.0 * std::f64::consts::PI * fc).exp();
            // b = sqrt(1 - a^2) keeps the output variance at sigma_total^2.
            let b = (1.0 - a * a).sqrt();
            (a, b, 0.0)
        });
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { config, rng, filter })
    }

    pub fn config(&self) -> &HomodyneConfig {
        &self.config
    }

    /// Next noise value in code units before quantization.
    fn next_analog(&mut self) -> f64 {
        let sigma = self.config.sigma_total2().sqrt();
        let white: f64 = StandardNormal.sample(&mut self.rng);
        let x = match &mut self.filter {
            None => white,
            Some((a, b, state)) => {
                *state = *a * *state + *b * white;
                *state
            }
        };
        self.config.mid_code as f64 + sigma * x
    }

    /// Next quantized ADC code: round half away from zero, then saturate.
    pub fn next_code(&mut self) -> u16 {
        let v = self.next_analog().round();
        v.clamp(0.0, self.config.max_code() as f64) as u16
    }
}

/// Draws `n` ADC codes from the simulated measurement chain.
/// Deterministic given `config.seed`.
pub fn simulate_raw(config: &HomodyneConfig, n: usize) -> Result<RawBlock> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be >= 1".into()));
    }
    let mut sim = HomodyneSim::new(config.clone())?;
    let codes = (0..n).map(|_| sim.next_code()).collect();
    Ok(RawBlock { codes, config: config.clone() })
}

/// Variance decomposition sigma_q^2 = sigma_total^2 - sigma_c^2.
pub fn variance_decompose(sigma_total2: f64, sigma_c2: f64) -> Result<f64> {
    if sigma_total2 < 0.0 || sigma_c2 < 0.0 {
        return Err(Error::Domain("variances must be non-negative".into()));
    }
    if sigma_total2 < sigma_c2 {
        return Err(Error::Domain(format!(
            "sigma_total^2 = {sigma_total2} below sigma_c^2 = {sigma_c2}: invalid calibration"
        )));
    }
    Ok(sigma_total2 - sigma_c2)
}

/// Plug-in min-entropy of the raw codes: -log2 of the most frequent code's
/// empirical probability. Stable for blocks of 1e5 samples and up; no bias
/// correction is applied.
pub fn estimate_min_entropy(block: &RawBlock) -> Result<f64> {
    if block.codes.is_empty() {
        return Err(Error::InsufficientData("empty raw block".into()));
    }
    let mut hist = vec![0u64; 1 << block.config.adc_bits];
    for &c in &block.codes {
        hist[c as usize] += 1;
    }
    let max = *hist.iter().max().expect("non-empty histogram");
    let p_max = max as f64 / block.codes.len() as f64;
    Ok(-p_max.log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_cdf;

    #[test]
    fn zero_variance_pins_to_mid_code() {
        let cfg = HomodyneConfig::new(0.0, 0.0);
        let block = simulate_raw(&cfg, 5).unwrap();
        assert_eq!(block.codes, vec![128; 5]);
    }

    #[test]
    fn determinism() {
        let cfg = HomodyneConfig::chip_reference().with_seed(42);
        let a = simulate_raw(&cfg, 10_000).unwrap();
        let b = simulate_raw(&cfg, 10_000).unwrap();
        assert_eq!(a, b);
        let c = simulate_raw(&cfg.clone().with_seed(43), 10_000).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_variance_matches_configured_total() {
        let cfg = HomodyneConfig::chip_reference().with_seed(7);
        let block = simulate_raw(&cfg, 1_000_000).unwrap();
        let n = block.codes.len() as f64;
        let mean = block.codes.iter().map(|&c| c as f64).sum::<f64>() / n;
        let var = block.codes.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
        let want = 775.3;
        assert!((var - want).abs() / want < 0.02, "var = {var}");
        // Mean within 3 standard errors of mid_code.
        let se = var.sqrt() / n.sqrt();
        assert!((mean - 128.0).abs() < 3.0 * se, "mean = {mean}");
    }

    #[test]
    fn clipping_fraction_matches_analytic_tail() {
        // sigma = 10: clip probability 2*Phi(-127.5/10) is astronomically
        // small, so a saturated mid_code exercises the tail instead.
        let mut cfg = HomodyneConfig::new(100.0, 0.0).with_seed(3);
        cfg.mid_code = 250;
        let n = 1_000_000usize;
        let block = simulate_raw(&cfg, n).unwrap();
        let clipped = block.codes.iter().filter(|&&c| c == 255).count() as f64;
        // Codes at 255 are those that would have rounded to >= 255, i.e.
        // analog value above 254.5.
        let p = 1.0 - normal_cdf((254.5 - 250.0) / 10.0);
        let se = (p * (1.0 - p) * n as f64).sqrt();
        assert!(
            (clipped - p * n as f64).abs() < 3.0 * se,
            "clipped = {clipped}, expected {}",
            p * n as f64
        );
    }

    #[test]
    fn clipping_negligible_at_sigma_10_centered() {
        let cfg = HomodyneConfig::new(100.0, 0.0).with_seed(5);
        let block = simulate_raw(&cfg, 1_000_000).unwrap();
        // 2*Phi(-127.5/10) ~ 3e-37: no sample may clip.
        assert!(block.codes.iter().all(|&c| c > 0 && c < 255));
    }

    #[test]
    fn min_entropy_edge_cases() {
        let mut cfg = HomodyneConfig::new(0.0, 0.0);
        cfg.adc_bits = 8;
        // Uniform histogram over all 256 codes.
        let codes: Vec<u16> = (0..256u16).cycle().take(256 * 400).collect();
        let block = RawBlock { codes, config: cfg.clone() };
        assert_eq!(estimate_min_entropy(&block).unwrap(), 8.0);

        let block = RawBlock { codes: vec![77; 100_000], config: cfg.clone() };
        assert_eq!(estimate_min_entropy(&block).unwrap(), 0.0);

        let block = RawBlock { codes: vec![], config: cfg };
        assert!(estimate_min_entropy(&block).is_err());
    }

    #[test]
    fn min_entropy_is_label_permutation_invariant() {
        let cfg = HomodyneConfig::chip_reference().with_seed(11);
        let block = simulate_raw(&cfg, 200_000).unwrap();
        let h = estimate_min_entropy(&block).unwrap();
        let permuted = RawBlock {
            codes: block.codes.iter().map(|&c| c ^ 0xA5).collect(),
            config: block.config.clone(),
        };
        assert_eq!(estimate_min_entropy(&permuted).unwrap(), h);
        assert!(h >= 0.0 && h <= 8.0);
    }

    #[test]
    fn variance_decompose_cases() {
        assert!((variance_decompose(775.3, 7.9).unwrap() - 767.4).abs() < 1e-12);
        assert_eq!(variance_decompose(5.5, 0.0).unwrap(), 5.5);
        assert!(variance_decompose(5.0, 7.0).is_err());
        assert!(variance_decompose(-1.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = HomodyneConfig::new(1.0, 1.0);
        cfg.adc_bits = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = HomodyneConfig::new(1.0, 1.0);
        cfg.mid_code = 256;
        assert!(cfg.validate().is_err());
        assert!(HomodyneConfig::new(1.0, 1.0).with_pole(1.5).validate().is_err());
        assert!(HomodyneConfig::new(1.0, 1.0).with_pole(0.1).validate().is_ok());
    }
}
