//! Validation battery: crest factor, autocorrelation, Welch PSD, Q-Q data
//! with 95% confidence bands, normality tests, and a reduced bit-level
//! statistical suite (frequency, block frequency, runs).

use crate::bits::BitStream;
use crate::error::{Error, Result};
use crate::special::{icdf_reference, normal_cdf, normal_pdf};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

/// Crest factor of a sample stream: peak deviation from the mean over the
/// population standard deviation.
pub fn measured_cf(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData("crest factor needs >= 2 samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::ZeroVariance("constant signal has no crest factor".into()));
    }
    let peak = samples.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    Ok(peak / var.sqrt())
}

/// Normalized autocorrelation r(k) for k = 0..=max_lag, biased estimator:
/// r(k) = sum (x_i - mean)(x_{i+k} - mean) / sum (x_i - mean)^2.
pub fn autocorr(samples: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if samples.len() < 10 * max_lag.max(1) {
        return Err(Error::InsufficientData(format!(
            "{} samples below 10 * max_lag = {}",
            samples.len(),
            10 * max_lag
        )));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let denom: f64 = centered.iter().map(|x| x * x).sum();
    if denom == 0.0 {
        return Err(Error::ZeroVariance("constant signal has no autocorrelation".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            let num: f64 = centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum();
            num / denom
        })
        .collect())
}

/// Welch power spectral density: Hann window, 50% overlap, averaged
/// periodograms, reported in dB relative to the mean in-band power.
/// Returns (normalized frequency k / N, power dB) for k = 0..=N/2.
pub fn psd(samples: &[f64], segment_length: usize) -> Result<Vec<(f64, f64)>> {
    if !segment_length.is_power_of_two() || segment_length < 8 {
        return Err(Error::InvalidConfig(format!(
            "segment_length {segment_length} must be a power of two >= 8"
        )));
    }
    if samples.len() < 4 * segment_length {
        return Err(Error::InsufficientData(format!(
            "{} samples below 4 * segment_length = {}",
            samples.len(),
            4 * segment_length
        )));
    }
    let n = segment_length;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let window: Vec<f64> = (0..n)
        .map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()))
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let hop = n / 2;
    let segments = (samples.len() - n) / hop + 1;
    let mut avg = vec![0.0f64; n / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for s in 0..segments {
        let start = s * hop;
        for j in 0..n {
            buf[j] = Complex::new((samples[start + j] - mean) * window[j], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in avg.iter_mut().enumerate() {
            *a += buf[k].norm_sqr() / win_power;
        }
    }
    for a in avg.iter_mut() {
        *a /= segments as f64;
    }
    // Reference level: mean power over interior bins.
    let interior = &avg[1..n / 2];
    let mean_power = interior.iter().sum::<f64>() / interior.len() as f64;
    Ok(avg
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            (k as f64 / n as f64, 10.0 * (p / mean_power).max(1e-300).log10())
        })
        .collect())
}

/// One Q-Q point: theoretical quantile, standardized order statistic, and
/// 95% bands (Kolmogorov-Smirnov and normal pointwise), both expressed on
/// the sample-quantile axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub sample: f64,
    pub ks_lo: f64,
    pub ks_hi: f64,
    pub norm_lo: f64,
    pub norm_hi: f64,
}

/// 95% two-sided Kolmogorov constant.
const KS_C95: f64 = 1.3581;
const Z_975: f64 = 1.9599639845400542355;

/// Q-Q data against the standard normal: pairs (Phi^-1((i-0.5)/n), x_(i))
/// with x standardized by sample mean and standard deviation.
pub fn qq_data(samples: &[f64]) -> Result<Vec<QqPoint>> {
    let n = samples.len();
    if n < 100 {
        return Err(Error::InsufficientData(format!("{n} samples below 100 for Q-Q")));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(Error::ZeroVariance("constant signal has no quantiles".into()));
    }
    let mut sorted: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    sorted.sort_by(f64::total_cmp);
    let eps = 1e-12;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = (i as f64 + 0.5) / nf;
            let theoretical = icdf_reference(p).expect("p in (0,1)");
            let ks = KS_C95 / nf.sqrt();
            let ks_lo = icdf_reference((p - ks).clamp(eps, 1.0 - eps)).unwrap();
            let ks_hi = icdf_reference((p + ks).clamp(eps, 1.0 - eps)).unwrap();
            // Delta-method pointwise standard error of the order statistic.
            let se = (p * (1.0 - p) / nf).sqrt() / normal_pdf(theoretical);
            QqPoint {
                theoretical,
                sample: x,
                ks_lo,
                ks_hi,
                norm_lo: theoretical - Z_975 * se,
                norm_hi: theoretical + Z_975 * se,
            }
        })
        .collect())
}

/// Fraction of Q-Q points inside the KS band.
pub fn qq_ks_inside_fraction(points: &[QqPoint]) -> f64 {
    let inside = points.iter().filter(|p| p.sample >= p.ks_lo && p.sample <= p.ks_hi).count();
    inside as f64 / points.len() as f64
}

/// Jarque-Bera normality test: JB = n/6 (S^2 + (K-3)^2 / 4) where K is the
/// Pearson (non-excess) kurtosis; p from the chi-square(2) upper tail.
pub fn jarque_bera(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InsufficientData("Jarque-Bera needs >= 8 samples".into()));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if m2 == 0.0 {
        return Err(Error::ZeroVariance("constant signal".into()));
    }
    let m3 = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / nf;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = nf / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    // chi-square(2) survival function.
    let p = (-jb / 2.0).exp();
    Ok((jb, p))
}

/// Lilliefors test: KS distance of the standardized sample against
/// N(mean, sd^2), p-value by the Dallal-Wilkinson approximation
/// (closed form, adequate at the 0.05 level; clamped to [0, 1]).
pub fn lilliefors(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 5 {
        return Err(Error::InsufficientData("Lilliefors needs >= 5 samples".into()));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(Error::ZeroVariance("constant signal".into()));
    }
    let mut sorted: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    sorted.sort_by(f64::total_cmp);
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let p = normal_cdf(x);
        d = d.max((i as f64 + 1.0) / nf - p).max(p - i as f64 / nf);
    }
    let (dd, nn) = if n > 100 {
        (d * (nf / 100.0).powf(0.49), 100.0)
    } else {
        (d, nf)
    };
    let p = (-7.01256 * dd * dd * (nn + 2.78019) + 2.99587 * dd * (nn + 2.78019).sqrt()
        - 0.122119
        + 0.974598 / nn.sqrt()
        + 1.67997 / nn)
        .exp()
        .clamp(0.0, 1.0);
    Ok((d, p))
}

/// Per-sequence result of one reduced-suite test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NistTestResult {
    pub test: String,
    pub p_value: f64,
    pub pass: bool,
}

pub const NIST_ALPHA: f64 = 0.01;
pub const NIST_BLOCK_LEN: usize = 128;

/// SP 800-22 frequency (monobit) test.
pub fn nist_frequency(bits: &BitStream) -> Result<f64> {
    let n = bits.len();
    if n < 100 {
        return Err(Error::InsufficientData(format!("{n} bits below 100")));
    }
    Ok(frequency_p(bits))
}

fn frequency_p(bits: &BitStream) -> f64 {
    let n = bits.len() as f64;
    let s = 2.0 * bits.count_ones() as f64 - n;
    libm::erfc(s.abs() / n.sqrt() / std::f64::consts::SQRT_2)
}

/// SP 800-22 block frequency test with block length M.
pub fn nist_block_frequency(bits: &BitStream, m: usize) -> Result<f64> {
    let n = bits.len();
    let blocks = n / m;
    if blocks == 0 {
        return Err(Error::InsufficientData(format!("{n} bits below one block of {m}")));
    }
    let mut chi2 = 0.0f64;
    for b in 0..blocks {
        let ones = (b * m..(b + 1) * m).filter(|&i| bits.get(i)).count() as f64;
        chi2 += (ones / m as f64 - 0.5).powi(2);
    }
    chi2 *= 4.0 * m as f64;
    Ok(gamma_ur(blocks as f64 / 2.0, chi2 / 2.0))
}

/// SP 800-22 runs test.
pub fn nist_runs(bits: &BitStream) -> Result<f64> {
    let n = bits.len();
    if n < 100 {
        return Err(Error::InsufficientData(format!("{n} bits below 100")));
    }
    Ok(runs_p(bits))
}

fn runs_p(bits: &BitStream) -> f64 {
    let n = bits.len();
    let nf = n as f64;
    let pi = bits.count_ones() as f64 / nf;
    if (pi - 0.5).abs() >= 2.0 / nf.sqrt() {
        return 0.0; // frequency pre-test failed
    }
    let mut runs = 1u64;
    let mut prev = bits.get(0);
    for i in 1..n {
        let b = bits.get(i);
        if b != prev {
            runs += 1;
        }
        prev = b;
    }
    let num = (runs as f64 - 2.0 * nf * pi * (1.0 - pi)).abs();
    let den = 2.0 * (2.0 * nf).sqrt() * pi * (1.0 - pi);
    libm::erfc(num / den)
}

/// Runs the reduced suite on one bit sequence.
pub fn nist_lite(bits: &BitStream) -> Result<Vec<NistTestResult>> {
    let tests: [(&str, f64); 3] = [
        ("frequency", nist_frequency(bits)?),
        ("block_frequency", nist_block_frequency(bits, NIST_BLOCK_LEN)?),
        ("runs", nist_runs(bits)?),
    ];
    Ok(tests
        .into_iter()
        .map(|(name, p)| NistTestResult { test: name.into(), p_value: p, pass: p >= NIST_ALPHA })
        .collect())
}

/// Battery-mode summary for one test across many sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NistBatteryResult {
    pub test: String,
    pub sequences: usize,
    pub proportion: f64,
    /// Second-level p-value uniformity check (chi-square over 10 bins).
    pub uniformity_p: f64,
}

/// Runs the reduced suite over many sequences and aggregates pass
/// proportions plus the second-level p-value uniformity statistic.
pub fn nist_battery<I>(sequences: I) -> Result<Vec<NistBatteryResult>>
where
    I: IntoIterator<Item = BitStream>,
{
    let mut p_values: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for seq in sequences {
        for (slot, r) in p_values.iter_mut().zip(nist_lite(&seq)?) {
            slot.push(r.p_value);
        }
    }
    let names = ["frequency", "block_frequency", "runs"];
    if p_values[0].is_empty() {
        return Err(Error::InsufficientData("battery needs at least one sequence".into()));
    }
    Ok(names
        .iter()
        .zip(&p_values)
        .map(|(name, ps)| {
            let n = ps.len();
            let passed = ps.iter().filter(|&&p| p >= NIST_ALPHA).count();
            // Uniformity of p-values over 10 equal bins.
            let mut bins = [0usize; 10];
            for &p in ps {
                bins[((p * 10.0) as usize).min(9)] += 1;
            }
            let expect = n as f64 / 10.0;
            let chi2: f64 = bins.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
            NistBatteryResult {
                test: (*name).into(),
                sequences: n,
                proportion: passed as f64 / n as f64,
                uniformity_p: gamma_ur(4.5, chi2 / 2.0),
            }
        })
        .collect())
}

/// Structured result of the full validation battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub measured_cf: f64,
    pub autocorr: Vec<(usize, f64)>,
    pub psd: Vec<(f64, f64)>,
    pub qq: Vec<QqPoint>,
    pub qq_ks_inside: f64,
    pub jarque_bera: (f64, f64),
    pub lilliefors: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nist_lite: Option<Vec<NistTestResult>>,
}

pub struct ReportOptions {
    pub max_lag: usize,
    pub psd_segment: usize,
    /// Cap on the number of samples fed to the Q-Q section.
    pub qq_samples: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { max_lag: 100, psd_segment: 2048, qq_samples: 10_000 }
    }
}

/// Builds the full report from a sample stream (and optionally the
/// extracted bits behind it, for the bit-level suite).
pub fn analyze(
    samples: &[f64],
    bits: Option<&BitStream>,
    opts: &ReportOptions,
) -> Result<StatsReport> {
    let qq = qq_data(&samples[..samples.len().min(opts.qq_samples)])?;
    let qq_ks_inside = qq_ks_inside_fraction(&qq);
    Ok(StatsReport {
        measured_cf: measured_cf(samples)?,
        autocorr: autocorr(samples, opts.max_lag)?.into_iter().enumerate().collect(),
        psd: psd(samples, opts.psd_segment)?,
        qq,
        qq_ks_inside,
        jarque_bera: jarque_bera(samples)?,
        lilliefors: lilliefors(samples)?,
        nist_lite: bits.map(nist_lite).transpose()?,
    })
}
