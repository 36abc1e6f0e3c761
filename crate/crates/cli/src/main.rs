//! Command-line front end: simulation, generation, analysis, table
//! inspection, and benchmarking.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use qwgn_core::bits::BitStream;
use qwgn_core::entropy::{simulate_raw, HomodyneConfig};
use qwgn_core::extractor::{extract_stream, ExtractorParams, ToeplitzSeed};
use qwgn_core::icdf::{build_table, dump_table, URN_WIDTHS};
use qwgn_core::io::{self, BitStreamMeta, GrnHeader, SampleFormat};
use qwgn_core::pipeline::{run_pipeline, PipelineConfig, MAX_GAIN_VPP};
use qwgn_core::stats::{self, ReportOptions};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// White Gaussian noise generator model: quantum-entropy simulation,
/// Toeplitz extraction, fixed-point ICDF conversion, and validation.
#[derive(Parser)]
#[command(name = "qwgn", version, about, long_about = FORMAT_HELP)]
struct Cli {
    /// Flat key=value config file mirroring flag names (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

const FORMAT_HELP: &str = "\
White Gaussian noise generator model.

File formats (bit-exact):
  raw blocks   one unsigned byte per ADC code (u16 LE above 8 bits), plus a
               .json sidecar with the producing configuration
  bit streams  packed bits, MSB-first within each byte, zero pad bits, plus
               a .json sidecar (bit_count, extractor params, seed SHA-256)
  seed files   packed bits of length m+n-1, MSB-first
  tables       'QWGT' magic, u16 LE version, width/f0/f1/f2 bytes, then
               4(w-1) records of c0:i64 LE, c1:i32 LE, c2:i8
  i16le        little-endian i16 per sample: sign-applied 13-bit magnitude
  csv          'voltage' header line, one voltage per line
  grn          'QWGN' magic, u32 LE JSON header length, JSON header, then
               u16 LE raw 14-bit words (sign bit 13, Q3.10 magnitude)";

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write a noise sample file plus manifest.
    Generate(GenerateArgs),
    /// Analyze a sample file: statistics report plus plot-ready CSVs.
    Analyze(AnalyzeArgs),
    /// Build or load a coefficient table and print a human-readable dump.
    Table(TableArgs),
    /// Measure end-to-end and per-stage throughput.
    Bench(BenchArgs),
    /// Simulate raw ADC codes from the homodyne noise model.
    SimulateRaw(SimulateRawArgs),
    /// Toeplitz-extract a raw block file into a uniform bit stream.
    Extract(ExtractArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// URN input bit width.
    #[arg(long)]
    width: Option<u32>,
    /// Peak-to-peak full scale in volts, at most 2.5.
    #[arg(long)]
    gain: Option<f64>,
    /// Number of output samples.
    #[arg(long)]
    count: Option<u64>,
    /// Entropy-source seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output format: i16le, csv, or grn.
    #[arg(long)]
    format: Option<String>,
    /// Toeplitz seed file (packed bits); default is the built-in seed.
    #[arg(long)]
    seed_file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Sample file to analyze.
    #[arg(long)]
    input: PathBuf,
    /// Input format: i16le, csv, or grn.
    #[arg(long)]
    format: Option<String>,
    /// Optional extracted-bit file for the reduced bit-level suite.
    #[arg(long)]
    bits: Option<PathBuf>,
    /// Directory for report.json and the plot CSVs.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long)]
    psd_segment: Option<usize>,
}

#[derive(Args)]
struct TableArgs {
    /// Width to build.
    #[arg(long)]
    width: Option<u32>,
    /// Load a binary table instead of building one.
    #[arg(long)]
    load: Option<PathBuf>,
    /// Also write the binary table file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    count: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateRawArgs {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma_q2: Option<f64>,
    #[arg(long)]
    sigma_c2: Option<f64>,
    /// Normalized one-pole low-pass cutoff in (0, 1].
    #[arg(long)]
    pole: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Raw block file (with .json sidecar) to extract from.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed_file: Option<PathBuf>,
    /// Output bit-stream file (raw packed bits, suitable for the external
    /// full SP 800-22 suite).
    #[arg(long)]
    out: PathBuf,
}

/// Flat key=value config file; '#' starts a comment line.
fn load_config(path: &Path) -> anyhow::Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("config line {}: expected key=value", lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Precedence: flag > config file > default.
fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    cfg: &HashMap<String, String>,
    key: &str,
    default: T,
) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match cfg.get(key) {
        Some(raw) => raw
            .parse()
            .map_err(|e| anyhow::anyhow!("config key {key}={raw}: {e}")),
        None => Ok(default),
    }
}

#[derive(Serialize)]
struct OutputDigest {
    path: String,
    sha256: String,
}

/// Reproducibility record written next to every produced file.
#[derive(Serialize)]
struct RunManifest {
    tool: String,
    version: String,
    command: String,
    config: serde_json::Value,
    outputs: Vec<OutputDigest>,
}

fn file_digest(path: &Path) -> anyhow::Result<OutputDigest> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    let sha256 = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(OutputDigest { path: path.display().to_string(), sha256 })
}

fn write_manifest(
    command: &str,
    config: serde_json::Value,
    outputs: &[&Path],
) -> anyhow::Result<()> {
    let manifest = RunManifest {
        tool: "qwgn".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config,
        outputs: outputs.iter().map(|p| file_digest(p)).collect::<anyhow::Result<_>>()?,
    };
    let first = outputs.first().context("manifest needs at least one output")?;
    let mut path = first.as_os_str().to_owned();
    path.push(".manifest.json");
    serde_json::to_writer_pretty(std::fs::File::create(PathBuf::from(path))?, &manifest)?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs, cfg: &HashMap<String, String>) -> anyhow::Result<()> {
    let width = resolve(args.width, cfg, "width", 12)?;
    if !URN_WIDTHS.contains(&width) {
        bail!("invalid --width {width}: valid values are 12, 16, 24, 32");
    }
    let gain = resolve(args.gain, cfg, "gain", MAX_GAIN_VPP)?;
    if !(gain > 0.0 && gain <= MAX_GAIN_VPP) {
        bail!("invalid --gain {gain}: must be in (0, {MAX_GAIN_VPP}] volts");
    }
    let count = resolve(args.count, cfg, "count", 1_000_000)?;
    let seed = resolve(args.seed, cfg, "seed", 0)?;
    let format: SampleFormat =
        resolve(args.format, cfg, "format", "i16le".to_string())?.parse()?;

    let config = PipelineConfig::new(width, count).with_seed(seed).with_gain(gain);
    let run = match &args.seed_file {
        None => run_pipeline(&config)?,
        Some(path) => {
            let seed_bits = io::read_seed(path, &config.extractor)?;
            let mut p = qwgn_core::pipeline::Pipeline::with_seed_bits(&config, seed_bits)?;
            let samples = (0..count).map(|_| p.next_sample()).collect();
            qwgn_core::pipeline::PipelineRun { samples, counters: p.counters() }
        }
    };
    let header = GrnHeader { urn_width: width, gain, count };
    io::write_samples(&args.out, &run.samples, format, &header)?;
    write_manifest(
        "generate",
        serde_json::json!({
            "pipeline": config,
            "counters": run.counters,
            "toeplitz_seed_file": args.seed_file,
        }),
        &[&args.out],
    )?;
    eprintln!(
        "wrote {} samples to {} ({} blocks extracted, {} saturations)",
        run.samples.len(),
        args.out.display(),
        run.counters.blocks_extracted,
        run.counters.saturations
    );
    Ok(())
}

fn read_samples_as_f64(path: &Path, format: SampleFormat) -> anyhow::Result<Vec<f64>> {
    Ok(match format {
        SampleFormat::I16Le => io::read_i16le(path)?.into_iter().map(f64::from).collect(),
        SampleFormat::Grn => {
            let (_, words) = io::read_grn(path)?;
            words.into_iter().map(|w| w.real_value()).collect()
        }
        SampleFormat::Csv => {
            let text = std::fs::read_to_string(path)?;
            text.lines()
                .skip(1)
                .map(|l| l.trim().parse::<f64>().context("bad CSV voltage"))
                .collect::<anyhow::Result<_>>()?
        }
    })
}

fn cmd_analyze(args: AnalyzeArgs, cfg: &HashMap<String, String>) -> anyhow::Result<()> {
    let format: SampleFormat =
        resolve(args.format, cfg, "format", "i16le".to_string())?.parse()?;
    let samples = read_samples_as_f64(&args.input, format)?;
    let bits = match &args.bits {
        Some(p) => {
            let bytes = std::fs::read(p)?;
            Some(BitStream::from_bytes(&bytes))
        }
        None => None,
    };
    let opts = ReportOptions {
        max_lag: resolve(args.max_lag, cfg, "max_lag", 100)?,
        psd_segment: resolve(args.psd_segment, cfg, "psd_segment", 2048)?,
        ..ReportOptions::default()
    };
    let report = stats::analyze(&samples, bits.as_ref(), &opts)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    serde_json::to_writer_pretty(std::fs::File::create(dir.join("report.json"))?, &report)?;

    // Plot-ready CSVs.
    let mut hist = String::from("bin_center,count,expected\n");
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
        / samples.len() as f64)
        .sqrt();
    let bins = 101usize;
    let lo = mean - 4.5 * sd;
    let step = 9.0 * sd / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in &samples {
        let b = ((x - lo) / step).floor();
        if (0.0..bins as f64).contains(&b) {
            counts[b as usize] += 1;
        }
    }
    for (i, c) in counts.iter().enumerate() {
        let center = lo + (i as f64 + 0.5) * step;
        let z = (center - mean) / sd;
        let expected =
            samples.len() as f64 * step / sd * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        hist.push_str(&format!("{center},{c},{expected}\n"));
    }
    std::fs::write(dir.join("histogram.csv"), hist)?;

    let mut qq = String::from("theoretical,sample,ks_lo,ks_hi,norm_lo,norm_hi\n");
    for p in &report.qq {
        qq.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.theoretical, p.sample, p.ks_lo, p.ks_hi, p.norm_lo, p.norm_hi
        ));
    }
    std::fs::write(dir.join("qq.csv"), qq)?;

    let mut psd = String::from("frequency,power_db\n");
    for (f, db) in &report.psd {
        psd.push_str(&format!("{f},{db}\n"));
    }
    std::fs::write(dir.join("psd.csv"), psd)?;

    let mut ac = String::from("lag,r\n");
    for (lag, r) in &report.autocorr {
        ac.push_str(&format!("{lag},{r}\n"));
    }
    std::fs::write(dir.join("autocorr.csv"), ac)?;

    println!(
        "cf={:.4} jb_p={:.4} lilliefors_p={:.4} qq_ks_inside={:.4}",
        report.measured_cf, report.jarque_bera.1, report.lilliefors.1, report.qq_ks_inside
    );
    Ok(())
}

fn cmd_table(args: TableArgs, cfg: &HashMap<String, String>) -> anyhow::Result<()> {
    let table = match &args.load {
        Some(path) => io::read_table(path)?,
        None => {
            let width = resolve(args.width, cfg, "width", 12)?;
            if !URN_WIDTHS.contains(&width) {
                bail!("invalid --width {width}: valid values are 12, 16, 24, 32");
            }
            build_table(width)?
        }
    };
    if let Some(out) = &args.out {
        io::write_table(out, &table)?;
        eprintln!("wrote table to {}", out.display());
    }
    print!("{}", dump_table(&table));
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    width: u32,
    samples: u64,
    elapsed_s: f64,
    samples_per_s: f64,
    extracted_bits_per_s: f64,
    raw_codes_per_s: f64,
}

fn cmd_bench(args: BenchArgs, cfg: &HashMap<String, String>) -> anyhow::Result<()> {
    let width = resolve(args.width, cfg, "width", 12)?;
    let count = resolve(args.count, cfg, "count", 1_000_000)?;
    let seed = resolve(args.seed, cfg, "seed", 0)?;
    let config = PipelineConfig::new(width, count).with_seed(seed);
    let start = std::time::Instant::now();
    let run = run_pipeline(&config)?;
    let elapsed = start.elapsed().as_secs_f64();
    let report = BenchReport {
        width,
        samples: run.samples.len() as u64,
        elapsed_s: elapsed,
        samples_per_s: run.samples.len() as f64 / elapsed,
        extracted_bits_per_s: run.counters.extracted_bits as f64 / elapsed,
        raw_codes_per_s: run.counters.raw_codes as f64 / elapsed,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_simulate_raw(args: SimulateRawArgs, cfg: &HashMap<String, String>) -> anyhow::Result<()> {
    let count = resolve(args.count, cfg, "count", 1_000_000)?;
    let mut config = HomodyneConfig::new(
        resolve(args.sigma_q2, cfg, "sigma_q2", 767.4)?,
        resolve(args.sigma_c2, cfg, "sigma_c2", 7.9)?,
    )
    .with_seed(resolve(args.seed, cfg, "seed", 0)?);
    if let Some(p) = args.pole.or_else(|| cfg.get("pole").and_then(|v| v.parse().ok())) {
        config = config.with_pole(p);
    }
    let block = simulate_raw(&config, count)?;
    io::write_raw_block(&args.out, &block)?;
    write_manifest("simulate-raw", serde_json::json!({ "homodyne": config }), &[&args.out])?;
    eprintln!("wrote {} codes to {}", count, args.out.display());
    Ok(())
}

fn cmd_extract(args: ExtractArgs, cfg: &HashMap<String, String>) -> anyhow::Result<()> {
    let params = ExtractorParams::new(
        resolve(args.m, cfg, "m", 1024)?,
        resolve(args.n, cfg, "n", 1536)?,
        resolve(args.k, cfg, "k", 64)?,
    )?;
    let seed = match &args.seed_file {
        Some(p) => io::read_seed(p, &params)?,
        None => ToeplitzSeed::default_for(&params),
    };
    let block = io::read_raw_block(&args.input)?;
    let mut raw_bits = BitStream::with_capacity(block.codes.len() * 8);
    for &c in &block.codes {
        raw_bits.push_bits(c as u64, block.config.adc_bits);
    }
    let extracted = extract_stream(&seed, &params, &raw_bits)?;
    let meta = BitStreamMeta {
        bit_count: extracted.len(),
        params: Some(params),
        seed_fingerprint: Some(io::seed_fingerprint(&seed)),
    };
    io::write_bitstream(&args.out, &extracted, &meta)?;
    write_manifest(
        "extract",
        serde_json::json!({
            "params": params,
            "seed_fingerprint": io::seed_fingerprint(&seed),
            "input": args.input,
        }),
        &[&args.out],
    )?;
    eprintln!(
        "extracted {} bits from {} raw bits ({} blocks)",
        extracted.len(),
        raw_bits.len(),
        raw_bits.len() / params.n
    );
    Ok(())
}

/// Exit code 2 for validation problems, 1 for runtime failures.
fn classify(err: &anyhow::Error) -> u8 {
    use qwgn_core::Error as E;
    if let Some(e) = err.downcast_ref::<E>() {
        match e {
            E::Domain(_) | E::InvalidConfig(_) | E::LengthMismatch(_) => return 2,
            _ => return 1,
        }
    }
    if err.to_string().starts_with("invalid --") {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => match load_config(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
        },
        None => HashMap::new(),
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args, &cfg),
        Command::Analyze(args) => cmd_analyze(args, &cfg),
        Command::Table(args) => cmd_table(args, &cfg),
        Command::Bench(args) => cmd_bench(args, &cfg),
        Command::SimulateRaw(args) => cmd_simulate_raw(args, &cfg),
        Command::Extract(args) => cmd_extract(args, &cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}
