//! Fixed-point inversion method: w-bit uniform words to 14-bit Gaussian
//! samples via dyadic segmentation and quadratic polynomial evaluation.
//!
//! A URN word splits into a sign bit and a (w-1)-bit magnitude m. The
//! magnitude maps to the lower-tail quantile q = m / 2^w, and the output is
//! the negated quantile -Phi^-1(q); odd symmetry supplies the other half,
//! so only half the fitting segments are stored. Segments follow powers of
//! two: leading-zero count z of the magnitude selects the segment
//! m in [2^(w-2-z), 2^(w-1-z)), the next two bits select one of four
//! sub-segments, and the remaining bits, left-aligned into 11 bits, form
//! the polynomial input x with x/2^11 in [0, 1).
//!
//! Fixed-point alignment schedule (normative for this implementation, the
//! exhaustive error-bound tests lock it down):
//!
//!   t1   = c2 * x                 frac bits f2 + 11, truncated to f1
//!   acc1 = c1 + t1                frac bits f1
//!   t2   = acc1 * x               frac bits f1 + 11, truncated to f0
//!   acc2 = c0 + t2                frac bits f0
//!   out  = acc2 truncated to 10 fractional bits, saturated to 13 bits
//!
//! All truncation rounds toward zero, and c0 carries a +2^-11 offset chosen
//! at fit time so the final truncation error is centered instead of biased.

use crate::error::{Error, Result};
use crate::special::icdf_reference;
use serde::{Deserialize, Serialize};

/// Supported URN input bit widths.
pub const URN_WIDTHS: [u32; 4] = [12, 16, 24, 32];

/// Polynomial input width.
pub const W_IN: u32 = 11;
/// Coefficient storage widths (two's complement).
pub const W_C0: u32 = 35;
pub const W_C1: u32 = 20;
pub const W_C2: u32 = 7;
/// Output magnitude: 13 bits in Q3.10.
pub const MAG_BITS: u32 = 13;
pub const FRAC_BITS: u32 = 10;
pub const MAG_MAX: u16 = (1 << MAG_BITS) - 1;

/// One quantized output ULP, 2^-10 in real value.
pub const OUT_ULP: f64 = 1.0 / (1 << FRAC_BITS) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UrnWord {
    value: u32,
    width: u32,
}

impl UrnWord {
    pub fn new(value: u32, width: u32) -> Result<Self> {
        if !URN_WIDTHS.contains(&width) {
            return Err(Error::InvalidConfig(format!(
                "URN width {width} not in {URN_WIDTHS:?}"
            )));
        }
        if width < 32 && value >> width != 0 {
            return Err(Error::InvalidConfig(format!(
                "value {value:#x} exceeds {width} bits"
            )));
        }
        Ok(Self { value, width })
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Magnitude field: the low w-1 bits.
    pub fn magnitude(&self) -> u32 {
        self.value & (((1u64 << (self.width - 1)) - 1) as u32)
    }

    pub fn sign(&self) -> bool {
        (self.value >> (self.width - 1)) & 1 == 1
    }
}

/// Output of the LZD / barrel-shift stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decomposition {
    pub sign: bool,
    pub is_zero: bool,
    /// Leading-zero count of the magnitude field; segment index.
    pub z: u32,
    /// Two bits after the leading one; sub-segment index.
    pub sub: u32,
    /// 11-bit polynomial input, value x / 2^11 in [0, 1).
    pub x: u32,
    width: u32,
}

impl Decomposition {
    pub fn width(&self) -> u32 {
        self.width
    }
}

/// Splits a URN word into sign, segment address, and polynomial input.
pub fn decompose(urn: UrnWord) -> Decomposition {
    let w = urn.width;
    let wm = w - 1;
    let sign = urn.sign();
    let m = urn.magnitude();
    if m == 0 {
        return Decomposition { sign, is_zero: true, z: 0, sub: 0, x: 0, width: w };
    }
    let z = m.leading_zeros() - (32 - wm);
    // Bits after the leading one, left-aligned into a 13-bit window:
    // 2 sub-segment bits then 11 polynomial bits. Short tails pad with
    // zeros low, long tails truncate low.
    let tail_bits = wm - 1 - z;
    let tail = if tail_bits == 0 { 0 } else { m & ((1u32 << tail_bits) - 1) };
    let window = 2 + W_IN;
    let aligned = if tail_bits >= window {
        tail >> (tail_bits - window)
    } else {
        tail << (window - tail_bits)
    };
    Decomposition {
        sign,
        is_zero: false,
        z,
        sub: aligned >> W_IN,
        x: aligned & ((1 << W_IN) - 1),
        width: w,
    }
}

/// 14-bit sign-magnitude Gaussian sample, magnitude in Q3.10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrnWord {
    pub sign: bool,
    /// 13-bit magnitude, real value magnitude / 2^10.
    pub magnitude: u16,
}

impl GrnWord {
    pub fn new(sign: bool, magnitude: u16) -> Self {
        debug_assert!(magnitude <= MAG_MAX);
        Self { sign, magnitude }
    }

    pub fn real_value(&self) -> f64 {
        let v = self.magnitude as f64 * OUT_ULP;
        if self.sign { -v } else { v }
    }

    /// Raw 14-bit word: sign in bit 13, magnitude below.
    pub fn raw14(&self) -> u16 {
        ((self.sign as u16) << MAG_BITS) | self.magnitude
    }

    pub fn from_raw14(raw: u16) -> Self {
        Self { sign: raw >> MAG_BITS & 1 == 1, magnitude: raw & MAG_MAX }
    }

    /// Two's-complement signed integer of the magnitude, -8191..=8191.
    pub fn as_i16(&self) -> i16 {
        if self.sign { -(self.magnitude as i16) } else { self.magnitude as i16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub c0: i64,
    pub c1: i32,
    pub c2: i8,
    /// Max |quantized polynomial - reference| over the 2^11 input grid,
    /// in real value, recorded at build time.
    pub max_fit_err: f64,
}

/// Per-width LUT of quantized quadratic coefficients with one fractional
/// exponent per coefficient column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    width: u32,
    pub f0: u32,
    pub f1: u32,
    pub f2: u32,
    entries: Vec<TableEntry>,
    /// Magnitude produced by the deepest-tail input m = 1; the DAC model
    /// anchors full scale here.
    max_magnitude: u16,
}

impl CoefficientTable {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn entry(&self, z: u32, sub: u32) -> &TableEntry {
        &self.entries[(z * 4 + sub) as usize]
    }

    pub fn max_magnitude(&self) -> u16 {
        self.max_magnitude
    }

    pub(crate) fn from_parts(
        width: u32,
        f0: u32,
        f1: u32,
        f2: u32,
        entries: Vec<TableEntry>,
    ) -> Result<Self> {
        if !URN_WIDTHS.contains(&width) {
            return Err(Error::InvalidConfig(format!("unsupported table width {width}")));
        }
        if entries.len() != (4 * (width - 1)) as usize {
            return Err(Error::Format(format!(
                "table has {} entries, expected {}",
                entries.len(),
                4 * (width - 1)
            )));
        }
        let mut table = Self { width, f0, f1, f2, entries, max_magnitude: 0 };
        let deepest = decompose(UrnWord::new(1, width)?);
        table.max_magnitude = evaluate(&table, deepest).magnitude;
        Ok(table)
    }

    /// Real value of an entry's coefficients.
    pub fn real_coeffs(&self, z: u32, sub: u32) -> (f64, f64, f64) {
        let e = self.entry(z, sub);
        (
            e.c0 as f64 / (1u64 << self.f0) as f64,
            e.c1 as f64 / (1u64 << self.f1) as f64,
            e.c2 as f64 / (1u64 << self.f2) as f64,
        )
    }
}

/// Tail quantile addressed by (z, sub, x) for width w:
/// q(x) = 2^-(z+2) * (1 + (sub + x) / 4) with x in [0, 1).
fn segment_quantile(z: u32, sub: u32, x: f64) -> f64 {
    (-(z as f64) - 2.0).exp2() * (1.0 + (sub as f64 + x) / 4.0)
}

/// Reference target over one sub-segment: g(x) = -Phi^-1(q(x)) >= 0.
fn segment_target(z: u32, sub: u32, x: f64) -> f64 {
    -icdf_reference(segment_quantile(z, sub, x)).expect("q in (0, 0.5)")
}

const FIT_NODES: usize = 512;

/// Least-squares quadratic fit of `g` over x in [0, 1) on a uniform grid.
fn fit_quadratic(g: impl Fn(f64) -> f64) -> [f64; 3] {
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for i in 0..FIT_NODES {
        let x = i as f64 / FIT_NODES as f64;
        let y = g(x);
        let mut xp = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += xp;
            if k < 3 {
                t[k] += y * xp;
            }
            xp *= x;
        }
    }
    solve3(
        [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]],
        t,
    )
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    // Gaussian elimination with partial pivoting; the normal-equation
    // matrix for a quadratic over [0,1) is benign.
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut v = b[row];
        for k in row + 1..3 {
            v -= a[row][k] * x[k];
        }
        x[row] = v / a[row][row];
    }
    x
}

/// Builds the coefficient LUT for one URN width.
///
/// Each of the 4(w-1) sub-segments gets a least-squares quadratic fit of
/// the reference quantile mapping; column exponents f0, f1, f2 are then
/// chosen as the largest values for which every quantized entry fits its
/// declared bit width.
pub fn build_table(width: u32) -> Result<CoefficientTable> {
    if !URN_WIDTHS.contains(&width) {
        return Err(Error::InvalidConfig(format!(
            "table width {width} not in {URN_WIDTHS:?}"
        )));
    }
    let n_seg = width - 1;
    let mut real: Vec<[f64; 3]> = Vec::with_capacity((4 * n_seg) as usize);
    for z in 0..n_seg {
        for sub in 0..4 {
            let mut c = fit_quadratic(|x| segment_target(z, sub, x));
            // Center the final truncate-toward-zero stage.
            c[0] += 0.5 * OUT_ULP;
            real.push(c);
        }
    }

    let f0 = column_exponent(real.iter().map(|c| c[0]), W_C0);
    let f1 = column_exponent(real.iter().map(|c| c[1]), W_C1);
    let f2 = column_exponent(real.iter().map(|c| c[2]), W_C2);

    let mut entries = Vec::with_capacity(real.len());
    for (idx, c) in real.iter().enumerate() {
        let z = idx as u32 / 4;
        let sub = idx as u32 % 4;
        let c0 = quantize(c[0], f0, W_C0)
            .ok_or(Error::CoefficientOverflow { coeff: "c0", z, sub })?;
        let c1 = quantize(c[1], f1, W_C1)
            .ok_or(Error::CoefficientOverflow { coeff: "c1", z, sub })? as i32;
        let c2 = quantize(c[2], f2, W_C2)
            .ok_or(Error::CoefficientOverflow { coeff: "c2", z, sub })? as i8;

        // Exhaustive quantized-fit error over the 11-bit input grid.
        let (r0, r1, r2) = (
            c0 as f64 / (1u64 << f0) as f64,
            c1 as f64 / (1u64 << f1) as f64,
            c2 as f64 / (1u64 << f2) as f64,
        );
        let mut max_fit_err = 0.0f64;
        for xi in 0..1u32 << W_IN {
            let x = xi as f64 / (1u32 << W_IN) as f64;
            let err = ((r2 * x + r1) * x + r0 - segment_target(z, sub, x)).abs();
            max_fit_err = max_fit_err.max(err);
        }
        entries.push(TableEntry { c0, c1, c2, max_fit_err });
    }
    CoefficientTable::from_parts(width, f0, f1, f2, entries)
}

/// Largest fractional exponent f such that round(c * 2^f) fits `bits`-wide
/// two's complement for every c in the column.
fn column_exponent(column: impl Iterator<Item = f64>, bits: u32) -> u32 {
    let max_abs = column.fold(0.0f64, |m, c| m.max(c.abs()));
    let limit = ((1u64 << (bits - 1)) - 1) as f64;
    if max_abs == 0.0 {
        return bits + W_IN; // arbitrary; all entries are zero anyway
    }
    let mut f = (limit / max_abs).log2().floor() as i64;
    f = f.clamp(0, 62 - bits as i64);
    while f > 0 && (max_abs * (f as f64).exp2()).round() > limit {
        f -= 1;
    }
    f as u32
}

fn quantize(c: f64, f: u32, bits: u32) -> Option<i64> {
    let q = (c * (f as f64).exp2()).round();
    let limit = (1i64 << (bits - 1)) - 1;
    let q = q as i64;
    (-limit - 1..=limit).contains(&q).then_some(q)
}

/// Truncate-toward-zero right shift.
#[inline]
fn tshr(v: i64, s: u32) -> i64 {
    if v >= 0 {
        v >> s
    } else {
        -((-v) >> s)
    }
}

/// Realigns `v` from `from` to `to` fractional bits, truncating toward zero.
#[inline]
fn align(v: i64, from: u32, to: u32) -> i64 {
    if from >= to {
        tshr(v, from - to)
    } else {
        v << (to - from)
    }
}

/// Fixed-point Horner evaluation of the addressed sub-segment polynomial.
/// Returns the output word and a saturation flag.
pub fn evaluate_checked(table: &CoefficientTable, d: Decomposition) -> (GrnWord, bool) {
    debug_assert_eq!(table.width, d.width());
    if d.is_zero {
        return (GrnWord::new(d.sign, 0), false);
    }
    let e = table.entry(d.z, d.sub);
    let x = d.x as i64;
    let t1 = align(e.c2 as i64 * x, table.f2 + W_IN, table.f1);
    let acc1 = e.c1 as i64 + t1;
    let t2 = align(acc1 * x, table.f1 + W_IN, table.f0);
    let acc2 = e.c0 + t2;
    let mag = align(acc2, table.f0, FRAC_BITS);
    if mag < 0 {
        (GrnWord::new(d.sign, 0), false)
    } else if mag > MAG_MAX as i64 {
        (GrnWord::new(d.sign, MAG_MAX), true)
    } else {
        (GrnWord::new(d.sign, mag as u16), false)
    }
}

pub fn evaluate(table: &CoefficientTable, d: Decomposition) -> GrnWord {
    evaluate_checked(table, d).0
}

/// Full conversion: decompose, then evaluate. The real-valued contract is
/// output ~ sign * (-Phi^-1(m / 2^w)), with m = 0 mapped to zero.
pub fn urn_to_grn(urn: UrnWord, table: &CoefficientTable) -> GrnWord {
    evaluate(table, decompose(urn))
}

/// Reference real value for a URN word, used by tests and diagnostics:
/// sign * (-Phi^-1(m / 2^w)), m = 0 -> 0.
pub fn urn_reference_value(urn: UrnWord) -> f64 {
    let m = urn.magnitude();
    if m == 0 {
        return 0.0;
    }
    let q = m as f64 * (-(urn.width() as f64)).exp2();
    let v = -icdf_reference(q).expect("q in (0, 0.5)");
    if urn.sign() { -v } else { v }
}

/// Human-readable table dump: per-entry scaled real coefficients and
/// recorded fit errors.
pub fn dump_table(table: &CoefficientTable) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(
        out,
        "width={} entries={} f0={} f1={} f2={} max_magnitude={}",
        table.width(),
        table.entries().len(),
        table.f0,
        table.f1,
        table.f2,
        table.max_magnitude()
    )
    .unwrap();
    writeln!(out, "{:>3} {:>3} {:>14} {:>14} {:>14} {:>12}", "z", "sub", "c0", "c1", "c2", "fit_err").unwrap();
    for z in 0..table.width() - 1 {
        for sub in 0..4 {
            let (r0, r1, r2) = table.real_coeffs(z, sub);
            let e = table.entry(z, sub);
            writeln!(
                out,
                "{z:>3} {sub:>3} {r0:>14.9} {r1:>14.9} {r2:>14.9} {:>12.3e}",
                e.max_fit_err
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::crest_factor;

    #[test]
    fn urn_word_validation() {
        assert!(UrnWord::new(0xFFF, 12).is_ok());
        assert!(UrnWord::new(0x1000, 12).is_err());
        assert!(UrnWord::new(123, 13).is_err());
        assert!(UrnWord::new(u32::MAX, 32).is_ok());
    }

    #[test]
    fn decompose_zero_magnitude() {
        let d = decompose(UrnWord::new(0x800, 12).unwrap());
        assert!(d.is_zero && d.sign);
        let d = decompose(UrnWord::new(0, 12).unwrap());
        assert!(d.is_zero && !d.sign);
    }

    #[test]
    fn decompose_leading_one_at_top() {
        // m = 0b10000000000 (11 bits): z = 0, sub = 0, x = 0.
        let d = decompose(UrnWord::new(0b100_0000_0000, 12).unwrap());
        assert_eq!((d.z, d.sub, d.x), (0, 0, 0));
        assert!(!d.sign && !d.is_zero);
    }

    #[test]
    fn decompose_hand_traced_w16() {
        // m = 0b000101101001011 (15 bits): z = 3, sub = 01, then the
        // remaining 9 bits 101001011 left-aligned into 11 with 2 pad bits.
        let d = decompose(UrnWord::new(0b000_1011_0100_1011, 16).unwrap());
        assert_eq!(d.z, 3);
        assert_eq!(d.sub, 0b01);
        assert_eq!(d.x, 0b101_0010_1100);
    }

    #[test]
    fn decompose_deepest_tail() {
        // m = 1: all leading zeros, empty tail.
        let d = decompose(UrnWord::new(1, 12).unwrap());
        assert_eq!((d.z, d.sub, d.x), (10, 0, 0));
        let d = decompose(UrnWord::new(1, 32).unwrap());
        assert_eq!((d.z, d.sub, d.x), (30, 0, 0));
    }

    #[test]
    fn decompose_matches_arithmetic_reconstruction() {
        // (z, sub, x) must reconstruct m's top window exactly for w = 12
        // where no bits are dropped.
        for value in 1u32..1 << 11 {
            let urn = UrnWord::new(value, 12).unwrap();
            let d = decompose(urn);
            let wm = 11;
            let top = 1u64 << (wm - 1 - d.z); // leading one
            let rebuilt = (top as f64)
                * (1.0 + (d.sub as f64 + d.x as f64 / 2048.0) / 4.0);
            assert_eq!(rebuilt, value as f64, "m = {value}");
        }
    }

    #[test]
    fn table_shape_and_fit_errors() {
        let table = build_table(12).unwrap();
        assert_eq!(table.entries().len(), 44);
        for e in table.entries() {
            assert!(e.max_fit_err <= 2f64.powi(-9), "fit err {}", e.max_fit_err);
        }
        assert!(build_table(13).is_err());
    }

    #[test]
    fn deepest_entry_c0_approximates_crest_factor() {
        for w in URN_WIDTHS {
            let table = build_table(w).unwrap();
            let (c0, _, _) = table.real_coeffs(w - 2, 0);
            assert!(
                (c0 - crest_factor(w)).abs() < 0.01,
                "w={w}: c0={c0} cf={}",
                crest_factor(w)
            );
        }
    }

    #[test]
    fn zero_input_maps_to_signed_zero() {
        let table = build_table(12).unwrap();
        for raw in [0x000u32, 0x800] {
            let g = urn_to_grn(UrnWord::new(raw, 12).unwrap(), &table);
            assert_eq!(g.magnitude, 0);
            assert_eq!(g.real_value(), 0.0);
        }
    }

    #[test]
    fn exhaustive_w12_accuracy() {
        let table = build_table(12).unwrap();
        let mut worst = 0.0f64;
        for value in 0..1u32 << 12 {
            let urn = UrnWord::new(value, 12).unwrap();
            let got = urn_to_grn(urn, &table).real_value();
            let want = urn_reference_value(urn);
            worst = worst.max((got - want).abs());
        }
        assert!(worst <= 2.0 * OUT_ULP, "worst error {worst}");
    }

    #[test]
    fn deepest_tail_magnitude_w12() {
        // -Phi^-1(2^-12) = 3.48710..; in Q3.10 that is ~3570.8, and the
        // 2-ULP accuracy bound pins the integer to within 2.
        let table = build_table(12).unwrap();
        let g = urn_to_grn(UrnWord::new(1, 12).unwrap(), &table);
        let want = (crest_factor(12) * 1024.0).round() as i64; // 3571
        assert!((g.magnitude as i64 - want).abs() <= 2, "mag = {}", g.magnitude);
        assert_eq!(table.max_magnitude(), g.magnitude);
    }

    #[test]
    fn odd_symmetry_is_structural() {
        let table = build_table(12).unwrap();
        for value in 0..1u32 << 11 {
            let pos = urn_to_grn(UrnWord::new(value, 12).unwrap(), &table);
            let neg = urn_to_grn(UrnWord::new(value | 0x800, 12).unwrap(), &table);
            assert_eq!(pos.magnitude, neg.magnitude);
            assert!(neg.sign && !pos.sign || value == 0 && neg.sign);
        }
    }

    #[test]
    fn magnitude_monotone_in_m_within_one_ulp() {
        let table = build_table(12).unwrap();
        let mut prev = u32::MAX;
        for m in 1u32..1 << 11 {
            let g = urn_to_grn(UrnWord::new(m, 12).unwrap(), &table);
            // Larger m is closer to center: non-increasing magnitude,
            // allowing 1 ULP of truncation jitter.
            assert!(
                (g.magnitude as u32) <= prev.saturating_add(1),
                "m={m}: {} after {prev}",
                g.magnitude
            );
            prev = g.magnitude as u32;
        }
    }

    #[test]
    fn full_sweep_mean_zero_variance_matches_ideal() {
        let table = build_table(12).unwrap();
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        let mut ideal_sumsq = 0.0f64;
        let n = (1u32 << 12) as f64;
        for value in 0..1u32 << 12 {
            let urn = UrnWord::new(value, 12).unwrap();
            let v = urn_to_grn(urn, &table).real_value();
            sum += v;
            sumsq += v * v;
            // Ideal mapping quantized to Q3.10 by truncation.
            let ideal = urn_reference_value(urn);
            let q = (ideal.abs() / OUT_ULP).floor() * OUT_ULP;
            ideal_sumsq += q * q;
        }
        assert_eq!(sum, 0.0);
        let var = sumsq / n;
        let ideal_var = ideal_sumsq / n;
        assert!(
            (var - ideal_var).abs() / ideal_var < 0.01,
            "var {var} vs ideal {ideal_var}"
        );
    }

    #[test]
    fn raw14_roundtrip_and_i16() {
        let g = GrnWord::new(true, 3571);
        assert_eq!(GrnWord::from_raw14(g.raw14()), g);
        assert_eq!(g.as_i16(), -3571);
        assert_eq!(GrnWord::new(false, 0).as_i16(), 0);
    }

    #[test]
    fn dump_is_parseable_text() {
        let table = build_table(12).unwrap();
        let dump = dump_table(&table);
        assert!(dump.lines().count() == 2 + 44);
        assert!(dump.starts_with("width=12"));
    }
}
