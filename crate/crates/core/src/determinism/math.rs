//! Portable exponential and natural log. Results depend only on IEEE-754
//! double arithmetic (add, mul, div, floor), never on the platform libm, so
//! training error sums and softmax outputs are bit-identical across hosts.
//! Constants are pinned by bit pattern; the hexfloat forms are in comments.

/// ln(2), nearest double: 0x1.62e42fefa39efp-1.
const LN2: f64 = f64::from_bits(0x3FE6_2E42_FEFA_39EF);
/// High 25 mantissa bits of ln(2): 0x1.62e42f8p-1. Exact when multiplied by
/// any |k| < 2^27, which keeps the range reduction residual accurate.
const LN2_HI: f64 = f64::from_bits(0x3FE6_2E42_F800_0000);
/// ln(2) - LN2_HI, nearest double: 0x1.be8e7bcd5e4f2p-27.
const LN2_LO: f64 = f64::from_bits(0x3E4B_E8E7_BCD5_E4F2);
/// sqrt(2), nearest double: 0x1.6a09e667f3bcdp+0.
const SQRT2: f64 = f64::from_bits(0x3FF6_A09E_667F_3BCD);

/// Inputs beyond this magnitude are clamped. Softmax operands are shifted by
/// the max logit before calling, so anything past the clamp is vanishing.
const EXP_CLAMP: f64 = 64.0;

/// 1/i! for the degree-30 Taylor polynomial of exp.
const RECIP_FACTORIALS: [f64; 31] = {
    let mut coeffs = [0.0f64; 31];
    coeffs[0] = 1.0;
    let mut factorial = 1.0f64;
    let mut i = 1;
    while i <= 30 {
        factorial *= i as f64;
        coeffs[i] = 1.0 / factorial;
        i += 1;
    }
    coeffs
};

/// 1/(2j+1) for the atanh series of ln, j = 0..=12.
const LN_SERIES: [f64; 13] = {
    let mut coeffs = [0.0f64; 13];
    let mut j = 0;
    while j < 13 {
        coeffs[j] = 1.0 / (2 * j + 1) as f64;
        j += 1;
    }
    coeffs
};

/// 2^k for k in [-1022, 1023], built from the bit pattern so no pow call is
/// involved.
fn pow2i(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k), "pow2i({k})");
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// exp(x) with |x| clamped to 64: range-reduces by k = round(x / ln 2), runs
/// a degree-30 Taylor polynomial on the residual by Horner's rule, and
/// rescales by 2^k. Relative error stays below 1e-12 on [-20, 20]; exp(0) is
/// exactly 1. NaN propagates.
pub fn portable_exp(x: f64) -> f64 {
    let x = if x > EXP_CLAMP {
        EXP_CLAMP
    } else if x < -EXP_CLAMP {
        -EXP_CLAMP
    } else {
        x
    };
    let k = (x / LN2 + 0.5).floor();
    // Two-constant reduction keeps r accurate to the last bits even when
    // k * ln2 nearly cancels x.
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut t = RECIP_FACTORIALS[30];
    let mut i = 30;
    while i > 0 {
        i -= 1;
        t = t * r + RECIP_FACTORIALS[i];
    }
    if t.is_nan() {
        return t;
    }
    t * pow2i(k as i32)
}

/// Natural log of a positive finite double, on the same no-libm terms as
/// [`portable_exp`]. Splits x into mantissa and exponent by bit manipulation,
/// folds the mantissa into [sqrt2/2, sqrt2), and sums the odd atanh series in
/// t = (m-1)/(m+1). ln(1) is exactly 0. Returns -inf for 0 and NaN for
/// negative or NaN input.
pub fn portable_ln(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let mut bits = x.to_bits();
    let mut e: i32 = 0;
    if bits >> 52 == 0 {
        // Subnormal: renormalize with an exact scale.
        bits = (x * pow2i(54)).to_bits();
        e -= 54;
    }
    e += ((bits >> 52) & 0x7FF) as i32 - 1023;
    let mut m = f64::from_bits((bits & 0x000F_FFFF_FFFF_FFFF) | 0x3FF0_0000_0000_0000);
    if m > SQRT2 {
        m *= 0.5;
        e += 1;
    }
    let t = (m - 1.0) / (m + 1.0);
    let t2 = t * t;
    let mut s = LN_SERIES[12];
    let mut j = 12;
    while j > 0 {
        j -= 1;
        s = s * t2 + LN_SERIES[j];
    }
    let ln_m = 2.0 * t * s;
    let ef = e as f64;
    ef * LN2_HI + (ln_m + ef * LN2_LO)
}
