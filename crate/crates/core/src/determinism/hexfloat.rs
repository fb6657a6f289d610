//! Canonical hexadecimal float text. Every weight, velocity, fitness and
//! hyperparameter that crosses a file or socket boundary is written in this
//! form, so parsing it back is bit-exact and digests of serialized genomes
//! are comparable across machines.
//!
//! Grammar (strict, lowercase):
//!   zero     "0x0p+0" | "-0x0p+0"
//!   nonzero  "-"? "0x1" ("." 1..13 hex digits, no trailing zero)? "p" ("+"|"-") digits
//!
//! NaN and infinities are rejected in both directions.

use thiserror::Error;

const FRAC_MASK: u64 = 0x000F_FFFF_FFFF_FFFF;
const SIGN_BIT: u64 = 1 << 63;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HexfloatError {
    #[error("cannot encode a non-finite value")]
    NonFinite,
    #[error("malformed hexfloat {0:?}")]
    Malformed(String),
    #[error("hexfloat {0:?} is not representable as a double")]
    Unrepresentable(String),
}

/// Encodes a finite double in canonical form.
pub fn hexfloat_encode(x: f64) -> Result<String, HexfloatError> {
    let bits = x.to_bits();
    let sign = if bits & SIGN_BIT != 0 { "-" } else { "" };
    let exp_field = ((bits >> 52) & 0x7FF) as i32;
    let frac = bits & FRAC_MASK;
    if exp_field == 0x7FF {
        return Err(HexfloatError::NonFinite);
    }
    if exp_field == 0 && frac == 0 {
        return Ok(format!("{sign}0x0p+0"));
    }
    let (e, f52) = if exp_field == 0 {
        // Subnormal: shift the fraction up so an implicit leading 1 works,
        // lowering the exponent below -1022 to compensate.
        let shift = 52 - (63 - frac.leading_zeros() as i32);
        (-1022 - shift, (frac << shift) & FRAC_MASK)
    } else {
        (exp_field - 1023, frac)
    };
    if f52 == 0 {
        return Ok(format!("{sign}0x1p{e:+}"));
    }
    let digits = format!("{f52:013x}");
    Ok(format!("{sign}0x1.{}p{e:+}", digits.trim_end_matches('0')))
}

/// Decodes canonical hexfloat text to the identical double. Anything outside
/// the strict grammar is rejected.
pub fn hexfloat_decode(s: &str) -> Result<f64, HexfloatError> {
    let malformed = || HexfloatError::Malformed(s.to_string());
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (SIGN_BIT, r),
        None => (0, s),
    };
    let rest = rest.strip_prefix("0x").ok_or_else(malformed)?;
    if let Some(exp) = rest.strip_prefix("0p") {
        if exp != "+0" {
            return Err(malformed());
        }
        return Ok(f64::from_bits(sign));
    }
    let rest = rest.strip_prefix('1').ok_or_else(malformed)?;
    let (frac_digits, exp_text) = if let Some(after_dot) = rest.strip_prefix('.') {
        let p = after_dot.find('p').ok_or_else(malformed)?;
        (&after_dot[..p], &after_dot[p + 1..])
    } else {
        ("", rest.strip_prefix('p').ok_or_else(malformed)?)
    };
    if rest.starts_with('.') && (frac_digits.is_empty() || frac_digits.ends_with('0')) {
        return Err(malformed());
    }
    if frac_digits.len() > 13 {
        return Err(malformed());
    }
    let mut f52: u64 = 0;
    for ch in frac_digits.chars() {
        let d = match ch {
            '0'..='9' => ch as u64 - '0' as u64,
            'a'..='f' => ch as u64 - 'a' as u64 + 10,
            _ => return Err(malformed()),
        };
        f52 = (f52 << 4) | d;
    }
    f52 <<= 4 * (13 - frac_digits.len());

    let (exp_negative, digits) = match exp_text.as_bytes().first() {
        Some(b'+') => (false, &exp_text[1..]),
        Some(b'-') => (true, &exp_text[1..]),
        _ => return Err(malformed()),
    };
    if digits.is_empty()
        || digits.len() > 4
        || !digits.bytes().all(|b| b.is_ascii_digit())
        || (digits.len() > 1 && digits.starts_with('0'))
    {
        return Err(malformed());
    }
    let magnitude: i32 = digits.parse().map_err(|_| malformed())?;
    let e = if exp_negative { -magnitude } else { magnitude };

    let unrepresentable = || HexfloatError::Unrepresentable(s.to_string());
    if e > 1023 {
        return Err(unrepresentable());
    }
    let bits = if e >= -1022 {
        sign | (((e + 1023) as u64) << 52) | f52
    } else {
        let shift = (-1022 - e) as u32;
        let mant53 = (1u64 << 52) | f52;
        if shift > 52 || mant53 & ((1u64 << shift) - 1) != 0 {
            return Err(unrepresentable());
        }
        sign | (mant53 >> shift)
    };
    Ok(f64::from_bits(bits))
}
