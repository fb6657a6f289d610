//! Node depths as exact dyadic rationals in [0, 1]. Edge splitting halves
//! intervals repeatedly; doubles would collide after enough splits, so depth
//! is kept as `num / 2^exp` with exact midpoints and total ordering.

use std::fmt;
use thiserror::Error;

/// Denominator exponents past this cannot be represented in u128 arithmetic.
/// Reaching it would take 127 nested splits along a single path.
const MAX_EXP: u32 = 127;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DepthError {
    #[error("depth denominator exponent would exceed 2^{MAX_EXP}")]
    Overflow,
    #[error("malformed depth {0:?}")]
    Malformed(String),
}

/// Exact dyadic rational `num / 2^exp` in [0, 1], kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Depth {
    num: u128,
    exp: u32,
}

impl Depth {
    pub const ZERO: Depth = Depth { num: 0, exp: 0 };
    pub const ONE: Depth = Depth { num: 1, exp: 0 };

    fn reduced(mut num: u128, mut exp: u32) -> Depth {
        while exp > 0 && num & 1 == 0 {
            num >>= 1;
            exp -= 1;
        }
        if num == 0 {
            exp = 0;
        }
        Depth { num, exp }
    }

    /// Exact midpoint of two depths.
    pub fn midpoint(a: Depth, b: Depth) -> Result<Depth, DepthError> {
        let common = a.exp.max(b.exp);
        if common + 1 > MAX_EXP {
            return Err(DepthError::Overflow);
        }
        let na = a.num << (common - a.exp);
        let nb = b.num << (common - b.exp);
        Ok(Depth::reduced(na + nb, common + 1))
    }

    pub fn numerator(&self) -> u128 {
        self.num
    }

    pub fn denominator(&self) -> u128 {
        1u128 << self.exp
    }

    /// Approximate value, for display and dot layout only.
    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.denominator() as f64
    }

    pub fn parse(text: &str) -> Result<Depth, DepthError> {
        let malformed = || DepthError::Malformed(text.to_string());
        let (num_text, den_text) = text.split_once('/').ok_or_else(malformed)?;
        let num: u128 = num_text.parse().map_err(|_| malformed())?;
        let den: u128 = den_text.parse().map_err(|_| malformed())?;
        if den == 0 || !den.is_power_of_two() {
            return Err(malformed());
        }
        let exp = den.trailing_zeros();
        if num > den {
            return Err(malformed());
        }
        Ok(Depth::reduced(num, exp))
    }
}

impl Ord for Depth {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let common = self.exp.max(other.exp);
        let a = self.num << (common - self.exp);
        let b = other.num << (common - other.exp);
        a.cmp(&b)
    }
}

impl PartialOrd for Depth {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.denominator())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints_are_exact_and_ordered() {
        let half = Depth::midpoint(Depth::ZERO, Depth::ONE).unwrap();
        assert_eq!(half.to_string(), "1/2");
        let quarter = Depth::midpoint(Depth::ZERO, half).unwrap();
        let three_quarters = Depth::midpoint(half, Depth::ONE).unwrap();
        assert_eq!(quarter.to_string(), "1/4");
        assert_eq!(three_quarters.to_string(), "3/4");
        assert!(Depth::ZERO < quarter);
        assert!(quarter < half);
        assert!(half < three_quarters);
        assert!(three_quarters < Depth::ONE);
    }

    #[test]
    fn midpoint_of_equal_depths_is_identity() {
        let half = Depth::midpoint(Depth::ZERO, Depth::ONE).unwrap();
        assert_eq!(Depth::midpoint(half, half).unwrap(), half);
    }

    #[test]
    fn repeated_splits_never_collide() {
        // Walk the deepest chain: midpoint with ONE each time. Every depth
        // must be new and strictly increasing.
        let mut d = Depth::midpoint(Depth::ZERO, Depth::ONE).unwrap();
        let mut seen = vec![Depth::ZERO, Depth::ONE, d];
        for _ in 0..120 {
            d = Depth::midpoint(d, Depth::ONE).unwrap();
            assert!(!seen.contains(&d));
            assert!(&d > seen.last().unwrap());
            seen.push(d);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let mut d = Depth::midpoint(Depth::ZERO, Depth::ONE).unwrap();
        for _ in 0..126 {
            d = Depth::midpoint(d, Depth::ONE).unwrap();
        }
        assert_eq!(Depth::midpoint(d, Depth::ONE), Err(DepthError::Overflow));
    }

    #[test]
    fn parse_round_trip() {
        for text in ["0/1", "1/1", "1/2", "3/4", "11/32"] {
            assert_eq!(Depth::parse(text).unwrap().to_string(), text);
        }
        assert_eq!(Depth::parse("2/4").unwrap().to_string(), "1/2");
        for bad in ["", "1", "1/3", "1/0", "5/4", "-1/2", "a/2"] {
            assert!(matches!(Depth::parse(bad), Err(DepthError::Malformed(_))), "{bad}");
        }
    }
}
