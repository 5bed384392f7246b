//! Exact logarithmic rates `(1/den) * log2(num)`.

use std::cmp::Ordering;
use std::fmt;

use num::bigint::BigUint;
use num::rational::BigRational;
use num::{BigInt, One, ToPrimitive, Zero};

/// The value `(1/den) * log2(num)` with `num >= 1` and `den >= 1`.
///
/// Comparison is exact: `num1^den2` against `num2^den1`.
#[derive(Clone, Debug)]
pub struct LogRate {
    num: BigUint,
    den: u32,
}

impl LogRate {
    pub fn new(num: BigUint, den: u32) -> Self {
        assert!(!num.is_zero(), "logarithm of zero");
        assert!(den > 0, "zero horizon");
        LogRate { num, den }
    }

    pub fn from_u64(num: u64, den: u32) -> Self {
        LogRate::new(BigUint::from(num), den)
    }

    pub fn zero() -> Self {
        LogRate::from_u64(1, 1)
    }

    /// `log2(num)` bits.
    pub fn log2_of(num: u64) -> Self {
        LogRate::from_u64(num, 1)
    }

    pub fn num(&self) -> &BigUint {
        &self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_one()
    }

    /// Exact sum of two rates.
    pub fn add(&self, other: &LogRate) -> LogRate {
        if self.den == other.den {
            return LogRate::new(&self.num * &other.num, self.den);
        }
        LogRate::new(self.num.pow(other.den) * other.num.pow(self.den), self.den * other.den)
    }

    /// The exponent `k` when `num = 2^k`.
    fn power_of_two(&self) -> Option<u64> {
        let k = self.num.bits() - 1;
        (self.num == BigUint::one() << k).then_some(k)
    }

    /// The rational value when the rate is rational, i.e. `num` is a power of two.
    pub fn as_rational(&self) -> Option<BigRational> {
        self.power_of_two()
            .map(|k| BigRational::new(BigInt::from(k), BigInt::from(self.den)))
    }

    pub fn to_f64(&self) -> f64 {
        let bits = self.num.bits();
        let shift = bits.saturating_sub(64);
        let top = (&self.num >> shift).to_f64().unwrap_or(f64::MAX);
        (top.log2() + shift as f64) / self.den as f64
    }

    /// `p/q` for rational values, `log2(P)/q` otherwise.
    pub fn exact_form(&self) -> String {
        match self.as_rational() {
            Some(r) => format!("{}/{}", r.numer(), r.denom()),
            None if self.den == 1 => format!("log2({})", self.num),
            None => format!("log2({})/{}", self.num, self.den),
        }
    }

    /// Shortest decimal: exact for terminating rationals, 12 digits otherwise.
    pub fn decimal(&self) -> String {
        match self.as_rational() {
            Some(r) => rational_decimal(&r),
            None => fmt_decimal(self.to_f64()),
        }
    }
}

impl PartialEq for LogRate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for LogRate {}

impl Ord for LogRate {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.den == other.den {
            return self.num.cmp(&other.num);
        }
        self.num.pow(other.den).cmp(&other.num.pow(self.den))
    }
}

impl PartialOrd for LogRate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for LogRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_rational() {
            Some(_) => f.write_str(&self.exact_form()),
            None => write!(f, "{} ({})", self.exact_form(), self.decimal()),
        }
    }
}

/// Formats with at most 12 fractional digits, trimming trailing zeros.
pub fn fmt_decimal(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Exact decimal expansion when it terminates within 12 digits.
pub fn rational_decimal(r: &BigRational) -> String {
    let scale = BigInt::from(10u64.pow(12));
    let scaled = r * BigRational::from_integer(scale.clone());
    if scaled.is_integer() {
        let v = scaled.to_integer();
        let neg = v < BigInt::zero();
        let v = if neg { -v } else { v };
        let (int, frac) = (&v / &scale, &v % &scale);
        let frac = format!("{:012}", frac);
        let frac = frac.trim_end_matches('0');
        let sign = if neg { "-" } else { "" };
        if frac.is_empty() {
            format!("{sign}{int}")
        } else {
            format!("{sign}{int}.{frac}")
        }
    } else {
        fmt_decimal(r.to_f64().unwrap_or(f64::NAN))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn display_forms() {
        assert_eq!(LogRate::from_u64(2, 1).exact_form(), "1/1");
        assert_eq!(LogRate::from_u64(2, 2).exact_form(), "1/2");
        assert_eq!(LogRate::from_u64(16, 2).exact_form(), "2/1");
        assert_eq!(LogRate::from_u64(3, 1).exact_form(), "log2(3)");
        assert_eq!(LogRate::from_u64(6, 2).exact_form(), "log2(6)/2");
        assert_eq!(LogRate::from_u64(2, 2).decimal(), "0.5");
        assert_eq!(LogRate::from_u64(8, 3).decimal(), "1");
        assert_eq!(LogRate::zero().decimal(), "0");
        assert_eq!(LogRate::from_u64(3, 1).decimal(), "1.584962500721");
    }

    #[test]
    fn exact_comparison() {
        assert_eq!(LogRate::from_u64(4, 2), LogRate::from_u64(2, 1));
        assert!(LogRate::from_u64(3, 1) > LogRate::from_u64(2, 1));
        assert!(LogRate::from_u64(6, 2) > LogRate::from_u64(2, 1));
        assert!(LogRate::from_u64(6, 2) < LogRate::from_u64(3, 1));
        assert_eq!(LogRate::from_u64(2, 1).add(&LogRate::from_u64(2, 2)), LogRate::from_u64(8, 2));
    }

    #[test]
    fn decimal_trimming() {
        assert_eq!(fmt_decimal(1.0), "1");
        assert_eq!(fmt_decimal(-0.0), "0");
        assert_eq!(fmt_decimal(0.25), "0.25");
        assert_eq!(fmt_decimal(f64::INFINITY), "inf");
    }

    proptest! {
        #[test]
        fn order_agrees_with_floats(a in 1u64..5000, da in 1u32..6, b in 1u64..5000, db in 1u32..6) {
            let (x, y) = (LogRate::from_u64(a, da), LogRate::from_u64(b, db));
            let (fx, fy) = ((a as f64).log2() / da as f64, (b as f64).log2() / db as f64);
            if (fx - fy).abs() > 1e-9 {
                prop_assert_eq!(x < y, fx < fy);
            }
            prop_assert!((x.to_f64() - fx).abs() < 1e-9);
        }
    }
}
