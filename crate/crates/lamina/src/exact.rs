//! Exact scalar inputs.
//!
//! Atom locations and other configured coordinates are kept as rationals so
//! that equality tests (common-atom detection, grid snapping) are exact.
//! Floating comparison is not good enough there: the limit problem changes
//! discontinuously when two atoms coincide.

use num_rational::Rational64;
use num_traits::Signed;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// An exact rational scalar.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact(Rational64);

#[derive(Debug, Error, PartialEq)]
pub enum ExactError {
    #[error("cannot parse {0:?} as integer, decimal or p/q rational")]
    Parse(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
    #[error("value {0} cannot be represented exactly (overflow)")]
    Overflow(f64),
    #[error("value {0} is not finite")]
    NotFinite(f64),
}

impl Exact {
    pub fn new(num: i64, den: i64) -> Result<Self, ExactError> {
        if den == 0 {
            return Err(ExactError::ZeroDenominator(format!("{num}/{den}")));
        }
        Ok(Exact(Rational64::new(num, den)))
    }

    pub fn integer(n: i64) -> Self {
        Exact(Rational64::from_integer(n))
    }

    pub fn zero() -> Self {
        Exact::integer(0)
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn numer(self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(self) -> i64 {
        *self.0.denom()
    }

    pub fn is_negative(self) -> bool {
        self.0.is_negative()
    }

    /// Exact conversion from an `f64`. Every finite double is a dyadic
    /// rational; this fails only when numerator or denominator exceed `i64`.
    pub fn from_f64(x: f64) -> Result<Self, ExactError> {
        if !x.is_finite() {
            return Err(ExactError::NotFinite(x));
        }
        if x == 0.0 {
            return Ok(Exact::zero());
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1i64 } else { 1i64 };
        let exponent = ((bits >> 52) & 0x7ff) as i64;
        let fraction = bits & 0xf_ffff_ffff_ffff;
        // value = mantissa * 2^(exponent - 1075), mantissa with implicit bit
        let (mantissa, exp2) = if exponent == 0 {
            (fraction, -1074i64)
        } else {
            (fraction | (1 << 52), exponent - 1075)
        };
        let mut num: i128 = mantissa as i128;
        let mut den: i128 = 1;
        if exp2 >= 0 {
            num <<= exp2 as u32;
        } else {
            den <<= (-exp2) as u32;
        }
        // reduce (mantissa may be even)
        while num % 2 == 0 && den % 2 == 0 {
            num /= 2;
            den /= 2;
        }
        while den % 2 == 0 && num % 2 == 0 {
            num /= 2;
            den /= 2;
        }
        let g = gcd_i128(num, den);
        num /= g;
        den /= g;
        if num > i64::MAX as i128 || den > i64::MAX as i128 {
            return Err(ExactError::Overflow(x));
        }
        Ok(Exact(Rational64::new(sign * num as i64, den as i64)))
    }
}

fn gcd_i128(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

impl FromStr for Exact {
    type Err = ExactError;

    /// Accepts `p/q` rationals, integers and decimal literals. Decimals are
    /// read digit-exactly (`0.25` is 1/4, not the nearest double).
    fn from_str(s: &str) -> Result<Self, ExactError> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let num: i64 = p.trim().parse().map_err(|_| ExactError::Parse(s.into()))?;
            let den: i64 = q.trim().parse().map_err(|_| ExactError::Parse(s.into()))?;
            return Exact::new(num, den);
        }
        if let Some((int, frac)) = s.split_once('.') {
            let negative = int.trim_start().starts_with('-');
            let int_part: i64 = if int.is_empty() || int == "-" {
                0
            } else {
                int.parse().map_err(|_| ExactError::Parse(s.into()))?
            };
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(ExactError::Parse(s.into()));
            }
            let digits: i64 = frac.parse().map_err(|_| ExactError::Parse(s.into()))?;
            let scale = 10i64
                .checked_pow(frac.len() as u32)
                .ok_or(ExactError::Parse(s.into()))?;
            let frac_part = Rational64::new(digits, scale);
            let int_part = Rational64::from_integer(int_part);
            let value = if negative {
                int_part - frac_part
            } else {
                int_part + frac_part
            };
            return Ok(Exact(value));
        }
        let n: i64 = s.parse().map_err(|_| ExactError::Parse(s.into()))?;
        Ok(Exact::integer(n))
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Exact({self})")
    }
}

impl From<i64> for Exact {
    fn from(n: i64) -> Self {
        Exact::integer(n)
    }
}

impl Serialize for Exact {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Str(String),
        }
        match Raw::deserialize(de)? {
            Raw::Int(n) => Ok(Exact::integer(n)),
            Raw::Float(x) => Exact::from_f64(x).map_err(serde::de::Error::custom),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!("1/3".parse::<Exact>().unwrap(), Exact::new(1, 3).unwrap());
        assert_eq!("0.25".parse::<Exact>().unwrap(), Exact::new(1, 4).unwrap());
        assert_eq!("-0.5".parse::<Exact>().unwrap(), Exact::new(-1, 2).unwrap());
        assert_eq!("7".parse::<Exact>().unwrap(), Exact::integer(7));
        assert!("1/0".parse::<Exact>().is_err());
        assert!("abc".parse::<Exact>().is_err());
    }

    #[test]
    fn from_f64_is_exact() {
        assert_eq!(Exact::from_f64(0.5).unwrap(), Exact::new(1, 2).unwrap());
        assert_eq!(Exact::from_f64(-3.0).unwrap(), Exact::integer(-3));
        let tenth = Exact::from_f64(0.1).unwrap();
        // 0.1 is not exactly 1/10 in binary; the conversion keeps the true value
        assert_ne!(tenth, Exact::new(1, 10).unwrap());
        assert_eq!(tenth.to_f64(), 0.1);
    }

    #[test]
    fn equality_is_exact() {
        let a: Exact = "1/3".parse().unwrap();
        let b = Exact::new(2, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Exact::from_f64(1.0 / 3.0).unwrap());
    }
}
