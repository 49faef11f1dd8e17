//! Exact rational numbers and their textual form.
//!
//! Every cost, potential and algorithm parameter in this crate is a
//! [`Rational`]. On disk they are written as `"p"` or `"p/q"` in lowest
//! terms; decimal strings such as `"1.25"` are accepted on input.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {0:?} as a rational number")]
pub struct ParseRationalError(pub String);

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn big(v: BigInt) -> Rational {
    Rational::from_integer(v)
}

/// Canonical text: `"7"`, `"-3/4"`.
pub fn format(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse(s: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        let negative = whole.starts_with('-');
        let digits = whole.trim_start_matches(['-', '+']);
        if frac.is_empty() && digits.is_empty() {
            return Err(err());
        }
        if !digits.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let mantissa: BigInt = format!("{digits}{frac}").parse().map_err(|_| err())?;
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        let value = Rational::new(mantissa, scale);
        return Ok(if negative { -value } else { value });
    }
    let n: BigInt = t.parse().map_err(|_| err())?;
    Ok(Rational::from_integer(n))
}

/// `base^exp` for a possibly negative exponent.
pub fn pow(base: &Rational, exp: i32) -> Rational {
    if exp >= 0 {
        num_traits::pow(base.clone(), exp as usize)
    } else {
        num_traits::pow(base.clone(), (-exp) as usize).recip()
    }
}

/// Smallest integer `>= r`.
pub fn ceil_int(r: &Rational) -> BigInt {
    r.ceil().to_integer()
}

/// Least common multiple of the denominators.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values.into_iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Lossy conversion for human-facing summaries only.
pub fn to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or_else(|| if r.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

/// serde adapter: one rational as a string.
pub mod serde_str {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        super::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// serde adapter: a list of rationals as strings.
pub mod serde_vec {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(super::format))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter().map(|s| super::parse(s).map_err(serde::de::Error::custom)).collect()
    }
}

/// serde adapter: an optional rational as a string or null.
pub mod serde_opt {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_some(&super::format(r)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        Option::<String>::deserialize(d)?.map(|s| super::parse(&s).map_err(serde::de::Error::custom)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse("3/4").unwrap(), ratio(3, 4));
        assert_eq!(parse("-6/8").unwrap(), ratio(-3, 4));
        assert_eq!(parse("1.25").unwrap(), ratio(5, 4));
        assert_eq!(parse("-0.5").unwrap(), ratio(-1, 2));
        assert_eq!(parse("12").unwrap(), int(12));
        assert_eq!(parse(".5").unwrap(), ratio(1, 2));
        assert!(parse("1/0").is_err());
        assert!(parse("abc").is_err());
        assert!(parse("").is_err());
        assert!(parse("1.2.3").is_err());
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format(&ratio(10, 4)), "5/2");
        assert_eq!(format(&int(-7)), "-7");
        assert_eq!(format(&ratio(0, 9)), "0");
    }

    #[test]
    fn negative_powers() {
        assert_eq!(pow(&int(4), -2), ratio(1, 16));
        assert_eq!(pow(&ratio(2, 3), 3), ratio(8, 27));
        assert_eq!(pow(&int(5), 0), int(1));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(n in any::<i64>(), d in 1i64..i64::MAX) {
            let r = ratio(n, d);
            prop_assert_eq!(parse(&format(&r)).unwrap(), r);
        }
    }
}
