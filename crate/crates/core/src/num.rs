//! Exact integer and rational helpers.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::str::FromStr;

pub type Int = BigInt;
pub type Rat = BigRational;

pub fn int(v: i64) -> Int {
    BigInt::from(v)
}

pub fn rat(n: i64, d: i64) -> Rat {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_from_int(v: &Int) -> Rat {
    BigRational::from_integer(v.clone())
}

pub fn floor(r: &Rat) -> Int {
    r.numer().div_floor(r.denom())
}

pub fn ceil(r: &Rat) -> Int {
    -((-r.numer()).div_floor(r.denom()))
}

pub fn is_integral(r: &Rat) -> bool {
    r.denom().is_one()
}

/// Fractional part in `[0, 1)`.
pub fn frac(r: &Rat) -> Rat {
    r - rat_from_int(&floor(r))
}

pub fn lcm_of_denominators<'a>(values: impl IntoIterator<Item = &'a Rat>) -> Int {
    values
        .into_iter()
        .fold(Int::one(), |acc, r| acc.lcm(r.denom()))
}

pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n = Int::from_str(n.trim()).ok()?;
            let d = Int::from_str(d.trim()).ok()?;
            if d.is_zero() {
                None
            } else {
                Some(Rat::new(n, d))
            }
        }
        None => Int::from_str(s).ok().map(Rat::from_integer),
    }
}

pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn abs_rat(r: &Rat) -> Rat {
    r.abs()
}

/// Serde adapters that write numbers as decimal strings so traces stay exact.
pub mod serde_int {
    use super::Int;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(v: &Int, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Int, D::Error> {
        let s = String::deserialize(d)?;
        Int::from_str(&s).map_err(D::Error::custom)
    }
}

pub mod serde_rat {
    use super::{format_rat, parse_rat, Rat};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Rat, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rat(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(d)?;
        parse_rat(&s).ok_or_else(|| D::Error::custom(format!("bad rational `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(floor(&rat(9, 4)), int(2));
        assert_eq!(ceil(&rat(9, 4)), int(3));
        assert_eq!(floor(&rat(-1, 2)), int(-1));
        assert_eq!(ceil(&rat(-1, 2)), int(0));
        assert_eq!(ceil(&rat(4, 1)), int(4));
        assert_eq!(frac(&rat(-1, 3)), rat(2, 3));
    }

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_rat("3/6"), Some(rat(1, 2)));
        assert_eq!(parse_rat("-7"), Some(rat(-7, 1)));
        assert_eq!(parse_rat("1/0"), None);
        assert_eq!(format_rat(&rat(-3, 4)), "-3/4");
        assert_eq!(format_rat(&rat(8, 4)), "2");
    }
}
