//! Exact rational arithmetic helpers and presentation rounding.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{ToPrimitive, Zero};

/// Non-negative exact rational used for all averages and similarities.
pub type Exact = Ratio<u64>;

pub fn to_big(r: &Exact) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

pub fn to_f64(r: &Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn big_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `numer/denom` in lowest terms, or a bare integer.
pub fn exact_string(r: &Exact) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn big_exact_string(r: &BigRational) -> String {
    if r.denom() == &BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Rounds half away from zero to `places` decimals and formats the result.
pub fn round_big(r: &BigRational, places: u32) -> String {
    let scale = BigInt::from(10u32).pow(places);
    let negative = r.numer() < &BigInt::zero();
    let num = if negative { -r.numer() } else { r.numer().clone() } * &scale;
    let den = r.denom().clone();
    let mut q = &num / &den;
    let rem = &num % &den;
    if rem * 2 >= den {
        q += 1;
    }
    let digits = q.to_string();
    let places = places as usize;
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (int, frac) = padded.split_at(padded.len() - places);
    let sign = if negative && q != BigInt::zero() { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

/// Two-decimal presentation, half away from zero.
pub fn round2(r: &Exact) -> String {
    round_big(&to_big(r), 2)
}

/// Serde adapter writing an [`Exact`] as its `numer/denom` string.
pub mod serde_exact {
    use super::*;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Exact, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&exact_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Exact, D::Error> {
        let s = String::deserialize(d)?;
        parse_exact(&s).ok_or_else(|| D::Error::custom(format!("bad rational {s:?}")))
    }
}

/// Parses `a/b`, an integer, or a non-negative decimal such as `0.25`.
pub fn parse_exact(s: &str) -> Option<Exact> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let d: u64 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Exact::new(n.trim().parse().ok()?, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let den = 10u64.pow(frac.len() as u32);
        let frac: u64 = frac.parse().ok()?;
        return Some(Exact::new(int.checked_mul(den)?.checked_add(frac)?, den));
    }
    s.parse().ok().map(Exact::from_integer)
}
