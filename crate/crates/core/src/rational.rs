//! Exact rational helpers shared by the rational evaluation paths.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rat = BigRational;

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Exact binary value of a finite float.
pub fn from_f64_exact(x: f64) -> Result<Rat> {
    Rat::from_float(x).ok_or_else(|| Error::InvalidArgument(format!("non-finite value {x}")))
}

/// Decimal reading of a float: `0.3` becomes `3/10`, using the shortest round-trip string.
pub fn from_f64_decimal(x: f64) -> Result<Rat> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite value {x}")));
    }
    parse_rational(&format!("{x:e}"))
}

/// Parses `a/b`, integers, decimals and scientific notation exactly.
pub fn parse_rational(s: &str) -> Result<Rat> {
    let s = s.trim();
    let bad = || Error::InvalidArgument(format!("cannot parse {s:?} as a rational"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rat::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(k) => (&s[..k], s[k + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut value = Rat::from_integer(all.parse::<BigInt>().map_err(|_| bad())?);
    let shift = exp - frac_part.len() as i32;
    let ten = Rat::from_integer(BigInt::from(10));
    if shift >= 0 {
        value *= num::traits::pow(ten, shift as usize);
    } else {
        value /= num::traits::pow(ten, (-shift) as usize);
    }
    Ok(if neg { -value } else { value })
}

pub fn to_f64(x: &Rat) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // Fallback for huge numerators/denominators.
        (ln_abs(x)).exp() * if x.is_negative() { -1.0 } else { 1.0 }
    })
}

fn ln_bigint(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap().abs().ln();
    }
    let shift = bits - 64;
    let top: BigInt = n.abs() >> shift;
    top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// Natural log of |x| for x != 0, valid for arbitrarily large numerators and denominators.
pub fn ln_abs(x: &Rat) -> f64 {
    ln_bigint(x.numer()) - ln_bigint(x.denom())
}

pub fn is_one(x: &Rat) -> bool {
    x.is_one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_forms() {
        assert_eq!(parse_rational("3/10").unwrap(), rat(3, 10));
        assert_eq!(parse_rational("0.3").unwrap(), rat(3, 10));
        assert_eq!(parse_rational("-2.5e-1").unwrap(), rat(-1, 4));
        assert_eq!(parse_rational("12").unwrap(), rat_int(12));
        assert_eq!(from_f64_decimal(0.3).unwrap(), rat(3, 10));
        assert_eq!(from_f64_decimal(-1.0).unwrap(), rat_int(-1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn ln_of_huge_values() {
        let big = num::traits::pow(rat(3, 1), 2000);
        assert!((ln_abs(&big) - 2000.0 * 3f64.ln()).abs() < 1e-9);
        assert!((to_f64(&rat(1, 4)) - 0.25).abs() == 0.0);
    }
}
