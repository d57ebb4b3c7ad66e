//! Six-decimal fixed-point arithmetic.
//!
//! Scores, reward amounts, scheduler energy and step sizes all live in
//! integer micro-units so that commitments hash canonical bytes and every
//! aggregate is bit-reproducible. All rounding is half-to-even.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of micro-units in one whole unit.
pub const SCALE: i64 = 1_000_000;

/// Fractional decimal digits carried by [`Fixed`].
pub const FRACTION_DIGITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFixedError {
    #[error("empty decimal")]
    Empty,
    #[error("invalid decimal `{0}`")]
    Invalid(String),
    #[error("`{0}` has more than 6 fractional digits")]
    TooPrecise(String),
    #[error("`{0}` is out of range")]
    Overflow(String),
}

/// Signed fixed-point number with exactly six fractional decimal digits.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed(i64);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(SCALE);

    pub const fn from_micros(micros: i64) -> Self {
        Fixed(micros)
    }

    pub const fn from_int(units: i64) -> Self {
        Fixed(units * SCALE)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// Quantizes a real number to micro-units, ties to even.
    ///
    /// Returns `None` for non-finite input or values outside the `i64`
    /// micro-unit range.
    pub fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        let scaled = (value * SCALE as f64).round_ties_even();
        if scaled >= i64::MAX as f64 || scaled <= i64::MIN as f64 {
            return None;
        }
        Some(Fixed(scaled as i64))
    }

    pub fn checked_add(self, rhs: Fixed) -> Option<Fixed> {
        self.0.checked_add(rhs.0).map(Fixed)
    }

    pub fn checked_sub(self, rhs: Fixed) -> Option<Fixed> {
        self.0.checked_sub(rhs.0).map(Fixed)
    }

    /// `self * num / den`, rounded half-to-even on the division.
    pub fn mul_ratio(self, num: i64, den: i64) -> Fixed {
        Fixed(div_round_half_even(self.0 as i128 * num as i128, den as i128) as i64)
    }

    /// Exact mean of micro-unit values, half-to-even on the division.
    ///
    /// Returns `None` for an empty slice.
    pub fn mean(values: &[Fixed]) -> Option<Fixed> {
        if values.is_empty() {
            return None;
        }
        let sum: i128 = values.iter().map(|v| v.0 as i128).sum();
        Some(Fixed(div_round_half_even(sum, values.len() as i128) as i64))
    }

    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn from_be_bytes(bytes: [u8; 8]) -> Self {
        Fixed(i64::from_be_bytes(bytes))
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

/// Integer division rounding to the nearest quotient, ties to even.
///
/// # Panics
///
/// Panics if `den` is zero.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    assert!(den != 0, "division by zero");
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    // 0 <= r < den; compare 2r against den
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 + rhs.0)
    }
}

impl AddAssign for Fixed {
    fn add_assign(&mut self, rhs: Fixed) {
        self.0 += rhs.0;
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 - rhs.0)
    }
}

impl SubAssign for Fixed {
    fn sub_assign(&mut self, rhs: Fixed) {
        self.0 -= rhs.0;
    }
}

impl Neg for Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed(-self.0)
    }
}

impl std::iter::Sum for Fixed {
    fn sum<I: Iterator<Item = Fixed>>(iter: I) -> Fixed {
        iter.fold(Fixed::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let scale = SCALE as u64;
        write!(f, "{sign}{}.{:06}", abs / scale, abs % scale)
    }
}

impl fmt::Debug for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Fixed {
    type Err = ParseFixedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseFixedError::Empty);
        }
        let invalid = || ParseFixedError::Invalid(s.to_string());
        let (negative, body) = match s.as_bytes()[0] {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(invalid());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid());
        }
        if frac_part.len() > FRACTION_DIGITS {
            return Err(ParseFixedError::TooPrecise(s.to_string()));
        }
        let overflow = || ParseFixedError::Overflow(s.to_string());
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| overflow())?
        };
        let mut frac: i64 = 0;
        for (i, b) in frac_part.bytes().enumerate() {
            frac += (b - b'0') as i64 * 10i64.pow((FRACTION_DIGITS - 1 - i) as u32);
        }
        let micros = whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(overflow)?;
        Ok(Fixed(if negative { -micros } else { micros }))
    }
}

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fixed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FixedVisitor;

        impl Visitor<'_> for FixedVisitor {
            type Value = Fixed;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal string or number with at most 6 fractional digits")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Fixed, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Fixed, E> {
                v.checked_mul(SCALE)
                    .map(Fixed)
                    .ok_or_else(|| E::custom("decimal out of range"))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Fixed, E> {
                i64::try_from(v)
                    .map_err(|_| E::custom("decimal out of range"))
                    .and_then(|v| self.visit_i64(v))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Fixed, E> {
                // shortest round-trip repr, so 7.7 parses as 7.700000
                format!("{v}").parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(FixedVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_display() {
        assert_eq!("7.5".parse::<Fixed>().unwrap(), Fixed::from_micros(7_500_000));
        assert_eq!("-0.000001".parse::<Fixed>().unwrap(), Fixed::from_micros(-1));
        assert_eq!(".25".parse::<Fixed>().unwrap().to_string(), "0.250000");
        assert_eq!(Fixed::from_int(10).to_string(), "10.000000");
        assert_eq!(Fixed::from_micros(-1_500_000).to_string(), "-1.500000");
        assert!(matches!(
            "1.0000001".parse::<Fixed>(),
            Err(ParseFixedError::TooPrecise(_))
        ));
        assert!("1e3".parse::<Fixed>().is_err());
        assert!("-".parse::<Fixed>().is_err());
        assert!("".parse::<Fixed>().is_err());
    }

    #[test]
    fn half_even_division() {
        assert_eq!(div_round_half_even(5, 2), 2);
        assert_eq!(div_round_half_even(7, 2), 4);
        assert_eq!(div_round_half_even(-5, 2), -2);
        assert_eq!(div_round_half_even(-7, 2), -4);
        assert_eq!(div_round_half_even(10, 3), 3);
        assert_eq!(div_round_half_even(11, 3), 4);
        assert_eq!(div_round_half_even(5, -2), -2);
    }

    #[test]
    fn from_f64_ties_to_even() {
        assert_eq!(Fixed::from_f64(0.0000005).unwrap().micros(), 0);
        assert_eq!(Fixed::from_f64(0.0000015).unwrap().micros(), 2);
        assert_eq!(Fixed::from_f64(7.5).unwrap(), "7.5".parse().unwrap());
        assert!(Fixed::from_f64(f64::NAN).is_none());
    }

    #[test]
    fn mean_is_exact_in_micros() {
        let v: Vec<Fixed> = ["5", "5", "8"].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(Fixed::mean(&v).unwrap(), Fixed::from_int(6));
        let v = [Fixed::from_micros(1), Fixed::from_micros(2)];
        // 1.5 micro ties to 2
        assert_eq!(Fixed::mean(&v).unwrap().micros(), 2);
        assert!(Fixed::mean(&[]).is_none());
    }

    #[test]
    fn serde_accepts_strings_and_numbers() {
        let a: Fixed = serde_json::from_str("\"9.25\"").unwrap();
        let b: Fixed = serde_json::from_str("9.25").unwrap();
        let c: Fixed = serde_json::from_str("9").unwrap();
        assert_eq!(a, b);
        assert_eq!(c, Fixed::from_int(9));
        assert_eq!(serde_json::to_string(&a).unwrap(), "\"9.250000\"");
    }

    proptest! {
        #[test]
        fn bytes_round_trip(m in any::<i64>()) {
            let f = Fixed::from_micros(m);
            prop_assert_eq!(Fixed::from_be_bytes(f.to_be_bytes()), f);
            prop_assert_eq!(f.to_be_bytes(), m.to_be_bytes());
        }

        #[test]
        fn display_parse_round_trip(m in -1_000_000_000_000i64..1_000_000_000_000) {
            let f = Fixed::from_micros(m);
            prop_assert_eq!(f.to_string().parse::<Fixed>().unwrap(), f);
        }
    }
}
