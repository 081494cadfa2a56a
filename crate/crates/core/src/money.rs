//! Fixed-point currency.
//!
//! One table unit ("Wei" in the trace and report columns) is stored as
//! 10^18 base units, so decimal prices like `0.0188` and the 2% contract fee
//! are exact integers.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Base units per table unit.
pub const SCALE: u128 = 1_000_000_000_000_000_000;
/// Number of fractional decimal digits carried by a [`MoneyAmount`].
pub const FRACTION_DIGITS: usize = 18;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoneyError {
    #[error("empty amount")]
    Empty,
    #[error("invalid character in amount {0:?}")]
    InvalidDigit(String),
    #[error("more than 18 fractional digits in {0:?}")]
    TooPrecise(String),
    #[error("amount overflow")]
    Overflow,
    #[error("amount underflow")]
    Underflow,
}

/// A non-negative amount of currency in base units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MoneyAmount(u128);

impl MoneyAmount {
    pub const ZERO: MoneyAmount = MoneyAmount(0);

    pub const fn from_base_units(units: u128) -> Self {
        MoneyAmount(units)
    }

    /// `whole` table units, e.g. `from_units(5)` is 5.0.
    pub fn from_units(whole: u64) -> Self {
        MoneyAmount(whole as u128 * SCALE)
    }

    pub const fn base_units(self) -> u128 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: MoneyAmount) -> Result<MoneyAmount, MoneyError> {
        self.0.checked_add(other.0).map(MoneyAmount).ok_or(MoneyError::Overflow)
    }

    pub fn checked_sub(self, other: MoneyAmount) -> Result<MoneyAmount, MoneyError> {
        self.0
            .checked_sub(other.0)
            .map(MoneyAmount)
            .ok_or(MoneyError::Underflow)
    }

    pub fn checked_mul(self, factor: u64) -> Result<MoneyAmount, MoneyError> {
        self.0
            .checked_mul(factor as u128)
            .map(MoneyAmount)
            .ok_or(MoneyError::Overflow)
    }

    /// `floor(self * percent / 100)`, multiplying before dividing.
    pub fn percent_floor(self, percent: u32) -> Result<MoneyAmount, MoneyError> {
        self.0
            .checked_mul(percent as u128)
            .map(|v| MoneyAmount(v / 100))
            .ok_or(MoneyError::Overflow)
    }

    /// Nearest binary64 value of the decimal amount.
    ///
    /// Goes through the decimal rendering so the result is the correctly
    /// rounded value of the printed number (`0.0188` maps to the same `f64`
    /// as the literal `0.0188`).
    pub fn to_f64(self) -> f64 {
        let text = alloc::format!("{}", self);
        f64::from_str(&text).unwrap_or(f64::NAN)
    }

    /// Rendering with trailing fractional zeros removed (`0.192`, `1`).
    pub fn trimmed(self) -> Trimmed {
        Trimmed(self)
    }
}

/// Display adaptor returned by [`MoneyAmount::trimmed`].
#[derive(Debug, Clone, Copy)]
pub struct Trimmed(MoneyAmount);

impl fmt::Display for Trimmed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 .0 / SCALE;
        let mut frac = self.0 .0 % SCALE;
        if frac == 0 {
            return write!(f, "{}", whole);
        }
        let mut digits = FRACTION_DIGITS;
        while frac.is_multiple_of(10) {
            frac /= 10;
            digits -= 1;
        }
        write!(f, "{}.{:0width$}", whole, frac, width = digits)
    }
}

/// Canonical rendering: always 18 fractional digits.
impl fmt::Display for MoneyAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:018}", self.0 / SCALE, self.0 % SCALE)
    }
}

impl FromStr for MoneyAmount {
    type Err = MoneyError;

    /// Accepts `123`, `0.0188`, `.5` and `7.` style decimals, no sign, no
    /// exponent, at most 18 fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "." {
            return Err(MoneyError::Empty);
        }
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(MoneyError::InvalidDigit(s.into()));
        }
        if frac.len() > FRACTION_DIGITS {
            return Err(MoneyError::TooPrecise(s.into()));
        }
        let mut units: u128 = 0;
        for b in whole.bytes() {
            units = units
                .checked_mul(10)
                .and_then(|u| u.checked_add((b - b'0') as u128))
                .ok_or(MoneyError::Overflow)?;
        }
        units = units.checked_mul(SCALE).ok_or(MoneyError::Overflow)?;
        let mut frac_units: u128 = 0;
        for b in frac.bytes() {
            frac_units = frac_units * 10 + (b - b'0') as u128;
        }
        frac_units *= 10u128.pow((FRACTION_DIGITS - frac.len()) as u32);
        units
            .checked_add(frac_units)
            .map(MoneyAmount)
            .ok_or(MoneyError::Overflow)
    }
}

impl Serialize for MoneyAmount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MoneyAmount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl core::iter::Sum for MoneyAmount {
    /// Panics on overflow, which needs more than 3.4e20 table units.
    fn sum<I: Iterator<Item = MoneyAmount>>(iter: I) -> Self {
        iter.fold(MoneyAmount::ZERO, |acc, m| {
            acc.checked_add(m).expect("money sum overflow")
        })
    }
}
