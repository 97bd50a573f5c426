//! Identifiers, amounts and exact exchange rates shared by every module.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Intercoin in integer micro-units.
pub type MicroInter = u64;

/// Simulation time in integer ticks.
pub type Tick = u64;

pub type Epoch = u64;

pub const MICRO_PER_INTER: MicroInter = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StreamId(pub u64);

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stream-{}", self.0)
    }
}

/// A local coin type. Each coin is issued by exactly one currency stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoinId(pub u64);

impl fmt::Display for CoinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "coin-{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RateError {
    #[error("exchange rate undefined: supply is zero")]
    UndefinedRate,
    #[error("{amount} units at {rate} is not a whole number of micro-INTER")]
    ExactArithmetic { amount: u64, rate: ExchangeRate },
    #[error("amount overflows micro-INTER range")]
    Overflow,
}

/// Micro-INTER per coin unit, kept as the unreduced pair (reserve, supply).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExchangeRate {
    pub reserve: MicroInter,
    pub supply: u64,
}

impl ExchangeRate {
    pub fn new(reserve: MicroInter, supply: u64) -> Result<Self, RateError> {
        if supply == 0 {
            return Err(RateError::UndefinedRate);
        }
        Ok(Self { reserve, supply })
    }

    /// A fixed peg of `micro` micro-INTER per unit.
    pub fn peg(micro: MicroInter) -> Self {
        Self {
            reserve: micro,
            supply: 1,
        }
    }

    /// `amount · reserve / supply`, which must divide exactly.
    pub fn value_of(&self, amount: u64) -> Result<MicroInter, RateError> {
        let num = amount as u128 * self.reserve as u128;
        let den = self.supply as u128;
        if !num.is_multiple_of(den) {
            return Err(RateError::ExactArithmetic {
                amount,
                rate: *self,
            });
        }
        MicroInter::try_from(num / den).map_err(|_| RateError::Overflow)
    }

    pub fn to_big(&self) -> BigRational {
        BigRational::new(BigInt::from(self.reserve), BigInt::from(self.supply))
    }

    pub fn same_value(&self, other: &ExchangeRate) -> bool {
        self.reserve as u128 * other.supply as u128 == other.reserve as u128 * self.supply as u128
    }
}

impl fmt::Display for ExchangeRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} µINTER per unit", self.reserve, self.supply)
    }
}

/// A non-negative exact fraction, written `p/q` in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction(pub Ratio<u64>);

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        Fraction(Ratio::new(num, den))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    pub fn to_big(&self) -> BigRational {
        BigRational::new(BigInt::from(self.numer()), BigInt::from(self.denom()))
    }

    pub fn is_unit_interval(&self) -> bool {
        self.numer() <= self.denom()
    }

    /// `floor(self · n)`.
    pub fn floor_mul(&self, n: u64) -> u64 {
        (self.numer() as u128 * n as u128 / self.denom() as u128) as u64
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid fraction {0:?}: expected `p/q` or an integer")]
pub struct FractionParseError(String);

impl FromStr for Fraction {
    type Err = FractionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || FractionParseError(s.to_string());
        let (n, d) = match s.trim().split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let n: u64 = n.parse().map_err(|_| err())?;
        let d: u64 = d.parse().map_err(|_| err())?;
        if d == 0 {
            return Err(err());
        }
        Ok(Fraction::new(n, d))
    }
}

impl Serialize for Fraction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Floor of a non-negative big rational, saturating into `u64`.
pub fn floor_u64(v: &BigRational) -> u64 {
    use num_traits::ToPrimitive;
    v.floor().to_integer().to_u64().unwrap_or(u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_of_requires_exact_division() {
        let r = ExchangeRate::new(100, 3).unwrap();
        assert_eq!(r.value_of(3), Ok(100));
        assert!(matches!(r.value_of(1), Err(RateError::ExactArithmetic { .. })));
        assert_eq!(ExchangeRate::new(1, 0), Err(RateError::UndefinedRate));
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("1/3".parse::<Fraction>().unwrap(), Fraction::new(1, 3));
        assert_eq!("2".parse::<Fraction>().unwrap(), Fraction::new(2, 1));
        assert!("1/0".parse::<Fraction>().is_err());
        assert!("x".parse::<Fraction>().is_err());
        assert_eq!(Fraction::new(2, 3).floor_mul(35), 23);
    }
}
