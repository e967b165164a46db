use std::fmt;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Nonnegative rational `numerator / 2^log2_denominator`, not reduced.
///
/// Moments of integer chaos are averages over `2^k` sign patterns, so the
/// unreduced form keeps the pattern count visible: `32/16` rather than `2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyadicRational {
    pub numerator: BigUint,
    pub log2_denominator: u32,
}

impl DyadicRational {
    pub fn new(numerator: BigUint, log2_denominator: u32) -> Self {
        Self {
            numerator,
            log2_denominator,
        }
    }

    pub fn integer(n: BigUint) -> Self {
        Self::new(n, 0)
    }

    pub fn denominator(&self) -> BigUint {
        BigUint::from(1u8) << self.log2_denominator
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        big_to_f64_scaled(&self.numerator, -(self.log2_denominator as i64))
    }

    /// Value-equality against `other` (ignores representation).
    pub fn value_eq(&self, other: &Self) -> bool {
        let (a, b) = self.common(other);
        a == b
    }

    /// Exact comparison `self <= other`.
    pub fn value_le(&self, other: &Self) -> bool {
        let (a, b) = self.common(other);
        a <= b
    }

    pub fn equals_integer(&self, n: &BigUint) -> bool {
        self.numerator == n << self.log2_denominator
    }

    pub fn pow(&self, e: u32) -> Self {
        Self::new(self.numerator.pow(e), self.log2_denominator * e)
    }

    pub fn add(&self, other: &Self) -> Self {
        let k = self.log2_denominator.max(other.log2_denominator);
        let (a, b) = self.common(other);
        Self::new(a + b, k)
    }

    /// Reduced `(numerator, denominator)`.
    pub fn reduced(&self) -> (BigUint, BigUint) {
        let shift = self
            .numerator
            .trailing_zeros()
            .map_or(self.log2_denominator as u64, |z| {
                z.min(self.log2_denominator as u64)
            });
        (
            &self.numerator >> shift,
            BigUint::from(1u8) << (self.log2_denominator as u64 - shift),
        )
    }

    pub fn mul_integer(&self, n: &BigUint) -> Self {
        Self::new(&self.numerator * n, self.log2_denominator)
    }

    fn common(&self, other: &Self) -> (BigUint, BigUint) {
        let k = self.log2_denominator.max(other.log2_denominator);
        (
            &self.numerator << (k - self.log2_denominator),
            &other.numerator << (k - other.log2_denominator),
        )
    }
}

impl fmt::Display for DyadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator())
    }
}

impl Serialize for DyadicRational {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DyadicRational {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let (num, den) = text
            .split_once('/')
            .ok_or_else(|| serde::de::Error::custom("expected `numerator/denominator`"))?;
        let numerator: BigUint = num.parse().map_err(serde::de::Error::custom)?;
        let den: BigUint = den.parse().map_err(serde::de::Error::custom)?;
        let bits = den.bits();
        if bits == 0 || den != BigUint::from(1u8) << (bits - 1) {
            return Err(serde::de::Error::custom(
                "denominator is not a power of two",
            ));
        }
        Ok(Self::new(numerator, (bits - 1) as u32))
    }
}

/// `n · 2^shift` as the nearest-ish `f64` without overflowing intermediate
/// conversions.
pub(crate) fn big_to_f64_scaled(n: &BigUint, shift: i64) -> f64 {
    let bits = n.bits() as i64;
    if bits == 0 {
        return 0.0;
    }
    let drop = (bits - 64).max(0);
    let top = (n >> drop as u64).to_u64().unwrap_or(u64::MAX) as f64;
    top * 2f64.powi((drop + shift).clamp(-2000, 2000) as i32)
}
