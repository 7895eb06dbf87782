//! Floating-point abstraction shared by the numeric modules.
//!
//! Aggregators, feature extraction, the forest and the metrics are written
//! against [`Scalar`] so the same code runs in `f32` (compact models) and
//! `f64` (reference evaluation). Everything else in the crate is plain data.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Every `f64` is representable (possibly
    /// rounded) in the supported types, so this never fails.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Clamp into the closed unit interval.
    fn clamp_unit(self) -> Self {
        self.max(Self::zero()).min(Self::one())
    }

    fn in_unit_interval(self) -> bool {
        self >= Self::zero() && self <= Self::one()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_and_range() {
        assert_eq!(1.7f64.clamp_unit(), 1.0);
        assert_eq!((-0.2f32).clamp_unit(), 0.0);
        assert!(0.5f64.in_unit_interval());
        assert!(!f64::NAN.in_unit_interval());
        assert_eq!(f32::lit(0.25), 0.25f32);
    }
}
