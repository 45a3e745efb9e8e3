//! Scalar abstraction for the numeric routines.

use num_traits::{Float, FromPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar the numeric code is generic over.
///
/// Implemented for `f32` and `f64`. `f64` is the default type parameter
/// everywhere and the only one exercised by the acceptance suite; `f32`
/// trades accuracy for footprint.
pub trait Real:
    Float
    + FromPrimitive
    + core::iter::Sum
    + core::fmt::Debug
    + core::fmt::Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless conversion from `f64` where the target permits, rounding
    /// otherwise.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Real")
    }

    /// Conversion from an unsigned count. Counts in this crate stay far
    /// below 2^53 so the `f64` path is exact; `f32` rounds.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).unwrap_or_else(|| Self::from_f64_lossy(n as f64))
    }
}

impl Real for f32 {}
impl Real for f64 {}
