//! Scalar abstraction for the numeric core.
//!
//! Every quantity in the simulator (positions, gains, powers, rates) is
//! generic over a floating-point scalar so that the same code can run in
//! `f32` or `f64`. Concrete aliases for the main types live at the crate
//! root.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + std::fmt::Debug
        + std::fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must be representable in the scalar type")
}

/// Converts a count into the working scalar type.
#[inline]
pub fn real_from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize must be representable in the scalar type")
}

/// Transmit power conversion from dBm (on-disk unit) to watt (in-memory unit).
#[inline]
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Transmit power conversion from watt to dBm.
#[inline]
pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * watt.log10() + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dbm_watt_round_trip() {
        assert_relative_eq!(dbm_to_watt(10.0), 0.01, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watt(-100.0), 1e-13, max_relative = 1e-12);
        assert_relative_eq!(watt_to_dbm(dbm_to_watt(-5.0)), -5.0, max_relative = 1e-12);
    }

    #[test]
    fn real_conversion_works_for_both_scalars() {
        let a: f32 = real(0.5);
        let b: f64 = real(0.5);
        assert_eq!(a, 0.5f32);
        assert_eq!(b, 0.5f64);
    }
}
