//! Scalar abstraction for the numeric core.
//!
//! Everything downstream is generic over [`Scalar`] so the same kernels run in
//! f32 or f64. The f64 instantiation is the reference one; f32 exists for
//! storage-constrained callers and loses roughly half the digits everywhere.

use num_traits as nt;

/// Floating-point scalar usable by every module in this crate.
///
/// `lit` converts configuration constants and tolerances written as f64
/// literals; it must be exact for f64 and round-to-nearest for f32.
pub trait Scalar:
    nt::Float
    + nt::FromPrimitive
    + nt::NumAssign
    + ndarray::LinalgScalar
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self;
    fn to_f64_lossy(self) -> f64;

    /// `n` as a scalar, for averages and grid arithmetic.
    fn of_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline(always)]
            fn lit(v: f64) -> Self {
                v as $t
            }

            #[inline(always)]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lit_is_exact_for_f64() {
        assert_eq!(f64::lit(2.66), 2.66);
        assert_eq!(f64::lit(-1e-12), -1e-12);
    }

    #[test]
    fn lit_rounds_for_f32() {
        assert_eq!(f32::lit(2.66), 2.66_f32);
    }

    #[test]
    fn usize_conversion() {
        assert_eq!(f64::of_usize(50), 50.0);
        assert_eq!(f32::of_usize(3), 3.0);
    }
}
