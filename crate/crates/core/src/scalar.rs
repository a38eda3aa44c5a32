//! Floating-point abstraction for the numeric kernels.
//!
//! Everything mathematical in this crate is written against [`Real`], a thin
//! alias trait over the `num-traits` float hierarchy. Kernels therefore work
//! at `f32` and `f64` alike, while the crate root pins the production
//! precision with the [`crate::Scalar`] alias (double precision).

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable by every kernel in this crate.
///
/// The trait is an alias: any type satisfying the bounds (notably `f32` and
/// `f64`) picks it up via the blanket impl. The helpers exist because literal
/// constants in generic code are otherwise painfully verbose.
pub trait Real:
    Float + FromPrimitive + NumAssign + std::fmt::Debug + std::fmt::Display + Default + 'static
{
    /// Converts an `f64` constant into `Self` (lossy at `f32`).
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant must convert")
    }

    /// Converts a `usize` count into `Self`.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize must convert to float")
    }

    /// Widens `self` to `f64` (exact at `f64`, lossless widening at `f32`).
    #[inline]
    fn widen(self) -> f64 {
        self.to_f64().expect("float must widen to f64")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + NumAssign + std::fmt::Debug + std::fmt::Display + Default + 'static
{
}
