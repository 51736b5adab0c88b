//! Scalar abstraction for the numeric kernels.
//!
//! Everything in this crate is generic over [`Real`], which bundles the
//! `num-traits` float surface with draws of the standard variates the
//! samplers consume. Implemented for `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};

use crate::special;

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// One draw from N(0, 1).
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from Exp(1).
    fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from the open unit interval (0, 1).
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Embed an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable")
    }

    /// Embed a count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(|| Self::lit(n as f64))
    }

    /// Standard normal CDF `Φ`.
    #[inline]
    fn normal_cdf(self) -> Self {
        let half = Self::lit(0.5);
        half * (-self / Self::SQRT_2()).erfc()
    }

    /// Standard normal upper tail `Φ̄ = 1 − Φ`, accurate far out.
    #[inline]
    fn normal_sf(self) -> Self {
        let half = Self::lit(0.5);
        half * (self / Self::SQRT_2()).erfc()
    }
}

impl Real for f64 {
    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    #[inline]
    fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }
    #[inline]
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }
    #[inline]
    fn erfc(self) -> Self {
        special::erfc(self)
    }
}

impl Real for f32 {
    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    #[inline]
    fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }
    #[inline]
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }
    #[inline]
    fn erfc(self) -> Self {
        special::erfc(self as f64) as f32
    }
}
