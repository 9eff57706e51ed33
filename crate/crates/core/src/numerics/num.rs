//! The scalar abstraction shared by the f64 and the tape-recorded paths.

/// A differentiable-or-plain scalar.
///
/// Implementations: `f64` (plain arithmetic) and [`super::Var`] (records
/// every operation on a tape for reverse-mode differentiation). Code written
/// against this trait computes identical values on both, bit for bit.
pub trait Num: Clone {
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    /// Larger argument wins the gradient; exact ties split it 0.5/0.5.
    fn max(&self, o: &Self) -> Self;
    fn min(&self, o: &Self) -> Self;
    fn abs(&self) -> Self;
    fn exp(&self) -> Self;
    fn log1p(&self) -> Self;
    fn sigmoid(&self) -> Self;
    fn relu(&self) -> Self;
    fn add_const(&self, c: f64) -> Self;
    fn mul_const(&self, c: f64) -> Self;
    /// Current numeric value (the node value on the tape path).
    fn val(&self) -> f64;
}

/// Sigmoid with the complement identity exact in floating point:
/// `sigmoid_f64(x) + sigmoid_f64(-x) == 1.0` bitwise, because both are
/// computed from the same `1/(1+e^{-|x|})`.
#[inline]
pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    let a = 1.0 / (1.0 + (-x.abs()).exp());
    if x >= 0.0 {
        a
    } else {
        1.0 - a
    }
}

impl Num for f64 {
    #[inline]
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    #[inline]
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    #[inline]
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    #[inline]
    fn max(&self, o: &Self) -> Self {
        f64::max(*self, *o)
    }
    #[inline]
    fn min(&self, o: &Self) -> Self {
        f64::min(*self, *o)
    }
    #[inline]
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    #[inline]
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    #[inline]
    fn log1p(&self) -> Self {
        f64::ln_1p(*self)
    }
    #[inline]
    fn sigmoid(&self) -> Self {
        sigmoid_f64(*self)
    }
    #[inline]
    fn relu(&self) -> Self {
        f64::max(*self, 0.0)
    }
    #[inline]
    fn add_const(&self, c: f64) -> Self {
        self + c
    }
    #[inline]
    fn mul_const(&self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn val(&self) -> f64 {
        *self
    }
}
