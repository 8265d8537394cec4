//! Scalar abstractions shared by the numeric modules.
//!
//! Rate tables and moment polynomials only need ring arithmetic, so they are
//! generic over [`Scalar`] and work with exact rationals as well as floats.
//! Anything that needs `exp`, `ln` or square roots asks for [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Ring-like scalar: enough for enumeration sums and polynomial expansion.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {}

/// Floating-point scalar used by the solvers (`f32`, `f64`).
pub trait Real:
    Scalar + Float + FromPrimitive + ToPrimitive + Copy + Sum + Display + Default
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Mobility of the exclusion process, `u (1 - u)`.
#[inline]
pub fn mobility<R: Real>(u: R) -> R {
    u * (R::one() - u)
}

/// Kahan-compensated running sum. Used wherever reductions must not depend
/// on anything but the order of the inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::new();
        for x in iter {
            k.add(x);
        }
        k
    }
}

/// Binomial coefficient as a float, exact for the small arguments used here.
pub fn binomial<R: Real>(n: usize, k: usize) -> R {
    if k > n {
        return R::zero();
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    R::lit(acc.round())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = KahanSum::new();
        k.add(1e16);
        for _ in 0..1000 {
            k.add(1.0);
        }
        k.add(-1e16);
        assert_eq!(k.value(), 1000.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial::<f64>(5, 2), 10.0);
        assert_eq!(binomial::<f64>(12, 6), 924.0);
        assert_eq!(binomial::<f64>(3, 4), 0.0);
    }
}
