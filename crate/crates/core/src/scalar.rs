//! Numeric abstraction shared by the topology, simulator and solver.
//!
//! Everything that carries a link rate or a transmission time is generic over
//! [`Scalar`]. Floating point types compare with a relative tolerance, exact
//! rationals compare exactly.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::ops::Add;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Exact rational scalar.
pub type Rational = Ratio<i64>;

pub trait Scalar:
    Num + Copy + PartialOrd + Debug + Display + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Equality for values computed along different summation orders.
    fn approx_eq(self, other: Self) -> bool {
        self == other
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Relative tolerance used by `f64` comparisons.
pub const F64_REL_TOL: f64 = 1e-9;

impl Scalar for f64 {
    fn approx_eq(self, other: Self) -> bool {
        let scale = self.abs().max(other.abs()).max(1.0);
        (self - other).abs() <= F64_REL_TOL * scale
    }
}

impl Scalar for f32 {
    fn approx_eq(self, other: Self) -> bool {
        let scale = self.abs().max(other.abs()).max(1.0);
        (self - other).abs() <= 1e-5 * scale
    }
}

impl Scalar for Rational {}

/// A DP cell value: either a finite transmission time or the unattainable
/// marker. `Infinite` absorbs addition and loses every comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cost<S> {
    Finite(S),
    Infinite,
}

impl<S: Scalar> Cost<S> {
    pub fn zero() -> Self {
        Cost::Finite(S::zero())
    }

    pub fn finite(self) -> Option<S> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Cost::Infinite)
    }

    /// Strict `<`; two infinities are not ordered below each other.
    pub fn lt(self, other: Self) -> bool {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => a < b,
            (Cost::Finite(_), Cost::Infinite) => true,
            (Cost::Infinite, _) => false,
        }
    }

    /// Minimum that keeps `self` on ties.
    pub fn min(self, other: Self) -> Self {
        if other.lt(self) {
            other
        } else {
            self
        }
    }

    pub fn approx_eq(self, other: Self) -> bool {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => a.approx_eq(b),
            (Cost::Infinite, Cost::Infinite) => true,
            _ => false,
        }
    }
}

impl<S: Scalar> PartialOrd for Cost<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => a.partial_cmp(b),
            (Cost::Finite(_), Cost::Infinite) => Some(Ordering::Less),
            (Cost::Infinite, Cost::Finite(_)) => Some(Ordering::Greater),
            (Cost::Infinite, Cost::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl<S: Scalar> Add for Cost<S> {
    type Output = Cost<S>;

    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (Cost::Finite(a), Cost::Finite(b)) => Cost::Finite(a + b),
            _ => Cost::Infinite,
        }
    }
}

impl<S: Scalar> Add<S> for Cost<S> {
    type Output = Cost<S>;

    fn add(self, rhs: S) -> Self {
        match self {
            Cost::Finite(a) => Cost::Finite(a + rhs),
            Cost::Infinite => Cost::Infinite,
        }
    }
}

impl<S: Display> Display for Cost<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{v}"),
            Cost::Infinite => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_absorbs_and_loses() {
        let a: Cost<f64> = Cost::Finite(3.0);
        assert!((a + Cost::Infinite).is_infinite());
        assert!((Cost::<f64>::Infinite + 2.0).is_infinite());
        assert_eq!(a.min(Cost::Infinite), a);
        assert_eq!(Cost::Infinite.min(a), a);
        assert!(a.lt(Cost::Infinite));
        assert!(!Cost::<f64>::Infinite.lt(Cost::Infinite));
    }

    #[test]
    fn min_keeps_left_on_tie() {
        let a: Cost<Rational> = Cost::Finite(Rational::new(1, 2));
        let b: Cost<Rational> = Cost::Finite(Rational::new(2, 4));
        assert!(!a.lt(b) && !b.lt(a));
        assert_eq!(a.min(b), a);
    }

    #[test]
    fn float_tolerance_is_relative() {
        assert!(1e6_f64.approx_eq(1e6 + 1e-4));
        assert!(!1.0_f64.approx_eq(1.0 + 1e-6));
        assert!(Rational::new(1, 3).approx_eq(Rational::new(2, 6)));
    }
}
