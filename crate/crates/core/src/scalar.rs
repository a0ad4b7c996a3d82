//! Scalar abstraction.
//!
//! The solver is generic over a working scalar [`Real`] (`f32` or `f64`).
//! Local RBF interpolation systems become extremely ill-conditioned in the
//! flat limit (`ε·h → 0`), so every `Real` carries a wider companion type
//! used only for the per-stencil factorizations: `f64` for `f32`, and
//! [`DoubleDouble`] for `f64`.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, NumCast, One, Zero};
use twofloat::TwoFloat;

/// Working scalar of the solver.
pub trait Real: Float + Debug + Display + Default + Send + Sync + 'static {
    /// Extended precision used for local RBF systems.
    type Wide: Wide;

    fn to_wide(self) -> Self::Wide;
    fn from_wide(w: Self::Wide) -> Self;

    /// Converts an `f64` literal or parameter.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Extended-precision scalar for local interpolation matrices.
pub trait Wide:
    Copy
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Sub<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn lit(x: f64) -> Self;
    /// Nearest `f64`.
    fn approx(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;
    /// `exp(x)` accurate to the full precision of the type.
    fn exp_full(self) -> Self;
    /// `ln 2` to the full precision of the type.
    fn ln2() -> Self;
}

/// Double-double number: an unevaluated sum `hi + lo` of two `f64`s with
/// about 106 bits of significand.
///
/// Arithmetic is delegated to [`TwoFloat`] except division, which is done by
/// long division on the leading component (twofloat's quotient of two
/// double-doubles is only accurate to about `f64` precision).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct DoubleDouble(pub TwoFloat);

impl DoubleDouble {
    pub fn hi(self) -> f64 {
        self.0.hi()
    }

    pub fn lo(self) -> f64 {
        self.0.lo()
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        DoubleDouble(<TwoFloat as From<f64>>::from(x))
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        DoubleDouble(self.0 + rhs.0)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        DoubleDouble(self.0 - rhs.0)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        DoubleDouble(self.0 * rhs.0)
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let b = rhs.0;
        let q1 = self.0.hi() / b.hi();
        if !q1.is_finite() || q1 == 0.0 {
            return DoubleDouble::from(q1);
        }
        let r = self.0 - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        DoubleDouble(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        DoubleDouble(-self.0)
    }
}

impl Zero for DoubleDouble {
    fn zero() -> Self {
        DoubleDouble::from(0.0)
    }

    fn is_zero(&self) -> bool {
        self.0.hi() == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        DoubleDouble::from(1.0)
    }
}

impl Wide for DoubleDouble {
    #[inline]
    fn lit(x: f64) -> Self {
        DoubleDouble::from(x)
    }

    #[inline]
    fn approx(self) -> f64 {
        self.0.hi() + self.0.lo()
    }

    fn sqrt(self) -> Self {
        DoubleDouble(self.0.sqrt())
    }

    fn abs(self) -> Self {
        DoubleDouble(self.0.abs())
    }

    fn is_finite(self) -> bool {
        self.0.hi().is_finite() && self.0.lo().is_finite()
    }

    fn exp_full(self) -> Self {
        exp_reduced(self)
    }

    fn ln2() -> Self {
        DoubleDouble(twofloat::consts::LN_2)
    }
}

impl Wide for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn approx(self) -> f64 {
        self
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn abs(self) -> Self {
        f64::abs(self)
    }

    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }

    fn exp_full(self) -> Self {
        self.exp()
    }

    fn ln2() -> Self {
        std::f64::consts::LN_2
    }
}

impl Real for f64 {
    type Wide = DoubleDouble;

    #[inline]
    fn to_wide(self) -> DoubleDouble {
        DoubleDouble::from(self)
    }

    #[inline]
    fn from_wide(w: DoubleDouble) -> f64 {
        w.approx()
    }
}

impl Real for f32 {
    type Wide = f64;

    #[inline]
    fn to_wide(self) -> f64 {
        <f64 as From<f32>>::from(self)
    }

    #[inline]
    fn from_wide(w: f64) -> f32 {
        w as f32
    }
}

/// `exp(x)` via `x = k·ln 2 + r`, a Taylor series in `|r| ≤ ln 2 / 2` and an
/// exact scaling by `2^k`. Only the four arithmetic operations are used, so
/// the result inherits the precision of `W`.
pub fn exp_reduced<W: Wide>(x: W) -> W {
    let xa = x.approx();
    if xa.is_nan() {
        return x;
    }
    if x.is_zero() {
        return W::one();
    }
    if xa < -700.0 {
        return W::zero();
    }
    if xa > 700.0 {
        return W::lit(f64::INFINITY);
    }
    let k = (xa / std::f64::consts::LN_2).round();
    let r = x - W::lit(k) * W::ln2();
    let mut term = W::one();
    let mut sum = W::one();
    for n in 1..60 {
        term = term * r / W::lit(n as f64);
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    sum * W::lit(2f64.powi(k as i32))
}
