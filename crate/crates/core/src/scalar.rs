//! Scalar abstraction shared by the exact (rational) and floating paths.
//!
//! Every determinant, sign test and ratio in the crate is written once against
//! [`Scalar`]. Exact scalars compare against zero exactly; floating scalars use
//! a relative tolerance scaled by the magnitude of the quantity being tested.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Field element usable by the Cayley-Menger kernels.
pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Num + Signed + FromPrimitive + Send + Sync + 'static
{
    /// `true` when arithmetic is exact and zero tests need no tolerance.
    const EXACT: bool;

    fn as_f64(&self) -> f64;

    /// The exact rational value of `self`. Floats convert without rounding.
    fn to_rational(&self) -> BigRational;

    fn from_rational(r: &BigRational) -> Self;

    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize fits scalar")
    }
}

/// A scalar with a square root, for coordinate constructions.
pub trait Real: Scalar + Copy {
    fn sqrt(self) -> Self;
    fn from_f64_lossy(x: f64) -> Self;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn as_f64(&self) -> f64 {
        *self
    }

    fn to_rational(&self) -> BigRational {
        BigRational::from_float(*self).unwrap_or_else(BigRational::zero)
    }

    fn from_rational(r: &BigRational) -> Self {
        rational_to_f64(r)
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn as_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn to_rational(&self) -> BigRational {
        BigRational::from_float(*self).unwrap_or_else(BigRational::zero)
    }

    fn from_rational(r: &BigRational) -> Self {
        rational_to_f64(r) as f32
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn as_f64(&self) -> f64 {
        rational_to_f64(self)
    }

    fn to_rational(&self) -> BigRational {
        self.clone()
    }

    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }
}

impl Real for f64 {
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn from_f64_lossy(x: f64) -> Self {
        x
    }
}

impl Real for f32 {
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }

    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    if let Some(x) = r.to_f64() {
        if x.is_finite() {
            return x;
        }
    }
    // Huge numerators and denominators: shift both down before dividing.
    let n = r.numer();
    let d = r.denom();
    let shift = n.bits().max(d.bits()).saturating_sub(1000);
    let n = (n >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (d >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Parse an exact rational from `"p/q"`, an integer, or a decimal such as
/// `"-1.25e-3"`.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(k) => (&s[..k], s[k + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(digits.parse::<BigInt>().ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let factor = num_traits::pow(ten, scale.unsigned_abs() as usize);
    if scale >= 0 {
        value *= factor;
    } else {
        value /= factor;
    }
    Some(if negative { -value } else { value })
}

/// Tolerances for floating comparisons. Ignored by exact scalars.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    /// Relative epsilon for zero tests on determinants and lengths.
    pub rel: f64,
    /// Relative agreement required between determinant ratios (condition on α).
    pub ratio: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-9, ratio: 1e-6 }
    }
}

impl Tolerance {
    pub fn with_rel(rel: f64) -> Self {
        Tolerance { rel, ..Tolerance::default() }
    }

    /// Whether `x` is zero relative to `scale`.
    pub fn is_zero<T: Scalar>(&self, x: &T, scale: f64) -> bool {
        if T::EXACT {
            x.is_zero()
        } else {
            x.as_f64().abs() <= self.rel * scale
        }
    }

    /// Sign of `x` with values within tolerance of zero reported as `Equal`.
    pub fn sign<T: Scalar>(&self, x: &T, scale: f64) -> Ordering {
        if self.is_zero(x, scale) {
            Ordering::Equal
        } else if *x > T::zero() {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }

    /// Whether two positive ratios agree to `self.ratio`.
    pub fn ratios_agree<T: Scalar>(&self, a: &T, b: &T) -> bool {
        if T::EXACT {
            a == b
        } else {
            let (a, b) = (a.as_f64(), b.as_f64());
            (a - b).abs() <= self.ratio * a.abs().max(b.abs())
        }
    }
}

/// `(-1)^k` as a scalar.
pub fn alternating<T: Scalar>(k: usize) -> T {
    if k.is_multiple_of(2) {
        T::one()
    } else {
        -T::one()
    }
}
