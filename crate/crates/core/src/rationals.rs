//! Exact rational arithmetic and base-γ digit expansions.
//!
//! Every quantity that feeds a knot comparison is carried as an
//! [`ExactRational`]. Floating point only appears in the fast evaluation path
//! and in report summaries.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RationalError {
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("cannot parse {input:?} as a rational number: {reason}")]
    Parse { input: String, reason: &'static str },
    #[error("value {value} outside the admissible range {range}")]
    OutOfDomain { value: String, range: &'static str },
    #[error("digit base must be at least 2, got {0}")]
    InvalidBase(u32),
    #[error("depth/level must be at least 1")]
    InvalidDepth,
}

/// Normalized arbitrary-precision fraction. The denominator is always
/// positive and coprime to the numerator.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ExactRational(BigRational);

/// Checked constructor; rejects a zero denominator.
pub fn make_rational(
    numerator: impl Into<BigInt>,
    denominator: impl Into<BigInt>,
) -> Result<ExactRational, RationalError> {
    ExactRational::new(numerator, denominator)
}

impl ExactRational {
    pub fn new(
        numerator: impl Into<BigInt>,
        denominator: impl Into<BigInt>,
    ) -> Result<Self, RationalError> {
        let den = denominator.into();
        if den.is_zero() {
            return Err(RationalError::ZeroDenominator);
        }
        Ok(Self(BigRational::new(numerator.into(), den)))
    }

    /// Small-integer shorthand for constants known to be valid.
    ///
    /// Panics on a zero denominator.
    pub fn ratio(numerator: i64, denominator: i64) -> Self {
        Self::new(numerator, denominator).expect("nonzero denominator")
    }

    pub fn from_integer(value: impl Into<BigInt>) -> Self {
        Self(BigRational::from_integer(value.into()))
    }

    pub fn zero() -> Self {
        Self(BigRational::zero())
    }

    pub fn one() -> Self {
        Self(BigRational::one())
    }

    /// Exact value of a finite double; `None` for NaN and infinities.
    pub fn from_f64(value: f64) -> Option<Self> {
        BigRational::from_float(value).map(Self)
    }

    pub fn from_big(value: BigRational) -> Self {
        Self(value)
    }

    pub fn as_big(&self) -> &BigRational {
        &self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        Self(self.0.abs())
    }

    pub fn floor(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    pub fn recip(&self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(Self(self.0.recip()))
        }
    }

    /// `base^(-exponent)` as an exact fraction.
    pub fn inverse_power(base: u32, exponent: u32) -> Self {
        Self(BigRational::new(
            BigInt::one(),
            num_traits::pow(BigInt::from(base), exponent as usize),
        ))
    }

    /// Nearest double, saturating for huge magnitudes.
    pub fn to_f64(&self) -> f64 {
        if let Some(v) = self.0.to_f64() {
            return v;
        }
        // num-rational returns None when numerator or denominator overflow
        // f64 on their own; scale both down by the same power of two.
        let num_bits = self.numer().bits() as i64;
        let den_bits = self.denom().bits() as i64;
        let shift = (num_bits.max(den_bits) - 1000).max(0) as usize;
        let n = (self.numer() >> shift).to_f64().unwrap_or(f64::NAN);
        let d = (self.denom() >> shift).to_f64().unwrap_or(f64::NAN);
        if d == 0.0 {
            if self.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        } else {
            n / d
        }
    }

    /// Always the `p/q` form, including integers (`3/1`). Used for every
    /// number written to model files.
    pub fn to_fraction_string(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }

    pub fn min<'a>(&'a self, other: &'a Self) -> &'a Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max<'a>(&'a self, other: &'a Self) -> &'a Self {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl fmt::Display for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<i64> for ExactRational {
    fn from(value: i64) -> Self {
        Self::from_integer(value)
    }
}

impl From<BigInt> for ExactRational {
    fn from(value: BigInt) -> Self {
        Self::from_integer(value)
    }
}

fn parse_error(input: &str, reason: &'static str) -> RationalError {
    RationalError::Parse {
        input: input.to_string(),
        reason,
    }
}

fn parse_integer(input: &str, text: &str) -> Result<BigInt, RationalError> {
    let body = text.strip_prefix(['+', '-']).unwrap_or(text);
    if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_error(input, "expected an integer"));
    }
    BigInt::from_str(text.strip_prefix('+').unwrap_or(text))
        .map_err(|_| parse_error(input, "expected an integer"))
}

impl FromStr for ExactRational {
    type Err = RationalError;

    /// Accepts `p/q` and decimal notation (`-0.25`, `1e-3`, `.5`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        if text.is_empty() {
            return Err(parse_error(s, "empty input"));
        }
        if let Some((p, q)) = text.split_once('/') {
            let num = parse_integer(s, p.trim())?;
            let den = parse_integer(s, q.trim())?;
            return Self::new(num, den);
        }

        let (mantissa, exponent) = match text.find(['e', 'E']) {
            Some(pos) => {
                let exp_text = &text[pos + 1..];
                let exp: i64 = parse_integer(s, exp_text)?
                    .to_i64()
                    .filter(|e| e.abs() <= 10_000)
                    .ok_or_else(|| parse_error(s, "exponent out of range"))?;
                (&text[..pos], exp)
            }
            None => (text, 0),
        };
        let (negative, unsigned) = match mantissa.as_bytes().first() {
            Some(b'-') => (true, &mantissa[1..]),
            Some(b'+') => (false, &mantissa[1..]),
            _ => (false, mantissa),
        };
        let (int_digits, frac_digits) = unsigned.split_once('.').unwrap_or((unsigned, ""));
        if int_digits.is_empty() && frac_digits.is_empty() {
            return Err(parse_error(s, "no digits"));
        }
        if !int_digits
            .bytes()
            .chain(frac_digits.bytes())
            .all(|b| b.is_ascii_digit())
        {
            return Err(parse_error(s, "invalid decimal digit"));
        }
        let digits = format!("{int_digits}{frac_digits}");
        let mut num = BigInt::from_str(&digits).map_err(|_| parse_error(s, "no digits"))?;
        if negative {
            num = -num;
        }
        let scale = exponent - frac_digits.len() as i64;
        let ten = BigInt::from(10u32);
        let value = if scale >= 0 {
            BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
        } else {
            BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
        };
        Ok(Self(value))
    }
}

impl Serialize for ExactRational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_fraction_string())
    }
}

impl<'de> Deserialize<'de> for ExactRational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&ExactRational> for &ExactRational {
            type Output = ExactRational;
            fn $method(self, rhs: &ExactRational) -> ExactRational {
                ExactRational((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<ExactRational> for ExactRational {
            type Output = ExactRational;
            fn $method(self, rhs: ExactRational) -> ExactRational {
                ExactRational(self.0.$method(rhs.0))
            }
        }
        impl $trait<&ExactRational> for ExactRational {
            type Output = ExactRational;
            fn $method(self, rhs: &ExactRational) -> ExactRational {
                ExactRational(self.0.$method(&rhs.0))
            }
        }
        impl $trait<ExactRational> for &ExactRational {
            type Output = ExactRational;
            fn $method(self, rhs: ExactRational) -> ExactRational {
                ExactRational((&self.0).$method(rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
// Division by zero panics, as for the underlying BigRational.
forward_binop!(Div, div);

impl AddAssign<&ExactRational> for ExactRational {
    fn add_assign(&mut self, rhs: &ExactRational) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&ExactRational> for ExactRational {
    fn sub_assign(&mut self, rhs: &ExactRational) {
        self.0 -= &rhs.0;
    }
}

impl Neg for ExactRational {
    type Output = ExactRational;
    fn neg(self) -> ExactRational {
        ExactRational(-self.0)
    }
}

impl Neg for &ExactRational {
    type Output = ExactRational;
    fn neg(self) -> ExactRational {
        ExactRational(-&self.0)
    }
}

impl Sum for ExactRational {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a ExactRational> for ExactRational {
    fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, x| acc + x)
    }
}

/// Floor-truncated base-γ expansion of a non-negative rational.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitExpansion {
    pub base: u32,
    pub integer_part: BigUint,
    pub digits: Vec<u32>,
    /// True iff the truncation equals the source value.
    pub exact: bool,
}

impl DigitExpansion {
    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    /// `integer_part + Σ digits[r]·γ^(−r−1)`.
    pub fn reconstruct(&self) -> ExactRational {
        let base = BigInt::from(self.base);
        let mut scaled = BigInt::from(self.integer_part.clone());
        for &digit in &self.digits {
            scaled = scaled * &base + BigInt::from(digit);
        }
        let den = num_traits::pow(base, self.digits.len());
        ExactRational(BigRational::new(scaled, den))
    }
}

/// Expands `x ∈ [0, 2)` to `depth` fractional base-`base` digits.
pub fn expand_digits(
    x: &ExactRational,
    base: u32,
    depth: usize,
) -> Result<DigitExpansion, RationalError> {
    if base < 2 {
        return Err(RationalError::InvalidBase(base));
    }
    if depth == 0 {
        return Err(RationalError::InvalidDepth);
    }
    if x.is_negative() || *x >= ExactRational::from_integer(2) {
        return Err(RationalError::OutOfDomain {
            value: x.to_string(),
            range: "[0, 2)",
        });
    }
    Ok(expand_nonnegative(x, base, depth))
}

/// Digit expansion without the `[0, 2)` domain restriction; `x ≥ 0`, `base ≥ 2`.
pub(crate) fn expand_nonnegative(x: &ExactRational, base: u32, depth: usize) -> DigitExpansion {
    debug_assert!(!x.is_negative() && base >= 2);
    let den = x.denom();
    let (int_part, mut rem) = x.numer().div_mod_floor(den);
    let base_big = BigInt::from(base);
    let mut digits = Vec::with_capacity(depth);
    for _ in 0..depth {
        rem *= &base_big;
        let (digit, next) = rem.div_mod_floor(den);
        digits.push(digit.to_u32().expect("digit below base"));
        rem = next;
    }
    DigitExpansion {
        base,
        integer_part: int_part.to_biguint().expect("non-negative integer part"),
        digits,
        exact: rem.is_zero(),
    }
}

/// True iff `x·base^depth` is an integer.
pub fn is_terminating(x: &ExactRational, base: u32, depth: usize) -> bool {
    let scaled = x.numer() * num_traits::pow(BigInt::from(base), depth);
    scaled.is_multiple_of(x.denom())
}

/// All `base^level + 1` lattice points `j·base^(−level)` in `[0, 1]`.
pub fn grid_points(level: usize, base: u32) -> Result<Vec<ExactRational>, RationalError> {
    if base < 2 {
        return Err(RationalError::InvalidBase(base));
    }
    if level == 0 {
        return Err(RationalError::InvalidDepth);
    }
    let den = num_traits::pow(BigInt::from(base), level);
    let count = den.to_usize().ok_or(RationalError::InvalidDepth)?;
    Ok((0..=count)
        .map(|j| ExactRational(BigRational::new(BigInt::from(j), den.clone())))
        .collect())
}

/// Denominator of the random sampling lattice used for test points.
pub const UNIT_RESOLUTION: u64 = 1_000_000_000_000;

/// Uniform draw from `{u / 10^12 : 0 ≤ u ≤ 10^12}` ⊂ [0, 1].
pub fn random_unit_rational<R: rand::Rng + ?Sized>(rng: &mut R) -> ExactRational {
    let u = rng.gen_range(0..=UNIT_RESOLUTION);
    ExactRational::new(u, UNIT_RESOLUTION).expect("nonzero resolution")
}
