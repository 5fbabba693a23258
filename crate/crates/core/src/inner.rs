//! The universal inner function φ.
//!
//! φ is a digit-weight (Cantor-like) function: for `x = i₁i₂i₃…` in base γ,
//!
//! ```text
//! φ(x) = c(i₁) + w(i₁)·( c(i₂) + w(i₂)·( c(i₃) + … ) )
//! ```
//!
//! with positive weights `w` summing to one and cumulative sums `c`. Because
//! `c(γ−1) + w(γ−1) = 1`, both expansions of a terminating rational give the
//! same value, so φ is continuous. With `max w ≤ 1/2` each level-k cell has
//! φ-width at most `2^(−k)`, which gives the Hölder exponent `ln 2 / ln γ`
//! with constant at most 4. Inputs in `[1, 2)` are handled through the
//! integer part, so `φ(x + 1) = φ(x) + 1` holds by construction.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::rationals::{
    expand_digits, random_unit_rational, DigitExpansion, ExactRational, RationalError,
};

/// Hölder constant every admissible weight scheme satisfies.
pub const HOLDER_CONSTANT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InnerError {
    #[error("invalid inner weights: {0}")]
    Weights(String),
    #[error("{x} has no terminating base-{base} expansion within {depth} digits")]
    NonTerminating { x: String, base: u32, depth: usize },
    #[error("fast evaluation input {0} outside [0, 2)")]
    FastDomain(f64),
    #[error(transparent)]
    Rational(#[from] RationalError),
}

/// Base and digit weights defining φ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerSpec {
    base: u32,
    weights: Vec<ExactRational>,
    cumulative: Vec<ExactRational>,
    // Integer form over a common denominator, used by the evaluation loop.
    common_den: BigInt,
    weight_num: Vec<BigInt>,
    cumulative_num: Vec<BigInt>,
}

/// `value ≤ φ(x) ≤ value + error_bound`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerValue {
    pub value: ExactRational,
    pub error_bound: ExactRational,
}

impl InnerSpec {
    pub fn new(base: u32, weights: Vec<ExactRational>) -> Result<Self, InnerError> {
        if base < 2 {
            return Err(InnerError::Rational(RationalError::InvalidBase(base)));
        }
        if weights.len() != base as usize {
            return Err(InnerError::Weights(format!(
                "expected {base} weights, got {}",
                weights.len()
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_positive()) {
            return Err(InnerError::Weights(format!("w({i}) = {w} is not positive")));
        }
        let half = ExactRational::ratio(1, 2);
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| **w > half) {
            return Err(InnerError::Weights(format!("w({i}) = {w} exceeds 1/2")));
        }
        let total: ExactRational = weights.iter().sum();
        if total != ExactRational::one() {
            return Err(InnerError::Weights(format!(
                "weights sum to {total}, not 1"
            )));
        }

        let mut cumulative = Vec::with_capacity(weights.len());
        let mut running = ExactRational::zero();
        for w in &weights {
            cumulative.push(running.clone());
            running += w;
        }

        let common_den = weights.iter().fold(BigInt::one(), |acc, w| {
            num_integer::lcm(acc, w.denom().clone())
        });
        let scale = |x: &ExactRational| -> BigInt { x.numer() * (&common_den / x.denom()) };
        let weight_num = weights.iter().map(scale).collect();
        let cumulative_num = cumulative.iter().map(scale).collect();

        Ok(Self {
            base,
            weights,
            cumulative,
            common_den,
            weight_num,
            cumulative_num,
        })
    }

    /// `w(0) = 1/2`, `w(i) = 1/(2(γ−1))` for `i ≥ 1`.
    pub fn default_for(base: u32) -> Result<Self, InnerError> {
        if base < 2 {
            return Err(InnerError::Rational(RationalError::InvalidBase(base)));
        }
        let rest = ExactRational::ratio(1, 2 * (base as i64 - 1));
        let mut weights = vec![ExactRational::ratio(1, 2)];
        weights.extend(std::iter::repeat_n(rest, base as usize - 1));
        Self::new(base, weights)
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn weights(&self) -> &[ExactRational] {
        &self.weights
    }

    pub fn cumulative(&self) -> &[ExactRational] {
        &self.cumulative
    }

    pub fn holder_exponent(&self) -> f64 {
        std::f64::consts::LN_2 / (self.base as f64).ln()
    }

    /// Truncated φ at `depth` digits with a one-sided error bound.
    pub fn phi_eval(&self, x: &ExactRational, depth: usize) -> Result<InnerValue, InnerError> {
        let expansion = expand_digits(x, self.base, depth)?;
        Ok(self.eval_digits(&expansion))
    }

    /// φ of an explicit digit string. The bound is zero when the expansion
    /// is flagged exact, since the remaining digits are all zero.
    pub fn eval_digits(&self, expansion: &DigitExpansion) -> InnerValue {
        let mut scaled = BigInt::zero();
        let mut power = BigInt::one();
        let mut width = BigInt::one();
        for &digit in expansion.digits.iter().rev() {
            let i = digit as usize;
            scaled = &self.cumulative_num[i] * &power + &self.weight_num[i] * scaled;
            power *= &self.common_den;
            width *= &self.weight_num[i];
        }
        let frac = ExactRational::new(scaled, power.clone()).expect("positive denominator");
        let value =
            ExactRational::from_integer(BigInt::from(expansion.integer_part.clone())) + frac;
        let error_bound = if expansion.exact {
            ExactRational::zero()
        } else {
            ExactRational::new(width, power).expect("positive denominator")
        };
        InnerValue { value, error_bound }
    }

    /// Exact φ at a rational with at most `depth` base-γ digits.
    pub fn phi_exact(&self, x: &ExactRational, depth: usize) -> Result<ExactRational, InnerError> {
        let expansion = expand_digits(x, self.base, depth)?;
        if !expansion.exact {
            return Err(InnerError::NonTerminating {
                x: x.to_string(),
                base: self.base,
                depth,
            });
        }
        Ok(self.eval_digits(&expansion).value)
    }

    pub fn fast_tables(&self) -> FastInner {
        assert!(self.base <= 1 << 20, "fast path supports bases up to 2^20");
        FastInner {
            base: self.base,
            weights: self.weights.iter().map(ExactRational::to_f64).collect(),
            cumulative: self.cumulative.iter().map(ExactRational::to_f64).collect(),
        }
    }
}

/// Smallest depth `k` with `2^(−k) ≤ eps`; the error bound of `phi_eval`
/// never exceeds `2^(−k)`.
pub fn depth_for_accuracy(eps: &ExactRational) -> usize {
    assert!(eps.is_positive(), "accuracy must be positive");
    let mut depth = 1;
    let mut bound = ExactRational::ratio(1, 2);
    while bound > *eps {
        bound = bound * ExactRational::ratio(1, 2);
        depth += 1;
    }
    depth
}

/// Fractional bits kept when a double is turned into a fixed-point integer.
const FRAC_BITS: i32 = 100;

/// Double-precision tables for the fast evaluation path. Digits are read
/// with integer arithmetic from the exact binary value of the input, so
/// only the final Horner sum is rounded.
#[derive(Debug, Clone)]
pub struct FastInner {
    base: u32,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

/// Fast φ value plus an enclosure `[lo, hi]` of the true φ, and of φ
/// truncated at the requested depth, at any input within one ulp of the
/// double that was passed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastInnerValue {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// `floor(x · 2^FRAC_BITS)` and the fixed-point size of one ulp of `x`.
fn to_fixed(x: f64) -> (u128, u128) {
    if x == 0.0 {
        return (0, 1);
    }
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let fraction = (bits & ((1u64 << 52) - 1)) as u128;
    let (mantissa, exp) = if biased == 0 {
        (fraction, -1074)
    } else {
        (fraction | (1u128 << 52), biased - 1075)
    };
    let shift = exp + FRAC_BITS;
    if shift >= 0 {
        (mantissa << shift, 1u128 << shift)
    } else if shift > -128 {
        (mantissa >> -shift, 1)
    } else {
        (0, 1)
    }
}

impl FastInner {
    fn horner(&self, integer_part: u32, digits: &[u32]) -> f64 {
        let frac = digits.iter().rev().fold(0.0, |acc, &d| {
            self.cumulative[d as usize] + self.weights[d as usize] * acc
        });
        integer_part as f64 + frac
    }

    /// Integer part and first `depth` digits of `n / den`.
    fn digits(&self, n: u128, den: u128, depth: usize) -> (u32, Vec<u32>) {
        let base = self.base as u128;
        let integer_part = (n / den) as u32;
        let mut rem = n % den;
        let mut digits = Vec::with_capacity(depth);
        for _ in 0..depth {
            rem *= base;
            digits.push((rem / den) as u32);
            rem %= den;
        }
        (integer_part, digits)
    }

    /// φ(t) truncated at `depth` digits for `t` in `[0, 2)`.
    pub fn eval(&self, t: f64, depth: usize) -> Result<FastInnerValue, InnerError> {
        self.eval_shifted(t, 0, 1, depth)
    }

    /// φ(x + num/den) truncated at `depth` digits. The shift is added
    /// exactly; `x` is taken to be known to within one ulp.
    pub fn eval_shifted(
        &self,
        x: f64,
        num: u64,
        den: u64,
        depth: usize,
    ) -> Result<FastInnerValue, InnerError> {
        if !(0.0..2.0).contains(&x) {
            return Err(InnerError::FastDomain(x));
        }
        let (fixed, ulp) = to_fixed(x);
        let den = den as u128;
        let scale = den << FRAC_BITS;
        let n = fixed * den + ((num as u128) << FRAC_BITS);
        let limit = 2 * scale;
        if n >= limit {
            return Err(InnerError::FastDomain(x + num as f64 / den as f64));
        }
        let depth = depth.max(1);
        let (ip, ds) = self.digits(n, scale, depth);
        let value = self.horner(ip, &ds);

        let (lo_ip, lo_ds) = self.digits(n.saturating_sub(ulp * den), scale, depth);
        let lo = self.horner(lo_ip, &lo_ds);
        let n_hi = n + (ulp + 1) * den;
        let hi = if n_hi >= limit {
            2.0
        } else {
            let (hi_ip, hi_ds) = self.digits(n_hi, scale, depth);
            match next_cell(hi_ip, &hi_ds, self.base) {
                (ip, ds) if ip < 2 => self.horner(ip, &ds),
                _ => 2.0,
            }
        };
        // Horner accumulates at most a few ulps near 2.
        let slack = 8.0 * f64::EPSILON;
        Ok(FastInnerValue {
            value,
            lo: lo - slack,
            hi: hi + slack,
        })
    }
}

/// The depth-r cell right after the given one (carry into the integer part).
fn next_cell(integer_part: u32, digits: &[u32], base: u32) -> (u32, Vec<u32>) {
    let mut ds = digits.to_vec();
    for d in ds.iter_mut().rev() {
        if *d + 1 < base {
            *d += 1;
            return (integer_part, ds);
        }
        *d = 0;
    }
    (integer_part + 1, ds)
}

/// Outcome of one property in [`PropertyReport`].
#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub checked: usize,
    pub violations: usize,
    /// Largest observed ratio for quantitative checks (Hölder constant).
    pub measured: Option<f64>,
    pub witness: Option<(String, String)>,
}

impl PropertyCheck {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            passed: true,
            checked: 0,
            violations: 0,
            measured: None,
            witness: None,
        }
    }

    fn fail(&mut self, a: &ExactRational, b: &ExactRational) {
        self.passed = false;
        self.violations += 1;
        if self.witness.is_none() {
            self.witness = Some((a.to_string(), b.to_string()));
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub base: u32,
    pub depth: usize,
    pub holder_exponent: f64,
    pub monotonicity: PropertyCheck,
    pub holder: PropertyCheck,
    pub shift_identity: PropertyCheck,
    pub unit_range: PropertyCheck,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.monotonicity.passed
            && self.holder.passed
            && self.shift_identity.passed
            && self.unit_range.passed
    }
}

/// Randomized property suite for φ: monotonicity, Hölder bound, shift
/// identity and `φ([0,1]) ⊆ [0,1]`.
pub fn verify_inner(
    spec: &InnerSpec,
    samples: usize,
    depth: usize,
    seed: u64,
) -> Result<PropertyReport, InnerError> {
    let samples = samples.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = ExactRational::zero();
    let one = ExactRational::one();

    // Monotonicity over sorted random points.
    let mut xs: Vec<ExactRational> = (0..samples)
        .map(|_| random_unit_rational(&mut rng))
        .collect();
    xs.sort();
    xs.dedup();
    let values = xs
        .iter()
        .map(|x| spec.phi_eval(x, depth))
        .collect::<Result<Vec<_>, _>>()?;
    let mut monotonicity = PropertyCheck::new("monotonicity");
    for (i, pair) in values.windows(2).enumerate() {
        monotonicity.checked += 1;
        let slack = &pair[0].error_bound + &pair[1].error_bound;
        if pair[0].value > &pair[1].value + &slack {
            monotonicity.fail(&xs[i], &xs[i + 1]);
        }
    }

    // Unit range, including the exact endpoints.
    let mut unit_range = PropertyCheck::new("unit_range");
    for (x, v) in xs.iter().zip(&values) {
        unit_range.checked += 1;
        if v.value < zero || &v.value + &v.error_bound > one {
            unit_range.fail(x, &v.value);
        }
    }
    for (x, expected) in [(&zero, &zero), (&one, &one)] {
        unit_range.checked += 1;
        let v = spec.phi_exact(x, 1)?;
        if v != *expected {
            unit_range.fail(x, &v);
        }
    }

    // Hölder bound: half uniform pairs, half close pairs across many scales.
    let alpha = spec.holder_exponent();
    let mut holder = PropertyCheck::new("holder");
    let mut worst = 0.0_f64;
    for i in 0..samples {
        let x = random_unit_rational(&mut rng);
        let y = if i % 2 == 0 {
            let mut y = random_unit_rational(&mut rng);
            while y == x {
                y = random_unit_rational(&mut rng);
            }
            y
        } else {
            let scale = rng.gen_range(1..=12u32);
            let offset = rng.gen_range(1..=1000i64);
            let delta =
                ExactRational::ratio(offset, 1000) * ExactRational::inverse_power(10, scale);
            let up = &x + &delta;
            let down = &x - &delta;
            // Reflect back into [0, 1].
            match (rng.gen_bool(0.5), up <= one, down >= zero) {
                (true, true, _) | (false, true, false) => up,
                _ => down,
            }
        };
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        let vl = spec.phi_eval(&lo, depth)?;
        let vh = spec.phi_eval(&hi, depth)?;
        // φ(hi) − φ(lo) lies in [vh − vl − el, vh + eh − vl].
        let upper = (&vh.value + &vh.error_bound - &vl.value).to_f64();
        let lower = (&vh.value - &vl.value - &vl.error_bound).to_f64();
        let diff = upper.abs().max(lower.abs());
        let ratio = diff / (&hi - &lo).to_f64().powf(alpha);
        holder.checked += 1;
        if ratio > worst {
            worst = ratio;
        }
        if ratio > HOLDER_CONSTANT {
            holder.fail(&lo, &hi);
        }
    }
    holder.measured = Some(worst);

    // Shift identity at terminating rationals j·γ^(−m).
    let mut shift_identity = PropertyCheck::new("shift_identity");
    let levels: Vec<u32> = (1..=10).collect();
    for _ in 0..(samples / 10).max(1) {
        let m = *levels.choose(&mut rng).expect("nonempty");
        let den = (spec.base as u64).pow(m);
        let j = rng.gen_range(0..den);
        let x = ExactRational::new(j, den).expect("nonzero");
        let shifted = &x + &one;
        let lhs = spec.phi_exact(&shifted, m as usize)?;
        let rhs = spec.phi_exact(&x, m as usize)? + &one;
        shift_identity.checked += 1;
        if lhs != rhs {
            shift_identity.fail(&x, &lhs);
        }
    }

    Ok(PropertyReport {
        base: spec.base,
        depth,
        holder_exponent: alpha,
        monotonicity,
        holder,
        shift_identity,
        unit_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    fn r(n: i64, d: i64) -> ExactRational {
        ExactRational::ratio(n, d)
    }

    fn example_spec() -> InnerSpec {
        let mut w = vec![r(1, 2)];
        w.extend(std::iter::repeat_n(r(1, 10), 5));
        InnerSpec::new(6, w).unwrap()
    }

    /// Direct evaluation of the nested digit formula with rationals.
    fn nested_oracle(
        weights: &[ExactRational],
        integer_part: u32,
        digits: &[u32],
    ) -> ExactRational {
        let mut c = vec![ExactRational::zero()];
        for w in weights {
            let next = c.last().unwrap() + w;
            c.push(next);
        }
        let mut acc = ExactRational::zero();
        for &d in digits.iter().rev() {
            acc = &c[d as usize] + &weights[d as usize] * &acc;
        }
        acc + ExactRational::from(integer_part as i64)
    }

    #[test]
    fn default_weights_match_example() {
        assert_eq!(InnerSpec::default_for(6).unwrap(), example_spec());
        let spec = example_spec();
        assert_eq!(spec.cumulative()[5], r(9, 10));
    }

    #[test]
    fn construction_rejects_bad_weights() {
        let mut w = vec![r(1, 1)];
        w.extend(std::iter::repeat_n(ExactRational::zero(), 5));
        assert!(matches!(InnerSpec::new(6, w), Err(InnerError::Weights(_))));

        let w = vec![r(3, 5), r(1, 10), r(1, 10), r(1, 10), r(1, 20), r(1, 20)];
        assert!(matches!(InnerSpec::new(6, w), Err(InnerError::Weights(_))));

        let w = vec![r(1, 2), r(1, 10), r(1, 10), r(1, 10), r(1, 10)];
        assert!(matches!(InnerSpec::new(6, w), Err(InnerError::Weights(_))));

        let w = vec![r(1, 2), r(1, 10), r(1, 10), r(1, 10), r(1, 10), r(1, 20)];
        assert!(matches!(InnerSpec::new(6, w), Err(InnerError::Weights(_))));
    }

    #[test]
    fn eval_examples() {
        let spec = example_spec();
        for k in [1, 5, 30] {
            let v = spec.phi_eval(&ExactRational::zero(), k).unwrap();
            assert_eq!(v.value, ExactRational::zero());
            assert_eq!(v.error_bound, ExactRational::zero());
            let v = spec.phi_eval(&ExactRational::one(), k).unwrap();
            assert_eq!(v.value, ExactRational::one());
        }
        // Depth 1 at a single-digit point: the bound is the unexpanded cell
        // only when the expansion is not flagged exact, so evaluate the
        // digit string directly.
        let e = DigitExpansion {
            base: 6,
            integer_part: BigUint::from(0u32),
            digits: vec![1],
            exact: false,
        };
        let v = spec.eval_digits(&e);
        assert_eq!(v.value, r(1, 2));
        assert_eq!(v.error_bound, r(1, 10));
        let v = spec.phi_eval(&r(1, 6), 1).unwrap();
        assert_eq!(v.value, r(1, 2));
    }

    #[test]
    fn exact_examples() {
        let spec = example_spec();
        assert_eq!(
            spec.phi_exact(&ExactRational::zero(), 1).unwrap(),
            ExactRational::zero()
        );
        // Cumulative-sum oracle: c(5) = w0 + w1 + … + w4.
        let c5: ExactRational = spec.weights()[..5].iter().sum();
        assert_eq!(spec.phi_exact(&r(5, 6), 1).unwrap(), c5);
        assert_eq!(c5, r(9, 10));
        assert_eq!(spec.phi_exact(&r(7, 6), 1).unwrap(), r(3, 2));
        assert!(matches!(
            spec.phi_exact(&r(1, 30), 10),
            Err(InnerError::NonTerminating { .. })
        ));
        assert!(spec.phi_eval(&r(2, 1), 3).is_err());
        assert!(spec.phi_eval(&r(-1, 6), 3).is_err());
    }

    #[test]
    fn matches_nested_oracle() {
        let spec = example_spec();
        for (n, d) in [(1, 30), (7, 10), (123, 457), (999, 1000), (1, 7), (13, 9)] {
            let x = r(n, d);
            let e = expand_digits(&x, 6, 25).unwrap();
            let int = if x >= ExactRational::one() { 1 } else { 0 };
            let oracle = nested_oracle(spec.weights(), int, &e.digits);
            assert_eq!(spec.phi_eval(&x, 25).unwrap().value, oracle);
        }
    }

    #[test]
    fn repeating_expansion_closed_form() {
        // 1/10 = 0.0333…₆, so φ(1/10) = w0 · c3 / (1 − w3) = 7/18.
        let spec = example_spec();
        let v = spec.phi_eval(&r(1, 10), 40).unwrap();
        let closed = r(7, 18);
        assert!(v.value <= closed && closed <= &v.value + &v.error_bound);
    }

    #[test]
    fn both_expansions_agree() {
        // …i_k 000… against …(i_k − 1)(γ−1)(γ−1)…; the tail sum of the second
        // telescopes to c(γ−1)/(1 − w(γ−1)) = 1.
        let spec = example_spec();
        for (j, m) in [(1u64, 1u32), (7, 2), (35, 2), (100, 3), (1, 4)] {
            let x = ExactRational::new(j, 6u64.pow(m)).unwrap();
            let exact = spec.phi_exact(&x, m as usize).unwrap();
            let mut digits = expand_digits(&x, 6, m as usize).unwrap().digits;
            *digits.last_mut().unwrap() -= 1;
            digits.extend(std::iter::repeat_n(5, 40 - m as usize));
            let alt = spec.eval_digits(&DigitExpansion {
                base: 6,
                integer_part: BigUint::from(0u32),
                digits,
                exact: false,
            });
            assert!(alt.value <= exact);
            assert!(exact <= &alt.value + &alt.error_bound);
            let two_pow = ExactRational::ratio(2, 1) * ExactRational::inverse_power(2, 40);
            assert!(&exact - &alt.value <= two_pow);
        }
    }

    #[test]
    fn depth_for_accuracy_examples() {
        assert_eq!(depth_for_accuracy(&r(1, 2)), 1);
        assert_eq!(depth_for_accuracy(&r(1, 1000)), 10);
        assert_eq!(depth_for_accuracy(&r(1, 1024)), 10);
        assert_eq!(depth_for_accuracy(&r(1, 1025)), 11);
    }

    #[test]
    fn fast_encloses_exact() {
        let spec = example_spec();
        let fast = spec.fast_tables();
        for (n, d) in [
            (0, 1),
            (1, 6),
            (1, 36),
            (7, 10),
            (5, 6),
            (1, 1),
            (7, 6),
            (35, 36),
            (59, 30),
        ] {
            let x = r(n, d);
            let exact = spec.phi_eval(&x, 30).unwrap();
            let f = fast.eval(x.to_f64(), 30).unwrap();
            let ev = exact.value.to_f64();
            assert!(f.lo <= ev && ev <= f.hi, "{x}: {f:?} vs {ev}");
            assert!(f.lo <= f.value && f.value <= f.hi);
        }
        assert!(fast.eval(2.0, 5).is_err());
        assert!(fast.eval(f64::NAN, 5).is_err());
    }

    #[test]
    fn verify_default_spec_small() {
        let spec = InnerSpec::default_for(6).unwrap();
        let report = verify_inner(&spec, 500, 30, 7).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.holder.measured.unwrap() <= HOLDER_CONSTANT);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn error_bound_is_sound(num in 0u64..1_999_999, k in 1usize..20, extra in 1usize..20) {
                let spec = InnerSpec::default_for(6).unwrap();
                let x = ExactRational::new(num, 1_000_000u64).unwrap();
                let coarse = spec.phi_eval(&x, k).unwrap();
                let fine = spec.phi_eval(&x, k + extra).unwrap();
                prop_assert!(coarse.value <= fine.value);
                prop_assert!(fine.value <= &coarse.value + &coarse.error_bound);
                prop_assert!(coarse.error_bound <= ExactRational::inverse_power(2, k as u32));
            }

            #[test]
            fn strictly_increasing_on_grid(level in 1usize..4, base in 4u32..9) {
                let spec = InnerSpec::default_for(base).unwrap();
                let grid = crate::rationals::grid_points(level, base).unwrap();
                let vals: Vec<_> = grid.iter().map(|x| spec.phi_exact(x, level).unwrap()).collect();
                prop_assert!(vals.windows(2).all(|w| w[0] < w[1]));
            }

            #[test]
            fn shift_identity_exact(num in 0u64..1_000_000, k in 1usize..30) {
                let spec = InnerSpec::default_for(6).unwrap();
                let x = ExactRational::new(num, 1_000_000u64).unwrap();
                let lo = spec.phi_eval(&x, k).unwrap();
                let hi = spec.phi_eval(&(&x + &ExactRational::one()), k).unwrap();
                prop_assert_eq!(hi.value, lo.value + ExactRational::one());
                prop_assert_eq!(hi.error_bound, lo.error_bound);
            }
        }
    }
}
