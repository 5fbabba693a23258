//! Network constants, the branch maps Ψ_q, and the separation test.
//!
//! `Ψ_q(x) = Σ_p λ_p φ(x_p + a·q) + b_q` for `q = 0..=2d`. Each branch lands
//! in `[b_q, b_q + 2d]`, and consecutive intervals are one unit apart, so a
//! knot value identifies its branch.
//!
//! A finite point set is *separated* when the rows of its incidence matrix
//! (points × distinct Ψ-values) are linearly independent; a nonzero left
//! kernel vector is a closed path and obstructs exact interpolation.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;
use petgraph::unionfind::UnionFind;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::inner::{InnerError, InnerSpec, InnerValue};
use crate::linalg::{integer_normalize, Matrix};
use crate::rationals::{random_unit_rational, ExactRational};

/// Default truncation tolerance for the λ_p series.
pub fn default_series_tolerance() -> ExactRational {
    ExactRational::inverse_power(10, 18)
}

/// Largest depth the adaptive separation loop will try.
pub const DEFAULT_DEPTH_CAP: usize = 240;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HashError {
    #[error("dimension d = {0} is below the minimum of 2")]
    Dimension(usize),
    #[error("gamma = {gamma} violates gamma >= 2d + 2 = {required}")]
    GammaTooSmall { gamma: u32, required: u32 },
    #[error("series tolerance must be positive")]
    Tolerance,
    #[error("lambda series exponent overflow for p = {p}")]
    ExponentOverflow { p: usize },
    #[error("inner function base {inner} does not match gamma = {gamma}")]
    BaseMismatch { inner: u32, gamma: u32 },
    #[error("point has {got} coordinates, expected {expected}")]
    PointDimension { got: usize, expected: usize },
    #[error("coordinate {value} of point {point} outside [0, 1]")]
    OutOfCube { point: String, value: String },
    #[error("branch index {q} outside 0..={max}")]
    Branch { q: usize, max: usize },
    #[error("points {first} and {second} are identical")]
    DuplicatePoint { first: usize, second: usize },
    #[error("invalid parameter set: {0}")]
    Invalid(String),
    #[error(transparent)]
    Inner(#[from] InnerError),
}

/// A point of the unit cube `I^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point(Vec<ExactRational>);

impl Point {
    pub fn new(coords: Vec<ExactRational>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[ExactRational] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(ExactRational::to_f64).collect()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// `n` distinct uniform points on the `10^(-12)` lattice of `I^d`.
pub fn random_points<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Vec<Point> {
    let mut seen = std::collections::HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point::new((0..d).map(|_| random_unit_rational(rng)).collect());
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    out
}

/// Partial sum of one λ_p series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LambdaSeries {
    pub value: ExactRational,
    pub tail_bound: ExactRational,
    pub terms: usize,
}

/// Exponent `(p−1)(d^r − 1)/(d − 1)` of the r-th term of λ_p.
pub fn lambda_exponent(p: usize, d: usize, r: u32) -> Option<u64> {
    let d = d as u64;
    // (d^r − 1)/(d − 1) = 1 + d + … + d^(r−1)
    let mut geometric: u64 = 0;
    let mut power: u64 = 1;
    for _ in 0..r {
        geometric = geometric.checked_add(power)?;
        power = power.checked_mul(d)?;
    }
    geometric.checked_mul(p as u64 - 1)
}

/// `λ_p = Σ_{r≥1} γ^(−(p−1)(d^r−1)/(d−1))`, truncated once the geometric
/// tail bound drops to `tolerance`. `λ_1 = 1` exactly.
pub fn lambda_series(
    p: usize,
    d: usize,
    gamma: u32,
    tolerance: &ExactRational,
) -> Result<LambdaSeries, HashError> {
    if p == 1 {
        return Ok(LambdaSeries {
            value: ExactRational::one(),
            tail_bound: ExactRational::zero(),
            terms: 0,
        });
    }
    if !tolerance.is_positive() {
        return Err(HashError::Tolerance);
    }
    let term = |r: u32| -> Result<ExactRational, HashError> {
        let e = lambda_exponent(p, d, r)
            .and_then(|e| u32::try_from(e).ok())
            .ok_or(HashError::ExponentOverflow { p })?;
        Ok(ExactRational::inverse_power(gamma, e))
    };
    // Exponents grow by at least one per term, so the tail after term R is
    // at most t_{R+1}·γ^(p−1)/(γ^(p−1) − 1).
    let step = ExactRational::inverse_power(gamma, (p - 1) as u32);
    let tail_factor = (ExactRational::one() - step)
        .recip()
        .expect("gamma^(p-1) > 1");

    let mut value = ExactRational::zero();
    let mut r = 1u32;
    loop {
        value += &term(r)?;
        let tail_bound = term(r + 1)? * &tail_factor;
        if tail_bound <= *tolerance {
            return Ok(LambdaSeries {
                value,
                tail_bound,
                terms: r as usize,
            });
        }
        r += 1;
    }
}

/// All constants of the network for a given `(d, γ)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashParams {
    d: usize,
    gamma: u32,
    a: ExactRational,
    lambda: Vec<ExactRational>,
    lambda_tail: Vec<ExactRational>,
    lambda_terms: Vec<usize>,
    b: Vec<ExactRational>,
}

/// Checks `d ≥ 2` and `γ ≥ 2d + 2`.
fn check_dims(d: usize, gamma: u32) -> Result<(), HashError> {
    if d < 2 {
        return Err(HashError::Dimension(d));
    }
    let required = 2 * d as u32 + 2;
    if gamma < required {
        return Err(HashError::GammaTooSmall { gamma, required });
    }
    Ok(())
}

fn offsets(d: usize) -> Vec<ExactRational> {
    (0..=2 * d)
        .map(|q| ExactRational::from(((2 * d + 1) * q) as i64))
        .collect()
}

pub fn make_params(
    d: usize,
    gamma: u32,
    series_tolerance: &ExactRational,
) -> Result<HashParams, HashError> {
    check_dims(d, gamma)?;
    let series = (1..=d)
        .map(|p| lambda_series(p, d, gamma, series_tolerance))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HashParams {
        d,
        gamma,
        a: ExactRational::ratio(1, gamma as i64 * (gamma as i64 - 1)),
        lambda: series.iter().map(|s| s.value.clone()).collect(),
        lambda_tail: series.iter().map(|s| s.tail_bound.clone()).collect(),
        lambda_terms: series.iter().map(|s| s.terms).collect(),
        b: offsets(d),
    })
}

impl HashParams {
    pub fn new(d: usize, gamma: u32) -> Result<Self, HashError> {
        make_params(d, gamma, &default_series_tolerance())
    }

    /// Rebuilds parameters from stored λ values (model loading). `a` and `b`
    /// are recomputed; the λ invariants are re-checked.
    pub fn from_parts(
        d: usize,
        gamma: u32,
        lambda: Vec<ExactRational>,
        lambda_tail: Vec<ExactRational>,
    ) -> Result<Self, HashError> {
        check_dims(d, gamma)?;
        if lambda.len() != d || lambda_tail.len() != d {
            return Err(HashError::Invalid(format!(
                "expected {d} lambda values and tails, got {} and {}",
                lambda.len(),
                lambda_tail.len()
            )));
        }
        if lambda[0] != ExactRational::one() || !lambda_tail[0].is_zero() {
            return Err(HashError::Invalid(
                "lambda_1 must be exactly 1 with zero tail".into(),
            ));
        }
        let one = ExactRational::one();
        if let Some(l) = lambda.iter().find(|l| !l.is_positive() || **l > one) {
            return Err(HashError::Invalid(format!(
                "lambda value {l} outside (0, 1]"
            )));
        }
        if let Some(t) = lambda_tail.iter().find(|t| t.is_negative()) {
            return Err(HashError::Invalid(format!("negative lambda tail {t}")));
        }
        Ok(Self {
            d,
            gamma,
            a: ExactRational::ratio(1, gamma as i64 * (gamma as i64 - 1)),
            lambda,
            lambda_tail,
            lambda_terms: vec![0; d],
            b: offsets(d),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn a(&self) -> &ExactRational {
        &self.a
    }

    pub fn lambda(&self) -> &[ExactRational] {
        &self.lambda
    }

    pub fn lambda_tail(&self) -> &[ExactRational] {
        &self.lambda_tail
    }

    /// Number of series terms summed per λ_p (zero when loaded from a file).
    pub fn lambda_terms(&self) -> &[usize] {
        &self.lambda_terms
    }

    pub fn b(&self) -> &[ExactRational] {
        &self.b
    }

    /// `2d + 1`.
    pub fn branch_count(&self) -> usize {
        2 * self.d + 1
    }

    /// `[b_q, b_q + 2d]`.
    pub fn interval(&self, q: usize) -> (ExactRational, ExactRational) {
        let lo = self.b[q].clone();
        let hi = &lo + &ExactRational::from(2 * self.d as i64);
        (lo, hi)
    }

    pub fn check_inner(&self, inner: &InnerSpec) -> Result<(), HashError> {
        if inner.base() != self.gamma {
            return Err(HashError::BaseMismatch {
                inner: inner.base(),
                gamma: self.gamma,
            });
        }
        Ok(())
    }

    pub fn check_point(&self, x: &Point) -> Result<(), HashError> {
        if x.dim() != self.d {
            return Err(HashError::PointDimension {
                got: x.dim(),
                expected: self.d,
            });
        }
        let one = ExactRational::one();
        if let Some(c) = x.coords().iter().find(|c| c.is_negative() || **c > one) {
            return Err(HashError::OutOfCube {
                point: x.to_string(),
                value: c.to_string(),
            });
        }
        Ok(())
    }
}

/// One Ψ_q value: `value ≤ Ψ_q(x) ≤ value + error_bound`, where Ψ_q uses the
/// untruncated λ series and φ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BranchValue {
    pub q: usize,
    pub value: ExactRational,
    pub error_bound: ExactRational,
}

fn combine(params: &HashParams, q: usize, phis: &[InnerValue]) -> BranchValue {
    let mut value = params.b[q].clone();
    let mut error_bound = ExactRational::zero();
    for ((phi, lambda), tail) in phis.iter().zip(&params.lambda).zip(&params.lambda_tail) {
        value += &(lambda * &phi.value);
        error_bound += &(lambda * &phi.error_bound);
        if !tail.is_zero() {
            error_bound += &(tail * &(&phi.value + &phi.error_bound));
        }
    }
    BranchValue {
        q,
        value,
        error_bound,
    }
}

pub fn psi_eval(
    params: &HashParams,
    inner: &InnerSpec,
    x: &Point,
    q: usize,
    depth: usize,
) -> Result<BranchValue, HashError> {
    params.check_inner(inner)?;
    params.check_point(x)?;
    if q > 2 * params.d {
        return Err(HashError::Branch {
            q,
            max: 2 * params.d,
        });
    }
    let shift = &params.a * &ExactRational::from(q as i64);
    let phis = x
        .coords()
        .iter()
        .map(|c| inner.phi_eval(&(c + &shift), depth))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(combine(params, q, &phis))
}

/// All `2d + 1` branch values of one point.
pub fn psi_all(
    params: &HashParams,
    inner: &InnerSpec,
    x: &Point,
    depth: usize,
) -> Result<Vec<BranchValue>, HashError> {
    (0..params.branch_count())
        .map(|q| psi_eval(params, inner, x, q, depth))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchRange {
    pub q: usize,
    pub lower: ExactRational,
    pub upper: ExactRational,
    pub observed_min: ExactRational,
    /// Largest `value + error_bound` seen on the branch.
    pub observed_max: ExactRational,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RangeReport {
    pub d: usize,
    pub gamma: u32,
    pub level: usize,
    pub depth: usize,
    pub points: usize,
    pub branches: Vec<BranchRange>,
    /// Smallest observed distance between consecutive branch ranges.
    pub min_gap: ExactRational,
    pub gap_ok: bool,
    pub passed: bool,
    /// First out-of-interval evaluation: (point, q, value).
    pub witness: Option<(String, usize, String)>,
}

/// Sweeps Ψ_q over the level-`level` grid of `I^d` and checks containment in
/// `[b_q, b_q + 2d]` and a gap of at least one between consecutive ranges.
pub fn check_ranges(
    params: &HashParams,
    inner: &InnerSpec,
    level: usize,
    depth: usize,
) -> Result<RangeReport, HashError> {
    params.check_inner(inner)?;
    let axis = crate::rationals::grid_points(level, params.gamma)
        .map_err(|e| HashError::Inner(e.into()))?;
    let d = params.d;

    // φ(t + a·q) only depends on one coordinate, so tabulate per axis value.
    let table: Vec<Vec<InnerValue>> = (0..params.branch_count())
        .into_par_iter()
        .map(|q| {
            let shift = &params.a * &ExactRational::from(q as i64);
            axis.iter()
                .map(|t| inner.phi_eval(&(t + &shift), depth))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let total = axis.len().pow(d as u32);
    let mut branches: Vec<BranchRange> = (0..params.branch_count())
        .map(|q| {
            let (lower, upper) = params.interval(q);
            BranchRange {
                q,
                observed_min: upper.clone(),
                observed_max: lower.clone(),
                lower,
                upper,
                violations: 0,
            }
        })
        .collect();
    let mut witness = None;
    let mut index = vec![0usize; d];
    for _ in 0..total {
        for (q, branch) in branches.iter_mut().enumerate() {
            let phis: Vec<InnerValue> = index.iter().map(|&i| table[q][i].clone()).collect();
            let bv = combine(params, q, &phis);
            let top = &bv.value + &bv.error_bound;
            if bv.value < branch.lower || top > branch.upper {
                branch.violations += 1;
                if witness.is_none() {
                    let point = Point::new(index.iter().map(|&i| axis[i].clone()).collect());
                    witness = Some((point.to_string(), q, bv.value.to_string()));
                }
            }
            if bv.value < branch.observed_min {
                branch.observed_min = bv.value.clone();
            }
            if top > branch.observed_max {
                branch.observed_max = top;
            }
        }
        // Odometer increment over the d axes.
        for slot in index.iter_mut() {
            *slot += 1;
            if *slot < axis.len() {
                break;
            }
            *slot = 0;
        }
    }

    let min_gap = branches
        .windows(2)
        .map(|w| &w[1].observed_min - &w[0].observed_max)
        .min()
        .unwrap_or_else(ExactRational::zero);
    let gap_ok = min_gap >= ExactRational::one();
    let passed = gap_ok && branches.iter().all(|b| b.violations == 0);
    Ok(RangeReport {
        d,
        gamma: params.gamma,
        level,
        depth,
        points: total,
        branches,
        min_gap,
        gap_ok,
        passed,
        witness,
    })
}

/// Points × distinct knot values; entry `(j, l)` counts the branches q with
/// `Ψ_q(x_j) = y_l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceSystem {
    points: Vec<Point>,
    depth: usize,
    knots: Vec<ExactRational>,
    knot_branch: Vec<usize>,
    /// `hits[j][q]` is the knot index of `Ψ_q(x_j)`.
    hits: Vec<Vec<usize>>,
}

impl IncidenceSystem {
    /// Builds the system from precomputed branch values (`values[j][q]`).
    /// Identical rows are allowed here; [`build_incidence`] enforces distinct
    /// points.
    pub fn from_branch_values(
        points: Vec<Point>,
        values: Vec<Vec<ExactRational>>,
        depth: usize,
    ) -> Self {
        assert_eq!(points.len(), values.len());
        let mut all: Vec<(&ExactRational, usize)> = values
            .iter()
            .flat_map(|row| row.iter().enumerate().map(|(q, v)| (v, q)))
            .collect();
        all.sort();
        all.dedup_by(|a, b| a.0 == b.0);
        let knots: Vec<ExactRational> = all.iter().map(|(v, _)| (*v).clone()).collect();
        let knot_branch = all.iter().map(|(_, q)| *q).collect();
        let hits = values
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| knots.binary_search(v).expect("knot present"))
                    .collect()
            })
            .collect();
        Self {
            points,
            depth,
            knots,
            knot_branch,
            hits,
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn knots(&self) -> &[ExactRational] {
        &self.knots
    }

    pub fn knot_branch(&self) -> &[usize] {
        &self.knot_branch
    }

    pub fn hits(&self) -> &[Vec<usize>] {
        &self.hits
    }

    pub fn rows(&self) -> usize {
        self.points.len()
    }

    pub fn cols(&self) -> usize {
        self.knots.len()
    }

    /// Sparse row: `(knot, count)` pairs in knot order.
    pub fn row(&self, j: usize) -> Vec<(usize, u32)> {
        let mut cols = self.hits[j].clone();
        cols.sort_unstable();
        let mut out: Vec<(usize, u32)> = Vec::with_capacity(cols.len());
        for c in cols {
            match out.last_mut() {
                Some((last, count)) if *last == c => *count += 1,
                _ => out.push((c, 1)),
            }
        }
        out
    }

    pub fn entry(&self, j: usize, l: usize) -> u32 {
        self.hits[j].iter().filter(|&&c| c == l).count() as u32
    }

    pub fn dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows(), self.cols());
        for j in 0..self.rows() {
            for (l, count) in self.row(j) {
                m.set(j, l, ExactRational::from(count as i64));
            }
        }
        m
    }

    /// Groups of points connected through shared knots, each with its knot
    /// columns; ordered by smallest point index.
    pub fn components(&self) -> Vec<Component> {
        let n = self.rows();
        let mut uf = UnionFind::<usize>::new(n);
        let mut first_hit: Vec<Option<usize>> = vec![None; self.cols()];
        for (j, row) in self.hits.iter().enumerate() {
            for &l in row {
                match first_hit[l] {
                    Some(i) => {
                        uf.union(i, j);
                    }
                    None => first_hit[l] = Some(j),
                }
            }
        }
        let mut by_root: HashMap<usize, usize> = HashMap::new();
        let mut comps: Vec<Component> = Vec::new();
        for j in 0..n {
            let root = uf.find(j);
            let idx = *by_root.entry(root).or_insert_with(|| {
                comps.push(Component::default());
                comps.len() - 1
            });
            comps[idx].rows.push(j);
        }
        for (l, owner) in first_hit.iter().enumerate() {
            if let Some(j) = owner {
                let idx = by_root[&uf.find(*j)];
                comps[idx].cols.push(l);
            }
        }
        comps
    }

    /// Dense block of one component (local row/column order).
    pub fn block(&self, comp: &Component) -> Matrix {
        let col_pos: HashMap<usize, usize> =
            comp.cols.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let mut m = Matrix::zeros(comp.rows.len(), comp.cols.len());
        for (i, &j) in comp.rows.iter().enumerate() {
            for (l, count) in self.row(j) {
                m.set(i, col_pos[&l], ExactRational::from(count as i64));
            }
        }
        m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Component {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Evaluates every point on every branch and collects the knots. Points must
/// be distinct.
pub fn build_incidence(
    params: &HashParams,
    inner: &InnerSpec,
    points: &[Point],
    depth: usize,
) -> Result<IncidenceSystem, HashError> {
    params.check_inner(inner)?;
    let mut seen: HashMap<&Point, usize> = HashMap::with_capacity(points.len());
    for (j, p) in points.iter().enumerate() {
        params.check_point(p)?;
        if let Some(&first) = seen.get(p) {
            return Err(HashError::DuplicatePoint { first, second: j });
        }
        seen.insert(p, j);
    }
    let values = points
        .par_iter()
        .map(|p| {
            psi_all(params, inner, p, depth).map(|bvs| bvs.into_iter().map(|b| b.value).collect())
        })
        .collect::<Result<Vec<Vec<ExactRational>>, _>>()?;
    Ok(IncidenceSystem::from_branch_values(
        points.to_vec(),
        values,
        depth,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SeparationVerdict {
    Separated {
        rank: usize,
    },
    /// Nonzero integer weights μ (one per point, coprime, first nonzero
    /// positive) with `Σ_j μ_j δ_{Ψ_q(x_j)} = 0` for every q.
    ClosedPath {
        #[serde(serialize_with = "serialize_bigints")]
        mu: Vec<BigInt>,
        support: Vec<usize>,
    },
}

fn serialize_bigints<S: serde::Serializer>(v: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

impl SeparationVerdict {
    pub fn is_separated(&self) -> bool {
        matches!(self, SeparationVerdict::Separated { .. })
    }

    /// Closed-path weights restricted to their support.
    pub fn witness(&self) -> Option<Vec<BigInt>> {
        match self {
            SeparationVerdict::ClosedPath { mu, support } => {
                Some(support.iter().map(|&j| mu[j].clone()).collect())
            }
            SeparationVerdict::Separated { .. } => None,
        }
    }
}

/// Decides whether the incidence rows are linearly independent, exactly.
pub fn separation_check(system: &IncidenceSystem) -> SeparationVerdict {
    let n = system.rows();
    for comp in system.components() {
        if comp.rows.len() < 2 {
            continue;
        }
        // Left kernel of the block = null space of its transpose.
        let block_t = system.block(&comp).transpose();
        if let Some(local) = block_t.null_vector() {
            let local = integer_normalize(&local);
            let mut mu = vec![BigInt::zero(); n];
            for (i, &j) in comp.rows.iter().enumerate() {
                mu[j] = local[i].clone();
            }
            let support = (0..n).filter(|&j| !mu[j].is_zero()).collect();
            return SeparationVerdict::ClosedPath { mu, support };
        }
    }
    SeparationVerdict::Separated { rank: n }
}

/// Result of the depth-doubling separation loop.
#[derive(Debug, Clone)]
pub struct AdaptiveSeparation {
    pub system: IncidenceSystem,
    pub verdict: SeparationVerdict,
    /// Every depth tried, in order; the last one produced `system`.
    pub depths: Vec<usize>,
}

impl AdaptiveSeparation {
    pub fn depth(&self) -> usize {
        self.system.depth()
    }
}

/// Runs [`separation_check`] at `depth`, doubling the depth after each
/// failure while it stays within `cap`.
pub fn separate_adaptive(
    params: &HashParams,
    inner: &InnerSpec,
    points: &[Point],
    depth: usize,
    cap: usize,
) -> Result<AdaptiveSeparation, HashError> {
    let mut depth = depth.max(1);
    let mut depths = Vec::new();
    loop {
        depths.push(depth);
        let system = build_incidence(params, inner, points, depth)?;
        let verdict = separation_check(&system);
        if verdict.is_separated() || depth * 2 > cap {
            return Ok(AdaptiveSeparation {
                system,
                verdict,
                depths,
            });
        }
        depth *= 2;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub trials: usize,
    pub points_per_trial: usize,
    pub depth: usize,
    pub seed: u64,
    pub failures: usize,
    /// `(trial, μ restricted to its support)` for each failed trial.
    pub witnesses: Vec<(usize, Vec<String>)>,
    pub max_knots: usize,
}

/// Random separation trials at a fixed depth.
pub fn separation_trials(
    params: &HashParams,
    inner: &InnerSpec,
    trials: usize,
    points_per_trial: usize,
    depth: usize,
    seed: u64,
) -> Result<TrialReport, HashError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point_sets: Vec<Vec<Point>> = (0..trials)
        .map(|_| random_points(params.d, points_per_trial, &mut rng))
        .collect();
    let outcomes = point_sets
        .par_iter()
        .map(|pts| {
            let system = build_incidence(params, inner, pts, depth)?;
            Ok((system.cols(), separation_check(&system)))
        })
        .collect::<Result<Vec<_>, HashError>>()?;
    let mut report = TrialReport {
        trials,
        points_per_trial,
        depth,
        seed,
        failures: 0,
        witnesses: Vec::new(),
        max_knots: 0,
    };
    for (t, (knots, verdict)) in outcomes.into_iter().enumerate() {
        report.max_knots = report.max_knots.max(knots);
        if let Some(w) = verdict.witness() {
            report.failures += 1;
            report
                .witnesses
                .push((t, w.iter().map(|x| x.to_string()).collect()));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> ExactRational {
        ExactRational::ratio(n, d)
    }

    fn pt(coords: &[(i64, i64)]) -> Point {
        Point::new(coords.iter().map(|&(n, d)| r(n, d)).collect())
    }

    fn setup() -> (HashParams, InnerSpec) {
        (
            HashParams::new(2, 6).unwrap(),
            InnerSpec::default_for(6).unwrap(),
        )
    }

    /// λ_2 for d = 2 straight from the closed-form exponents 2^r − 1.
    fn lambda2_oracle(terms: u32) -> ExactRational {
        (1..=terms)
            .map(|r| ExactRational::inverse_power(6, 2u32.pow(r) - 1))
            .sum()
    }

    #[test]
    fn params_examples() {
        let (params, _) = setup();
        assert_eq!(*params.a(), r(1, 30));
        let b: Vec<_> = [0, 5, 10, 15, 20].iter().map(|&v| r(v, 1)).collect();
        assert_eq!(params.b(), &b[..]);
        assert_eq!(
            HashParams::new(2, 5),
            Err(HashError::GammaTooSmall {
                gamma: 5,
                required: 6
            })
        );
        assert_eq!(HashParams::new(1, 6), Err(HashError::Dimension(1)));
        assert!(make_params(2, 6, &ExactRational::zero()).is_err());
    }

    #[test]
    fn lambda_examples() {
        let tol = r(1, 10_000_000_000);
        let s1 = lambda_series(1, 2, 6, &tol).unwrap();
        assert_eq!(s1.value, ExactRational::one());
        assert!(s1.tail_bound.is_zero());
        assert_eq!(s1.terms, 0);

        let exps: Vec<u64> = (1..=5).map(|r| lambda_exponent(2, 2, r).unwrap()).collect();
        assert_eq!(exps, vec![1, 3, 7, 15, 31]);

        let s2 = lambda_series(2, 2, 6, &tol).unwrap();
        // 6^-15 / (5/6) ≈ 2.6e-12 ≤ 1e-10, so the sum stops after 6^-7.
        assert_eq!(s2.terms, 3);
        assert_eq!(s2.value, lambda2_oracle(3));
        assert!((s2.value.to_f64() - 0.171_299_87).abs() < 1e-8);

        let deep = lambda_series(2, 2, 6, &default_series_tolerance()).unwrap();
        assert_eq!(deep.terms, 4);
        // Tail after the 6^-15 term is below 2·6^-15.
        let true_tail = &lambda2_oracle(8) - &deep.value;
        assert!(true_tail <= deep.tail_bound);
        assert!(deep.tail_bound < r(2, 1) * ExactRational::inverse_power(6, 15));
    }

    #[test]
    fn lambda_bounds_hold() {
        for (d, gamma) in [(2, 6), (3, 8), (4, 10), (5, 12)] {
            let params = HashParams::new(d, gamma).unwrap();
            assert_eq!(params.lambda()[0], ExactRational::one());
            assert!(params
                .lambda()
                .iter()
                .all(|l| l.is_positive() && *l <= ExactRational::one()));
            assert!(params
                .lambda_tail()
                .iter()
                .all(|t| *t <= default_series_tolerance()));
        }
    }

    #[test]
    fn psi_examples() {
        let (params, inner) = setup();
        let v = psi_eval(&params, &inner, &pt(&[(0, 1), (0, 1)]), 0, 30).unwrap();
        assert!(v.value.is_zero());

        let v = psi_eval(&params, &inner, &pt(&[(1, 1), (1, 1)]), 0, 30).unwrap();
        assert_eq!(v.value, &ExactRational::one() + &params.lambda()[1]);

        // φ(3/30) = φ(1/10) = 7/18 from the repeating expansion 0.0333…₆.
        let v = psi_eval(&params, &inner, &pt(&[(0, 1), (0, 1)]), 3, 40).unwrap();
        let scale = &ExactRational::one() + &params.lambda()[1];
        let ideal = &(&scale * &r(7, 18)) + &r(15, 1);
        assert!(v.value <= ideal);
        assert!(ideal <= &v.value + &v.error_bound);

        assert!(psi_eval(&params, &inner, &pt(&[(3, 2), (0, 1)]), 0, 30).is_err());
        assert!(psi_eval(&params, &inner, &pt(&[(0, 1)]), 0, 30).is_err());
        assert!(psi_eval(&params, &inner, &pt(&[(0, 1), (0, 1)]), 5, 30).is_err());
    }

    #[test]
    fn ranges_level_two() {
        let (params, inner) = setup();
        let report = check_ranges(&params, &inner, 2, 30).unwrap();
        assert!(report.passed, "{:?}", report.witness);
        assert_eq!(report.points, 37 * 37);
        assert!(report.min_gap >= ExactRational::one());
        assert!(report.branches[0].observed_min.is_zero());
        for b in &report.branches {
            assert_eq!(&b.upper - &b.lower, r(4, 1));
        }
    }

    #[test]
    fn incidence_shapes() {
        let (params, inner) = setup();
        let one = build_incidence(&params, &inner, &[pt(&[(1, 3), (2, 7)])], 30).unwrap();
        assert_eq!(one.cols(), 5);
        assert!(one.row(0).iter().all(|&(_, c)| c == 1));

        let two = build_incidence(
            &params,
            &inner,
            &[pt(&[(1, 3), (2, 7)]), pt(&[(1, 5), (3, 7)])],
            30,
        )
        .unwrap();
        assert_eq!(two.cols(), 10);
        for j in 0..2 {
            assert_eq!(two.row(j).iter().map(|&(_, c)| c).sum::<u32>(), 5);
        }
        assert!(separation_check(&two).is_separated());

        let dup = build_incidence(
            &params,
            &inner,
            &[pt(&[(1, 3), (2, 7)]), pt(&[(1, 3), (2, 7)])],
            30,
        );
        assert_eq!(
            dup,
            Err(HashError::DuplicatePoint {
                first: 0,
                second: 1
            })
        );
    }

    #[test]
    fn equal_rows_give_unit_closed_path() {
        let p = pt(&[(1, 3), (2, 7)]);
        let row: Vec<ExactRational> = (0..5).map(|q| r(5 * q + 1, 1)).collect();
        let system =
            IncidenceSystem::from_branch_values(vec![p.clone(), p], vec![row.clone(), row], 30);
        let verdict = separation_check(&system);
        assert_eq!(
            verdict.witness().unwrap(),
            vec![BigInt::from(1), BigInt::from(-1)]
        );
    }

    #[test]
    fn near_duplicates_collide_then_separate() {
        let (params, inner) = setup();
        let base = pt(&[(1, 3), (2, 7)]);
        let nudged = Point::new(vec![
            &base.coords()[0] + &ExactRational::inverse_power(6, 45),
            base.coords()[1].clone(),
        ]);
        let mut pts = random_points(2, 10, &mut ChaCha8Rng::seed_from_u64(3));
        pts.insert(2, base);
        pts.push(nudged);
        let system = build_incidence(&params, &inner, &pts, 30).unwrap();
        let verdict = separation_check(&system);
        let SeparationVerdict::ClosedPath { mu, support } = &verdict else {
            panic!("expected a closed path");
        };
        assert_eq!(support, &vec![2, 11]);
        assert_eq!(mu[2], BigInt::from(1));
        assert_eq!(mu[11], BigInt::from(-1));

        let adaptive = separate_adaptive(&params, &inner, &pts, 30, DEFAULT_DEPTH_CAP).unwrap();
        assert!(adaptive.verdict.is_separated());
        assert_eq!(adaptive.depths, vec![30, 60]);
    }

    #[test]
    fn four_point_closed_path_is_found() {
        // r0 = {0,1}, r1 = {2,3}, r2 = {0,3}, r3 = {1,2}: r0 + r1 = r2 + r3.
        let pts: Vec<Point> = (0..4).map(|i| pt(&[(i, 10), (0, 1)])).collect();
        let rows = [[0, 1], [2, 3], [0, 3], [1, 2]];
        let values = rows
            .iter()
            .map(|row| row.iter().map(|&v| r(v, 1)).collect())
            .collect();
        let system = IncidenceSystem::from_branch_values(pts, values, 1);
        let verdict = separation_check(&system);
        let mu = match verdict {
            SeparationVerdict::ClosedPath { mu, .. } => mu,
            _ => panic!("dependent rows not detected"),
        };
        let dense = system.dense();
        for l in 0..dense.cols() {
            let s: BigInt = (0..dense.rows())
                .map(|j| &mu[j] * dense.get(j, l).numer())
                .sum();
            assert!(s.is_zero());
        }
    }

    #[test]
    fn random_trials_separate() {
        let (params, inner) = setup();
        let report = separation_trials(&params, &inner, 5, 50, 30, 11).unwrap();
        assert_eq!(report.failures, 0);
        assert_eq!(report.max_knots, 250);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn rows_sum_to_branch_count(seed in 0u64..1000, n in 1usize..12, depth in 3usize..20) {
                let (params, inner) = setup();
                let pts = random_points(2, n, &mut ChaCha8Rng::seed_from_u64(seed));
                let sys = build_incidence(&params, &inner, &pts, depth).unwrap();
                for j in 0..n {
                    prop_assert_eq!(sys.row(j).iter().map(|&(_, c)| c).sum::<u32>(), 5);
                }
                for (l, &q) in sys.knot_branch().iter().enumerate() {
                    let (lo, hi) = params.interval(q);
                    prop_assert!(lo <= sys.knots()[l] && sys.knots()[l] <= hi);
                }
            }

            #[test]
            fn refinement_never_merges(seed in 0u64..1000, depth in 2usize..15) {
                let (params, inner) = setup();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // Coarse grid points collide often at low depth.
                let pts: Vec<Point> = (0..8)
                    .map(|_| Point::new((0..2).map(|_| r(rand::Rng::gen_range(&mut rng, 0..=36), 36)).collect()))
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let coarse = build_incidence(&params, &inner, &pts, depth).unwrap();
                let fine = build_incidence(&params, &inner, &pts, 2 * depth).unwrap();
                prop_assert!(fine.cols() >= coarse.cols());
                for j in 0..pts.len() {
                    for i in 0..j {
                        for q in 0..5 {
                            if fine.hits()[i][q] == fine.hits()[j][q] {
                                prop_assert_eq!(coarse.hits()[i][q], coarse.hits()[j][q]);
                            }
                        }
                    }
                }
            }
        }
    }
}
