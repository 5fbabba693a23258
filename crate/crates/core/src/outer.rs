//! The outer function g and how it is fitted.
//!
//! g is stored as one sorted knot table per branch interval `[b_q, b_q + 2d]`.
//! Inside an interval it interpolates linearly between knots; everywhere
//! else it takes the value of the nearest knot, so a bounded table yields a
//! bounded g on all of ℝ.
//!
//! [`fit_exact`] reproduces any finite sample set exactly by solving the
//! incidence system `M·g = f` for its minimum-norm solution. [`fit_iterative`]
//! builds g on a grid from an evaluation oracle by damped residual sweeps.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hash::{
    build_incidence, separate_adaptive, HashError, HashParams, IncidenceSystem, Point,
    SeparationVerdict, DEFAULT_DEPTH_CAP,
};
use crate::inner::InnerSpec;
use crate::rationals::{grid_points, ExactRational};

/// Default damping of [`fit_iterative`].
pub fn default_damping() -> ExactRational {
    ExactRational::ratio(1, 2)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OuterError {
    #[error("outer function has no knots")]
    Empty,
    #[error("branch {q}: knots are not strictly increasing at index {index}")]
    Unsorted { q: usize, index: usize },
    #[error("branch {q}: knot {y} outside its interval [{lo}, {hi}]")]
    KnotOutside {
        q: usize,
        y: String,
        lo: String,
        hi: String,
    },
    #[error("branch intervals {first} and {second} overlap or are out of order")]
    Overlap { first: usize, second: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("sample set has {points} points but {targets} targets")]
    Length { points: usize, targets: usize },
    #[error("sample set is empty")]
    NoSamples,
    #[error("samples {first} and {second} are the same point")]
    DuplicatePoint { first: usize, second: usize },
    #[error(
        "sample points are not separated at depth {depth}; closed path on samples {support:?}"
    )]
    SeparationFailure {
        mu: Vec<BigInt>,
        support: Vec<usize>,
        depth: usize,
    },
    #[error("no finite target value at grid point {point}")]
    NonFinite { point: String },
    #[error(
        "damped iteration increased the grid residual in round {round} ({previous} -> {current})"
    )]
    Diverged {
        round: usize,
        previous: String,
        current: String,
    },
    #[error("invalid iteration settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Outer(#[from] OuterError),
}

/// One table entry `g(y) = g`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Knot {
    pub y: ExactRational,
    pub g: ExactRational,
}

/// Knot table of one branch together with its interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub q: usize,
    pub lo: ExactRational,
    pub hi: ExactRational,
    pub knots: Vec<Knot>,
}

/// Piecewise-linear tables shared by the exact and fast evaluators.
#[derive(Debug, Clone, PartialEq)]
struct Tables<T> {
    branches: Vec<Table<T>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Table<T> {
    lo: T,
    hi: T,
    ys: Vec<T>,
    gs: Vec<T>,
}

trait Scalar: Clone + PartialOrd
where
    for<'a> &'a Self: Add<&'a Self, Output = Self>
        + Sub<&'a Self, Output = Self>
        + Mul<&'a Self, Output = Self>
        + Div<&'a Self, Output = Self>,
{
}

impl<T: Clone + PartialOrd> Scalar for T where
    for<'a> &'a T: Add<&'a T, Output = T>
        + Sub<&'a T, Output = T>
        + Mul<&'a T, Output = T>
        + Div<&'a T, Output = T>
{
}

impl<T: Scalar> Table<T>
where
    for<'a> &'a T: Add<&'a T, Output = T>
        + Sub<&'a T, Output = T>
        + Mul<&'a T, Output = T>
        + Div<&'a T, Output = T>,
{
    fn contains(&self, y: &T) -> bool {
        !self.ys.is_empty() && self.lo <= *y && *y <= self.hi
    }

    fn interpolate(&self, y: &T) -> T {
        let last = self.ys.len() - 1;
        if *y <= self.ys[0] {
            return self.gs[0].clone();
        }
        if *y >= self.ys[last] {
            return self.gs[last].clone();
        }
        let idx = self.ys.partition_point(|k| k <= y);
        let i = idx - 1;
        if self.ys[i] == *y {
            return self.gs[i].clone();
        }
        let t = &(y - &self.ys[i]) / &(&self.ys[i + 1] - &self.ys[i]);
        &self.gs[i] + &(&(&self.gs[i + 1] - &self.gs[i]) * &t)
    }
}

impl<T: Scalar> Tables<T>
where
    for<'a> &'a T: Add<&'a T, Output = T>
        + Sub<&'a T, Output = T>
        + Mul<&'a T, Output = T>
        + Div<&'a T, Output = T>,
{
    fn is_empty(&self) -> bool {
        self.branches.iter().all(|b| b.ys.is_empty())
    }

    /// Value of the knot closest to `y`; ties go to the smaller knot.
    fn nearest(&self, y: &T) -> Option<T> {
        let mut best: Option<(T, T)> = None;
        for table in self.branches.iter().filter(|b| !b.ys.is_empty()) {
            let last = table.ys.len() - 1;
            for (k, g) in [
                (&table.ys[0], &table.gs[0]),
                (&table.ys[last], &table.gs[last]),
            ] {
                let dist = if y >= k { y - k } else { k - y };
                let better = match &best {
                    None => true,
                    Some((d, _)) => dist.partial_cmp(d) == Some(Ordering::Less),
                };
                if better {
                    best = Some((dist, g.clone()));
                }
            }
        }
        best.map(|(_, g)| g)
    }

    fn eval(&self, y: &T) -> Option<T> {
        match self.branches.iter().find(|b| b.contains(y)) {
            Some(table) => Some(table.interpolate(y)),
            None => self.nearest(y),
        }
    }

    /// `max g − min g` over `[lo, hi]`.
    fn oscillation(&self, lo: &T, hi: &T) -> Option<T> {
        let at_lo = self.eval(lo)?;
        let at_hi = self.eval(hi)?;
        let mut min = at_lo.clone();
        let mut max = at_lo;
        let mut include = |v: &T| {
            if *v < min {
                min = v.clone();
            }
            if *v > max {
                max = v.clone();
            }
        };
        include(&at_hi);
        match self
            .branches
            .iter()
            .find(|b| b.contains(lo) && b.contains(hi))
        {
            Some(table) => {
                let start = table.ys.partition_point(|k| k <= lo);
                let end = table.ys.partition_point(|k| k < hi);
                for g in &table.gs[start..end.max(start)] {
                    include(g);
                }
            }
            None => {
                // The window leaves a branch interval; fall back to all knots.
                for g in self.branches.iter().flat_map(|b| &b.gs) {
                    include(g);
                }
            }
        }
        Some(&max - &min)
    }
}

/// The single outer function g.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OuterFunction {
    branches: Vec<Branch>,
}

impl OuterFunction {
    pub fn new(branches: Vec<Branch>) -> Result<Self, OuterError> {
        for branch in &branches {
            if let Some(index) = branch.knots.windows(2).position(|w| w[0].y >= w[1].y) {
                return Err(OuterError::Unsorted { q: branch.q, index });
            }
            if let Some(k) = branch
                .knots
                .iter()
                .find(|k| k.y < branch.lo || k.y > branch.hi)
            {
                return Err(OuterError::KnotOutside {
                    q: branch.q,
                    y: k.y.to_string(),
                    lo: branch.lo.to_string(),
                    hi: branch.hi.to_string(),
                });
            }
        }
        if let Some(i) = branches.windows(2).position(|w| w[0].hi >= w[1].lo) {
            return Err(OuterError::Overlap {
                first: branches[i].q,
                second: branches[i + 1].q,
            });
        }
        Ok(Self { branches })
    }

    /// Builds g over the branch intervals of `params` from per-branch tables.
    pub fn for_params(params: &HashParams, tables: Vec<Vec<Knot>>) -> Result<Self, OuterError> {
        let branches = tables
            .into_iter()
            .enumerate()
            .map(|(q, knots)| {
                let (lo, hi) = params.interval(q);
                Branch { q, lo, hi, knots }
            })
            .collect();
        Self::new(branches)
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn knot_count(&self) -> usize {
        self.branches.iter().map(|b| b.knots.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.knot_count() == 0
    }

    fn tables(&self) -> Tables<ExactRational> {
        Tables {
            branches: self
                .branches
                .iter()
                .map(|b| Table {
                    lo: b.lo.clone(),
                    hi: b.hi.clone(),
                    ys: b.knots.iter().map(|k| k.y.clone()).collect(),
                    gs: b.knots.iter().map(|k| k.g.clone()).collect(),
                })
                .collect(),
        }
    }

    /// g at a rational argument, exactly.
    pub fn g_eval(&self, y: &ExactRational) -> Result<ExactRational, OuterError> {
        // Avoid cloning the tables for the common in-branch case.
        if let Some(branch) = self
            .branches
            .iter()
            .find(|b| !b.knots.is_empty() && b.lo <= *y && *y <= b.hi)
        {
            return Ok(interpolate_knots(&branch.knots, y));
        }
        self.tables().nearest(y).ok_or(OuterError::Empty)
    }

    /// `max g − min g` over `[lo, hi]`, used for evaluation error bounds.
    pub fn oscillation(
        &self,
        lo: &ExactRational,
        hi: &ExactRational,
    ) -> Result<ExactRational, OuterError> {
        if self.is_empty() {
            return Err(OuterError::Empty);
        }
        if let Some(branch) = self
            .branches
            .iter()
            .find(|b| !b.knots.is_empty() && b.lo <= *lo && *hi <= b.hi)
        {
            let knots = &branch.knots;
            let a = interpolate_knots(knots, lo);
            let b = interpolate_knots(knots, hi);
            let start = knots.partition_point(|k| k.y <= *lo);
            let end = knots.partition_point(|k| k.y < *hi).max(start);
            let inside = knots[start..end].iter().map(|k| &k.g);
            let (min, max) = std::iter::once(&a)
                .chain(std::iter::once(&b))
                .chain(inside)
                .fold((&a, &a), |(mn, mx), v| (mn.min(v), mx.max(v)));
            return Ok(max - min);
        }
        self.tables().oscillation(lo, hi).ok_or(OuterError::Empty)
    }

    pub fn max_abs_value(&self) -> Option<ExactRational> {
        self.branches
            .iter()
            .flat_map(|b| &b.knots)
            .map(|k| k.g.abs())
            .max()
    }

    /// Smallest knot spacing among adjacent pairs (same branch) whose values
    /// differ by at least `threshold`.
    pub fn tightest_jump(&self, threshold: &ExactRational) -> Option<ExactRational> {
        self.branches
            .iter()
            .flat_map(|b| b.knots.windows(2))
            .filter(|w| (&w[1].g - &w[0].g).abs() >= *threshold)
            .map(|w| &w[1].y - &w[0].y)
            .min()
    }

    pub fn fast(&self) -> FastOuter {
        FastOuter {
            tables: Tables {
                branches: self
                    .branches
                    .iter()
                    .map(|b| Table {
                        lo: b.lo.to_f64(),
                        hi: b.hi.to_f64(),
                        ys: b.knots.iter().map(|k| k.y.to_f64()).collect(),
                        gs: b.knots.iter().map(|k| k.g.to_f64()).collect(),
                    })
                    .collect(),
            },
        }
    }
}

fn interpolate_knots(knots: &[Knot], y: &ExactRational) -> ExactRational {
    let last = knots.len() - 1;
    if *y <= knots[0].y {
        return knots[0].g.clone();
    }
    if *y >= knots[last].y {
        return knots[last].g.clone();
    }
    let i = knots.partition_point(|k| k.y <= *y) - 1;
    if knots[i].y == *y {
        return knots[i].g.clone();
    }
    let t = (y - &knots[i].y) / (&knots[i + 1].y - &knots[i].y);
    &knots[i].g + &((&knots[i + 1].g - &knots[i].g) * t)
}

/// Double-precision copy of g for the fast evaluation path.
#[derive(Debug, Clone)]
pub struct FastOuter {
    tables: Tables<f64>,
}

impl FastOuter {
    pub fn g_eval(&self, y: f64) -> Result<f64, OuterError> {
        if self.tables.is_empty() {
            return Err(OuterError::Empty);
        }
        self.tables.eval(&y).ok_or(OuterError::Empty)
    }

    pub fn oscillation(&self, lo: f64, hi: f64) -> Result<f64, OuterError> {
        self.tables.oscillation(&lo, &hi).ok_or(OuterError::Empty)
    }
}

/// Advisory label for the target's function class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    #[default]
    Continuous,
    BoundedDiscontinuous,
    Unbounded,
}

/// Distinct points of `I^d` with exact target values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    points: Vec<Point>,
    targets: Vec<ExactRational>,
    pub class_tag: ClassTag,
}

impl SampleSet {
    pub fn new(points: Vec<Point>, targets: Vec<ExactRational>) -> Result<Self, FitError> {
        if points.len() != targets.len() {
            return Err(FitError::Length {
                points: points.len(),
                targets: targets.len(),
            });
        }
        let mut seen: HashMap<&Point, usize> = HashMap::with_capacity(points.len());
        for (j, p) in points.iter().enumerate() {
            if let Some(&first) = seen.get(p) {
                return Err(FitError::DuplicatePoint { first, second: j });
            }
            seen.insert(p, j);
        }
        Ok(Self {
            points,
            targets,
            class_tag: ClassTag::default(),
        })
    }

    pub fn with_class(mut self, tag: ClassTag) -> Self {
        self.class_tag = tag;
        self
    }

    /// Samples `target` at the given points.
    pub fn from_fn(
        points: Vec<Point>,
        target: impl Fn(&Point) -> ExactRational,
    ) -> Result<Self, FitError> {
        let targets = points.iter().map(&target).collect();
        Self::new(points, targets)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn targets(&self) -> &[ExactRational] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// SHA-256 over the exact fraction text of every point and target.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (p, t) in self.points.iter().zip(&self.targets) {
            for c in p.coords() {
                hasher.update(c.to_fraction_string().as_bytes());
                hasher.update(b",");
            }
            hasher.update(t.to_fraction_string().as_bytes());
            hasher.update(b"\n");
        }
        format!("{:x}", hasher.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Exact,
    Iterative,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub mode: FitMode,
    /// Largest `|Σ_q g(Ψ_q(x_j)) − f(x_j)|` over the fitted points, exact.
    pub residual_max: ExactRational,
    pub knot_count: usize,
    /// Depth at which the knots were finally evaluated.
    pub depth: usize,
    /// Depths tried by the adaptive separation loop.
    pub depths_tried: Vec<usize>,
    pub iterations: usize,
    /// Grid sup-residual before the first round and after every round.
    pub convergence_history: Vec<ExactRational>,
    /// Knots hit by more than one grid point (iterative mode).
    pub collisions: usize,
    pub finalized: bool,
    pub separation: SeparationVerdict,
}

/// Minimum-norm solution of `M·g = f` on a separated system:
/// `g = Mᵀ(MMᵀ)⁻¹f`, solved block by block over connected components.
fn min_norm_knot_values(
    system: &IncidenceSystem,
    targets: &[ExactRational],
) -> Option<Vec<ExactRational>> {
    let mut g = vec![ExactRational::zero(); system.cols()];
    for comp in system.components() {
        if let [j] = comp.rows[..] {
            // One row with disjoint support: g = row·f/|row|².
            let row = system.row(j);
            let norm: i64 = row.iter().map(|&(_, c)| (c * c) as i64).sum();
            let scale = &targets[j] / &ExactRational::from(norm);
            for (l, c) in row {
                g[l] = &scale * &ExactRational::from(c as i64);
            }
            continue;
        }
        let block = system.block(&comp);
        let rhs: Vec<ExactRational> = comp.rows.iter().map(|&j| targets[j].clone()).collect();
        let z = block.gram().solve(&rhs)?;
        let local = block.transpose().mul_vec(&z);
        for (value, &l) in local.into_iter().zip(&comp.cols) {
            g[l] = value;
        }
    }
    Some(g)
}

fn residuals(
    system: &IncidenceSystem,
    knot_values: &[ExactRational],
    targets: &[ExactRational],
) -> Vec<ExactRational> {
    system
        .hits()
        .iter()
        .zip(targets)
        .map(|(hits, f)| {
            let sum: ExactRational = hits.iter().map(|&l| &knot_values[l]).sum();
            sum - f
        })
        .collect()
}

fn sup_norm(values: &[ExactRational]) -> ExactRational {
    values
        .iter()
        .map(ExactRational::abs)
        .max()
        .unwrap_or_else(ExactRational::zero)
}

fn assemble_outer(
    params: &HashParams,
    system: &IncidenceSystem,
    knot_values: &[ExactRational],
) -> Result<OuterFunction, OuterError> {
    let mut tables: Vec<Vec<Knot>> = vec![Vec::new(); params.branch_count()];
    for (l, (y, g)) in system.knots().iter().zip(knot_values).enumerate() {
        tables[system.knot_branch()[l]].push(Knot {
            y: y.clone(),
            g: g.clone(),
        });
    }
    OuterFunction::for_params(params, tables)
}

/// Exact fit with the default separation depth cap.
pub fn fit_exact(
    samples: &SampleSet,
    params: &HashParams,
    inner: &InnerSpec,
    depth: usize,
) -> Result<(OuterFunction, FitReport), FitError> {
    fit_exact_with_cap(samples, params, inner, depth, DEFAULT_DEPTH_CAP)
}

/// Separation gate, then the minimum-norm exact solve. The depth doubles on
/// separation failure up to `depth_cap`.
pub fn fit_exact_with_cap(
    samples: &SampleSet,
    params: &HashParams,
    inner: &InnerSpec,
    depth: usize,
    depth_cap: usize,
) -> Result<(OuterFunction, FitReport), FitError> {
    if samples.is_empty() {
        return Err(FitError::NoSamples);
    }
    let sep = separate_adaptive(params, inner, samples.points(), depth, depth_cap.max(depth))?;
    if let SeparationVerdict::ClosedPath { mu, support } = &sep.verdict {
        return Err(FitError::SeparationFailure {
            mu: mu.clone(),
            support: support.clone(),
            depth: sep.depth(),
        });
    }
    let system = &sep.system;
    let knot_values = min_norm_knot_values(system, samples.targets())
        .expect("separated system has an invertible Gram matrix");
    let residual_max = sup_norm(&residuals(system, &knot_values, samples.targets()));
    let outer = assemble_outer(params, system, &knot_values)?;
    let report = FitReport {
        mode: FitMode::Exact,
        residual_max,
        knot_count: system.cols(),
        depth: sep.depth(),
        depths_tried: sep.depths.clone(),
        iterations: 0,
        convergence_history: Vec::new(),
        collisions: 0,
        finalized: false,
        separation: sep.verdict.clone(),
    };
    Ok((outer, report))
}

#[derive(Debug, Clone)]
pub struct IterativeConfig {
    pub grid_level: usize,
    pub depth: usize,
    pub max_iter: usize,
    pub tolerance: ExactRational,
    pub damping: ExactRational,
    /// Replace the knot values by an exact solve on the grid at the end.
    pub finalize: bool,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self {
            grid_level: 1,
            depth: 30,
            max_iter: 20,
            tolerance: ExactRational::inverse_power(10, 9),
            damping: default_damping(),
            finalize: true,
        }
    }
}

/// All points of the level-`level` lattice of `I^d`, first coordinate
/// varying slowest.
pub fn cube_grid(d: usize, gamma: u32, level: usize) -> Result<Vec<Point>, FitError> {
    let axis = grid_points(level, gamma).map_err(|e| FitError::Settings(e.to_string()))?;
    let mut points = vec![Vec::new()];
    for _ in 0..d {
        points = points
            .into_iter()
            .flat_map(|prefix: Vec<ExactRational>| {
                axis.iter().map(move |t| {
                    let mut next = prefix.clone();
                    next.push(t.clone());
                    next
                })
            })
            .collect();
    }
    Ok(points.into_iter().map(Point::new).collect())
}

/// Damped residual sweeps on the level-`grid_level` grid.
///
/// Each round spreads `damping·r(x)/(2d+1)` onto the knots `Ψ_q(x)` of every
/// grid point (averaging where grid points share a knot) and subtracts the
/// network output of that update from the residual `r`.
pub fn fit_iterative(
    f: &dyn Fn(&Point) -> Option<ExactRational>,
    params: &HashParams,
    inner: &InnerSpec,
    config: &IterativeConfig,
) -> Result<(OuterFunction, FitReport), FitError> {
    if !config.damping.is_positive() || config.damping > ExactRational::one() {
        return Err(FitError::Settings(format!(
            "damping {} outside (0, 1]",
            config.damping
        )));
    }
    if config.tolerance.is_negative() {
        return Err(FitError::Settings("tolerance must be non-negative".into()));
    }
    let grid = cube_grid(params.d(), params.gamma(), config.grid_level)?;
    let targets = grid
        .iter()
        .map(|x| {
            f(x).ok_or_else(|| FitError::NonFinite {
                point: x.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let system = build_incidence(params, inner, &grid, config.depth)?;
    let mut hit_count = vec![0usize; system.cols()];
    for hits in system.hits() {
        for &l in hits {
            hit_count[l] += 1;
        }
    }
    let collisions = hit_count.iter().map(|&c| c.saturating_sub(1)).sum();

    let branches = ExactRational::from(params.branch_count() as i64);
    let mut knot_values = vec![ExactRational::zero(); system.cols()];
    let mut residual = targets.clone();
    let mut history = vec![sup_norm(&residual)];
    let mut rounds = 0;
    while rounds < config.max_iter {
        let mut delta = vec![ExactRational::zero(); system.cols()];
        for (hits, r) in system.hits().iter().zip(&residual) {
            let share = &(&config.damping * r) / &branches;
            for &l in hits {
                delta[l] += &share;
            }
        }
        for (d, &count) in delta.iter_mut().zip(&hit_count) {
            if count > 1 {
                *d = &*d / &ExactRational::from(count as i64);
            }
        }
        for (g, d) in knot_values.iter_mut().zip(&delta) {
            *g += d;
        }
        for (hits, r) in system.hits().iter().zip(residual.iter_mut()) {
            for &l in hits {
                *r -= &delta[l];
            }
        }
        rounds += 1;
        let sup = sup_norm(&residual);
        let previous = history.last().expect("initial entry");
        if sup > *previous {
            return Err(FitError::Diverged {
                round: rounds,
                previous: previous.to_string(),
                current: sup.to_string(),
            });
        }
        let done = sup <= config.tolerance;
        history.push(sup);
        if done {
            break;
        }
    }

    if config.finalize {
        let samples = SampleSet::new(grid, targets)?;
        let (outer, exact) = fit_exact(&samples, params, inner, config.depth)?;
        let report = FitReport {
            mode: FitMode::Iterative,
            residual_max: exact.residual_max,
            knot_count: exact.knot_count,
            depth: exact.depth,
            depths_tried: exact.depths_tried,
            iterations: rounds,
            convergence_history: history,
            collisions,
            finalized: true,
            separation: exact.separation,
        };
        return Ok((outer, report));
    }

    let outer = assemble_outer(params, &system, &knot_values)?;
    let residual_max = history.last().cloned().unwrap_or_else(ExactRational::zero);
    let report = FitReport {
        mode: FitMode::Iterative,
        residual_max,
        knot_count: system.cols(),
        depth: config.depth,
        depths_tried: vec![config.depth],
        iterations: rounds,
        convergence_history: history,
        collisions,
        finalized: false,
        separation: crate::hash::separation_check(&system),
    };
    Ok((outer, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchStats {
    pub q: usize,
    pub knots: usize,
    pub min: Option<ExactRational>,
    pub max: Option<ExactRational>,
    pub range_width: ExactRational,
    /// Largest `|g_{l+1} − g_l|` over adjacent knots.
    pub max_jump: ExactRational,
    /// `y_{l+1} − y_l` at that jump.
    pub jump_spacing: Option<ExactRational>,
    /// Largest `|Δg / Δy|` over adjacent knots.
    pub max_slope: ExactRational,
}

/// Table statistics standing in for continuity and boundedness of g.
#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub branches: Vec<BranchStats>,
    pub total_knots: usize,
    pub max_abs_value: ExactRational,
    pub max_jump: ExactRational,
    pub max_slope: ExactRational,
}

pub fn merge_report(g: &OuterFunction) -> ClassReport {
    let branches: Vec<BranchStats> = g
        .branches()
        .iter()
        .map(|b| {
            let min = b.knots.iter().map(|k| &k.g).min().cloned();
            let max = b.knots.iter().map(|k| &k.g).max().cloned();
            let range_width = match (&min, &max) {
                (Some(lo), Some(hi)) => hi - lo,
                _ => ExactRational::zero(),
            };
            let mut max_jump = ExactRational::zero();
            let mut jump_spacing = None;
            let mut max_slope = ExactRational::zero();
            for w in b.knots.windows(2) {
                let jump = (&w[1].g - &w[0].g).abs();
                let spacing = &w[1].y - &w[0].y;
                let slope = &jump / &spacing;
                if slope > max_slope {
                    max_slope = slope;
                }
                if jump > max_jump || jump_spacing.is_none() {
                    max_jump = jump;
                    jump_spacing = Some(spacing);
                }
            }
            BranchStats {
                q: b.q,
                knots: b.knots.len(),
                min,
                max,
                range_width,
                max_jump,
                jump_spacing,
                max_slope,
            }
        })
        .collect();
    let max_jump = branches
        .iter()
        .map(|b| &b.max_jump)
        .max()
        .cloned()
        .unwrap_or_default();
    let max_slope = branches
        .iter()
        .map(|b| &b.max_slope)
        .max()
        .cloned()
        .unwrap_or_default();
    ClassReport {
        total_knots: g.knot_count(),
        max_abs_value: g.max_abs_value().unwrap_or_default(),
        max_jump,
        max_slope,
        branches,
    }
}
