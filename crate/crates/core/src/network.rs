//! The assembled network `w = Σ_q g(Σ_p λ_p φ(x_p + a·q) + b_q)`.
//!
//! Layer widths are fixed at `(d, d(2d+1), 2d+1, 1)`: the inputs, one φ unit
//! per (coordinate, branch) pair, one g unit per branch and the output sum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{psi_eval, HashError, HashParams, Point};
use crate::inner::{FastInner, InnerError, InnerSpec};
use crate::outer::{FastOuter, FitMode, Knot, OuterError, OuterFunction};
use crate::rationals::ExactRational;

/// Model file version written by [`save`]; [`load`] reads this version only.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("inconsistent model field `{field}`: {reason}")]
    Assembly { field: String, reason: String },
    #[error("point {index}: {source}")]
    BatchPoint {
        index: usize,
        source: Box<NetworkError>,
    },
    #[error("model file is not valid at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("model format_version {found} is not supported (this build reads version {supported}); {hint}")]
    Version {
        found: u64,
        supported: u32,
        hint: String,
    },
    #[error("bad number at `{path}` ({value:?}): {reason}")]
    Number {
        path: String,
        value: String,
        reason: String,
    },
    #[error("model invariant violated at `{path}`: {reason}")]
    Invariant { path: String, reason: String },
    #[error("fast path needs a finite coordinate in [0, 1], got {0}")]
    FastInput(f64),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Inner(#[from] InnerError),
    #[error(transparent)]
    Outer(#[from] OuterError),
}

/// Creation record stored with the model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_mode: Option<FitMode>,
    /// Digit depth k the knots were computed at.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KNetModel {
    inner: InnerSpec,
    params: HashParams,
    outer: OuterFunction,
    meta: ModelMeta,
}

fn assembly(field: impl Into<String>, reason: impl Into<String>) -> NetworkError {
    NetworkError::Assembly {
        field: field.into(),
        reason: reason.into(),
    }
}

pub fn assemble(
    inner: InnerSpec,
    params: HashParams,
    outer: OuterFunction,
) -> Result<KNetModel, NetworkError> {
    KNetModel::new(inner, params, outer, ModelMeta::default())
}

impl KNetModel {
    pub fn new(
        inner: InnerSpec,
        params: HashParams,
        outer: OuterFunction,
        meta: ModelMeta,
    ) -> Result<Self, NetworkError> {
        if inner.base() != params.gamma() {
            return Err(assembly(
                "inner.base",
                format!("{} differs from gamma = {}", inner.base(), params.gamma()),
            ));
        }
        let branches = outer.branches();
        if branches.len() != params.branch_count() {
            return Err(assembly(
                "outer.branches",
                format!(
                    "{} branches, expected 2d + 1 = {}",
                    branches.len(),
                    params.branch_count()
                ),
            ));
        }
        for (q, branch) in branches.iter().enumerate() {
            let (lo, hi) = params.interval(q);
            if branch.q != q {
                return Err(assembly(
                    format!("outer.branches[{q}].q"),
                    format!("holds branch {}", branch.q),
                ));
            }
            if branch.lo != lo || branch.hi != hi {
                return Err(assembly(
                    format!("outer.branches[{q}].interval"),
                    format!("[{}, {}] instead of [{lo}, {hi}]", branch.lo, branch.hi),
                ));
            }
        }
        Ok(Self {
            inner,
            params,
            outer,
            meta,
        })
    }

    pub fn inner(&self) -> &InnerSpec {
        &self.inner
    }

    pub fn params(&self) -> &HashParams {
        &self.params
    }

    pub fn outer(&self) -> &OuterFunction {
        &self.outer
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn with_meta(mut self, meta: ModelMeta) -> Self {
        self.meta = meta;
        self
    }

    /// `(d, d(2d+1), 2d+1, 1)`.
    pub fn layer_widths(&self) -> [usize; 4] {
        layer_widths(self.params.d())
    }

    pub fn fast(&self) -> FastNetwork {
        FastNetwork::new(self)
    }
}

pub fn layer_widths(d: usize) -> [usize; 4] {
    [d, d * (2 * d + 1), 2 * d + 1, 1]
}

/// Network output and a bound on `|w − w*|`, where `w*` is the output with
/// the untruncated φ and λ series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Evaluation {
    pub value: ExactRational,
    pub error_bound: ExactRational,
}

/// One second-layer unit: `z_q = g(ψ_q)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BranchContribution {
    pub q: usize,
    pub psi: ExactRational,
    pub psi_error: ExactRational,
    pub z: ExactRational,
    /// Oscillation of g over `[ψ_q, ψ_q + psi_error]`.
    pub z_error: ExactRational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalTrace {
    pub value: ExactRational,
    pub error_bound: ExactRational,
    pub branches: Vec<BranchContribution>,
}

/// Evaluation with every branch contribution listed.
pub fn eval_trace(model: &KNetModel, x: &Point, depth: usize) -> Result<EvalTrace, NetworkError> {
    if model.outer.is_empty() {
        return Err(OuterError::Empty.into());
    }
    let mut branches = Vec::with_capacity(model.params.branch_count());
    for q in 0..model.params.branch_count() {
        let psi = psi_eval(&model.params, &model.inner, x, q, depth)?;
        let z = model.outer.g_eval(&psi.value)?;
        let upper = &psi.value + &psi.error_bound;
        let z_error = model.outer.oscillation(&psi.value, &upper)?;
        branches.push(BranchContribution {
            q,
            psi: psi.value,
            psi_error: psi.error_bound,
            z,
            z_error,
        });
    }
    let value = branches.iter().map(|b| &b.z).sum();
    let error_bound = branches.iter().map(|b| &b.z_error).sum();
    Ok(EvalTrace {
        value,
        error_bound,
        branches,
    })
}

pub fn eval(model: &KNetModel, x: &Point, depth: usize) -> Result<Evaluation, NetworkError> {
    let trace = eval_trace(model, x, depth)?;
    Ok(Evaluation {
        value: trace.value,
        error_bound: trace.error_bound,
    })
}

/// [`eval`] over many points in parallel; output order follows `points`.
pub fn eval_batch(
    model: &KNetModel,
    points: &[Point],
    depth: usize,
) -> Result<Vec<Evaluation>, NetworkError> {
    let results: Vec<_> = points.par_iter().map(|x| eval(model, x, depth)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| NetworkError::BatchPoint {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FastEvaluation {
    pub value: f64,
    pub error_bound: f64,
}

/// Double-precision evaluator. Its error bound covers the distance to the
/// exact evaluation at any depth.
#[derive(Debug, Clone)]
pub struct FastNetwork {
    d: usize,
    inner: FastInner,
    outer: FastOuter,
    /// `a = 1 / shift_den`.
    shift_den: u64,
    lambda: Vec<f64>,
    lambda_hi: Vec<f64>,
    b: Vec<f64>,
}

impl FastNetwork {
    fn new(model: &KNetModel) -> Self {
        let params = &model.params;
        Self {
            d: params.d(),
            inner: model.inner.fast_tables(),
            outer: model.outer.fast(),
            shift_den: params.gamma() as u64 * (params.gamma() as u64 - 1),
            lambda: params.lambda().iter().map(ExactRational::to_f64).collect(),
            lambda_hi: params
                .lambda()
                .iter()
                .zip(params.lambda_tail())
                .map(|(l, t)| (l + t).to_f64())
                .collect(),
            b: params.b().iter().map(ExactRational::to_f64).collect(),
        }
    }

    pub fn eval(&self, x: &[f64], depth: usize) -> Result<FastEvaluation, NetworkError> {
        if x.len() != self.d {
            return Err(HashError::PointDimension {
                got: x.len(),
                expected: self.d,
            }
            .into());
        }
        if let Some(&c) = x.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(NetworkError::FastInput(c));
        }
        let mut value = 0.0;
        let mut error_bound = 0.0;
        for (q, b) in self.b.iter().enumerate() {
            let (mut psi, mut lo, mut hi) = (*b, *b, *b);
            for (p, &c) in x.iter().enumerate() {
                let phi = self
                    .inner
                    .eval_shifted(c, q as u64, self.shift_den, depth)?;
                psi += self.lambda[p] * phi.value;
                lo += self.lambda[p] * phi.lo;
                hi += self.lambda_hi[p] * phi.hi;
            }
            let pad = 8.0 * f64::EPSILON * hi.abs();
            value += self.outer.g_eval(psi)?;
            error_bound += self.outer.oscillation(lo - pad, hi + pad)?;
        }
        Ok(FastEvaluation { value, error_bound })
    }

    pub fn eval_batch(
        &self,
        points: &[Vec<f64>],
        depth: usize,
    ) -> Result<Vec<FastEvaluation>, NetworkError> {
        let results: Vec<_> = points.par_iter().map(|x| self.eval(x, depth)).collect();
        results
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                r.map_err(|e| NetworkError::BatchPoint {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u64,
    d: usize,
    gamma: u32,
    inner_weights: Vec<String>,
    lambda: Vec<String>,
    lambda_tail: Vec<String>,
    b: Vec<String>,
    branches: Vec<BranchDoc>,
    meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchDoc {
    q: usize,
    knots: Vec<KnotDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnotDoc {
    y: String,
    g: String,
}

fn fractions(values: &[ExactRational]) -> Vec<String> {
    values
        .iter()
        .map(ExactRational::to_fraction_string)
        .collect()
}

/// Pretty JSON model file, numbers as exact `p/q` strings.
pub fn save(model: &KNetModel) -> String {
    let doc = ModelDoc {
        format_version: FORMAT_VERSION as u64,
        d: model.params.d(),
        gamma: model.params.gamma(),
        inner_weights: fractions(model.inner.weights()),
        lambda: fractions(model.params.lambda()),
        lambda_tail: fractions(model.params.lambda_tail()),
        b: fractions(model.params.b()),
        branches: model
            .outer
            .branches()
            .iter()
            .map(|b| BranchDoc {
                q: b.q,
                knots: b
                    .knots
                    .iter()
                    .map(|k| KnotDoc {
                        y: k.y.to_fraction_string(),
                        g: k.g.to_fraction_string(),
                    })
                    .collect(),
            })
            .collect(),
        meta: model.meta.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("model document serializes");
    text.push('\n');
    text
}

fn parse_error(e: serde_json::Error) -> NetworkError {
    NetworkError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn number(path: String, text: &str) -> Result<ExactRational, NetworkError> {
    text.parse()
        .map_err(|e: crate::rationals::RationalError| NetworkError::Number {
            path,
            value: text.to_string(),
            reason: e.to_string(),
        })
}

fn numbers(field: &str, texts: &[String]) -> Result<Vec<ExactRational>, NetworkError> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| number(format!("{field}[{i}]"), t))
        .collect()
}

fn invariant(path: impl Into<String>, reason: impl ToString) -> NetworkError {
    NetworkError::Invariant {
        path: path.into(),
        reason: reason.to_string(),
    }
}

/// Reads a model written by [`save`]; nothing is returned unless every field
/// parses and every model invariant holds.
pub fn load(source: &str) -> Result<KNetModel, NetworkError> {
    let raw: serde_json::Value = serde_json::from_str(source).map_err(parse_error)?;
    let version = raw
        .get("format_version")
        .ok_or_else(|| invariant("format_version", "missing"))?
        .as_u64()
        .ok_or_else(|| invariant("format_version", "not a non-negative integer"))?;
    if version != FORMAT_VERSION as u64 {
        let hint = if version > FORMAT_VERSION as u64 {
            "upgrade to a release that reads this format version".to_string()
        } else {
            "re-fit the model to write a current file".to_string()
        };
        return Err(NetworkError::Version {
            found: version,
            supported: FORMAT_VERSION,
            hint,
        });
    }
    let doc: ModelDoc = serde_json::from_str(source).map_err(parse_error)?;

    let weights = numbers("inner_weights", &doc.inner_weights)?;
    let inner = InnerSpec::new(doc.gamma, weights).map_err(|e| invariant("inner_weights", e))?;
    let lambda = numbers("lambda", &doc.lambda)?;
    let lambda_tail = numbers("lambda_tail", &doc.lambda_tail)?;
    let params = HashParams::from_parts(doc.d, doc.gamma, lambda, lambda_tail)
        .map_err(|e| invariant("lambda", e))?;
    let b = numbers("b", &doc.b)?;
    if b.len() != params.branch_count() {
        return Err(invariant(
            "b",
            format!("{} offsets, expected {}", b.len(), params.branch_count()),
        ));
    }
    if let Some(q) = (0..b.len()).find(|&q| b[q] != params.b()[q]) {
        return Err(invariant(
            format!("b[{q}]"),
            format!("expected (2d + 1)·q = {}", params.b()[q]),
        ));
    }
    if doc.branches.len() != params.branch_count() {
        return Err(invariant(
            "branches",
            format!(
                "{} branches, expected 2d + 1 = {}",
                doc.branches.len(),
                params.branch_count()
            ),
        ));
    }
    let mut tables = Vec::with_capacity(doc.branches.len());
    for (i, branch) in doc.branches.iter().enumerate() {
        if branch.q != i {
            return Err(invariant(
                format!("branches[{i}].q"),
                format!("is {}", branch.q),
            ));
        }
        let knots = branch
            .knots
            .iter()
            .enumerate()
            .map(|(l, k)| {
                Ok(Knot {
                    y: number(format!("branches[{i}].knots[{l}].y"), &k.y)?,
                    g: number(format!("branches[{i}].knots[{l}].g"), &k.g)?,
                })
            })
            .collect::<Result<Vec<_>, NetworkError>>()?;
        tables.push(knots);
    }
    let outer = OuterFunction::for_params(&params, tables).map_err(|e| invariant("branches", e))?;
    KNetModel::new(inner, params, outer, doc.meta)
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaEntry {
    pub p: usize,
    pub value: ExactRational,
    pub tail_bound: ExactRational,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchSummary {
    pub q: usize,
    pub interval: [ExactRational; 2],
    pub knots: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopologyReport {
    pub d: usize,
    pub gamma: u32,
    /// Input, first hidden, second hidden and output layer widths.
    pub widths: [usize; 4],
    pub a: ExactRational,
    pub lambda: Vec<LambdaEntry>,
    pub b: Vec<ExactRational>,
    pub inner_weights: Vec<ExactRational>,
    pub holder_exponent: f64,
    pub branches: Vec<BranchSummary>,
    pub total_knots: usize,
}

pub fn describe(model: &KNetModel) -> TopologyReport {
    let params = &model.params;
    TopologyReport {
        d: params.d(),
        gamma: params.gamma(),
        widths: model.layer_widths(),
        a: params.a().clone(),
        lambda: params
            .lambda()
            .iter()
            .zip(params.lambda_tail())
            .enumerate()
            .map(|(i, (value, tail))| LambdaEntry {
                p: i + 1,
                value: value.clone(),
                tail_bound: tail.clone(),
            })
            .collect(),
        b: params.b().to_vec(),
        inner_weights: model.inner.weights().to_vec(),
        holder_exponent: model.inner.holder_exponent(),
        branches: model
            .outer
            .branches()
            .iter()
            .map(|b| BranchSummary {
                q: b.q,
                interval: [b.lo.clone(), b.hi.clone()],
                knots: b.knots.len(),
            })
            .collect(),
        total_knots: model.outer.knot_count(),
    }
}

/// Graphviz description of the layer graph.
pub fn to_dot(model: &KNetModel) -> String {
    let d = model.params.d();
    let n = model.params.branch_count();
    let mut out = String::from("digraph knet {\n  rankdir=LR;\n");
    for p in 1..=d {
        out.push_str(&format!("  x{p} [label=\"x{p}\", shape=box];\n"));
    }
    for q in 0..n {
        for p in 1..=d {
            out.push_str(&format!(
                "  phi_{p}_{q} [label=\"φ(x{p} + {q}a)\"];\n  x{p} -> phi_{p}_{q};\n"
            ));
        }
        out.push_str(&format!(
            "  z{q} [label=\"g(· + {})\"];\n",
            model.params.b()[q]
        ));
        for p in 1..=d {
            out.push_str(&format!(
                "  phi_{p}_{q} -> z{q} [label=\"{}\"];\n",
                model.params.lambda()[p - 1]
            ));
        }
        out.push_str(&format!("  z{q} -> w;\n"));
    }
    out.push_str("  w [label=\"w\", shape=doublecircle];\n}\n");
    out
}
