//! Exact Kolmogorov superposition networks.
//!
//! A network of this shape computes
//!
//! ```text
//! w = Σ_{q=0}^{2d} g( Σ_{p=1}^{d} λ_p φ(x_p + a·q) + b_q )
//! ```
//!
//! with a fixed inner function φ ([`inner`]), fixed constants `a`, `λ_p`,
//! `b_q` ([`hash`]) and a single target-dependent outer function `g`
//! ([`outer`]). [`network`] assembles, evaluates and serializes the result.

pub mod hash;
pub mod inner;
pub mod linalg;
pub mod network;
pub mod outer;
pub mod rationals;

pub use hash::{HashParams, IncidenceSystem, Point, SeparationVerdict};
pub use inner::{InnerSpec, InnerValue};
pub use network::{Evaluation, KNetModel};
pub use outer::{FitReport, OuterFunction, SampleSet};
pub use rationals::ExactRational;
