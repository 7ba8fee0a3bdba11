//! Error types shared across the crate.

use crate::Subdomain;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell width {h} must divide the domain edges: 4/h and 1/h must be positive integers")]
    NonDivisibleWidth { h: f64 },
}

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("macro and micro counts must be at least 1 (N={n}, M={m}, L={l})")]
    ZeroCount { n: usize, m: usize, l: usize },
    #[error("{subdomain} mark {index} out of range ({count} intervals)", subdomain = .subdomain.label())]
    InvalidMark {
        subdomain: Subdomain,
        index: usize,
        count: usize,
    },
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("linear system is singular: {0}")]
    Singular(String),
    #[error(
        "{method} did not converge within {max_iterations} iterations on macro step {macro_step}: \
         final residual {final_residual:.3e}"
    )]
    Divergence {
        method: &'static str,
        macro_step: usize,
        max_iterations: usize,
        final_residual: f64,
        history: Vec<f64>,
    },
    #[error("GMRES stagnated on macro step {macro_step} at residual {final_residual:.3e}")]
    GmresStagnation {
        macro_step: usize,
        final_residual: f64,
        history: Vec<f64>,
    },
    #[error("macro step {macro_step}: {source}")]
    AtStep {
        macro_step: usize,
        #[source]
        source: Box<SolveError>,
    },
    #[error("interpolation time {t} outside macro interval [{a}, {b}]")]
    TimeOutOfInterval { t: f64, a: f64, b: f64 },
    #[error("reversed integration bounds: a={a} > b={b}")]
    ReversedBounds { a: f64, b: f64 },
    #[error("effectivity undefined: reference value equals the computed functional value")]
    ZeroErrorDenominator,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: cannot parse value for `{key}`: {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("line {line}: `{0}` is not a `key = value` pair", .text)]
    Malformed { line: usize, text: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
