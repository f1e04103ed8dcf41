use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid arity: need r >= 2 and n >= r, got n = {n}, r = {r}")]
    InvalidArity { n: usize, r: usize },

    #[error("cannot draw {m} distinct {r}-edges on {n} vertices")]
    InfeasibleDistinct { n: usize, r: usize, m: usize },

    #[error("{what} = {value} is not divisible by r = {r}")]
    NotDivisible {
        what: &'static str,
        value: usize,
        r: usize,
    },

    #[error("hypergraph has no subtable partition")]
    MissingPartition,

    #[error("invalid edge {index}: {reason}")]
    InvalidEdge { index: usize, reason: String },

    #[error("Poisson mean must be non-negative, got {0}")]
    NegativeMean(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no positive fixed point of the beta map at c = {c}, r = {r}, k = {k}")]
    NoFixedPoint { c: f64, r: usize, k: u32 },

    #[error("fixed point at c = {c} is not stable: contraction factor {a}")]
    UnstableFixedPoint { c: f64, a: f64 },

    #[error("threshold bisection bracket is misconfigured: [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("key 0 is reserved for empty cells")]
    ZeroKey,

    #[error("key {key:#x} does not fit in {width} bits")]
    KeyTooWide { key: u64, width: u32 },

    #[error("tables have different shapes and cannot be combined")]
    ShapeMismatch,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
