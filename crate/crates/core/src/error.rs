use thiserror::Error;

/// Errors raised while validating or analyzing process specifications.
///
/// Positions, nodes and kernel indices carried in variants are 1-based,
/// matching the indexing used in spec files and reports. Column and symbol
/// indices are 0-based alphabet indices.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alphabet: {0}")]
    Alphabet(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("negative entry {value} at row {row}, column {column}")]
    NegativeEntry { row: usize, column: usize, value: f64 },

    #[error("column {column} sums to {sum}, expected 1")]
    NotStochastic { column: usize, sum: f64 },

    #[error("non-finite value {value} at row {row}, column {column}")]
    NonFinite { row: usize, column: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sequence length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("symbol index {symbol} outside alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("index out of range: {0}")]
    BadIndex(String),

    #[error("{what} = {value} is outside its admissible range")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("enumeration needs {required} entries, cap is {cap}")]
    CapExceeded { required: u128, cap: u128 },

    #[error("invalid tree topology: {0}")]
    Topology(String),

    #[error("potential {index} is identically zero")]
    DegeneratePotential { index: usize },

    #[error("potentials are not normalizable (partition function is zero)")]
    ZeroPartition,

    #[error("position {position}, conditioning symbol {symbol} has zero total mass")]
    ZeroConditioning { position: usize, symbol: usize },

    #[error("conditioning event has probability {0:e}, below the admissibility threshold")]
    ZeroProbabilityCondition(f64),

    #[error("premise violated at level {level}: {detail}")]
    Premise { level: usize, detail: String },

    #[error("malformed bipartite structure: {0}")]
    Bipartite(String),

    #[error("forward recursion underflowed at position {0}")]
    Underflow(usize),

    #[error("envelope hypothesis mismatch: {0}")]
    Hypothesis(String),
}

pub type Result<T> = std::result::Result<T, Error>;
