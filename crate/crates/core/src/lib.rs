//! Contraction coefficients, η-mixing bounds and concentration envelopes
//! for finite-alphabet Markov chains, undirected chains, Markov trees and
//! Markov marginal processes.
//!
//! Kernels are column-stochastic: `K.get(x, y) = P(x | y)`. Positions and
//! tree nodes are 1-based. Total variation carries the factor ½.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod contraction;
pub mod error;
pub mod harness;
pub mod measure;
pub mod mixing;
pub mod mmp;
pub mod oracle;
pub mod process;
pub mod random;
pub mod tree;
pub mod undirected;

pub use chain::ChainSpec;
pub use contraction::{alpha, Kernel};
pub use error::{Error, Result};
pub use measure::{Alphabet, ProbVec, SignedVec};
pub use mixing::{EnvelopeKind, EtaMatrix, MixingMatrices};
pub use mmp::MmpSpec;
pub use process::ProcessSpec;
pub use tree::{TreeSpec, TreeTopology};
pub use undirected::{Potential, UndirectedChainSpec};
