//! A single handle over the four process families.

use crate::chain::ChainSpec;
use crate::error::Result;
use crate::measure::{Alphabet, ProbVec};
use crate::mixing::EtaMatrix;
use crate::mmp::MmpSpec;
use crate::tree::TreeSpec;
use crate::undirected::UndirectedChainSpec;

#[derive(Debug, Clone, PartialEq)]
pub enum ProcessSpec {
    Chain(ChainSpec),
    Undirected(UndirectedChainSpec),
    Tree(TreeSpec),
    Mmp(MmpSpec),
}

impl ProcessSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Chain(_) => "chain",
            Self::Undirected(_) => "undirected_chain",
            Self::Tree(_) => "tree",
            Self::Mmp(_) => "mmp",
        }
    }

    /// Number of (observed) coordinates.
    pub fn len(&self) -> usize {
        match self {
            Self::Chain(c) => c.len(),
            Self::Undirected(u) => u.len(),
            Self::Tree(t) => t.len(),
            Self::Mmp(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Alphabet of the observed coordinates.
    pub fn alphabet(&self) -> &Alphabet {
        match self {
            Self::Chain(c) => c.alphabet(),
            Self::Undirected(u) => u.alphabet(),
            Self::Tree(t) => t.alphabet(),
            Self::Mmp(m) => m.obs_alphabet(),
        }
    }

    pub fn density(&self, x: &[usize]) -> Result<f64> {
        match self {
            Self::Chain(c) => c.density(x),
            Self::Undirected(u) => u.density(x),
            Self::Tree(t) => t.density(x),
            Self::Mmp(m) => m.density(x),
        }
    }

    pub fn marginals(&self) -> Result<Vec<ProbVec>> {
        Ok(match self {
            Self::Chain(c) => c.marginals(),
            Self::Undirected(u) => u.derive_kernels()?.marginals(),
            Self::Tree(t) => t.marginals(),
            Self::Mmp(m) => m.marginals(),
        })
    }

    /// Per-step contraction coefficients: kernel coefficients for chains
    /// and MMPs, coefficients of the derived kernels for undirected chains,
    /// and edge coefficients indexed by child `2..=n` for trees.
    pub fn thetas(&self) -> Result<Vec<f64>> {
        Ok(match self {
            Self::Chain(c) => c.thetas(),
            Self::Undirected(u) => u.derive_kernels()?.thetas(),
            Self::Tree(t) => t.edge_thetas().into_iter().skip(1).collect(),
            Self::Mmp(m) => m.thetas(),
        })
    }

    /// The family's upper bound on every `η̄ᵢⱼ`. Undirected chains use the
    /// product of the derived kernels' coefficients; trees use the level
    /// product.
    pub fn eta_bound_matrix(&self) -> Result<EtaMatrix> {
        match self {
            Self::Chain(c) => Ok(c.eta_bound_matrix()),
            Self::Undirected(u) => Ok(u.derive_kernels()?.eta_bound_matrix()),
            Self::Tree(t) => t.eta_bound_matrix(),
            Self::Mmp(m) => Ok(m.eta_bound_matrix()),
        }
    }
}

impl From<ChainSpec> for ProcessSpec {
    fn from(c: ChainSpec) -> Self {
        Self::Chain(c)
    }
}

impl From<UndirectedChainSpec> for ProcessSpec {
    fn from(u: UndirectedChainSpec) -> Self {
        Self::Undirected(u)
    }
}

impl From<TreeSpec> for ProcessSpec {
    fn from(t: TreeSpec) -> Self {
        Self::Tree(t)
    }
}

impl From<MmpSpec> for ProcessSpec {
    fn from(m: MmpSpec) -> Self {
        Self::Mmp(m)
    }
}
