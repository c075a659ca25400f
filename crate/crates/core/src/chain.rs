//! Inhomogeneous Markov chains on a finite alphabet.
//!
//! A chain of length `n` is given by an initial law `p₀` and kernels
//! `p₁, …, p_{n−1}`; its density is `μ(x) = p₀(x₁) Π pᵢ(x_{i+1} | xᵢ)`.
//! Positions are 1-based throughout: `theta(i)` is the coefficient of the
//! kernel `pᵢ` that moves from position `i` to `i + 1`.
//!
//! The η-mixing coefficient between positions `i < j` equals, for a chain,
//! the largest total variation of
//!
//! ```text
//! z = P⁽ʲ⁻¹⁾ ⋯ P⁽ⁱ⁺¹⁾ (pᵢ(·|w) − pᵢ(·|w'))
//! ```
//!
//! over symbol pairs `(w, w')`; the conditioning prefix drops out. Bounding
//! each factor by its contraction coefficient gives `η̄ᵢⱼ ≤ θᵢ ⋯ θ_{j−1}`.

use std::sync::Arc;

use crate::contraction::Kernel;
use crate::error::{Error, Result};
use crate::measure::{tv_norm, Alphabet, ProbVec};
use crate::mixing::{EtaMatrix, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    alphabet: Alphabet,
    p0: ProbVec,
    kernels: Vec<Arc<Kernel>>,
}

impl ChainSpec {
    /// `kernels[t]` moves from position `t + 1` to `t + 2`.
    pub fn new(alphabet: Alphabet, p0: ProbVec, kernels: Vec<Arc<Kernel>>) -> Result<Self> {
        let k = alphabet.size();
        if p0.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: p0.len() });
        }
        for kern in &kernels {
            if kern.rows() != k || kern.cols() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: if kern.rows() != k { kern.rows() } else { kern.cols() },
                });
            }
        }
        Ok(Self { alphabet, p0, kernels })
    }

    /// Homogeneous chain of length `n` sharing one kernel.
    pub fn homogeneous(alphabet: Alphabet, p0: ProbVec, kernel: Kernel, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::BadIndex("chain length must be at least 1".into()));
        }
        let shared = Arc::new(kernel);
        Self::new(alphabet, p0, vec![shared; n - 1])
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn p0(&self) -> &ProbVec {
        &self.p0
    }

    pub fn kernels(&self) -> &[Arc<Kernel>] {
        &self.kernels
    }

    /// `pᵢ` for `1 ≤ i < n`.
    pub fn kernel(&self, i: usize) -> Result<&Kernel> {
        self.check_position(i)?;
        Ok(&self.kernels[i - 1])
    }

    pub fn len(&self) -> usize {
        self.kernels.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check_position(&self, i: usize) -> Result<()> {
        if i == 0 || i >= self.len() {
            return Err(Error::BadIndex(format!(
                "position {i} outside 1..{} for a chain of length {}",
                self.len(),
                self.len()
            )));
        }
        Ok(())
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == 0 || i >= j || j > self.len() {
            return Err(Error::BadIndex(format!("pair ({i}, {j}) must satisfy 1 <= i < j <= {}", self.len())));
        }
        Ok(())
    }

    pub fn density(&self, x: &[usize]) -> Result<f64> {
        if x.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: x.len() });
        }
        let k = self.alphabet.size();
        if let Some(&s) = x.iter().find(|&&s| s >= k) {
            return Err(Error::SymbolOutOfRange { symbol: s, size: k });
        }
        Ok(self.density_unchecked(x))
    }

    pub(crate) fn density_unchecked(&self, x: &[usize]) -> f64 {
        let mut p = self.p0[x[0]];
        for (t, kern) in self.kernels.iter().enumerate() {
            if p == 0.0 {
                break;
            }
            p *= kern.get(x[t + 1], x[t]);
        }
        p
    }

    /// Contraction coefficient `θᵢ` of `pᵢ`.
    pub fn theta(&self, i: usize) -> Result<f64> {
        Ok(self.kernel(i)?.doeblin_coefficient())
    }

    /// `θ₁, …, θ_{n−1}`.
    pub fn thetas(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.doeblin_coefficient()).collect()
    }

    /// `θᵢ θ_{i+1} ⋯ θ_{j−1}`.
    pub fn eta_bound(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(self.kernels[i - 1..j - 1].iter().map(|k| k.doeblin_coefficient()).product())
    }

    /// Exact `η̄ᵢⱼ` by pushing `pᵢ(·|w) − pᵢ(·|w')` through `p_{i+1}, …, p_{j−1}`.
    pub fn eta_exact(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        let k = self.alphabet.size();
        let first = &self.kernels[i - 1];
        let rest = &self.kernels[i..j - 1];
        let mut best: f64 = 0.0;
        for w in 0..k {
            for w2 in (w + 1)..k {
                let mut h: Vec<f64> = (0..k).map(|v| first.get(v, w) - first.get(v, w2)).collect();
                for kern in rest {
                    h = kern.apply_unchecked(&h);
                }
                best = best.max(tv_norm(&h));
            }
        }
        Ok(best)
    }

    /// Marginal law of every position, by forward propagation of `p₀`.
    pub fn marginals(&self) -> Vec<ProbVec> {
        let mut out = Vec::with_capacity(self.len());
        let mut current = self.p0.weights().to_vec();
        out.push(self.p0.clone());
        for kern in &self.kernels {
            current = kern.apply_unchecked(&current);
            out.push(ProbVec::normalized(current.clone()).expect("propagated law"));
        }
        out
    }

    pub fn eta_bound_matrix(&self) -> EtaMatrix {
        let thetas = self.thetas();
        let n = self.len();
        let mut m = EtaMatrix::zeros(n);
        for i in 1..n {
            let mut acc = 1.0;
            for j in (i + 1)..=n {
                acc *= thetas[j - 2];
                m.set(i, j, acc, Provenance::Bound).expect("product of coefficients lies in [0, 1]");
            }
        }
        m
    }

    pub fn eta_exact_matrix(&self) -> EtaMatrix {
        let n = self.len();
        let mut m = EtaMatrix::zeros(n);
        for i in 1..n {
            for j in (i + 1)..=n {
                let v = self.eta_exact(i, j).expect("valid pair");
                m.set(i, j, v.min(1.0), Provenance::Exact).expect("tv value lies in [0, 1]");
            }
        }
        m
    }
}
