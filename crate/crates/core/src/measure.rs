//! Alphabets, distributions and signed measures over finite alphabets,
//! together with the total-variation norm and Hamming-metric utilities.
//!
//! The total-variation norm carries a factor of one half throughout:
//!
//! ```text
//! ‖ν‖ = ½ Σ_x |ν(x)|
//! ```
//!
//! so that the distance between two probability vectors lies in `[0, 1]`.
//! No unhalved variant is exposed.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Tolerance for stochasticity checks on input data.
pub const INPUT_TOL: f64 = 1e-9;

/// Tolerance for internal comparisons (balance, equality of distributions).
pub const INTERNAL_TOL: f64 = 1e-12;

/// An ordered, finite set of distinct symbol labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Alphabet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let symbols: Vec<String> = labels.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(Error::Alphabet("alphabet must contain at least one symbol".into()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Alphabet(format!("duplicate symbol '{s}'")));
            }
        }
        Ok(Self { symbols, index })
    }

    /// Alphabet `{"0", "1", ..., "size-1"}`.
    pub fn indexed(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| i.to_string()))
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Ordered product alphabet with labels `"a,b"`; the pair `(i, j)` has
    /// index `i * other.size() + j`. Fails when labels containing commas
    /// make two pair labels coincide.
    pub fn product(&self, other: &Alphabet) -> Result<Alphabet> {
        let labels = self.symbols.iter().flat_map(|a| other.symbols.iter().map(move |b| format!("{a},{b}")));
        Alphabet::new(labels)
    }

    pub fn encode(&self, labels: &[impl AsRef<str>]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l.as_ref()).ok_or_else(|| Error::Alphabet(format!("unknown symbol '{}'", l.as_ref())))
            })
            .collect()
    }

    pub fn decode(&self, xs: &[usize]) -> Result<Vec<String>> {
        xs.iter()
            .map(|&x| self.label(x).map(str::to_owned).ok_or(Error::SymbolOutOfRange { symbol: x, size: self.size() }))
            .collect()
    }
}

/// A probability vector over a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    /// Validates nonnegativity and normalization. A total within
    /// [`INPUT_TOL`] of one is renormalized exactly; anything further off is
    /// rejected.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidDistribution(format!("weight {i} is not finite")));
            }
            if w < 0.0 {
                return Err(Error::InvalidDistribution(format!("weight {i} is negative ({w})")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > INPUT_TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    /// Normalizes an arbitrary nonnegative vector with positive total.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidDistribution("cannot normalize weight vector".into()));
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(size: usize) -> Self {
        Self(vec![1.0 / size as f64; size])
    }

    pub fn point_mass(size: usize, at: usize) -> Self {
        let mut w = vec![0.0; size];
        w[at] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn tv_distance(&self, other: &ProbVec) -> f64 {
        SignedVec::difference(self, other).tv_norm()
    }

    /// Product measure `self ⊗ other`, indexed `i * other.len() + j`.
    pub fn tensor(&self, other: &ProbVec) -> ProbVec {
        ProbVec(self.0.iter().flat_map(|a| other.0.iter().map(move |b| a * b)).collect())
    }

    /// Law of `x / block`: sums each run of `block` consecutive weights.
    /// A block of 1 returns the law unchanged.
    pub fn merge_blocks(&self, block: usize) -> Result<ProbVec> {
        if block == 0 || !self.0.len().is_multiple_of(block) {
            return Err(Error::DimensionMismatch { expected: block, found: self.0.len() });
        }
        Ok(ProbVec(self.0.chunks(block).map(|c| c.iter().sum()).collect()))
    }
}

impl std::ops::Index<usize> for ProbVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A finite signed measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedVec(Vec<f64>);

impl SignedVec {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// `p − q`.
    ///
    /// # Panics
    ///
    /// If the lengths differ.
    pub fn difference(p: &ProbVec, q: &ProbVec) -> Self {
        assert_eq!(p.len(), q.len(), "distributions over different alphabets");
        Self(p.0.iter().zip(&q.0).map(|(a, b)| a - b).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_balanced(&self) -> bool {
        self.0.iter().sum::<f64>().abs() <= INTERNAL_TOL
    }

    pub fn tv_norm(&self) -> f64 {
        tv_norm(&self.0)
    }
}

/// `½ Σ |v|`.
pub fn tv_norm(values: &[f64]) -> f64 {
    0.5 * values.iter().map(|v| v.abs()).sum::<f64>()
}

/// Number of coordinates where `x` and `y` disagree.
pub fn hamming_distance<T: PartialEq>(x: &[T], y: &[T]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), found: y.len() });
    }
    Ok(x.iter().zip(y).filter(|(a, b)| a != b).count())
}

/// Scale applied to the Hamming metric by a Lipschitz hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `Lip(f) ≤ 1/n`
    PerCoordinate,
    /// `Lip(f) ≤ 1/√n`
    Root,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HammingConfig {
    n: usize,
    normalization: Normalization,
}

impl HammingConfig {
    pub fn new(n: usize, normalization: Normalization) -> Result<Self> {
        if n == 0 {
            return Err(Error::LengthMismatch { expected: 1, found: 0 });
        }
        Ok(Self { n, normalization })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Largest Lipschitz constant (w.r.t. the unnormalized Hamming metric)
    /// admitted by the hypothesis: `1/n` or `1/√n`.
    pub fn lipschitz_budget(&self) -> f64 {
        match self.normalization {
            Normalization::PerCoordinate => 1.0 / self.n as f64,
            Normalization::Root => 1.0 / (self.n as f64).sqrt(),
        }
    }

    /// Value of `d(x, reference) · budget`, the canonical extremal
    /// Lipschitz function for this hypothesis.
    pub fn scaled_distance(&self, distance: usize) -> f64 {
        distance as f64 * self.lipschitz_budget()
    }
}

/// Default cap on `n · |Σ|ⁿ` for [`lipschitz_constant`].
pub const DEFAULT_LIPSCHITZ_CAP: u128 = 50_000_000;

/// Lipschitz constant of a tabulated `f : Σⁿ → ℝ` with respect to the
/// unnormalized Hamming metric.
///
/// `f` is indexed lexicographically with the first coordinate most
/// significant. The supremum over all pairs is attained at pairs differing
/// in one coordinate (Hamming is a path metric), so only neighbours are
/// scanned.
pub fn lipschitz_constant(f: &[f64], alphabet_size: usize, n: usize, cap: u128) -> Result<f64> {
    let states = checked_pow(alphabet_size, n).ok_or(Error::CapExceeded { required: u128::MAX, cap })?;
    let required = states.saturating_mul(n as u128);
    if required > cap {
        return Err(Error::CapExceeded { required, cap });
    }
    if f.len() as u128 != states {
        return Err(Error::DimensionMismatch { expected: states as usize, found: f.len() });
    }
    let k = alphabet_size;
    let mut best: f64 = 0.0;
    for (idx, &fx) in f.iter().enumerate() {
        let mut stride = 1usize;
        for _ in 0..n {
            let digit = (idx / stride) % k;
            for s in (digit + 1)..k {
                let other = idx + (s - digit) * stride;
                best = best.max((fx - f[other]).abs());
            }
            stride *= k;
        }
    }
    Ok(best)
}

/// `base^exp` as `u128`, `None` on overflow.
pub fn checked_pow(base: usize, exp: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as u128)?;
    }
    Some(acc)
}

/// Decodes a lexicographic index into a sequence over `[0, k)` of length
/// `n`, first coordinate most significant.
pub fn decode_index(mut idx: usize, k: usize, n: usize, out: &mut [usize]) {
    for t in (0..n).rev() {
        out[t] = idx % k;
        idx /= k;
    }
}

/// Inverse of [`decode_index`].
pub fn encode_index(xs: &[usize], k: usize) -> usize {
    xs.iter().fold(0, |acc, &x| acc * k + x)
}
