//! Ground truth by exhaustive enumeration.
//!
//! A [`JointTable`] stores the probability of every sequence in `Σⁿ` in
//! lexicographic order, first coordinate most significant. With that layout
//! the sequences sharing a prefix `X₁…Xᵢ` form one contiguous block, and
//! summing out the leading coordinate of a block's suffix is a sum of `k`
//! equal slices. [`exact_eta_row`] uses this to get every `η̄ᵢⱼ`, `j > i`, from
//! one pass per prefix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{checked_pow, decode_index, tv_norm};
use crate::mixing::{EtaMatrix, Provenance};
use crate::process::ProcessSpec;

/// Default limit on table entries.
pub const DEFAULT_STATE_CAP: u128 = 2_000_000;

/// Conditioning events at or below this probability are excluded.
pub const CONDITION_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    n: usize,
    k: usize,
    probs: Vec<f64>,
}

/// An exact `η̄ᵢⱼ` along with how many `(prefix, w, w')` triples entered the
/// supremum and how many were dropped for having a null conditioning event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactEta {
    pub value: f64,
    pub admissible: u64,
    pub excluded: u64,
}

impl ExactEta {
    /// No admissible triple: the value 0 carries no information.
    pub fn vacuous(&self) -> bool {
        self.admissible == 0
    }
}

/// Number of entries a table for `spec` would need, checked against `cap`.
pub fn table_size(spec: &ProcessSpec, cap: u128) -> Result<usize> {
    let required = checked_pow(spec.alphabet().size(), spec.len()).unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::CapExceeded { required, cap });
    }
    Ok(required as usize)
}

/// Tabulates the density of `spec` over all of `Σⁿ`.
pub fn enumerate(spec: &ProcessSpec, cap: u128) -> Result<JointTable> {
    let size = table_size(spec, cap)?;
    let n = spec.len();
    let k = spec.alphabet().size();
    let mut probs = vec![0.0; size];
    const CHUNK: usize = 4096;
    probs.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut xs = vec![0; n];
        for (off, slot) in chunk.iter_mut().enumerate() {
            decode_index(c * CHUNK + off, k, n, &mut xs);
            *slot = match spec {
                ProcessSpec::Chain(s) => s.density_unchecked(&xs),
                ProcessSpec::Undirected(s) => s.weight_unchecked(&xs),
                ProcessSpec::Tree(s) => s.density_unchecked(&xs),
                ProcessSpec::Mmp(s) => s.forward(&xs).map(|w| w.iter().sum()).unwrap_or(f64::NAN),
            };
        }
    });
    if let Some(bad) = probs.iter().position(|p| !p.is_finite()) {
        let mut xs = vec![0; n];
        decode_index(bad, k, n, &mut xs);
        // surface the underlying diagnostic
        spec.density(&xs)?;
        return Err(Error::NonFinite { row: bad, column: 0, value: probs[bad] });
    }
    if let ProcessSpec::Undirected(_) = spec {
        let z: f64 = probs.iter().sum();
        if !(z > 0.0) {
            return Err(Error::ZeroPartition);
        }
        probs.iter_mut().for_each(|p| *p /= z);
    }
    JointTable::new(n, k, probs)
}

impl JointTable {
    /// Wraps a lexicographic table; entries must be nonnegative and sum to 1.
    pub fn new(n: usize, k: usize, probs: Vec<f64>) -> Result<Self> {
        let expected = checked_pow(k, n).unwrap_or(u128::MAX);
        if probs.len() as u128 != expected {
            return Err(Error::DimensionMismatch {
                expected: expected.min(usize::MAX as u128) as usize,
                found: probs.len(),
            });
        }
        if let Some((idx, &v)) = probs.iter().enumerate().find(|(_, &v)| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::NegativeEntry { row: idx, column: 0, value: v });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("table sums to {total}")));
        }
        Ok(Self { n, k, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: &[usize]) -> f64 {
        self.probs[crate::measure::encode_index(x, self.k)]
    }

    /// Expectation of `f` over the table.
    pub fn expectation<F: Fn(&[usize]) -> f64 + Sync>(&self, f: F) -> f64 {
        let mut xs = vec![0; self.n];
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(idx, &p)| {
                decode_index(idx, self.k, self.n, &mut xs);
                p * f(&xs)
            })
            .sum()
    }

    fn stride(&self, pos: usize) -> usize {
        self.k.pow((self.n - pos) as u32)
    }

    /// Law of the coordinates `targets` (1-based, distinct, in the given
    /// order) given `X_p = s` for each `(p, s)` in `condition`.
    pub fn conditional_law(&self, condition: &[(usize, usize)], targets: &[usize]) -> Result<Vec<f64>> {
        for &(p, s) in condition {
            if p == 0 || p > self.n {
                return Err(Error::BadIndex(format!("position {p} outside 1..={}", self.n)));
            }
            if s >= self.k {
                return Err(Error::SymbolOutOfRange { symbol: s, size: self.k });
            }
        }
        for (a, &p) in targets.iter().enumerate() {
            if p == 0 || p > self.n || targets[..a].contains(&p) {
                return Err(Error::BadIndex(format!("invalid target position {p}")));
            }
        }
        let out_len = self.k.pow(targets.len() as u32);
        let mut out = vec![0.0; out_len];
        let mut xs = vec![0; self.n];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            decode_index(idx, self.k, self.n, &mut xs);
            if condition.iter().any(|&(pos, s)| xs[pos - 1] != s) {
                continue;
            }
            let slot = targets.iter().fold(0, |acc, &t| acc * self.k + xs[t - 1]);
            out[slot] += p;
        }
        let mass: f64 = out.iter().sum();
        if mass <= CONDITION_TOL {
            return Err(Error::ZeroProbabilityCondition(mass));
        }
        out.iter_mut().for_each(|v| *v /= mass);
        Ok(out)
    }
}

/// `η̄ᵢⱼ` for every `j` in `i+1..=n`, returned in order of `j`.
pub fn exact_eta_row(table: &JointTable, i: usize) -> Result<Vec<ExactEta>> {
    let (n, k) = (table.n, table.k);
    if i == 0 || i >= n {
        return Err(Error::BadIndex(format!("row {i} outside 1..{n}")));
    }
    let block = table.stride(i);
    let prefixes = k.pow((i - 1) as u32);
    let width = n - i;
    let identity = || (vec![0.0f64; width], 0u64, 0u64);
    let (best, adm, exc) = (0..prefixes)
        .into_par_iter()
        .map(|y| {
            let base = y * k * block;
            let mass: Vec<f64> =
                (0..k).map(|w| table.probs[base + w * block..base + (w + 1) * block].iter().sum()).collect();
            let live: Vec<bool> = mass.iter().map(|&m| m > CONDITION_TOL).collect();
            let live_pairs =
                (0..k).flat_map(|w| (w + 1..k).map(move |w2| (w, w2))).filter(|&(w, w2)| live[w] && live[w2]).count()
                    as u64;
            let total_pairs = (k * (k - 1) / 2) as u64;
            let mut best = vec![0.0f64; width];
            if live_pairs > 0 {
                // laws of X_{i+1..n} per w, then marginalize the leading coordinate
                let mut laws: Vec<Vec<f64>> = (0..k)
                    .map(|w| {
                        if !live[w] {
                            return Vec::new();
                        }
                        let s = &table.probs[base + w * block..base + (w + 1) * block];
                        s.iter().map(|p| p / mass[w]).collect()
                    })
                    .collect();
                for slot in best.iter_mut() {
                    for w in 0..k {
                        for w2 in (w + 1)..k {
                            if live[w] && live[w2] {
                                let d: Vec<f64> = laws[w].iter().zip(&laws[w2]).map(|(a, b)| a - b).collect();
                                *slot = slot.max(tv_norm(&d));
                            }
                        }
                    }
                    for law in laws.iter_mut().filter(|l| !l.is_empty()) {
                        let len = law.len() / k;
                        let next: Vec<f64> = (0..len).map(|r| (0..k).map(|a| law[a * len + r]).sum()).collect();
                        *law = next;
                    }
                }
            }
            (best, live_pairs, total_pairs - live_pairs)
        })
        .reduce(identity, |(mut b1, a1, e1), (b2, a2, e2)| {
            b1.iter_mut().zip(&b2).for_each(|(x, y)| *x = x.max(*y));
            (b1, a1 + a2, e1 + e2)
        });
    Ok(best.into_iter().map(|v| ExactEta { value: v.min(1.0), admissible: adm, excluded: exc }).collect())
}

/// Exact `η̄ᵢⱼ` from the definition.
pub fn exact_eta(table: &JointTable, i: usize, j: usize) -> Result<ExactEta> {
    if i == 0 || i >= j || j > table.n {
        return Err(Error::BadIndex(format!("pair ({i}, {j}) must satisfy 1 <= i < j <= {}", table.n)));
    }
    Ok(exact_eta_row(table, i)?[j - i - 1])
}

/// All exact `η̄ᵢⱼ`, with the per-row statistics.
pub fn exact_eta_matrix(table: &JointTable) -> Result<(EtaMatrix, Vec<ExactEta>)> {
    let n = table.n;
    let mut m = EtaMatrix::zeros(n);
    let mut stats = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let row = exact_eta_row(table, i)?;
        for (off, e) in row.iter().enumerate() {
            m.set(i, i + 1 + off, e.value, Provenance::Exact)?;
        }
        stats.push(row[0]);
    }
    Ok((m, stats))
}
