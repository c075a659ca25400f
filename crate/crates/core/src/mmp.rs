//! Markov marginal processes.
//!
//! A Markov chain `μ` on pairs `(observed, hidden)` induces a measure `ρ` on
//! observed sequences by summing out the hidden coordinates. Pair symbols are
//! flattened observed-major: `pair = obs · |H| + hid`.
//!
//! The coefficient `θᵢ` is the Doeblin coefficient of the pair kernel `Kᵢ`,
//! and `η̄ᵢⱼ(ρ) ≤ θᵢ ⋯ θ_{j−1}`. The proof writes the conditional difference
//! at position `i + 1` as a difference `h` of two mixtures of columns of `Kᵢ`,
//! weighted by the filtering laws of the hidden state at `i`;
//! [`MmpSpec::h_vector`] builds that vector explicitly.

use std::sync::Arc;

use crate::chain::ChainSpec;
use crate::contraction::Kernel;
use crate::error::{Error, Result};
use crate::measure::{checked_pow, decode_index, tv_norm, Alphabet, ProbVec};
use crate::mixing::{EtaMatrix, Provenance};

/// Prefixes below this probability are treated as impossible.
pub const PREFIX_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct MmpSpec {
    obs: Alphabet,
    hid: Alphabet,
    p0: ProbVec,
    kernels: Vec<Arc<Kernel>>,
}

/// Outcome of [`MmpSpec::h_check`] at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HCheck {
    pub position: usize,
    pub theta: f64,
    /// Largest `‖h‖` over admissible `(prefix, w, w')`.
    pub max_tv: f64,
    pub admissible: usize,
    pub excluded: usize,
}

impl MmpSpec {
    pub fn new(obs: Alphabet, hid: Alphabet, p0: ProbVec, kernels: Vec<Arc<Kernel>>) -> Result<Self> {
        obs.product(&hid)?;
        let m = obs.size() * hid.size();
        if p0.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: p0.len() });
        }
        for kern in &kernels {
            if kern.rows() != m || kern.cols() != m {
                return Err(Error::DimensionMismatch { expected: m, found: kern.rows().max(kern.cols()) });
            }
        }
        Ok(Self { obs, hid, p0, kernels })
    }

    pub fn obs_alphabet(&self) -> &Alphabet {
        &self.obs
    }

    pub fn hid_alphabet(&self) -> &Alphabet {
        &self.hid
    }

    pub fn p0(&self) -> &ProbVec {
        &self.p0
    }

    pub fn kernels(&self) -> &[Arc<Kernel>] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pair_index(&self, obs: usize, hid: usize) -> usize {
        obs * self.hid.size() + hid
    }

    /// The underlying chain on the pair alphabet.
    pub fn pair_chain(&self) -> ChainSpec {
        let pairs = self.obs.product(&self.hid).expect("checked at construction");
        ChainSpec::new(pairs, self.p0.clone(), self.kernels.clone()).expect("dimensions checked at construction")
    }

    /// The observed process as a plain chain, when the hidden space is trivial.
    pub fn to_chain(&self) -> Option<ChainSpec> {
        (self.hid.size() == 1).then(|| {
            ChainSpec::new(self.obs.clone(), self.p0.clone(), self.kernels.clone())
                .expect("dimensions checked at construction")
        })
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == 0 || i >= j || j > self.len() {
            return Err(Error::BadIndex(format!("pair ({i}, {j}) must satisfy 1 <= i < j <= {}", self.len())));
        }
        Ok(())
    }

    fn check_observed(&self, xo: &[usize]) -> Result<()> {
        let k = self.obs.size();
        match xo.iter().find(|&&s| s >= k) {
            Some(&s) => Err(Error::SymbolOutOfRange { symbol: s, size: k }),
            None => Ok(()),
        }
    }

    /// Unnormalized forward weights over the hidden state after observing
    /// `xo` (any length `1..=n`). Their sum is `ρ(X₁…X_m = xo)`.
    pub fn forward(&self, xo: &[usize]) -> Result<Vec<f64>> {
        if xo.is_empty() || xo.len() > self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: xo.len() });
        }
        self.check_observed(xo)?;
        let h = self.hid.size();
        let mut w: Vec<f64> = (0..h).map(|v| self.p0[self.pair_index(xo[0], v)]).collect();
        for (t, pair) in xo.windows(2).enumerate() {
            let kern = &self.kernels[t];
            let mut next = vec![0.0; h];
            for (v2, slot) in next.iter_mut().enumerate() {
                let row = self.pair_index(pair[1], v2);
                *slot = (0..h).map(|v| kern.get(row, self.pair_index(pair[0], v)) * w[v]).sum();
            }
            let total: f64 = next.iter().sum();
            if total > 0.0 && total < f64::MIN_POSITIVE {
                return Err(Error::Underflow(t + 2));
            }
            w = next;
        }
        Ok(w)
    }

    /// `ρ(xo)` by the forward recursion.
    pub fn density(&self, xo: &[usize]) -> Result<f64> {
        if xo.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: xo.len() });
        }
        Ok(self.forward(xo)?.iter().sum())
    }

    /// `θᵢ`, the Doeblin coefficient of `Kᵢ` over all pair columns.
    pub fn theta(&self, i: usize) -> Result<f64> {
        if i == 0 || i >= self.len() {
            return Err(Error::BadIndex(format!("position {i} outside 1..{}", self.len())));
        }
        Ok(self.kernels[i - 1].doeblin_coefficient())
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.doeblin_coefficient()).collect()
    }

    /// `θᵢ ⋯ θ_{j−1}`, an upper bound on `η̄ᵢⱼ` of the observed process.
    pub fn eta_bound(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(self.kernels[i - 1..j - 1].iter().map(|k| k.doeblin_coefficient()).product())
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

    /// Marginal law of each observed coordinate.
    pub fn marginals(&self) -> Vec<ProbVec> {
        let h = self.hid.size();
        self.pair_chain()
            .marginals()
            .into_iter()
            .map(|law| law.merge_blocks(h).expect("pair alphabet is obs x hid"))
            .collect()
    }

    /// The vector `h` on pairs at position `i + 1`:
    ///
    /// ```text
    /// h(u) = Σ_v a_v Kᵢ(u | (w, v)) − Σ_v a'_v Kᵢ(u | (w', v))
    /// ```
    ///
    /// with `a`, `a'` the filtering laws of the hidden state at `i` given the
    /// observed prefix followed by `w` and `w'`. `None` when either
    /// conditioning event has probability at most [`PREFIX_TOL`].
    pub fn h_vector(&self, i: usize, prefix: &[usize], w: usize, w2: usize) -> Result<Option<Vec<f64>>> {
        if i == 0 || i >= self.len() {
            return Err(Error::BadIndex(format!("position {i} outside 1..{}", self.len())));
        }
        if prefix.len() != i - 1 {
            return Err(Error::LengthMismatch { expected: i - 1, found: prefix.len() });
        }
        let filter = |last: usize| -> Result<Option<Vec<f64>>> {
            let mut seq = prefix.to_vec();
            seq.push(last);
            let f = self.forward(&seq)?;
            let p: f64 = f.iter().sum();
            Ok((p > PREFIX_TOL).then(|| f.into_iter().map(|x| x / p).collect()))
        };
        let (Some(a), Some(a2)) = (filter(w)?, filter(w2)?) else {
            return Ok(None);
        };
        let kern = &self.kernels[i - 1];
        let m = kern.rows();
        let h = (0..m)
            .map(|u| {
                let lhs: f64 = a.iter().enumerate().map(|(v, &av)| av * kern.get(u, self.pair_index(w, v))).sum();
                let rhs: f64 = a2.iter().enumerate().map(|(v, &av)| av * kern.get(u, self.pair_index(w2, v))).sum();
                lhs - rhs
            })
            .collect();
        Ok(Some(h))
    }

    /// Largest `‖h‖` over every observed prefix of length `i − 1` and pair
    /// `w < w'`, to be compared against `θᵢ`. Guarded by `cap` on the number
    /// of prefixes.
    pub fn h_check(&self, i: usize, cap: u128) -> Result<HCheck> {
        let theta = self.theta(i)?;
        let k = self.obs.size();
        let count = checked_pow(k, i - 1)
            .filter(|&c| c <= cap)
            .ok_or(Error::CapExceeded { required: checked_pow(k, i - 1).unwrap_or(u128::MAX), cap })?;
        let mut prefix = vec![0; i - 1];
        let mut out = HCheck { position: i, theta, max_tv: 0.0, admissible: 0, excluded: 0 };
        for idx in 0..count as usize {
            decode_index(idx, k, i - 1, &mut prefix);
            for w in 0..k {
                for w2 in (w + 1)..k {
                    match self.h_vector(i, &prefix, w, w2)? {
                        Some(h) => {
                            out.admissible += 1;
                            out.max_tv = out.max_tv.max(tv_norm(&h));
                        }
                        None => out.excluded += 1,
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::encode_index;

    fn kernel(rows: &[[f64; 4]; 4]) -> Arc<Kernel> {
        Arc::new(Kernel::from_conditionals(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap())
    }

    fn sample_spec() -> MmpSpec {
        let k1 =
            kernel(&[[0.5, 0.2, 0.2, 0.1], [0.1, 0.6, 0.1, 0.2], [0.25, 0.25, 0.25, 0.25], [0.05, 0.15, 0.3, 0.5]]);
        let k2 = kernel(&[[0.7, 0.1, 0.1, 0.1], [0.2, 0.2, 0.5, 0.1], [0.3, 0.3, 0.2, 0.2], [0.1, 0.4, 0.4, 0.1]]);
        MmpSpec::new(
            Alphabet::indexed(2).unwrap(),
            Alphabet::indexed(2).unwrap(),
            ProbVec::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            vec![k1, k2.clone(), k2],
        )
        .unwrap()
    }

    fn hidden_path_sum(spec: &MmpSpec, xo: &[usize]) -> f64 {
        let n = xo.len();
        let pair = spec.pair_chain();
        let mut hs = vec![0; n];
        (0..1usize << n)
            .map(|idx| {
                decode_index(idx, 2, n, &mut hs);
                let xs: Vec<usize> = (0..n).map(|t| spec.pair_index(xo[t], hs[t])).collect();
                pair.density(&xs).unwrap()
            })
            .sum()
    }

    #[test]
    fn density_matches_hidden_path_sum() {
        let spec = sample_spec();
        let mut xo = [0; 4];
        let mut total = 0.0;
        for idx in 0..16 {
            decode_index(idx, 2, 4, &mut xo);
            let d = spec.density(&xo).unwrap();
            assert!((d - hidden_path_sum(&spec, &xo)).abs() < 1e-12);
            assert!(d >= 0.0);
            total += d;
        }
        assert!((total - 1.0).abs() < 1e-12);
        assert!(matches!(spec.density(&[0, 1]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(spec.density(&[0, 1, 0, 2]), Err(Error::SymbolOutOfRange { .. })));
    }

    #[test]
    fn theta_is_max_over_column_pairs() {
        let spec = sample_spec();
        let k = &spec.kernels()[0];
        let mut best: f64 = 0.0;
        for a in 0..4 {
            for b in (a + 1)..4 {
                let d: f64 = (0..4).map(|r| (k.get(r, a) - k.get(r, b)).abs()).sum::<f64>() / 2.0;
                best = best.max(d);
            }
        }
        assert_eq!(spec.theta(1).unwrap(), best);
        assert!(spec.theta(4).is_err());
        assert_eq!(spec.eta_bound(2, 3).unwrap(), spec.theta(2).unwrap());
    }

    #[test]
    fn constant_kernel_has_zero_theta() {
        let flat = Arc::new(Kernel::constant(&ProbVec::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(), 4));
        let a = Alphabet::indexed(2).unwrap();
        let spec = MmpSpec::new(a.clone(), a, ProbVec::uniform(4), vec![flat]).unwrap();
        assert_eq!(spec.theta(1).unwrap(), 0.0);
    }

    #[test]
    fn trivial_hidden_space_is_a_chain() {
        let k = Arc::new(Kernel::from_conditionals(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap());
        let spec = MmpSpec::new(
            Alphabet::indexed(2).unwrap(),
            Alphabet::indexed(1).unwrap(),
            ProbVec::new(vec![0.3, 0.7]).unwrap(),
            vec![k.clone(), k],
        )
        .unwrap();
        let chain = spec.to_chain().unwrap();
        let mut xs = [0; 3];
        for idx in 0..8 {
            decode_index(idx, 2, 3, &mut xs);
            assert_eq!(spec.density(&xs).unwrap(), chain.density(&xs).unwrap());
        }
        assert_eq!(spec.thetas(), chain.thetas());
        assert_eq!(spec.eta_bound(1, 3).unwrap(), chain.eta_bound(1, 3).unwrap());
        assert!(sample_spec().to_chain().is_none());
    }

    #[test]
    fn marginals_agree_with_density() {
        let spec = sample_spec();
        let m = spec.marginals();
        let mut xo = [0; 4];
        let mut direct = [0.0; 2];
        for idx in 0..16 {
            decode_index(idx, 2, 4, &mut xo);
            direct[xo[2]] += spec.density(&xo).unwrap();
        }
        assert!((m[2][0] - direct[0]).abs() < 1e-12);
    }

    #[test]
    fn h_vectors_are_balanced_and_contracted() {
        let spec = sample_spec();
        for i in 1..4 {
            let c = spec.h_check(i, 1 << 20).unwrap();
            assert!(c.max_tv <= c.theta + 1e-12, "{c:?}");
            assert_eq!(c.admissible + c.excluded, 1usize << (i - 1));
        }
        let h = spec.h_vector(2, &[1], 0, 1).unwrap().unwrap();
        assert!(h.iter().sum::<f64>().abs() < 1e-12);
        assert!(spec.h_vector(2, &[], 0, 1).is_err());
    }

    #[test]
    fn impossible_prefixes_are_excluded() {
        // observed symbol 1 never occurs at position 1
        let a = Alphabet::indexed(2).unwrap();
        let k = kernel(&[[0.5, 0.2, 0.2, 0.1], [0.1, 0.6, 0.1, 0.2], [0.25, 0.25, 0.25, 0.25], [0.05, 0.15, 0.3, 0.5]]);
        let spec =
            MmpSpec::new(a.clone(), a, ProbVec::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap(), vec![k.clone(), k]).unwrap();
        assert_eq!(spec.h_vector(1, &[], 0, 1).unwrap(), None);
        let c = spec.h_check(2, 16).unwrap();
        assert_eq!((c.admissible, c.excluded), (1, 1));
        assert_eq!(encode_index(&[1, 0], 2), 2);
    }
}
