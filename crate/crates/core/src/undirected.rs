//! Chain-graph random fields with pairwise potentials.
//!
//! `μ(x) ∝ Π ψᵢ(xᵢ, x_{i+1})` over consecutive positions. Such a field is a
//! Markov chain whose kernels are obtained from backward (suffix) messages
//!
//! ```text
//! βₙ ≡ 1,   βᵢ(y) = Σₓ ψᵢ(y, x) β_{i+1}(x),   pᵢ(x | y) = ψᵢ(y, x) β_{i+1}(x) / βᵢ(y)
//! ```
//!
//! Because `β_{i+1}` does not depend on `y`, the contraction coefficient of
//! `pᵢ` is at most `(Rᵢ − rᵢ)/(Rᵢ + rᵢ)` with `Rᵢ, rᵢ` the extreme entries
//! of `ψᵢ`.

use std::sync::Arc;

use crate::chain::ChainSpec;
use crate::contraction::Kernel;
use crate::error::{Error, Result};
use crate::measure::{Alphabet, ProbVec};

/// A nonnegative `k × k` potential `ψ(a, b)`, row-major in `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    size: usize,
    data: Vec<f64>,
}

impl Potential {
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::DimensionMismatch { expected: size * size, found: data.len() });
        }
        for (idx, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: idx / size, column: idx % size, value: v });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry { row: idx / size, column: idx % size, value: v });
            }
        }
        Ok(Self { size, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != size) {
            return Err(Error::DimensionMismatch { expected: size, found: bad.len() });
        }
        Self::new(size, rows.concat())
    }

    pub fn ones(size: usize) -> Self {
        Self { size, data: vec![1.0; size * size] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.size + b]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.size).map(<[f64]>::to_vec).collect()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UndirectedChainSpec {
    alphabet: Alphabet,
    potentials: Vec<Arc<Potential>>,
}

impl UndirectedChainSpec {
    /// `potentials[t]` couples positions `t + 1` and `t + 2`.
    pub fn new(alphabet: Alphabet, potentials: Vec<Arc<Potential>>) -> Result<Self> {
        let k = alphabet.size();
        for (t, p) in potentials.iter().enumerate() {
            if p.size() != k {
                return Err(Error::DimensionMismatch { expected: k, found: p.size() });
            }
            if p.max() <= 0.0 {
                return Err(Error::DegeneratePotential { index: t + 1 });
            }
        }
        Ok(Self { alphabet, potentials })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn potentials(&self) -> &[Arc<Potential>] {
        &self.potentials
    }

    pub fn len(&self) -> usize {
        self.potentials.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `log Z` by forward transfer-matrix accumulation, rescaled each step.
    pub fn log_partition(&self) -> Result<f64> {
        let k = self.alphabet.size();
        let mut fwd = vec![1.0; k];
        let mut log_scale = 0.0;
        for psi in &self.potentials {
            let mut next = vec![0.0; k];
            for (a, &fa) in fwd.iter().enumerate() {
                if fa == 0.0 {
                    continue;
                }
                for (b, nb) in next.iter_mut().enumerate() {
                    *nb += fa * psi.get(a, b);
                }
            }
            let s: f64 = next.iter().sum();
            if !(s > 0.0) {
                return Err(Error::ZeroPartition);
            }
            log_scale += s.ln();
            fwd = next.into_iter().map(|v| v / s).collect();
        }
        let total: f64 = fwd.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroPartition);
        }
        Ok(log_scale + total.ln())
    }

    /// Unnormalized weight `Π ψ_t(x_t, x_{t+1})`, unchecked.
    pub(crate) fn weight_unchecked(&self, x: &[usize]) -> f64 {
        self.potentials.iter().enumerate().map(|(t, psi)| psi.get(x[t], x[t + 1])).product()
    }

    /// `Π ψ / Z`.
    pub fn density(&self, x: &[usize]) -> Result<f64> {
        if x.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: x.len() });
        }
        let k = self.alphabet.size();
        if let Some(&s) = x.iter().find(|&&s| s >= k) {
            return Err(Error::SymbolOutOfRange { symbol: s, size: k });
        }
        let log_z = self.log_partition()?;
        let mut log_p = -log_z;
        for (t, psi) in self.potentials.iter().enumerate() {
            let v = psi.get(x[t], x[t + 1]);
            if v == 0.0 {
                return Ok(0.0);
            }
            log_p += v.ln();
        }
        Ok(log_p.exp())
    }

    /// Equivalent directed chain. Fails with [`Error::ZeroConditioning`]
    /// when some state `y` at position `i < n` has no continuation of
    /// positive weight.
    pub fn derive_kernels(&self) -> Result<ChainSpec> {
        let k = self.alphabet.size();
        let n = self.len();
        // beta[t] is the (rescaled) suffix message at position t + 1
        let mut beta = vec![vec![1.0; k]; n];
        for t in (0..n - 1).rev() {
            let psi = &self.potentials[t];
            let next = &beta[t + 1];
            let mut cur: Vec<f64> = (0..k).map(|y| (0..k).map(|x| psi.get(y, x) * next[x]).sum()).collect();
            let s: f64 = cur.iter().sum();
            if !(s > 0.0) {
                return Err(Error::ZeroPartition);
            }
            cur.iter_mut().for_each(|v| *v /= s);
            beta[t] = cur;
        }
        let p0 = ProbVec::normalized(beta[0].clone()).map_err(|_| Error::ZeroPartition)?;
        let mut kernels = Vec::with_capacity(n - 1);
        for t in 0..n - 1 {
            let psi = &self.potentials[t];
            let next = &beta[t + 1];
            let mut conditionals = Vec::with_capacity(k);
            for y in 0..k {
                let weights: Vec<f64> = (0..k).map(|x| psi.get(y, x) * next[x]).collect();
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::ZeroConditioning { position: t + 1, symbol: y });
                }
                conditionals.push(weights.into_iter().map(|w| w / total).collect());
            }
            kernels.push(Arc::new(Kernel::from_conditionals(&conditionals)?));
        }
        ChainSpec::new(self.alphabet.clone(), p0, kernels)
    }

    /// `(Rᵢ − rᵢ)/(Rᵢ + rᵢ)` for `1 ≤ i < n`; equals 1 when `rᵢ = 0`.
    pub fn theta_bound(&self, i: usize) -> Result<f64> {
        if i == 0 || i >= self.len() {
            return Err(Error::BadIndex(format!("position {i} outside 1..{}", self.len())));
        }
        potential_theta_bound(&self.potentials[i - 1]).map_err(|_| Error::DegeneratePotential { index: i })
    }

    pub fn theta_bounds(&self) -> Vec<f64> {
        (1..self.len()).map(|i| self.theta_bound(i).expect("validated potential")).collect()
    }
}

/// `(R − r)/(R + r)` for the extreme entries of `psi`.
pub fn potential_theta_bound(psi: &Potential) -> Result<f64> {
    let (big, small) = (psi.max(), psi.min());
    if !(big > 0.0) {
        return Err(Error::DegeneratePotential { index: 0 });
    }
    Ok((big - small) / (big + small))
}

/// Half-L1 distance between the normalized vectors `αγ` and `βγ`, the
/// quantity bounded by `(R − r)/(R + r)` when all entries of `α, β` lie in
/// `[r, R]`.
pub fn ratio_tv(alpha: &[f64], beta: &[f64], gamma: &[f64]) -> f64 {
    let za: f64 = alpha.iter().zip(gamma).map(|(a, g)| a * g).sum();
    let zb: f64 = beta.iter().zip(gamma).map(|(b, g)| b * g).sum();
    0.5 * alpha.iter().zip(beta).zip(gamma).map(|((a, b), g)| (a * g / za - b * g / zb).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::decode_index;
    use proptest::prelude::*;

    fn two_by_two() -> UndirectedChainSpec {
        let psi = Potential::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        UndirectedChainSpec::new(Alphabet::indexed(2).unwrap(), vec![Arc::new(psi)]).unwrap()
    }

    #[test]
    fn density_examples() {
        let ones = Arc::new(Potential::ones(3));
        let flat = UndirectedChainSpec::new(Alphabet::indexed(3).unwrap(), vec![ones; 3]).unwrap();
        assert!((flat.density(&[0, 2, 1, 1]).unwrap() - 3f64.powi(-4)).abs() < 1e-15);

        let s = two_by_two();
        assert!((s.density(&[0, 0]).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        assert!((s.density(&[0, 1]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(s.density(&[0]).is_err());
    }

    #[test]
    fn derived_kernel_examples() {
        let s = two_by_two();
        let c = s.derive_kernels().unwrap();
        let law = c.kernel(1).unwrap().conditional(0);
        assert!((law[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((law[1] - 1.0 / 3.0).abs() < 1e-15);

        let ones = Arc::new(Potential::ones(3));
        let flat =
            UndirectedChainSpec::new(Alphabet::indexed(3).unwrap(), vec![ones; 2]).unwrap().derive_kernels().unwrap();
        for kern in flat.kernels() {
            for y in 0..3 {
                for x in 0..3 {
                    assert!((kern.get(x, y) - 1.0 / 3.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn theta_bound_examples() {
        let flat = UndirectedChainSpec::new(
            Alphabet::indexed(2).unwrap(),
            vec![Arc::new(Potential::new(2, vec![0.3; 4]).unwrap())],
        )
        .unwrap();
        assert_eq!(flat.theta_bound(1).unwrap(), 0.0);
        assert!((two_by_two().theta_bound(1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(two_by_two().theta_bound(2).is_err());

        let sparse = Potential::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(potential_theta_bound(&sparse).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let zero = Potential::new(2, vec![0.0; 4]).unwrap();
        assert!(matches!(
            UndirectedChainSpec::new(Alphabet::indexed(2).unwrap(), vec![Arc::new(zero)]),
            Err(Error::DegeneratePotential { index: 1 })
        ));
        assert!(Potential::new(2, vec![1.0, -1.0, 1.0, 1.0]).is_err());

        // state 1 at position 1 has no continuation
        let dead = Potential::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let s = UndirectedChainSpec::new(Alphabet::indexed(2).unwrap(), vec![Arc::new(dead)]).unwrap();
        assert!(matches!(s.derive_kernels(), Err(Error::ZeroConditioning { position: 1, symbol: 1 })));

        // incompatible consecutive potentials: nothing survives
        let a = Potential::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = Potential::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let s = UndirectedChainSpec::new(Alphabet::indexed(2).unwrap(), vec![Arc::new(a), Arc::new(b)]).unwrap();
        assert!(matches!(s.density(&[0, 0, 0]), Err(Error::ZeroPartition)));
    }

    fn arb_spec() -> impl Strategy<Value = UndirectedChainSpec> {
        (2usize..=3, 2usize..=5).prop_flat_map(|(k, n)| {
            prop::collection::vec(prop::collection::vec(0.05f64..5.0, k * k), n - 1).prop_map(move |ps| {
                let potentials = ps.into_iter().map(|d| Arc::new(Potential::new(k, d).unwrap())).collect();
                UndirectedChainSpec::new(Alphabet::indexed(k).unwrap(), potentials).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn derived_chain_reproduces_field(spec in arb_spec()) {
            let chain = spec.derive_kernels().unwrap();
            let (k, n) = (spec.alphabet().size(), spec.len());
            let mut xs = vec![0; n];
            let mut total = 0.0;
            // oracle: Z by enumeration
            let unnorm = |x: &[usize]| -> f64 {
                spec.potentials().iter().enumerate().map(|(t, p)| p.get(x[t], x[t + 1])).product()
            };
            let states = k.pow(n as u32);
            let z: f64 = (0..states).map(|i| { decode_index(i, k, n, &mut xs); unnorm(&xs) }).sum();
            for i in 0..states {
                decode_index(i, k, n, &mut xs);
                let field = spec.density(&xs).unwrap();
                prop_assert!((field - unnorm(&xs) / z).abs() < 1e-12);
                prop_assert!((chain.density(&xs).unwrap() - field).abs() < 1e-12);
                total += field;
            }
            prop_assert!((total - 1.0).abs() < 1e-9);
            for i in 1..n {
                prop_assert!(chain.theta(i).unwrap() <= spec.theta_bound(i).unwrap() + 1e-12);
            }
        }

        #[test]
        fn ratio_lemma(
            (r, width, k) in (0.0f64..2.0, 0.0f64..3.0, 2usize..6),
            seed in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.01f64..10.0), 6),
        ) {
            let big = r + width;
            let a: Vec<f64> = seed.iter().take(k).map(|s| r + s.0 * width).collect();
            let b: Vec<f64> = seed.iter().take(k).map(|s| r + s.1 * width).collect();
            let g: Vec<f64> = seed.iter().take(k).map(|s| s.2).collect();
            prop_assume!(big > 0.0);
            prop_assume!(a.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>() > 0.0);
            prop_assume!(b.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>() > 0.0);
            prop_assert!(ratio_tv(&a, &b, &g) <= (big - r) / (big + r) + 1e-12);
        }
    }
}
