//! Column-stochastic kernels and the contraction machinery built on them.
//!
//! A [`Kernel`] stores `P(x | y)` at row `x`, column `y`: columns are the
//! conditional laws. Its contraction coefficient is the largest total
//! variation distance between two columns, and it shrinks every balanced
//! signed measure by at least that factor:
//!
//! ```text
//! θ(P) = max_{y,y'} ‖P(·|y) − P(·|y')‖,     ‖Pν‖ ≤ θ(P)‖ν‖  when Σν = 0
//! ```
//!
//! The coefficient is submultiplicative, and for a tensor product of kernels
//! it is bounded by [`alpha`] of the factor coefficients.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::measure::{tv_norm, ProbVec, SignedVec, INPUT_TOL, INTERNAL_TOL};

/// Column-stochastic matrix, `rows × cols`, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Kernel {
    /// Validates entries (finite, nonnegative) and column sums (within
    /// [`INPUT_TOL`] of one). Columns passing the check are renormalized.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        let mut k = Self { rows, cols, data };
        for c in 0..cols {
            let mut sum = 0.0;
            for r in 0..rows {
                let v = k.data[r * cols + c];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: r, column: c, value: v });
                }
                if v < 0.0 {
                    return Err(Error::NegativeEntry { row: r, column: c, value: v });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > INPUT_TOL {
                return Err(Error::NotStochastic { column: c, sum });
            }
            for r in 0..rows {
                k.data[r * cols + c] /= sum;
            }
        }
        Ok(k)
    }

    /// Builds a kernel from its conditional laws: `conditionals[y][x] = P(x | y)`.
    /// This is the row-per-source layout used in spec files.
    pub fn from_conditionals(conditionals: &[Vec<f64>]) -> Result<Self> {
        let cols = conditionals.len();
        let rows = conditionals.first().map_or(0, Vec::len);
        if let Some(bad) = conditionals.iter().position(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch { expected: rows, found: conditionals[bad].len() });
        }
        let mut data = vec![0.0; rows * cols];
        for (c, law) in conditionals.iter().enumerate() {
            for (r, &v) in law.iter().enumerate() {
                data[r * cols + c] = v;
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn identity(size: usize) -> Self {
        let mut data = vec![0.0; size * size];
        for i in 0..size {
            data[i * size + i] = 1.0;
        }
        Self { rows: size, cols: size, data }
    }

    /// Every column equal to `law`.
    pub fn constant(law: &ProbVec, cols: usize) -> Self {
        let rows = law.len();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] = law[r];
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// `P(row | col)`.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn conditional(&self, col: usize) -> ProbVec {
        ProbVec::normalized(self.column(col)).expect("kernel columns are distributions")
    }

    /// Row-per-source layout, the inverse of [`Kernel::from_conditionals`].
    pub fn conditionals(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    /// Half the L1 distance between columns `a` and `b`.
    pub fn column_distance(&self, a: usize, b: usize) -> f64 {
        0.5 * (0..self.rows).map(|r| (self.get(r, a) - self.get(r, b)).abs()).sum::<f64>()
    }

    /// Contraction (Doeblin/Dobrushin) coefficient: the largest total
    /// variation distance between two columns. Always in `[0, 1]`.
    pub fn doeblin_coefficient(&self) -> f64 {
        let mut best: f64 = 0.0;
        for a in 0..self.cols {
            for b in (a + 1)..self.cols {
                best = best.max(self.column_distance(a, b));
            }
        }
        best
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// `self · other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Kernel) -> Result<Kernel> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let (m, n, p) = (self.rows, self.cols, other.cols);
        let mut data = vec![0.0; m * p];
        for i in 0..m {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..p {
                    data[i * p + j] += a * other.data[k * p + j];
                }
            }
        }
        Ok(Kernel { rows: m, cols: p, data })
    }
}

/// Applies `kernel` to `v`. Balanced inputs give balanced outputs.
pub fn contract(kernel: &Kernel, v: &SignedVec) -> Result<SignedVec> {
    kernel.apply(v.values()).map(SignedVec::new)
}

/// Inclusion–exclusion combiner
/// `α(x₁,…,x_{k+1}) = x_{k+1} + (1 − x_{k+1}) α(x₁,…,x_k)`, `α(x) = x`,
/// equal to `1 − Π(1 − xᵢ)`. The empty multiset maps to 0.
///
/// Arguments are evaluated in descending order so the floating-point result
/// does not depend on input order.
pub fn alpha(xs: &[f64]) -> Result<f64> {
    if let Some(&bad) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::OutOfRange { what: "alpha argument", value: bad });
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut iter = sorted.into_iter();
    let Some(first) = iter.next() else {
        return Ok(0.0);
    };
    Ok(iter.fold(first, |acc, x| x + (1.0 - x) * acc))
}

/// Right side of the two-factor tensorization inequality
/// `‖p⊗q − p'⊗q'‖ ≤ ‖p−p'‖ + ‖q−q'‖ − ‖p−p'‖‖q−q'‖`.
pub fn product_tv_bound(dp: f64, dq: f64) -> f64 {
    dp + dq - dp * dq
}

/// A kernel between product spaces `Σ^I → Σ^J`.
///
/// Rows are indexed by configurations of `targets`, columns by
/// configurations of `sources`. Node sets are sorted ascending and a
/// configuration is flattened lexicographically with the smallest node as
/// the most significant digit.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockKernel {
    kernel: Kernel,
    sources: Vec<usize>,
    targets: Vec<usize>,
    alphabet_size: usize,
}

impl BlockKernel {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn doeblin_coefficient(&self) -> f64 {
        self.kernel.doeblin_coefficient()
    }
}

/// Largest block kernel [`block_tensor`] will materialize.
pub const BLOCK_ENTRY_CAP: usize = 1 << 24;

/// Tensor product of square kernels along a bipartite graph `I → J`:
///
/// ```text
/// A[y_J, x_I] = Π_{(i,j) ∈ E} K⁽ⁱʲ⁾(y_j | x_i)
/// ```
///
/// Every target must have exactly one incoming edge, and no node may be both
/// a source and a target.
pub fn block_tensor(edges: &[((usize, usize), &Kernel)]) -> Result<BlockKernel> {
    let Some(((_, _), first)) = edges.first() else {
        return Err(Error::Bipartite("no edges".into()));
    };
    let k = first.rows();
    let mut parent_of: BTreeMap<usize, (usize, &Kernel)> = BTreeMap::new();
    let mut sources: Vec<usize> = Vec::new();
    for &((i, j), kernel) in edges {
        if !kernel.is_square() || kernel.rows() != k {
            return Err(Error::Bipartite(format!(
                "kernel on edge ({i},{j}) is {}x{}, expected {k}x{k}",
                kernel.rows(),
                kernel.cols()
            )));
        }
        if parent_of.insert(j, (i, kernel)).is_some() {
            return Err(Error::Bipartite(format!("target {j} has more than one incoming edge")));
        }
        sources.push(i);
    }
    sources.sort_unstable();
    sources.dedup();
    if let Some(shared) = sources.iter().find(|s| parent_of.contains_key(s)) {
        return Err(Error::Bipartite(format!("node {shared} is both a source and a target")));
    }
    let targets: Vec<usize> = parent_of.keys().copied().collect();

    let rows = k.checked_pow(targets.len() as u32).filter(|r| *r <= BLOCK_ENTRY_CAP);
    let cols = k.checked_pow(sources.len() as u32).filter(|c| *c <= BLOCK_ENTRY_CAP);
    let (Some(rows), Some(cols)) = (rows, cols) else {
        return Err(Error::Bipartite("block kernel too large to materialize".into()));
    };
    if rows.checked_mul(cols).is_none_or(|e| e > BLOCK_ENTRY_CAP) {
        return Err(Error::Bipartite("block kernel too large to materialize".into()));
    }

    // position of each target's parent within the source configuration
    let factors: Vec<(usize, &Kernel)> = targets
        .iter()
        .map(|j| {
            let (i, kern) = parent_of[j];
            (sources.binary_search(&i).expect("source recorded"), kern)
        })
        .collect();

    let mut data = vec![0.0; rows * cols];
    let mut xs = vec![0usize; sources.len()];
    let mut ys = vec![0usize; targets.len()];
    for c in 0..cols {
        crate::measure::decode_index(c, k, sources.len(), &mut xs);
        for r in 0..rows {
            crate::measure::decode_index(r, k, targets.len(), &mut ys);
            data[r * cols + c] = factors.iter().zip(&ys).map(|(&(src, kern), &y)| kern.get(y, xs[src])).product();
        }
    }
    Ok(BlockKernel { kernel: Kernel { rows, cols, data }, sources, targets, alphabet_size: k })
}

/// Checks `‖Kv‖ ≤ θ(K)‖v‖` for a balanced `v`; returns the two sides.
pub fn contraction_sides(kernel: &Kernel, v: &SignedVec) -> Result<(f64, f64)> {
    if !v.is_balanced() {
        return Err(Error::InvalidDistribution("signed measure is not balanced".into()));
    }
    let out = contract(kernel, v)?;
    Ok((tv_norm(out.values()), kernel.doeblin_coefficient() * v.tv_norm() + INTERNAL_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k2() -> Kernel {
        // columns [0.9, 0.1] and [0.2, 0.8]
        Kernel::new(2, 2, vec![0.9, 0.2, 0.1, 0.8]).unwrap()
    }

    #[test]
    fn doeblin_examples() {
        assert_eq!(Kernel::identity(2).doeblin_coefficient(), 1.0);
        let law = ProbVec::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(Kernel::constant(&law, 3).doeblin_coefficient(), 0.0);
        assert!((k2().doeblin_coefficient() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_stochastic_column() {
        let err = Kernel::new(2, 2, vec![0.9, 0.2, 0.08, 0.8]).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { column: 0, .. }));
        let err = Kernel::from_conditionals(&[vec![0.5, 0.5], vec![1.2, -0.2]]).unwrap_err();
        assert!(matches!(err, Error::NegativeEntry { column: 1, .. }));
    }

    #[test]
    fn conditionals_round_trip() {
        let k = Kernel::from_conditionals(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert_eq!(k, k2());
        assert_eq!(k.conditionals(), vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
    }

    #[test]
    fn contract_examples() {
        let v = SignedVec::new(vec![0.3, -0.1, -0.2]);
        assert_eq!(contract(&Kernel::identity(3), &v).unwrap(), v);

        let law = ProbVec::new(vec![0.2, 0.3, 0.5]).unwrap();
        let out = contract(&Kernel::constant(&law, 3), &v).unwrap();
        assert!(out.values().iter().all(|x| x.abs() < 1e-15));

        let out = contract(&k2(), &SignedVec::new(vec![0.5, -0.5])).unwrap();
        assert!((out.values()[0] - 0.35).abs() < 1e-15);
        assert!((out.values()[1] + 0.35).abs() < 1e-15);
        assert!((out.tv_norm() - 0.7 * 0.5).abs() < 1e-15);

        assert!(matches!(contract(&k2(), &SignedVec::new(vec![1.0, 0.0, -1.0])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha(&[]).unwrap(), 0.0);
        assert_eq!(alpha(&[0.42]).unwrap(), 0.42);
        assert!((alpha(&[0.3, 0.5]).unwrap() - 0.65).abs() < 1e-15);
        assert!((alpha(&[0.5; 4]).unwrap() - 0.9375).abs() < 1e-15);
        assert!(alpha(&[0.5, 1.5]).is_err());
        assert!(alpha(&[-0.1]).is_err());
    }

    #[test]
    fn product_tv_bound_examples() {
        assert_eq!(product_tv_bound(0.0, 0.0), 0.0);
        assert_eq!(product_tv_bound(1.0, 0.37), 1.0);
        assert!((product_tv_bound(0.3, 0.5) - 0.65).abs() < 1e-15);
        assert!((product_tv_bound(0.3, 0.5) - alpha(&[0.3, 0.5]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn block_tensor_single_edge_is_the_kernel() {
        let k = k2();
        let b = block_tensor(&[((1, 2), &k)]).unwrap();
        assert_eq!(b.kernel(), &k);
        assert_eq!(b.sources(), &[1]);
        assert_eq!(b.targets(), &[2]);
    }

    #[test]
    fn block_tensor_of_equal_column_kernels_is_constant() {
        let a = Kernel::constant(&ProbVec::new(vec![0.4, 0.6]).unwrap(), 2);
        let b = Kernel::constant(&ProbVec::new(vec![0.1, 0.9]).unwrap(), 2);
        let block = block_tensor(&[((1, 2), &a), ((1, 3), &b)]).unwrap();
        assert_eq!(block.doeblin_coefficient(), 0.0);
    }

    #[test]
    fn block_tensor_respects_alpha_bound() {
        let a = k2(); // 0.7
        let b = Kernel::new(2, 2, vec![0.75, 0.25, 0.25, 0.75]).unwrap(); // 0.5
        assert!((b.doeblin_coefficient() - 0.5).abs() < 1e-15);
        let block = block_tensor(&[((1, 3), &a), ((2, 4), &b)]).unwrap();
        assert_eq!(block.kernel().rows(), 4);
        assert_eq!(block.kernel().cols(), 4);
        // brute force over every column pair of the 4x4 block
        let m = block.kernel();
        let mut best: f64 = 0.0;
        for c1 in 0..4 {
            for c2 in 0..4 {
                let d: f64 = (0..4).map(|r| (m.get(r, c1) - m.get(r, c2)).abs()).sum();
                best = best.max(d / 2.0);
            }
        }
        assert!((best - block.doeblin_coefficient()).abs() < 1e-15);
        assert!(best <= 0.85 + 1e-12);
        // columns sum to one
        for c in 0..4 {
            assert!(((0..4).map(|r| m.get(r, c)).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn block_tensor_layout_is_lexicographic_by_node() {
        let a = k2();
        let id = Kernel::identity(2);
        // sources {1, 2}; target 5 copies node 2, target 7 follows node 1 via a
        let block = block_tensor(&[((2, 5), &id), ((1, 7), &a)]).unwrap();
        let m = block.kernel();
        // column x_I = (x1=1, x2=0) -> index 2; row y_J = (y5=0, y7=1) -> index 1
        assert!((m.get(1, 2) - a.get(1, 1)).abs() < 1e-15);
        assert_eq!(m.get(3, 2), 0.0);
    }

    #[test]
    fn block_tensor_rejects_malformed_graphs() {
        let k = k2();
        assert!(block_tensor(&[]).is_err());
        assert!(block_tensor(&[((1, 3), &k), ((2, 3), &k)]).is_err());
        assert!(block_tensor(&[((1, 2), &k), ((2, 3), &k)]).is_err());
        let big = Kernel::identity(3);
        assert!(block_tensor(&[((1, 2), &k), ((1, 3), &big)]).is_err());
    }

    fn arb_kernel(k: usize) -> impl Strategy<Value = Kernel> {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, k), k).prop_filter_map("degenerate column", |cols| {
            let cols: Option<Vec<Vec<f64>>> =
                cols.into_iter().map(|c| ProbVec::normalized(c).ok().map(|p| p.weights().to_vec())).collect();
            Kernel::from_conditionals(&cols?).ok()
        })
    }

    fn arb_balanced(k: usize) -> impl Strategy<Value = SignedVec> {
        prop::collection::vec(-1.0f64..1.0, k).prop_map(|v| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            SignedVec::new(v.into_iter().map(|x| x - mean).collect())
        })
    }

    proptest! {
        #[test]
        fn contraction_lemma((kern, v) in (1usize..=5).prop_flat_map(|k| (arb_kernel(k), arb_balanced(k)))) {
            let (lhs, rhs) = contraction_sides(&kern, &v).unwrap();
            prop_assert!(lhs <= rhs);
            let out = contract(&kern, &v).unwrap();
            prop_assert!(out.is_balanced());
        }

        #[test]
        fn submultiplicative((a, b) in (1usize..=5).prop_flat_map(|k| (arb_kernel(k), arb_kernel(k)))) {
            let ab = a.compose(&b).unwrap();
            prop_assert!(ab.doeblin_coefficient() <= a.doeblin_coefficient() * b.doeblin_coefficient() + INTERNAL_TOL);
            prop_assert!(a.doeblin_coefficient() <= 1.0 + INTERNAL_TOL);
        }

        #[test]
        fn alpha_closed_form(x in 0.0f64..=1.0, k in 1usize..12) {
            let xs = vec![x; k];
            prop_assert!((alpha(&xs).unwrap() - (1.0 - (1.0 - x).powi(k as i32))).abs() < 1e-12);
        }
    }
}
