//! Markov tree processes.
//!
//! Nodes are numbered `1..=n` in breadth-first order (a node of smaller
//! depth has a smaller index) with the root at 1. The measure is
//!
//! ```text
//! μ(x) = p₀(x₁) Π_{(u,v) ∈ E} p_uv(x_v | x_u)
//! ```
//!
//! Only the subtree `Tᵢ` below `i` matters for `η̄ᵢⱼ`: with `j₀` the first
//! node of `Tᵢ` not preceding `j`, `η̄ᵢⱼ = η̄ᵢⱼ₀`, and `η̄ᵢⱼ = 0` if there is
//! none. Walking the levels of `Tᵢ` from `dep(i)+1` to `dep(j₀)`, each level
//! acts as a tensor product of edge kernels, giving
//!
//! ```text
//! η̄ᵢⱼ ≤ Π_d α{θ_uv : v ∈ Tᵢ ∩ lev(d)} ≤ (1 − (1 − θ)^L)^⌊(j−i)/L⌋
//! ```
//!
//! for `θ ≥ max θ_uv` and `L ≥` width.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::chain::ChainSpec;
use crate::contraction::{alpha, Kernel};
use crate::error::{Error, Result};
use crate::measure::{Alphabet, ProbVec};
use crate::mixing::{EtaMatrix, Provenance};

/// A rooted directed tree on nodes `1..=n`, breadth-first numbered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    // 0-based internally
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
}

/// Nodes grouped by depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelDecomposition {
    /// `levels[d]` lists the (1-based) nodes at depth `d`, ascending.
    pub levels: Vec<Vec<usize>>,
    pub width: usize,
    pub depth: usize,
}

/// Result of [`analyze_topology`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyAnalysis {
    pub topology: TreeTopology,
    pub levels: LevelDecomposition,
    /// `renumbering[old - 1] = new` when the input was not breadth-first.
    pub renumbering: Option<Vec<usize>>,
}

struct RawTree {
    root: usize,
    // children in input edge order, 0-based
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
}

fn validate_structure(n: usize, edges: &[(usize, usize)]) -> Result<RawTree> {
    if n == 0 {
        return Err(Error::Topology("tree must have at least one node".into()));
    }
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    for &(u, v) in edges {
        if u == 0 || v == 0 || u > n || v > n {
            return Err(Error::Topology(format!("edge ({u}, {v}) references a node outside 1..={n}")));
        }
        if u == v {
            return Err(Error::Topology(format!("self-loop at node {u}")));
        }
        if parent[v - 1].is_some() {
            return Err(Error::Topology(format!("node {v} has more than one parent")));
        }
        parent[v - 1] = Some(u - 1);
        children[u - 1].push(v - 1);
    }
    let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
    let root = match roots.as_slice() {
        [r] => *r,
        [] => return Err(Error::Topology("no root: every node has a parent (cycle)".into())),
        _ => {
            return Err(Error::Topology(format!(
                "disconnected: nodes {} have no parent",
                roots.iter().map(|r| (r + 1).to_string()).collect::<Vec<_>>().join(", ")
            )))
        }
    };
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &c in &children[u] {
            if seen[c] {
                return Err(Error::Topology(format!("cycle through node {}", c + 1)));
            }
            seen[c] = true;
            reached += 1;
            queue.push_back(c);
        }
    }
    if reached != n {
        let stray = (0..n).find(|&v| !seen[v]).expect("unreached node");
        return Err(Error::Topology(format!("node {} is not reachable from the root (cycle)", stray + 1)));
    }
    Ok(RawTree { root, children, parent })
}

fn depths(root: usize, children: &[Vec<usize>]) -> Vec<usize> {
    let mut depth = vec![0; children.len()];
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &c in &children[u] {
            depth[c] = depth[u] + 1;
            queue.push_back(c);
        }
    }
    depth
}

impl TreeTopology {
    /// Builds a topology from 1-based `(parent, child)` edges. The numbering
    /// must already be breadth-first with root 1; see [`analyze_topology`]
    /// for inputs that need renumbering.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let raw = validate_structure(n, edges)?;
        if raw.root != 0 {
            return Err(Error::Topology(format!("root is node {}, expected node 1", raw.root + 1)));
        }
        let depth = depths(raw.root, &raw.children);
        if let Some(v) = (1..n).find(|&v| depth[v] < depth[v - 1]) {
            return Err(Error::Topology(format!(
                "numbering is not breadth-first: node {} (depth {}) follows node {} (depth {})",
                v + 1,
                depth[v],
                v,
                depth[v - 1]
            )));
        }
        let mut children = raw.children;
        children.iter_mut().for_each(|c| c.sort_unstable());
        Ok(Self { parent: raw.parent, children, depth })
    }

    /// Path `1 → 2 → ⋯ → n`.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|v| (v, v + 1)).collect();
        Self::new(n, &edges)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent.get(v.wrapping_sub(1)).copied().flatten().map(|p| p + 1)
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.children[v - 1].iter().map(|c| c + 1).collect()
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v - 1]
    }

    /// Edges `(parent, child)` ordered by child.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (2..=self.len()).map(|v| (self.parent(v).expect("non-root"), v)).collect()
    }

    pub fn is_path(&self) -> bool {
        (2..=self.len()).all(|v| self.parent(v) == Some(v - 1))
    }

    pub fn levels(&self) -> LevelDecomposition {
        let depth = self.depth.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); depth + 1];
        for (v, &d) in self.depth.iter().enumerate() {
            levels[d].push(v + 1);
        }
        let width = levels.iter().map(Vec::len).max().unwrap_or(0);
        LevelDecomposition { levels, width, depth }
    }

    pub fn width(&self) -> usize {
        self.levels().width
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v == 0 || v > self.len() {
            return Err(Error::BadIndex(format!("node {v} outside 1..={}", self.len())));
        }
        Ok(())
    }

    /// Membership mask of the subtree `T_i` (0-based positions).
    fn subtree_mask(&self, i: usize) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        let mut stack = vec![i - 1];
        while let Some(u) = stack.pop() {
            mask[u] = true;
            stack.extend(&self.children[u]);
        }
        mask
    }

    /// Nodes of the subtree rooted at `i`, ascending.
    pub fn subtree(&self, i: usize) -> Result<Vec<usize>> {
        self.check_node(i)?;
        Ok(self.subtree_mask(i).into_iter().enumerate().filter_map(|(v, m)| m.then_some(v + 1)).collect())
    }

    /// Smallest node of `T_i` that is `≥ j`, if any.
    pub fn j_zero(&self, i: usize, j: usize) -> Result<Option<usize>> {
        if i == 0 || i >= j || j > self.len() {
            return Err(Error::BadIndex(format!("pair ({i}, {j}) must satisfy 1 <= i < j <= {}", self.len())));
        }
        let mask = self.subtree_mask(i);
        Ok((j - 1..self.len()).find(|&v| mask[v]).map(|v| v + 1))
    }
}

/// Validates a tree given by arbitrary labels `1..=n`, renumbering it in
/// canonical breadth-first order if the input numbering is not already
/// breadth-first with root 1. Canonical order lists levels in ascending
/// depth; within a level, children follow their parents' new indices and,
/// for a shared parent, the input edge order.
pub fn analyze_topology(n: usize, edges: &[(usize, usize)]) -> Result<TopologyAnalysis> {
    let raw = validate_structure(n, edges)?;
    if let Ok(topology) = TreeTopology::new(n, edges) {
        let levels = topology.levels();
        return Ok(TopologyAnalysis { topology, levels, renumbering: None });
    }
    let mut new_index = vec![0usize; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([raw.root]);
    while let Some(u) = queue.pop_front() {
        new_index[u] = order.len() + 1;
        order.push(u);
        queue.extend(&raw.children[u]);
    }
    let renamed: Vec<(usize, usize)> =
        (0..n).filter_map(|v| raw.parent[v].map(|p| (new_index[p], new_index[v]))).collect();
    let topology = TreeTopology::new(n, &renamed)?;
    let levels = topology.levels();
    Ok(TopologyAnalysis { topology, levels, renumbering: Some(new_index) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    topology: TreeTopology,
    alphabet: Alphabet,
    p0: ProbVec,
    // kernels[v - 1] is p_{parent(v), v}; None at the root
    kernels: Vec<Option<Arc<Kernel>>>,
}

impl TreeSpec {
    /// One kernel per edge, keyed by `(parent, child)`.
    pub fn new(
        topology: TreeTopology,
        alphabet: Alphabet,
        p0: ProbVec,
        edge_kernels: Vec<((usize, usize), Arc<Kernel>)>,
    ) -> Result<Self> {
        let k = alphabet.size();
        if p0.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: p0.len() });
        }
        let mut kernels: Vec<Option<Arc<Kernel>>> = vec![None; topology.len()];
        for ((u, v), kern) in edge_kernels {
            if v < 2 || v > topology.len() || topology.parent(v) != Some(u) {
                return Err(Error::Topology(format!("kernel given for ({u}, {v}), which is not an edge")));
            }
            if kern.rows() != k || kern.cols() != k {
                return Err(Error::DimensionMismatch { expected: k, found: kern.rows().max(kern.cols()) });
            }
            if kernels[v - 1].replace(kern).is_some() {
                return Err(Error::Topology(format!("edge ({u}, {v}) has more than one kernel")));
            }
        }
        if let Some(v) = (2..=topology.len()).find(|&v| kernels[v - 1].is_none()) {
            return Err(Error::Topology(format!(
                "edge ({}, {v}) has no kernel",
                topology.parent(v).expect("non-root")
            )));
        }
        Ok(Self { topology, alphabet, p0, kernels })
    }

    /// Path tree with the chain's kernels.
    pub fn from_chain(chain: &ChainSpec) -> Result<Self> {
        let topology = TreeTopology::path(chain.len())?;
        let edges = chain.kernels().iter().enumerate().map(|(t, k)| ((t + 1, t + 2), Arc::clone(k))).collect();
        Self::new(topology, chain.alphabet().clone(), chain.p0().clone(), edges)
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topology
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn p0(&self) -> &ProbVec {
        &self.p0
    }

    pub fn len(&self) -> usize {
        self.topology.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Kernel on the edge entering `v` (`v ≥ 2`).
    pub fn kernel(&self, v: usize) -> Option<&Kernel> {
        self.kernels.get(v.wrapping_sub(1)).and_then(|k| k.as_deref())
    }

    /// Same measure as a chain, when the topology is the path `1 → ⋯ → n`.
    pub fn to_chain(&self) -> Option<ChainSpec> {
        if !self.topology.is_path() {
            return None;
        }
        let kernels = self.kernels.iter().skip(1).map(|k| Arc::clone(k.as_ref().expect("edge"))).collect();
        ChainSpec::new(self.alphabet.clone(), self.p0.clone(), kernels).ok()
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
        for v in 1..self.len() {
            if p == 0.0 {
                break;
            }
            let u = self.topology.parent[v].expect("non-root");
            p *= self.kernels[v].as_ref().expect("edge").get(x[v], x[u]);
        }
        p
    }

    /// `θ_uv` for the edge entering `v`.
    pub fn edge_theta(&self, v: usize) -> Result<f64> {
        self.kernel(v)
            .map(Kernel::doeblin_coefficient)
            .ok_or_else(|| Error::BadIndex(format!("node {v} has no incoming edge")))
    }

    /// `θ_uv` for every edge, indexed by child `2..=n` (entry 0 is 0).
    pub fn edge_thetas(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.as_ref().map_or(0.0, |k| k.doeblin_coefficient())).collect()
    }

    pub fn theta_max(&self) -> f64 {
        self.edge_thetas().into_iter().fold(0.0, f64::max)
    }

    pub fn width(&self) -> usize {
        self.topology.width()
    }

    /// Marginal law at every node.
    pub fn marginals(&self) -> Vec<ProbVec> {
        let n = self.len();
        let mut laws: Vec<Vec<f64>> = vec![Vec::new(); n];
        laws[0] = self.p0.weights().to_vec();
        for v in 1..n {
            let u = self.topology.parent[v].expect("non-root");
            laws[v] = self.kernels[v].as_ref().expect("edge").apply_unchecked(&laws[u]);
        }
        laws.into_iter().map(|w| ProbVec::normalized(w).expect("propagated law")).collect()
    }

    /// Level-product bound `Π_{d=dep(i)+1}^{dep(j₀)} α{θ_uv : v ∈ Tᵢ ∩ lev(d)}`,
    /// or 0 when `j₀` does not exist.
    pub fn eta_bound_levels(&self, i: usize, j: usize) -> Result<f64> {
        let Some(j0) = self.topology.j_zero(i, j)? else {
            return Ok(0.0);
        };
        let mask = self.topology.subtree_mask(i);
        let thetas = self.edge_thetas();
        let (d_lo, d_hi) = (self.topology.depth(i) + 1, self.topology.depth(j0));
        let mut per_level: Vec<Vec<f64>> = vec![Vec::new(); d_hi + 1 - d_lo.min(d_hi + 1)];
        for v in 0..self.len() {
            let d = self.topology.depth[v];
            if mask[v] && d >= d_lo && d <= d_hi {
                per_level[d - d_lo].push(thetas[v]);
            }
        }
        per_level.iter().map(|xs| alpha(xs)).product()
    }

    /// `(1 − (1 − θ)^L)^⌊(j−i)/L⌋` with `θ ≥ max θ_uv` and `L ≥` width.
    pub fn eta_bound_simple(&self, i: usize, j: usize, theta: f64, width: usize) -> Result<f64> {
        if i == 0 || i >= j || j > self.len() {
            return Err(Error::BadIndex(format!("pair ({i}, {j}) must satisfy 1 <= i < j <= {}", self.len())));
        }
        if theta + 1e-15 < self.theta_max() {
            return Err(Error::OutOfRange { what: "theta below the largest edge coefficient", value: theta });
        }
        if width < self.width() {
            return Err(Error::OutOfRange { what: "L below the tree width", value: width as f64 });
        }
        simple_bound(theta, width, j - i)
    }

    /// [`TreeSpec::eta_bound_simple`] with `θ = max θ_uv` and `L =` width.
    pub fn eta_bound_simple_default(&self, i: usize, j: usize) -> Result<f64> {
        self.eta_bound_simple(i, j, self.theta_max(), self.width())
    }

    pub fn eta_bound_matrix(&self) -> Result<EtaMatrix> {
        let n = self.len();
        let mut m = EtaMatrix::zeros(n);
        for i in 1..n {
            for j in (i + 1)..=n {
                m.set(i, j, self.eta_bound_levels(i, j)?, Provenance::Bound)?;
            }
        }
        Ok(m)
    }

    /// Level sizes and the largest edge coefficient entering each level,
    /// both indexed by depth (entry 0 of the coefficients is 0).
    pub fn level_profile(&self) -> (Vec<usize>, Vec<f64>) {
        let levels = self.topology.levels();
        let thetas = self.edge_thetas();
        let sizes = levels.levels.iter().map(Vec::len).collect();
        let maxima = levels.levels.iter().map(|lv| lv.iter().map(|&v| thetas[v - 1]).fold(0.0, f64::max)).collect();
        (sizes, maxima)
    }
}

/// `(1 − (1 − θ)^L)^⌊gap/L⌋`.
pub fn simple_bound(theta: f64, width: usize, gap: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::OutOfRange { what: "theta", value: theta });
    }
    if width == 0 {
        return Err(Error::OutOfRange { what: "L", value: 0.0 });
    }
    let base = 1.0 - (1.0 - theta).powi(width as i32);
    Ok(base.powi((gap / width) as i32))
}

/// `θ̃ = (1 − (1 − θ)^L)^{1/(2L−1)}`.
pub fn theta_tilde(theta: f64, width: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::OutOfRange { what: "theta", value: theta });
    }
    if width == 0 {
        return Err(Error::OutOfRange { what: "L", value: 0.0 });
    }
    let base = 1.0 - (1.0 - theta).powi(width as i32);
    Ok(base.powf(1.0 / (2 * width - 1) as f64))
}

/// Dimension-free bound `‖Δ‖ ≤ L − 1 + 1/(1 − θ̃)`.
pub fn tree_delta_bound(theta: f64, width: usize) -> Result<f64> {
    let tt = theta_tilde(theta, width)?;
    Ok(width as f64 - 1.0 + 1.0 / (1.0 - tt))
}

/// Bound for trees whose levels grow at most linearly, `|I_d| ≤ c·d`:
///
/// ```text
/// η̄ᵢⱼ ≤ β^{√(2(j−i)/c) − dᵢ − 1}     whenever c·d·θ_d ≤ β for every level d ≥ 1
/// ```
///
/// `level_sizes` and `level_thetas` are indexed by depth (entry 0, the
/// root level, is exempt). The result is clamped to `[0, 1]`.
pub fn linear_growth_eta_bound(
    level_sizes: &[usize],
    level_thetas: &[f64],
    c: f64,
    beta: f64,
    depth_i: usize,
    gap: usize,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::OutOfRange { what: "c", value: c });
    }
    if !(beta >= 0.0) {
        return Err(Error::OutOfRange { what: "beta", value: beta });
    }
    for (d, &size) in level_sizes.iter().enumerate().skip(1) {
        if size as f64 > c * d as f64 {
            return Err(Error::Premise {
                level: d,
                detail: format!("level size {size} exceeds c*d = {}", c * d as f64),
            });
        }
    }
    for (d, &theta) in level_thetas.iter().enumerate().skip(1) {
        if c * d as f64 * theta > beta + 1e-15 {
            return Err(Error::Premise {
                level: d,
                detail: format!("c*d*theta = {} exceeds beta = {beta}", c * d as f64 * theta),
            });
        }
    }
    let exponent = (2.0 * gap as f64 / c).sqrt() - depth_i as f64 - 1.0;
    if exponent <= 0.0 {
        return Ok(1.0);
    }
    Ok(beta.powf(exponent).min(1.0))
}
