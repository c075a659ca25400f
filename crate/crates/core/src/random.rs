//! Seeded random specs for property tests and self-verification.
//!
//! Generated laws have every weight at least `floor / k`, so every
//! conditioning event has positive probability unless `floor` is 0.

use std::sync::Arc;

use rand::Rng;

use crate::chain::ChainSpec;
use crate::contraction::Kernel;
use crate::measure::{Alphabet, ProbVec};
use crate::mmp::MmpSpec;
use crate::tree::{analyze_topology, TreeSpec};
use crate::undirected::{Potential, UndirectedChainSpec};

/// A random law on `k` symbols mixing uniform noise with a `floor` share of
/// the uniform law.
pub fn prob_vec<R: Rng + ?Sized>(rng: &mut R, k: usize, floor: f64) -> ProbVec {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    let w = raw.into_iter().map(|x| (1.0 - floor) * x / s + floor / k as f64).collect();
    ProbVec::normalized(w).expect("positive weights")
}

pub fn kernel<R: Rng + ?Sized>(rng: &mut R, k: usize, floor: f64) -> Kernel {
    let cols: Vec<Vec<f64>> = (0..k).map(|_| prob_vec(rng, k, floor).weights().to_vec()).collect();
    Kernel::from_conditionals(&cols).expect("stochastic columns")
}

pub fn chain<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, floor: f64) -> ChainSpec {
    let kernels = (1..n).map(|_| Arc::new(kernel(rng, k, floor))).collect();
    ChainSpec::new(Alphabet::indexed(k).expect("k >= 1"), prob_vec(rng, k, floor), kernels).expect("consistent sizes")
}

/// Potentials with entries in `[lo, 1]`.
pub fn undirected<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, lo: f64) -> UndirectedChainSpec {
    let potentials = (1..n)
        .map(|_| {
            let data = (0..k * k).map(|_| lo + (1.0 - lo) * rng.gen::<f64>()).collect();
            Arc::new(Potential::new(k, data).expect("positive entries"))
        })
        .collect();
    UndirectedChainSpec::new(Alphabet::indexed(k).expect("k >= 1"), potentials).expect("nondegenerate")
}

/// Random recursive tree (each node picks an earlier parent), renumbered
/// breadth-first.
pub fn tree<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, floor: f64) -> TreeSpec {
    let edges: Vec<(usize, usize)> = (2..=n).map(|v| (rng.gen_range(1..v), v)).collect();
    let topology = analyze_topology(n, &edges).expect("valid tree").topology;
    let edge_kernels = topology.edges().into_iter().map(|e| (e, Arc::new(kernel(rng, k, floor)))).collect();
    TreeSpec::new(topology, Alphabet::indexed(k).expect("k >= 1"), prob_vec(rng, k, floor), edge_kernels)
        .expect("one kernel per edge")
}

pub fn mmp<R: Rng + ?Sized>(rng: &mut R, n: usize, obs: usize, hid: usize, floor: f64) -> MmpSpec {
    let m = obs * hid;
    let kernels = (1..n).map(|_| Arc::new(kernel(rng, m, floor))).collect();
    MmpSpec::new(
        Alphabet::indexed(obs).expect("obs >= 1"),
        Alphabet::indexed(hid).expect("hid >= 1"),
        prob_vec(rng, m, floor),
        kernels,
    )
    .expect("consistent sizes")
}
