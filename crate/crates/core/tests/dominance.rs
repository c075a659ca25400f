//! Exact coefficients from enumeration never exceed the family bounds.

use mixbound::measure::decode_index;
use mixbound::oracle::{enumerate, exact_eta, exact_eta_matrix, DEFAULT_STATE_CAP};
use mixbound::random;
use mixbound::tree::{linear_growth_eta_bound, TreeSpec, TreeTopology};
use mixbound::{Alphabet, Kernel, ProbVec, ProcessSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

const TOL: f64 = 1e-12;

#[test]
fn chain_exact_matches_oracle_and_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..40 {
        let n = rng.gen_range(2..=6);
        let k = rng.gen_range(2..=3);
        let c = random::chain(&mut rng, n, k, 0.05);
        let table = enumerate(&c.clone().into(), DEFAULT_STATE_CAP).unwrap();
        let (oracle, _) = exact_eta_matrix(&table).unwrap();
        for (i, j, v) in oracle.iter() {
            assert!(v <= c.eta_bound(i, j).unwrap() + TOL);
            assert!((v - c.eta_exact(i, j).unwrap()).abs() < 1e-10);
        }
    }
}

#[test]
fn oracle_is_monotone_along_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let c = random::chain(&mut rng, 6, 3, 0.05);
        let table = enumerate(&c.into(), DEFAULT_STATE_CAP).unwrap();
        let (m, _) = exact_eta_matrix(&table).unwrap();
        for i in 1..5 {
            for j in (i + 1)..6 {
                assert!(m.get(i, j + 1) <= m.get(i, j) + TOL);
            }
        }
    }
}

#[test]
fn binary_chains_are_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let c = random::chain(&mut rng, 6, 2, 0.0);
        for i in 1..6 {
            for j in (i + 1)..=6 {
                assert!((c.eta_exact(i, j).unwrap() - c.eta_bound(i, j).unwrap()).abs() < TOL);
            }
        }
    }
}

#[test]
fn undirected_chain_is_dominated() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let n = rng.gen_range(2..=5);
        let k = rng.gen_range(2..=4);
        let u = random::undirected(&mut rng, n, k, 0.05);
        let derived = u.derive_kernels().unwrap();
        for (i, theta) in derived.thetas().into_iter().enumerate() {
            assert!(theta <= u.theta_bound(i + 1).unwrap() + TOL);
        }
        let field = enumerate(&u.clone().into(), DEFAULT_STATE_CAP).unwrap();
        let chain = enumerate(&derived.clone().into(), DEFAULT_STATE_CAP).unwrap();
        let tv: f64 = field.probs().iter().zip(chain.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv < 1e-10);
        for i in 1..n {
            for j in (i + 1)..=n {
                let bound: f64 = (i..j).map(|t| u.theta_bound(t).unwrap()).product();
                assert!(exact_eta(&field, i, j).unwrap().value <= bound + TOL);
            }
        }
    }
}

#[test]
fn tree_bounds_form_a_hierarchy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let n = rng.gen_range(2..=7);
        let k = rng.gen_range(2..=3);
        let t = random::tree(&mut rng, n, k, 0.05);
        let table = enumerate(&t.clone().into(), DEFAULT_STATE_CAP).unwrap();
        let (oracle, _) = exact_eta_matrix(&table).unwrap();
        for (i, j, v) in oracle.iter() {
            let level = t.eta_bound_levels(i, j).unwrap();
            let simple = t.eta_bound_simple_default(i, j).unwrap();
            assert!(v <= level + TOL, "oracle {v} > level {level} at ({i},{j})");
            assert!(level <= simple + TOL, "level {level} > simple {simple} at ({i},{j})");
            if t.topology().j_zero(i, j).unwrap().is_none() {
                assert!(v < TOL);
            }
        }
    }
}

#[test]
fn path_tree_reproduces_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let c = random::chain(&mut rng, 5, 3, 0.05);
        let t = TreeSpec::from_chain(&c).unwrap();
        let a = enumerate(&c.clone().into(), DEFAULT_STATE_CAP).unwrap();
        let b = enumerate(&t.clone().into(), DEFAULT_STATE_CAP).unwrap();
        assert_eq!(a, b);
        assert_eq!(t.eta_bound_matrix().unwrap(), c.eta_bound_matrix());
    }
}

#[test]
fn sibling_subtrees_are_conditionally_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let topo = TreeTopology::new(5, &[(1, 2), (1, 3), (2, 4), (3, 5)]).unwrap();
    let edges = topo.edges().into_iter().map(|e| (e, Arc::new(random::kernel(&mut rng, 2, 0.1)))).collect();
    let t = TreeSpec::new(topo, Alphabet::indexed(2).unwrap(), random::prob_vec(&mut rng, 2, 0.1), edges).unwrap();
    let table = enumerate(&t.into(), DEFAULT_STATE_CAP).unwrap();
    for root in 0..2 {
        // given X₁, the subtrees {2, 4} and {3, 5} are independent
        let joint = table.conditional_law(&[(1, root)], &[2, 4, 3, 5]).unwrap();
        let left = table.conditional_law(&[(1, root)], &[2, 4]).unwrap();
        let right = table.conditional_law(&[(1, root)], &[3, 5]).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert!((joint[a * 4 + b] - left[a] * right[b]).abs() < 1e-12);
            }
        }
        // and X₄ depends on the rest only through X₂
        for x2 in 0..2 {
            let narrow = table.conditional_law(&[(1, root), (2, x2)], &[4]).unwrap();
            let wide = table.conditional_law(&[(1, root), (2, x2), (3, 1), (5, 0)], &[4]).unwrap();
            assert!((narrow[0] - wide[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_growth_bound_dominates_oracle() {
    // levels of size 1, 2, 2, 2: |I_d| ≤ 2d
    let topo = TreeTopology::new(7, &[(1, 2), (1, 3), (2, 4), (3, 5), (4, 6), (5, 7)]).unwrap();
    let weak = |s: f64| Arc::new(Kernel::from_conditionals(&[vec![s, 1.0 - s], vec![1.0 - s, s]]).unwrap());
    let edges = topo.edges().into_iter().map(|(u, v)| ((u, v), weak(if v <= 3 { 0.6 } else { 0.53 }))).collect();
    let t = TreeSpec::new(topo, Alphabet::indexed(2).unwrap(), ProbVec::uniform(2), edges).unwrap();
    let (sizes, thetas) = t.level_profile();
    let (c, beta) = (2.0, 0.5);
    let table = enumerate(&t.clone().into(), DEFAULT_STATE_CAP).unwrap();
    for i in 1..7 {
        for j in (i + 1)..=7 {
            let b = linear_growth_eta_bound(&sizes, &thetas, c, beta, t.topology().depth(i), j - i).unwrap();
            assert!(exact_eta(&table, i, j).unwrap().value <= b + TOL);
        }
    }
}

#[test]
fn mmp_is_dominated() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let n = rng.gen_range(2..=5);
        let m = random::mmp(&mut rng, n, 2, 2, 0.05);
        let table = enumerate(&m.clone().into(), DEFAULT_STATE_CAP).unwrap();
        let total: f64 = table.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        let (oracle, _) = exact_eta_matrix(&table).unwrap();
        for (i, j, v) in oracle.iter() {
            assert!(v <= m.eta_bound(i, j).unwrap() + TOL);
        }
        for i in 1..n {
            let h = m.h_check(i, 1 << 16).unwrap();
            assert!(h.max_tv <= h.theta + TOL);
        }
    }
}

#[test]
fn mmp_density_matches_pair_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = random::mmp(&mut rng, 4, 2, 2, 0.0);
    let pair: ProcessSpec = m.pair_chain().into();
    let pair_table = enumerate(&pair, DEFAULT_STATE_CAP).unwrap();
    let mut xs = [0; 4];
    let mut observed = [0.0; 16];
    for (idx, &p) in pair_table.probs().iter().enumerate() {
        decode_index(idx, 4, 4, &mut xs);
        let o = xs.iter().fold(0, |acc, &s| acc * 2 + s / 2);
        observed[o] += p;
    }
    for (o, &want) in observed.iter().enumerate() {
        decode_index(o, 2, 4, &mut xs);
        assert!((m.density(&xs).unwrap() - want).abs() < 1e-12);
    }
}
