//! Seeded sampling and Monte Carlo checks of the concentration envelopes.
//!
//! Trajectory `r` of a run draws from its own ChaCha8 stream: the generator
//! is seeded from the run seed and switched to stream `r`, so results do not
//! depend on how trajectories are scheduled across threads.
//!
//! The test statistic is `f(x) = d_H(x, ref)` scaled by `1/n` or `1/√n`. Its
//! mean is exact: `μf = scale · Σ_t P(X_t ≠ ref_t)` from the marginal laws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::measure::{hamming_distance, HammingConfig, Normalization};
use crate::mixing::{EnvelopeInputs, EnvelopeKind, TGrid};
use crate::process::ProcessSpec;

/// Column-wise cumulative laws of a kernel, for inverse-CDF draws.
struct Cdf {
    k: usize,
    // cum[c * k + r] = Σ_{s ≤ r} K(s | c)
    cum: Vec<f64>,
}

impl Cdf {
    fn from_columns(k: usize, cols: usize, get: impl Fn(usize, usize) -> f64) -> Self {
        let mut cum = Vec::with_capacity(k * cols);
        for c in 0..cols {
            let mut acc = 0.0;
            for r in 0..k {
                acc += get(r, c);
                cum.push(acc);
            }
        }
        Self { k, cum }
    }

    fn draw<R: Rng>(&self, col: usize, rng: &mut R) -> usize {
        let row = &self.cum[col * self.k..(col + 1) * self.k];
        let u = rng.gen::<f64>() * row[self.k - 1];
        // first index whose cumulative mass exceeds u; never a zero-mass symbol
        row.iter().position(|&c| u < c).unwrap_or(self.k - 1)
    }
}

/// Ancestral sampler on the natural coordinates of a family: plain chain,
/// pair chain (MMP), or tree in breadth-first order.
struct Sampler {
    initial: Cdf,
    steps: Vec<Cdf>,
    // parent of coordinate t ≥ 1 (0-based); t − 1 for chains
    parents: Vec<usize>,
    // maps a pair symbol to its observed symbol
    observe: Option<usize>,
}

impl Sampler {
    fn chain(c: &ChainSpec, observe: Option<usize>) -> Self {
        let k = c.alphabet().size();
        let p0 = c.p0();
        Self {
            initial: Cdf::from_columns(k, 1, |r, _| p0[r]),
            steps: c.kernels().iter().map(|kern| Cdf::from_columns(k, k, |r, col| kern.get(r, col))).collect(),
            parents: (0..c.len()).map(|t| t.saturating_sub(1)).collect(),
            observe,
        }
    }

    fn new(spec: &ProcessSpec) -> Result<Self> {
        Ok(match spec {
            ProcessSpec::Chain(c) => Self::chain(c, None),
            ProcessSpec::Undirected(u) => Self::chain(&u.derive_kernels()?, None),
            ProcessSpec::Mmp(m) => Self::chain(&m.pair_chain(), Some(m.hid_alphabet().size())),
            ProcessSpec::Tree(t) => {
                let k = t.alphabet().size();
                let p0 = t.p0();
                let topo = t.topology();
                Self {
                    initial: Cdf::from_columns(k, 1, |r, _| p0[r]),
                    steps: (2..=t.len())
                        .map(|v| {
                            let kern = t.kernel(v).expect("edge kernel");
                            Cdf::from_columns(k, k, |r, col| kern.get(r, col))
                        })
                        .collect(),
                    parents: (1..=t.len()).map(|v| topo.parent(v).map_or(0, |p| p - 1)).collect(),
                    observe: None,
                }
            }
        })
    }

    fn trajectory<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let n = self.parents.len();
        let mut x = Vec::with_capacity(n);
        x.push(self.initial.draw(0, rng));
        for t in 1..n {
            let from = x[self.parents[t]];
            x.push(self.steps[t - 1].draw(from, rng));
        }
        if let Some(h) = self.observe {
            x.iter_mut().for_each(|s| *s /= h);
        }
        x
    }
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `count` trajectories of `spec`; MMPs yield observed sequences only.
pub fn sample(spec: &ProcessSpec, seed: u64, count: usize) -> Result<Vec<Vec<usize>>> {
    let sampler = Sampler::new(spec)?;
    Ok((0..count).into_par_iter().map(|r| sampler.trajectory(&mut stream(seed, r as u64))).collect())
}

/// Inputs of one Monte Carlo envelope check.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    pub seed: u64,
    pub count: usize,
    pub normalization: Normalization,
    pub reference: Vec<usize>,
}

impl SampleRun {
    pub fn new(seed: u64, count: usize, normalization: Normalization, reference: Vec<usize>) -> Result<Self> {
        if count == 0 {
            return Err(Error::OutOfRange { what: "trajectory count", value: 0.0 });
        }
        Ok(Self { seed, count, normalization, reference })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub kind: EnvelopeKind,
    pub mean: f64,
    pub t: Vec<f64>,
    /// Fraction of trajectories with `|f − μf| > t`.
    pub empirical: Vec<f64>,
    pub envelope: Vec<f64>,
    pub slack: Vec<f64>,
    pub verdict: Vec<bool>,
}

impl TailReport {
    pub fn passed(&self) -> bool {
        self.verdict.iter().all(|&v| v)
    }

    pub fn violations(&self) -> usize {
        self.verdict.iter().filter(|&&v| !v).count()
    }
}

/// Exact `μf` from the marginal laws.
pub fn exact_mean(spec: &ProcessSpec, config: &HammingConfig, reference: &[usize]) -> Result<f64> {
    let marginals = spec.marginals()?;
    let expected: f64 = marginals.iter().zip(reference).map(|(law, &r)| 1.0 - law[r]).sum();
    Ok(match config.normalization() {
        Normalization::PerCoordinate => expected / config.n() as f64,
        Normalization::Root => expected / (config.n() as f64).sqrt(),
    })
}

fn check_hypothesis(spec: &ProcessSpec, kind: EnvelopeKind, norm: Normalization) -> Result<()> {
    let mismatch = |detail: &str| Err(Error::Hypothesis(format!("{} envelope: {detail}", kind.name())));
    match (kind, norm) {
        (EnvelopeKind::McDiarmid, Normalization::PerCoordinate) => {
            if spec.thetas()?.iter().any(|&t| t > 1e-12) {
                return mismatch("requires a product measure (all contraction coefficients 0)");
            }
            Ok(())
        }
        (EnvelopeKind::McDiarmid, _) => mismatch("requires f scaled by 1/n"),
        (EnvelopeKind::KontRam | EnvelopeKind::Samson, Normalization::Root) => Ok(()),
        (EnvelopeKind::KontRam | EnvelopeKind::Samson, _) => mismatch("requires f scaled by 1/sqrt(n)"),
        (EnvelopeKind::Marton, _) => mismatch("bounds deviation from a median, which the harness does not estimate"),
    }
}

/// Samples `run.count` trajectories and compares the tail frequencies of
/// `|f − μf|` with the chosen envelope. A point passes when the empirical
/// frequency is at most the envelope plus `3√(p(1−p)/count)`, `p` being the
/// envelope capped at 1.
pub fn verify_envelope(
    spec: &ProcessSpec,
    run: &SampleRun,
    kind: EnvelopeKind,
    inputs: &EnvelopeInputs,
    grid: &TGrid,
) -> Result<TailReport> {
    let n = spec.len();
    if run.reference.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: run.reference.len() });
    }
    let k = spec.alphabet().size();
    if let Some(&s) = run.reference.iter().find(|&&s| s >= k) {
        return Err(Error::SymbolOutOfRange { symbol: s, size: k });
    }
    check_hypothesis(spec, kind, run.normalization)?;
    let config = HammingConfig::new(n, run.normalization)?;
    let mean = exact_mean(spec, &config, &run.reference)?;
    let envelope: Vec<f64> = grid.values().iter().map(|&t| inputs.evaluate(kind, t)).collect::<Result<_>>()?;

    let sampler = Sampler::new(spec)?;
    let deviations: Vec<f64> = (0..run.count)
        .into_par_iter()
        .map(|r| {
            let x = sampler.trajectory(&mut stream(run.seed, r as u64));
            let d = hamming_distance(&x, &run.reference).expect("equal lengths");
            (config.scaled_distance(d) - mean).abs()
        })
        .collect();

    let count = run.count as f64;
    let t = grid.values().to_vec();
    let empirical: Vec<f64> = t.iter().map(|&t| deviations.iter().filter(|&&d| d > t).count() as f64 / count).collect();
    let slack: Vec<f64> = envelope
        .iter()
        .map(|&e| {
            let p = e.min(1.0);
            3.0 * (p * (1.0 - p) / count).sqrt()
        })
        .collect();
    let verdict = empirical.iter().zip(&envelope).zip(&slack).map(|((&f, &e), &s)| f <= e + s).collect();
    Ok(TailReport { kind, mean, t, empirical, envelope, slack, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contraction::Kernel;
    use crate::measure::{Alphabet, ProbVec};
    use crate::tree::TreeSpec;

    fn sticky(n: usize, stay: f64) -> ChainSpec {
        let k = Kernel::from_conditionals(&[vec![stay, 1.0 - stay], vec![1.0 - stay, stay]]).unwrap();
        ChainSpec::homogeneous(Alphabet::indexed(2).unwrap(), ProbVec::uniform(2), k, n).unwrap()
    }

    #[test]
    fn deterministic_kernels_force_the_path() {
        let shift =
            Kernel::from_conditionals(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let c = ChainSpec::homogeneous(Alphabet::indexed(3).unwrap(), ProbVec::point_mass(3, 1), shift, 5).unwrap();
        let xs = sample(&c.into(), 3, 200).unwrap();
        assert!(xs.iter().all(|x| x == &vec![1, 2, 0, 1, 2]));
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec: ProcessSpec = sticky(6, 0.8).into();
        assert_eq!(sample(&spec, 11, 50).unwrap(), sample(&spec, 11, 50).unwrap());
        assert_ne!(sample(&spec, 11, 50).unwrap(), sample(&spec, 12, 50).unwrap());
        // a prefix of a run is the smaller run
        assert_eq!(sample(&spec, 11, 50).unwrap()[..20], sample(&spec, 11, 20).unwrap()[..]);
    }

    #[test]
    fn first_coordinate_follows_p0() {
        let p0 = ProbVec::new(vec![0.2, 0.5, 0.3]).unwrap();
        let c = ChainSpec::homogeneous(Alphabet::indexed(3).unwrap(), p0.clone(), Kernel::identity(3), 2).unwrap();
        let count = 100_000;
        let xs = sample(&c.into(), 7, count).unwrap();
        for s in 0..3 {
            let freq = xs.iter().filter(|x| x[0] == s).count() as f64 / count as f64;
            let sigma = (p0[s] * (1.0 - p0[s]) / count as f64).sqrt();
            assert!((freq - p0[s]).abs() <= 4.0 * sigma, "symbol {s}: {freq}");
        }
    }

    #[test]
    fn chain_and_path_tree_agree() {
        let c = sticky(5, 0.7);
        let t = TreeSpec::from_chain(&c).unwrap();
        let count = 50_000;
        let a = sample(&c.into(), 1, count).unwrap();
        let b = sample(&t.into(), 1, count).unwrap();
        // same seeds and the same draw order give identical samples
        assert_eq!(a, b);
    }

    #[test]
    fn exact_mean_matches_enumeration() {
        let spec: ProcessSpec = sticky(6, 0.8).into();
        let table = crate::oracle::enumerate(&spec, 1 << 20).unwrap();
        let reference = vec![0, 1, 0, 0, 1, 1];
        let config = HammingConfig::new(6, Normalization::Root).unwrap();
        let brute = table.expectation(|x| config.scaled_distance(hamming_distance(x, &reference).unwrap()));
        assert!((exact_mean(&spec, &config, &reference).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn hypotheses_are_enforced() {
        let spec: ProcessSpec = sticky(4, 0.8).into();
        let grid = TGrid::new(0.0, 1.0, 0.5).unwrap();
        let inputs = EnvelopeInputs { n: Some(4), theta: Some(0.6), gamma2: Some(2.0), delta_inf: Some(2.0) };
        let per = SampleRun::new(1, 10, Normalization::PerCoordinate, vec![0; 4]).unwrap();
        let root = SampleRun::new(1, 10, Normalization::Root, vec![0; 4]).unwrap();
        let err = |r, k| verify_envelope(&spec, r, k, &inputs, &grid).unwrap_err();
        assert!(matches!(err(&per, EnvelopeKind::McDiarmid), Error::Hypothesis(_)));
        assert!(matches!(err(&per, EnvelopeKind::KontRam), Error::Hypothesis(_)));
        assert!(matches!(err(&root, EnvelopeKind::Marton), Error::Hypothesis(_)));
        assert!(verify_envelope(&spec, &root, EnvelopeKind::KontRam, &inputs, &grid).is_ok());
        assert!(SampleRun::new(1, 0, Normalization::Root, vec![]).is_err());
    }

    #[test]
    fn understated_norm_is_caught() {
        // near-deterministic chain: true ‖Δ‖∞ is close to n
        let n = 10;
        let c = sticky(n, 0.995);
        let delta = c.eta_bound_matrix();
        let true_norm = crate::mixing::build_matrices(&delta).unwrap().delta_inf_norm();
        let spec: ProcessSpec = c.into();
        let grid = TGrid::new(0.0, 2.0, 0.05).unwrap();
        let run = SampleRun::new(4, 20_000, Normalization::Root, vec![0; n]).unwrap();
        let honest = EnvelopeInputs { delta_inf: Some(true_norm), ..Default::default() };
        assert!(verify_envelope(&spec, &run, EnvelopeKind::KontRam, &honest, &grid).unwrap().passed());
        let understated = EnvelopeInputs { delta_inf: Some(0.1 * true_norm), ..Default::default() };
        let report = verify_envelope(&spec, &run, EnvelopeKind::KontRam, &understated, &grid).unwrap();
        assert!(report.violations() > 0);
    }
}
