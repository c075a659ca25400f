//! Property checks for `verify`: exact values from enumeration against the
//! family bounds, on one spec or on seeded random suites.

use std::fmt::Write as _;

use mixbound::harness::{verify_envelope, SampleRun};
use mixbound::measure::Normalization;
use mixbound::mixing::{build_matrices, EnvelopeInputs, TGrid, DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL};
use mixbound::oracle::{enumerate, exact_eta_matrix};
use mixbound::{random, EnvelopeKind, ProcessSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult, EXIT_SCHEMA};
use crate::spec::to_document;

const TOL: f64 = 1e-12;
const EXACT_TOL: f64 = 1e-10;
const H_CHECK_CAP: u128 = 1 << 20;

/// Random families for `--suite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Chain,
    Binary,
    Undirected,
    Tree,
    Mmp,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Chain, Family::Binary, Family::Undirected, Family::Tree, Family::Mmp];

    pub fn name(self) -> &'static str {
        match self {
            Family::Chain => "chain",
            Family::Binary => "binary",
            Family::Undirected => "undirected",
            Family::Tree => "tree",
            Family::Mmp => "mmp",
        }
    }

    pub fn parse(s: &str) -> CliResult<Vec<Family>> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',')
            .map(|part| {
                Self::ALL
                    .into_iter()
                    .find(|f| f.name() == part.trim())
                    .ok_or_else(|| CliError::new(EXIT_SCHEMA, "unknown-suite").with("suite", part.trim().to_string()))
            })
            .collect()
    }

    /// One random instance, small enough to enumerate.
    pub fn generate<R: Rng>(self, rng: &mut R) -> ProcessSpec {
        match self {
            Family::Chain => {
                let (n, k) = (rng.gen_range(2..=6), rng.gen_range(2..=3));
                random::chain(rng, n, k, 0.0).into()
            }
            Family::Binary => {
                let n = rng.gen_range(2..=8);
                random::chain(rng, n, 2, 0.0).into()
            }
            Family::Undirected => {
                let (n, k) = (rng.gen_range(2..=6), rng.gen_range(2..=4));
                // keep |Σ|ⁿ manageable
                let n = if k == 4 { n.min(5) } else { n };
                random::undirected(rng, n, k, 0.05).into()
            }
            Family::Tree => {
                let (n, k) = (rng.gen_range(2..=7), rng.gen_range(2..=3));
                random::tree(rng, n, k, 0.0).into()
            }
            Family::Mmp => {
                let n = rng.gen_range(2..=5);
                random::mmp(rng, n, 2, 2, 0.0).into()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: Option<u64>,
    pub detail: String,
    pub spec: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub checks: u64,
    pub failures: u64,
    pub counterexample: Option<Counterexample>,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub trials: u64,
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }

    fn entry(&mut self, name: &str) -> &mut PropertyResult {
        let pos = match self.properties.iter().position(|p| p.name == name) {
            Some(pos) => pos,
            None => {
                self.properties.push(PropertyResult {
                    name: name.into(),
                    checks: 0,
                    failures: 0,
                    counterexample: None,
                });
                self.properties.len() - 1
            }
        };
        &mut self.properties[pos]
    }

    fn merge(&mut self, other: VerifyReport) {
        self.trials += other.trials;
        for p in other.properties {
            let e = self.entry(&p.name);
            e.checks += p.checks;
            e.failures += p.failures;
            if e.counterexample.is_none() {
                e.counterexample = p.counterexample;
            }
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            let verdict = if p.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{verdict} {:<28} checks={} failures={}", p.name, p.checks, p.failures);
            if let Some(c) = &p.counterexample {
                if let Some(t) = c.trial {
                    let _ = writeln!(out, "  trial {t}");
                }
                let _ = writeln!(out, "  {}", c.detail);
                let _ = writeln!(out, "  spec {}", c.spec);
            }
        }
        let _ = writeln!(
            out,
            "{} ({} trial{})",
            if self.passed() { "all properties hold" } else { "verification failed" },
            self.trials,
            if self.trials == 1 { "" } else { "s" }
        );
        out
    }
}

/// Records checks for one spec; the document is rendered only on the first
/// failure of each property.
struct Checker<'a> {
    spec: &'a ProcessSpec,
    trial: Option<u64>,
    report: VerifyReport,
}

impl Checker<'_> {
    fn check(&mut self, name: &str, ok: bool, detail: impl FnOnce() -> String) {
        let (spec, trial) = (self.spec, self.trial);
        let e = self.report.entry(name);
        e.checks += 1;
        if !ok {
            e.failures += 1;
            if e.counterexample.is_none() {
                e.counterexample = Some(Counterexample { trial, detail: detail(), spec: to_document(spec) });
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub max_exact_states: u128,
    /// Hidden self-test: compare the exact values against the negated
    /// bound, which the dominance check must reject.
    pub negate_bound: bool,
    /// Monte Carlo envelope check when set.
    pub trajectories: Option<usize>,
    pub seed: u64,
    pub grid: TGrid,
}

/// All properties applicable to one spec.
pub fn check_spec(
    spec: &ProcessSpec,
    reference: Option<&[usize]>,
    trial: Option<u64>,
    opts: &VerifyOptions,
) -> CliResult<VerifyReport> {
    let mut c = Checker { spec, trial, report: VerifyReport { trials: 1, properties: Vec::new() } };
    let n = spec.len();
    let table = enumerate(spec, opts.max_exact_states)?;
    let bound = spec.eta_bound_matrix()?;
    let (oracle, stats) = exact_eta_matrix(&table)?;
    let sign = if opts.negate_bound { -1.0 } else { 1.0 };
    for (i, j, v) in oracle.iter() {
        let b = sign * bound.get(i, j);
        c.check("dominance", v <= b + TOL, || format!("i={i} j={j} exact={v:?} bound={b:?}"));
    }

    match spec {
        ProcessSpec::Chain(ch) => {
            for (i, j, v) in oracle.iter() {
                // with a null prefix the propagated value may exceed the oracle's
                if stats[i - 1].excluded == 0 {
                    let p = ch.eta_exact(i, j)?;
                    c.check("propagation-exact", (p - v).abs() <= EXACT_TOL, || {
                        format!("i={i} j={j} propagated={p:?} enumerated={v:?}")
                    });
                }
                if ch.alphabet().size() == 2 {
                    let (p, b) = (ch.eta_exact(i, j)?, ch.eta_bound(i, j)?);
                    c.check("binary-tightness", (p - b).abs() <= TOL, || {
                        format!("i={i} j={j} exact={p:?} bound={b:?}")
                    });
                }
            }
        }
        ProcessSpec::Undirected(u) => {
            let derived = u.derive_kernels()?;
            for (idx, theta) in derived.thetas().into_iter().enumerate() {
                let b = u.theta_bound(idx + 1)?;
                c.check("potential-theta", theta <= b + TOL, || format!("i={} theta={theta:?} bound={b:?}", idx + 1));
            }
            let chain_table = enumerate(&derived.into(), opts.max_exact_states)?;
            let tv: f64 = table.probs().iter().zip(chain_table.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
            c.check("derived-density", tv <= EXACT_TOL, || format!("tv={tv:?}"));
        }
        ProcessSpec::Tree(t) => {
            for (i, j, v) in oracle.iter() {
                let level = t.eta_bound_levels(i, j)?;
                let simple = t.eta_bound_simple_default(i, j)?;
                c.check("level-below-simple", level <= simple + TOL, || {
                    format!("i={i} j={j} level={level:?} simple={simple:?}")
                });
                if t.topology().j_zero(i, j)?.is_none() {
                    c.check("outside-subtree", v <= TOL, || format!("i={i} j={j} exact={v:?}"));
                }
            }
            if let Some(ch) = t.to_chain() {
                let same = ch.eta_bound_matrix() == bound;
                c.check("path-reduction", same, || "path tree bounds differ from the chain's".into());
            }
        }
        ProcessSpec::Mmp(m) => {
            for i in 1..n {
                let h = m.h_check(i, H_CHECK_CAP)?;
                c.check("h-contraction", h.max_tv <= h.theta + TOL, || {
                    format!("i={i} max_tv={:?} theta={:?}", h.max_tv, h.theta)
                });
            }
            if let Some(ch) = m.to_chain() {
                let same = ch.eta_bound_matrix() == bound;
                c.check("chain-reduction", same, || "single hidden state bounds differ from the chain's".into());
            }
        }
    }

    if let Some(count) = opts.trajectories {
        let matrices = build_matrices(&bound)?;
        let gamma = matrices.gamma_2_norm(DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)?;
        let inputs = EnvelopeInputs {
            n: Some(n),
            theta: None,
            gamma2: Some(gamma.value),
            delta_inf: Some(matrices.delta_inf_norm()),
        };
        let reference = reference.map(<[usize]>::to_vec).unwrap_or_else(|| vec![0; n]);
        let run = SampleRun::new(opts.seed, count, Normalization::Root, reference)?;
        for kind in [EnvelopeKind::KontRam, EnvelopeKind::Samson] {
            let tail = verify_envelope(spec, &run, kind, &inputs, &opts.grid)?;
            for (idx, &ok) in tail.verdict.iter().enumerate() {
                c.check(&format!("envelope-{}", kind.name()), ok, || {
                    format!(
                        "t={:?} empirical={:?} envelope={:?} slack={:?}",
                        tail.t[idx], tail.empirical[idx], tail.envelope[idx], tail.slack[idx]
                    )
                });
            }
        }
    }
    Ok(c.report)
}

/// Runs `trials` random instances of each family. Trial `r` draws from
/// stream `r` of the generator seeded with `seed`, so runs are reproducible
/// and any failing trial can be regenerated alone.
pub fn run_suites(families: &[Family], trials: u64, seed: u64, opts: &VerifyOptions) -> CliResult<VerifyReport> {
    let mut report = VerifyReport::default();
    for &family in families {
        for r in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let spec = family.generate(&mut rng);
            let mut one = check_spec(&spec, None, Some(r), opts)?;
            for p in &mut one.properties {
                p.name = format!("{}/{}", family.name(), p.name);
            }
            report.merge(one);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(negate: bool) -> VerifyOptions {
        VerifyOptions {
            max_exact_states: 2_000_000,
            negate_bound: negate,
            trajectories: None,
            seed: 1,
            grid: TGrid::parse("0:1:0.25").unwrap(),
        }
    }

    #[test]
    fn suites_pass() {
        let r = run_suites(&Family::ALL, 15, 42, &opts(false)).unwrap();
        assert!(r.passed(), "{}", r.render_text());
        assert_eq!(r.trials, 75);
        for name in ["tree/path-reduction", "mmp/h-contraction", "undirected/derived-density"] {
            assert!(r.properties.iter().any(|p| p.name == name), "{name} never ran");
        }
    }

    #[test]
    fn negated_bound_fails_with_counterexample() {
        let r = run_suites(&[Family::Chain], 3, 42, &opts(true)).unwrap();
        assert!(!r.passed());
        let p = r.properties.iter().find(|p| p.name == "chain/dominance").unwrap();
        let c = p.counterexample.as_ref().unwrap();
        assert!(c.detail.starts_with("i="));
        assert_eq!(c.spec["type"], "chain");
    }

    #[test]
    fn families_parse() {
        assert_eq!(Family::parse("all").unwrap().len(), 5);
        assert_eq!(Family::parse("tree,mmp").unwrap(), vec![Family::Tree, Family::Mmp]);
        assert_eq!(Family::parse("cube").unwrap_err().code, EXIT_SCHEMA);
    }
}
