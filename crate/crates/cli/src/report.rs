//! Report documents and the analysis pipeline behind `analyze` and
//! `envelope`.
//!
//! Floats are written with 17 significant digits (`1.7500000000000000e0`),
//! which round-trips every `f64`; re-emitting a parsed report reproduces it
//! byte for byte.

use std::fmt::Write as _;
use std::time::Instant;

use mixbound::mixing::{
    build_matrices, EnvelopeInputs, EnvelopeTable, MixingMatrices, NormEstimate, TGrid, DEFAULT_POWER_MAX_ITER,
    DEFAULT_POWER_TOL,
};
use mixbound::oracle::{enumerate, exact_eta_row};
use mixbound::tree::tree_delta_bound;
use mixbound::{EnvelopeKind, EtaMatrix, ProcessSpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{CliError, CliResult, EXIT_NUMERIC, EXIT_SCHEMA};
use crate::spec::{LoadedSpec, FORMAT_VERSION};

/// Slack allowed between an exact coefficient and its bound.
pub const BOUND_TOL: f64 = 1e-12;

/// An `f64` written with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Option::<f64>::deserialize(d).map(|v| Num(v.unwrap_or(f64::NAN)))
    }
}

fn nums(xs: &[f64]) -> Vec<Num> {
    xs.iter().copied().map(Num).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub width: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub delta_inf: Num,
    pub gamma_2: Num,
    pub gamma_2_gershgorin: Num,
    pub gamma_2_iterations: usize,
    pub gamma_2_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSection {
    /// `values[i - 1][j - i - 1] = η̄ᵢⱼ`.
    pub values: Vec<Vec<Num>>,
    /// Per row `i`, the `(prefix, w, w')` triples used and dropped.
    pub admissible: Vec<u64>,
    pub excluded: Vec<u64>,
    pub table_entries: u64,
    pub norms: Norms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeDoc {
    pub kind: String,
    pub hypothesis: String,
    pub raw: Vec<Num>,
    pub capped: Vec<Num>,
    pub vacuous: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub kind: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputsDoc {
    pub n: Option<usize>,
    pub theta: Option<Num>,
    pub gamma_2: Option<Num>,
    pub delta_inf: Option<Num>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSection {
    pub inputs: InputsDoc,
    pub t: Vec<Num>,
    pub rows: Vec<EnvelopeDoc>,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format_version: String,
    pub spec_sha256: String,
    pub process: String,
    pub n: usize,
    pub alphabet: Vec<String>,
    pub renumbering: Option<Vec<usize>>,
    pub structure: Structure,
    /// Per-step coefficients (per child node `2..=n` for trees).
    pub thetas: Vec<Num>,
    pub theta_max: Num,
    /// `(Rᵢ − rᵢ)/(Rᵢ + rᵢ)` for undirected chains.
    pub theta_bounds: Option<Vec<Num>>,
    /// `eta_bound[i - 1][j - i - 1]` bounds `η̄ᵢⱼ`.
    pub eta_bound: Vec<Vec<Num>>,
    pub norms: Norms,
    /// `L − 1 + 1/(1 − θ̃)` from the width and the largest coefficient.
    pub delta_inf_width_bound: Option<Num>,
    pub eta_exact: Option<ExactSection>,
    pub envelopes: EnvelopeSection,
    pub timing: Timing,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> CliResult<Self> {
        serde_json::from_str(s).map_err(|e| CliError::schema(format!("invalid report: {e}")))
    }
}

/// Knobs shared by `analyze` and `envelope`.
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub exact: bool,
    pub max_exact_states: u128,
    pub grid: TGrid,
    pub which: Vec<EnvelopeKind>,
}

fn rows_of(m: &EtaMatrix) -> Vec<Vec<Num>> {
    (1..m.n()).map(|i| nums(m.row(i))).collect()
}

fn norms(m: &MixingMatrices) -> CliResult<Norms> {
    let NormEstimate { value, gershgorin_upper, iterations, converged } =
        m.gamma_2_norm(DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)?;
    Ok(Norms {
        delta_inf: Num(m.delta_inf_norm()),
        gamma_2: Num(value),
        gamma_2_gershgorin: Num(gershgorin_upper),
        gamma_2_iterations: iterations,
        gamma_2_converged: converged,
    })
}

fn structure(spec: &ProcessSpec) -> Structure {
    match spec {
        ProcessSpec::Tree(t) => {
            let levels = t.topology().levels();
            Structure { width: levels.width, depth: levels.depth }
        }
        _ => Structure { width: 1, depth: spec.len() - 1 },
    }
}

/// Envelope inputs derived from a spec: `n`, the largest coefficient when
/// the process is a Markov chain (Marton; path trees included), and the
/// norms of the bound matrices.
pub fn envelope_inputs(spec: &ProcessSpec, thetas: &[f64], norms: &Norms) -> EnvelopeInputs {
    let theta_max = thetas.iter().copied().fold(0.0, f64::max);
    let chain_like = match spec {
        ProcessSpec::Chain(_) | ProcessSpec::Undirected(_) => true,
        ProcessSpec::Tree(t) => t.topology().is_path(),
        ProcessSpec::Mmp(_) => false,
    };
    EnvelopeInputs {
        n: Some(spec.len()),
        theta: (chain_like && theta_max < 1.0).then_some(theta_max),
        gamma2: Some(norms.gamma_2.0),
        delta_inf: Some(norms.delta_inf.0),
    }
}

/// Why `kind` does not apply, if it does not: a missing input (schema) or
/// an unmet hypothesis (numeric).
fn inapplicable(kind: EnvelopeKind, inputs: &EnvelopeInputs, thetas: Option<&[f64]>) -> Option<(i32, String)> {
    let missing = |what: &str| Some((EXIT_SCHEMA, format!("requires {what}")));
    let unmet = |what: &str| Some((EXIT_NUMERIC, format!("requires {what}")));
    match kind {
        EnvelopeKind::McDiarmid => match (inputs.n, thetas) {
            (None, _) => missing("n"),
            (Some(_), Some(th)) if th.iter().any(|&t| t > BOUND_TOL) => {
                unmet("a product measure (all contraction coefficients 0)")
            }
            _ => None,
        },
        EnvelopeKind::Marton => match (inputs.n, inputs.theta) {
            (None, _) => missing("n"),
            (_, None) => missing("a Markov chain contraction coefficient theta"),
            (_, Some(t)) if t >= 1.0 => unmet("theta < 1"),
            _ => None,
        },
        EnvelopeKind::Samson => inputs.gamma2.is_none().then(|| (EXIT_SCHEMA, "requires ||Gamma||_2".into())),
        EnvelopeKind::KontRam => inputs.delta_inf.is_none().then(|| (EXIT_SCHEMA, "requires ||Delta||_inf".into())),
    }
}

/// Evaluates the selected envelopes. With `strict`, a selected envelope
/// whose inputs or hypotheses are missing is an error; otherwise it is
/// listed as skipped.
pub fn envelope_section(
    inputs: &EnvelopeInputs,
    thetas: Option<&[f64]>,
    grid: &TGrid,
    which: &[EnvelopeKind],
    strict: bool,
) -> CliResult<EnvelopeSection> {
    let mut usable = Vec::new();
    let mut skipped = Vec::new();
    for &kind in which {
        match inapplicable(kind, inputs, thetas) {
            None => usable.push(kind),
            Some((code, reason)) if strict => {
                let tag = if code == EXIT_SCHEMA { "missing-input" } else { "hypothesis" };
                return Err(CliError::new(code, tag).with("envelope", kind.name()).with("message", reason));
            }
            Some((_, reason)) => skipped.push(Skipped { kind: kind.name().into(), reason }),
        }
    }
    let table = EnvelopeTable::evaluate(grid, inputs, &usable)?;
    Ok(EnvelopeSection {
        inputs: InputsDoc {
            n: inputs.n,
            theta: inputs.theta.map(Num),
            gamma_2: inputs.gamma2.map(Num),
            delta_inf: inputs.delta_inf.map(Num),
        },
        t: nums(&table.t),
        rows: table
            .rows
            .iter()
            .map(|r| EnvelopeDoc {
                kind: r.kind.name().into(),
                hypothesis: r.kind.hypothesis().into(),
                raw: nums(&r.raw),
                capped: nums(&r.capped()),
                vacuous: r.vacuous(),
            })
            .collect(),
        skipped,
    })
}

/// Exact coefficients by enumeration, checked against the bounds.
fn exact_section(spec: &ProcessSpec, bound: &EtaMatrix, cap: u128) -> CliResult<ExactSection> {
    let table = enumerate(spec, cap)?;
    let n = spec.len();
    let mut exact = EtaMatrix::zeros(n);
    let (mut admissible, mut excluded) = (Vec::new(), Vec::new());
    for i in 1..n {
        let row = exact_eta_row(&table, i)?;
        admissible.push(row[0].admissible);
        excluded.push(row[0].excluded);
        for (off, e) in row.iter().enumerate() {
            let j = i + 1 + off;
            let b = bound.get(i, j);
            if e.value > b + BOUND_TOL {
                return Err(CliError::new(EXIT_NUMERIC, "bound-violation")
                    .with("i", i.to_string())
                    .with("j", j.to_string())
                    .with("exact", format!("{:?}", e.value))
                    .with("bound", format!("{b:?}")));
            }
            exact.set(i, j, e.value, mixbound::mixing::Provenance::Exact)?;
        }
    }
    Ok(ExactSection {
        values: rows_of(&exact),
        admissible,
        excluded,
        table_entries: table.probs().len() as u64,
        norms: norms(&build_matrices(&exact)?)?,
    })
}

pub fn analyze(loaded: &LoadedSpec, opts: &AnalyzeOptions) -> CliResult<ReportDocument> {
    let start = Instant::now();
    let spec = &loaded.process;
    let thetas = spec.thetas()?;
    let theta_max = thetas.iter().copied().fold(0.0, f64::max);
    let bound = spec.eta_bound_matrix()?;
    let matrices = build_matrices(&bound)?;
    let norms = norms(&matrices)?;
    let structure = structure(spec);
    let theta_bounds = match spec {
        ProcessSpec::Undirected(u) => Some(nums(&u.theta_bounds())),
        _ => None,
    };
    let eta_exact = if opts.exact { Some(exact_section(spec, &bound, opts.max_exact_states)?) } else { None };
    let inputs = envelope_inputs(spec, &thetas, &norms);
    let envelopes = envelope_section(&inputs, Some(&thetas), &opts.grid, &opts.which, false)?;
    Ok(ReportDocument {
        format_version: FORMAT_VERSION.into(),
        spec_sha256: loaded.sha256.clone(),
        process: spec.kind().into(),
        n: spec.len(),
        alphabet: spec.alphabet().symbols().to_vec(),
        renumbering: loaded.renumbering.clone(),
        structure: structure.clone(),
        thetas: nums(&thetas),
        theta_max: Num(theta_max),
        theta_bounds,
        eta_bound: rows_of(&bound),
        norms,
        delta_inf_width_bound: tree_delta_bound(theta_max, structure.width).ok().map(Num),
        eta_exact,
        envelopes,
        timing: Timing { elapsed_ms: Num(start.elapsed().as_secs_f64() * 1e3) },
    })
}

fn fmt_row(xs: &[Num]) -> String {
    xs.iter().map(|x| format!("{:.6}", x.0)).collect::<Vec<_>>().join(" ")
}

/// Aligned envelope table; values ≥ 1 are shown capped and marked `*`.
pub fn render_envelopes(sec: &EnvelopeSection) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:>10}", "t");
    for r in &sec.rows {
        let _ = write!(out, " {:>12}", r.kind);
    }
    out.push('\n');
    for (idx, t) in sec.t.iter().enumerate() {
        let _ = write!(out, "{:>10.4}", t.0);
        for r in &sec.rows {
            let mark = if r.vacuous[idx] { "*" } else { " " };
            let _ = write!(out, " {:>11.6}{mark}", r.capped[idx].0);
        }
        out.push('\n');
    }
    if sec.rows.iter().any(|r| r.vacuous.iter().any(|&v| v)) {
        out.push_str("* vacuous: raw value >= 1, shown capped at 1\n");
    }
    for s in &sec.skipped {
        let _ = writeln!(out, "skipped {}: {}", s.kind, s.reason);
    }
    out
}

pub fn render_text(r: &ReportDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "process      {} (n = {}, |alphabet| = {})", r.process, r.n, r.alphabet.len());
    let _ = writeln!(out, "spec sha256  {}", r.spec_sha256);
    if let Some(map) = &r.renumbering {
        let pairs: Vec<String> = map.iter().enumerate().map(|(o, n)| format!("{}->{}", o + 1, n)).collect();
        let _ = writeln!(out, "renumbered   {}", pairs.join(" "));
    }
    let _ = writeln!(out, "width/depth  {}/{}", r.structure.width, r.structure.depth);
    let _ = writeln!(out, "thetas       {}", fmt_row(&r.thetas));
    if let Some(tb) = &r.theta_bounds {
        let _ = writeln!(out, "theta bounds {}", fmt_row(tb));
    }
    out.push_str("eta bound (row i, columns j = i+1..n)\n");
    for (i, row) in r.eta_bound.iter().enumerate() {
        let _ = writeln!(out, "  {:>3}: {}", i + 1, fmt_row(row));
    }
    if let Some(ex) = &r.eta_exact {
        out.push_str("eta exact\n");
        for (i, row) in ex.values.iter().enumerate() {
            let _ = writeln!(out, "  {:>3}: {}   (excluded {})", i + 1, fmt_row(row), ex.excluded[i]);
        }
        let _ =
            writeln!(out, "exact ||Delta||_inf = {:.6}, ||Gamma||_2 = {:.6}", ex.norms.delta_inf.0, ex.norms.gamma_2.0);
    }
    let _ = writeln!(
        out,
        "||Delta||_inf = {:.6}, ||Gamma||_2 = {:.6} (Gershgorin <= {:.6}{})",
        r.norms.delta_inf.0,
        r.norms.gamma_2.0,
        r.norms.gamma_2_gershgorin.0,
        if r.norms.gamma_2_converged { "" } else { ", power iteration did not converge" }
    );
    if let Some(b) = r.delta_inf_width_bound {
        let _ = writeln!(out, "width bound  ||Delta||_inf <= {:.6}", b.0);
    }
    out.push('\n');
    out.push_str(&render_envelopes(&r.envelopes));
    let _ = writeln!(out, "elapsed {:.1} ms", r.timing.elapsed_ms.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    fn opts(exact: bool) -> AnalyzeOptions {
        AnalyzeOptions {
            exact,
            max_exact_states: 2_000_000,
            grid: TGrid::parse("0:1:0.5").unwrap(),
            which: EnvelopeKind::ALL.to_vec(),
        }
    }

    #[test]
    fn num_has_seventeen_digits() {
        assert_eq!(serde_json::to_string(&Num(1.75)).unwrap(), "1.7500000000000000e0");
        assert_eq!(serde_json::to_string(&Num(0.1)).unwrap(), "1.0000000000000001e-1");
        let back: Num = serde_json::from_str("1.0000000000000001e-1").unwrap();
        assert_eq!(back.0, 0.1);
    }

    #[test]
    fn chain_report_example() {
        let doc = r#"{"format_version": "1", "type": "chain", "alphabet": ["a", "b"], "p0": [0.5, 0.5],
            "kernels": [{"kernel": [[0.75, 0.25], [0.25, 0.75]], "repeat": 2}]}"#;
        let loaded = parse_spec(doc.as_bytes()).unwrap();
        let r = analyze(&loaded, &opts(true)).unwrap();
        assert!((r.norms.delta_inf.0 - 1.75).abs() < 1e-15);
        assert_eq!(r.eta_bound[0].len(), 2);
        let ex = r.eta_exact.as_ref().unwrap();
        assert!((ex.values[0][1].0 - 0.25).abs() < 1e-12);
        assert!(r.envelopes.skipped.iter().any(|s| s.kind == "mcdiarmid"));
        assert!(r.envelopes.rows.iter().any(|e| e.kind == "marton"));
    }

    #[test]
    fn report_round_trip_is_byte_stable() {
        let doc = r#"{"format_version": "1", "type": "chain", "alphabet": ["a", "b", "c"], "p0": [0.2, 0.3, 0.5],
            "kernels": [[[0.1, 0.3, 0.6], [0.7, 0.2, 0.1], [0.3, 0.3, 0.4]], [[0.5, 0.25, 0.25], [0.2, 0.2, 0.6], [0.9, 0.05, 0.05]]]}"#;
        let r = analyze(&parse_spec(doc.as_bytes()).unwrap(), &opts(true)).unwrap();
        let first = r.to_json();
        let again = ReportDocument::from_json(&first).unwrap();
        assert_eq!(again, r);
        assert_eq!(again.to_json(), first);
    }

    #[test]
    fn strict_envelopes_require_inputs() {
        let inputs = EnvelopeInputs { delta_inf: Some(1.0), ..Default::default() };
        let grid = TGrid::parse("0:1:0.5").unwrap();
        let sec = envelope_section(&inputs, None, &grid, &[EnvelopeKind::KontRam], true).unwrap();
        let row = &sec.rows[0];
        assert_eq!(row.raw[0].0, 2.0);
        assert!((row.raw[1].0 - 2.0 * (-0.125f64).exp()).abs() < 1e-15);
        assert!((row.raw[2].0 - 1.2130613194252668).abs() < 1e-12);
        assert_eq!(row.vacuous, vec![true, true, true]);
        let e = envelope_section(&inputs, None, &grid, &[EnvelopeKind::McDiarmid], true).unwrap_err();
        assert_eq!((e.code, e.kind), (EXIT_SCHEMA, "missing-input"));
        let dependent = EnvelopeInputs { n: Some(3), ..inputs };
        let e = envelope_section(&dependent, Some(&[0.5, 0.5]), &grid, &[EnvelopeKind::McDiarmid], true).unwrap_err();
        assert_eq!((e.code, e.kind), (EXIT_NUMERIC, "hypothesis"));
    }
}
