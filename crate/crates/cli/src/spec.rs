//! Process specification documents.
//!
//! ```json
//! {
//!   "format_version": "1",
//!   "type": "chain",
//!   "alphabet": ["a", "b"],
//!   "p0": [0.5, 0.5],
//!   "kernels": [[[0.9, 0.1], [0.2, 0.8]], {"kernel": [[0.5, 0.5], [0.5, 0.5]], "repeat": 3}]
//! }
//! ```
//!
//! Kernels are written one row per source symbol, `kernels[t][from][to]`.
//! Distributions may be arrays in alphabet order or objects keyed by label.
//! Other types: `undirected_chain` (`potentials[t][x_t][x_{t+1}]`), `tree`
//! (`edges`, `edge_kernels`, optional named `kernels`) and `mmp`
//! (`obs_alphabet`, `hid_alphabet`, pair symbols flattened observed-major).
//! Any type may carry a `reference` sequence of labels.

use std::collections::BTreeMap;
use std::sync::Arc;

use mixbound::tree::analyze_topology;
use mixbound::{Alphabet, ChainSpec, Kernel, MmpSpec, Potential, ProbVec, ProcessSpec, TreeSpec, UndirectedChainSpec};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, EXIT_NUMERIC, EXIT_SCHEMA};

pub const FORMAT_VERSION: &str = "1";

const TOL: f64 = 1e-9;

/// A validated spec plus the bits of the document the commands need.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub process: ProcessSpec,
    pub reference: Option<Vec<usize>>,
    /// `renumbering[old - 1] = new` for trees given in non-breadth-first order.
    pub renumbering: Option<Vec<usize>>,
    /// SHA-256 of the document bytes, hex.
    pub sha256: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixEntry {
    Repeat {
        #[serde(alias = "potential")]
        kernel: Vec<Vec<f64>>,
        repeat: usize,
    },
    Plain(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LawEntry {
    List(Vec<f64>),
    Nested(Vec<Vec<f64>>),
    Map(BTreeMap<String, f64>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EdgeKernel {
    Name(String),
    Inline(Vec<Vec<f64>>),
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> CliResult<T> {
    let v = obj
        .get(name)
        .ok_or_else(|| CliError::schema(format!("missing field `{name}`")).with("field", name.to_string()))?;
    serde_json::from_value(v.clone())
        .map_err(|e| CliError::schema(format!("field `{name}`: {e}")).with("field", name.to_string()))
}

fn optional<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> CliResult<Option<T>> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(_) => field(obj, name).map(Some),
    }
}

fn alphabet(obj: &Map<String, Value>, name: &str) -> CliResult<Alphabet> {
    let labels: Vec<String> = field(obj, name)?;
    Alphabet::new(labels).map_err(|e| CliError::schema(e.to_string()).with("field", name.to_string()))
}

fn expand(entries: Vec<MatrixEntry>) -> Vec<Vec<Vec<f64>>> {
    entries
        .into_iter()
        .flat_map(|e| match e {
            MatrixEntry::Plain(m) => vec![m],
            MatrixEntry::Repeat { kernel, repeat } => vec![kernel; repeat],
        })
        .collect()
}

fn check_entry(value: f64, what: (&'static str, String), column: &str, to: &str) -> CliResult<()> {
    if !value.is_finite() {
        return Err(CliError::new(EXIT_NUMERIC, "non-finite")
            .with(what.0, what.1)
            .with("column", column.to_string())
            .with("row", to.to_string())
            .with("value", format!("{value:?}")));
    }
    if value < 0.0 {
        return Err(CliError::new(EXIT_NUMERIC, "negative-entry")
            .with(what.0, what.1)
            .with("column", column.to_string())
            .with("row", to.to_string())
            .with("value", format!("{value:?}")));
    }
    Ok(())
}

/// Validates a row-per-source kernel and returns it column-stochastic.
fn kernel(rows: &[Vec<f64>], from: &Alphabet, to: &Alphabet, what: (&'static str, String)) -> CliResult<Kernel> {
    if rows.len() != from.size() {
        return Err(
            CliError::schema(format!("expected {} rows, found {}", from.size(), rows.len())).with(what.0, what.1)
        );
    }
    for (c, row) in rows.iter().enumerate() {
        let label = from.label(c).expect("in range");
        if row.len() != to.size() {
            return Err(CliError::schema(format!("expected {} entries, found {}", to.size(), row.len()))
                .with(what.0, what.1)
                .with("column", label.to_string()));
        }
        for (r, &v) in row.iter().enumerate() {
            check_entry(v, what.clone(), label, to.label(r).expect("in range"))?;
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > TOL {
            return Err(CliError::new(EXIT_NUMERIC, "not-stochastic")
                .with(what.0, what.1)
                .with("column", label.to_string())
                .with("sum", format!("{sum:?}")));
        }
    }
    Ok(Kernel::from_conditionals(rows)?)
}

fn law(entry: LawEntry, alphabet: &Alphabet, name: &'static str) -> CliResult<ProbVec> {
    let weights = match entry {
        LawEntry::List(w) => w,
        LawEntry::Nested(rows) => rows.concat(),
        LawEntry::Map(m) => {
            let mut w = vec![0.0; alphabet.size()];
            for (label, p) in m {
                let idx = alphabet
                    .index_of(&label)
                    .ok_or_else(|| CliError::schema(format!("unknown symbol `{label}`")).with("distribution", name))?;
                w[idx] = p;
            }
            w
        }
    };
    if weights.len() != alphabet.size() {
        return Err(CliError::schema(format!("expected {} weights, found {}", alphabet.size(), weights.len()))
            .with("distribution", name));
    }
    for (i, &v) in weights.iter().enumerate() {
        check_entry(v, ("distribution", name.to_string()), "-", alphabet.label(i).expect("in range"))?;
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > TOL {
        return Err(CliError::new(EXIT_NUMERIC, "not-stochastic")
            .with("distribution", name)
            .with("sum", format!("{sum:?}")));
    }
    Ok(ProbVec::new(weights)?)
}

fn potential(rows: &[Vec<f64>], alphabet: &Alphabet, index: usize) -> CliResult<Potential> {
    let k = alphabet.size();
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(CliError::schema(format!("potential must be {k}x{k}")).with("potential", index.to_string()));
    }
    for (a, row) in rows.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            check_entry(
                v,
                ("potential", index.to_string()),
                alphabet.label(a).expect("in range"),
                alphabet.label(b).expect("in range"),
            )?;
        }
    }
    if rows.iter().flatten().all(|&v| v == 0.0) {
        return Err(CliError::new(EXIT_NUMERIC, "degenerate-potential").with("potential", index.to_string()));
    }
    Ok(Potential::from_rows(rows)?)
}

fn parse_chain(obj: &Map<String, Value>) -> CliResult<ProcessSpec> {
    let a = alphabet(obj, "alphabet")?;
    let p0 = law(field(obj, "p0")?, &a, "p0")?;
    let kernels = expand(field(obj, "kernels")?)
        .iter()
        .enumerate()
        .map(|(t, rows)| kernel(rows, &a, &a, ("kernel", (t + 1).to_string())).map(Arc::new))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(ChainSpec::new(a, p0, kernels)?.into())
}

fn parse_undirected(obj: &Map<String, Value>) -> CliResult<ProcessSpec> {
    let a = alphabet(obj, "alphabet")?;
    let potentials = expand(field(obj, "potentials")?)
        .iter()
        .enumerate()
        .map(|(t, rows)| potential(rows, &a, t + 1).map(Arc::new))
        .collect::<CliResult<Vec<_>>>()?;
    let spec = UndirectedChainSpec::new(a, potentials)?;
    // surfaces zero partition functions and dead states up front
    spec.derive_kernels()?;
    Ok(spec.into())
}

fn parse_tree(obj: &Map<String, Value>) -> CliResult<(ProcessSpec, Option<Vec<usize>>)> {
    let a = alphabet(obj, "alphabet")?;
    let p0 = law(field(obj, "p0")?, &a, "p0")?;
    let edges: Vec<[usize; 2]> = field(obj, "edges")?;
    let n: usize = optional(obj, "nodes")?.unwrap_or(edges.len() + 1);
    let edge_kernels: Vec<EdgeKernel> = field(obj, "edge_kernels")?;
    if edge_kernels.len() != edges.len() {
        return Err(CliError::schema(format!("{} edges but {} edge kernels", edges.len(), edge_kernels.len()))
            .with("field", "edge_kernels"));
    }
    let named: BTreeMap<String, Vec<Vec<f64>>> = optional(obj, "kernels")?.unwrap_or_default();
    let mut library = BTreeMap::new();
    for (name, rows) in &named {
        library.insert(name.clone(), Arc::new(kernel(rows, &a, &a, ("kernel", name.clone()))?));
    }
    let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
    let analysis = analyze_topology(n, &pairs)?;
    let map = analysis.renumbering.clone();
    let renamed = |v: usize| map.as_ref().map_or(v, |m| m[v - 1]);
    let mut assigned = Vec::with_capacity(edges.len());
    for (&(u, v), ek) in pairs.iter().zip(edge_kernels) {
        let k = match ek {
            EdgeKernel::Name(name) => Arc::clone(library.get(&name).ok_or_else(|| {
                CliError::schema(format!("unknown kernel `{name}`")).with("edge", format!("{u}-{v}"))
            })?),
            EdgeKernel::Inline(rows) => Arc::new(kernel(&rows, &a, &a, ("kernel", format!("{u}-{v}")))?),
        };
        assigned.push(((renamed(u), renamed(v)), k));
    }
    Ok((TreeSpec::new(analysis.topology, a, p0, assigned)?.into(), analysis.renumbering))
}

fn parse_mmp(obj: &Map<String, Value>) -> CliResult<ProcessSpec> {
    let obs = alphabet(obj, "obs_alphabet")?;
    let hid = alphabet(obj, "hid_alphabet")?;
    let pairs = obs.product(&hid).map_err(|e| CliError::schema(e.to_string()).with("field", "hid_alphabet"))?;
    let p0 = law(field(obj, "p0")?, &pairs, "p0")?;
    let kernels = expand(field(obj, "kernels")?)
        .iter()
        .enumerate()
        .map(|(t, rows)| kernel(rows, &pairs, &pairs, ("kernel", (t + 1).to_string())).map(Arc::new))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(MmpSpec::new(obs, hid, p0, kernels)?.into())
}

/// Parses and validates a spec document.
pub fn parse_spec(bytes: &[u8]) -> CliResult<LoadedSpec> {
    let sha256 = hex::encode(Sha256::digest(bytes));
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| CliError::schema(format!("invalid JSON: {e}")))?;
    let obj = doc.as_object().ok_or_else(|| CliError::schema("document must be a JSON object"))?;
    let version: String = field(obj, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(CliError::new(EXIT_SCHEMA, "unsupported-version").with("format_version", version));
    }
    let kind: String = field(obj, "type")?;
    let (process, renumbering) = match kind.as_str() {
        "chain" => (parse_chain(obj)?, None),
        "undirected_chain" => (parse_undirected(obj)?, None),
        "tree" => parse_tree(obj)?,
        "mmp" => (parse_mmp(obj)?, None),
        other => return Err(CliError::new(EXIT_SCHEMA, "unknown-type").with("type", other.to_string())),
    };
    let reference = match optional::<Vec<String>>(obj, "reference")? {
        None => None,
        Some(labels) => {
            if labels.len() != process.len() {
                return Err(CliError::schema(format!(
                    "reference has length {}, process has {}",
                    labels.len(),
                    process.len()
                ))
                .with("field", "reference"));
            }
            // references name tree nodes in the input numbering
            let mut seq = process
                .alphabet()
                .encode(&labels)
                .map_err(|e| CliError::schema(e.to_string()).with("field", "reference"))?;
            if let Some(map) = &renumbering {
                let mut renamed = vec![0; seq.len()];
                for (old, &s) in seq.iter().enumerate() {
                    renamed[map[old] - 1] = s;
                }
                seq = renamed;
            }
            Some(seq)
        }
    };
    Ok(LoadedSpec { process, reference, renumbering, sha256 })
}

pub fn load_spec(path: &std::path::Path) -> CliResult<LoadedSpec> {
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::new(EXIT_SCHEMA, "io").with("path", path.display().to_string()).with("message", e.to_string())
    })?;
    parse_spec(&bytes)
}

fn rows(k: &Kernel) -> Value {
    json!(k.conditionals())
}

/// The document form of a spec, with kernels written row per source.
pub fn to_document(spec: &ProcessSpec) -> Value {
    match spec {
        ProcessSpec::Chain(c) => json!({
            "format_version": FORMAT_VERSION,
            "type": "chain",
            "alphabet": c.alphabet().symbols(),
            "p0": c.p0().weights(),
            "kernels": c.kernels().iter().map(|k| rows(k)).collect::<Vec<_>>(),
        }),
        ProcessSpec::Undirected(u) => json!({
            "format_version": FORMAT_VERSION,
            "type": "undirected_chain",
            "alphabet": u.alphabet().symbols(),
            "potentials": u.potentials().iter().map(|p| p.rows()).collect::<Vec<_>>(),
        }),
        ProcessSpec::Tree(t) => {
            let edges = t.topology().edges();
            json!({
                "format_version": FORMAT_VERSION,
                "type": "tree",
                "alphabet": t.alphabet().symbols(),
                "p0": t.p0().weights(),
                "edges": edges.iter().map(|&(u, v)| [u, v]).collect::<Vec<_>>(),
                "edge_kernels": edges.iter().map(|&(_, v)| rows(t.kernel(v).expect("edge"))).collect::<Vec<_>>(),
            })
        }
        ProcessSpec::Mmp(m) => json!({
            "format_version": FORMAT_VERSION,
            "type": "mmp",
            "obs_alphabet": m.obs_alphabet().symbols(),
            "hid_alphabet": m.hid_alphabet().symbols(),
            "p0": m.p0().weights(),
            "kernels": m.kernels().iter().map(|k| rows(k)).collect::<Vec<_>>(),
        }),
    }
}
