//! Command-line surface: argument parsing and command dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixbound::harness::sample;
use mixbound::mixing::{EnvelopeInputs, TGrid};
use mixbound::EnvelopeKind;
use serde::Serialize;

use crate::error::{CliError, CliResult, EXIT_SCHEMA, EXIT_VERIFY_FAILED};
use crate::report::{self, analyze, envelope_section, AnalyzeOptions, EnvelopeSection};
use crate::spec::{load_spec, FORMAT_VERSION};
use crate::verify::{check_spec, run_suites, Family, VerifyOptions};

pub const DEFAULT_T_GRID: &str = "0:1:0.1";

#[derive(Debug, Parser)]
#[command(
    name = "mixbound",
    version,
    about = "Mixing coefficients and concentration envelopes for dependent processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Contraction coefficients, mixing bounds, norms and envelopes of a spec.
    Analyze {
        spec: PathBuf,
        /// Add exact coefficients by enumerating the joint law.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = 2_000_000)]
        max_exact_states: u128,
        #[arg(long, default_value = DEFAULT_T_GRID)]
        t_grid: String,
        /// Comma-separated envelope kinds (default: all that apply).
        #[arg(long)]
        which: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Check the bounds against exact enumeration on a spec or on random suites.
    Verify {
        /// Spec to check; omit to run the random suites.
        spec: Option<PathBuf>,
        /// Random families: chain, binary, undirected, tree, mmp or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2_000_000)]
        max_exact_states: u128,
        /// Also sample this many trajectories and test the envelopes.
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long, default_value = DEFAULT_T_GRID)]
        t_grid: String,
        #[arg(long, hide = true)]
        negate_bound: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Tabulate tail envelopes over a grid of deviations.
    Envelope {
        spec: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_T_GRID)]
        t_grid: String,
        #[arg(long)]
        which: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        gamma2: Option<f64>,
        #[arg(long)]
        delta_inf: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Draw trajectories from a spec.
    Sample {
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[command(flatten)]
        output: Output,
    },
}

/// Text written by a command and its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub body: String,
    pub code: i32,
}

fn grid(s: &str) -> CliResult<TGrid> {
    TGrid::parse(s).map_err(|_| {
        CliError::new(EXIT_SCHEMA, "bad-grid")
            .with("t_grid", s.to_string())
            .with("message", "expected start:stop:step with 0 <= start <= stop and step > 0")
    })
}

fn kinds(which: Option<&str>) -> CliResult<Vec<EnvelopeKind>> {
    match which {
        None => Ok(EnvelopeKind::ALL.to_vec()),
        Some(s) => s
            .split(',')
            .map(|k| {
                EnvelopeKind::parse(k.trim())
                    .ok_or_else(|| CliError::new(EXIT_SCHEMA, "unknown-envelope").with("which", k.trim().to_string()))
            })
            .collect(),
    }
}

fn machine<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("document serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct EnvelopeDocument<'a> {
    format_version: &'a str,
    spec_sha256: Option<String>,
    envelopes: EnvelopeSection,
}

#[derive(Serialize)]
struct SampleDocument<'a> {
    format_version: &'a str,
    spec_sha256: String,
    seed: u64,
    trajectories: Vec<Vec<String>>,
}

fn positive(what: &'static str, v: Option<f64>) -> CliResult<Option<f64>> {
    match v {
        Some(x) if !(x.is_finite() && x >= 0.0) => {
            Err(CliError::new(EXIT_SCHEMA, "bad-argument").with("argument", what).with("value", format!("{x:?}")))
        }
        _ => Ok(v),
    }
}

/// Runs one command, returning what it prints and its exit code.
pub fn execute(command: &Command) -> CliResult<Outcome> {
    let ok = |body| Ok(Outcome { body, code: 0 });
    match command {
        Command::Analyze { spec, exact, max_exact_states, t_grid, which, output } => {
            let loaded = load_spec(spec)?;
            let opts = AnalyzeOptions {
                exact: *exact,
                max_exact_states: *max_exact_states,
                grid: grid(t_grid)?,
                which: kinds(which.as_deref())?,
            };
            let r = analyze(&loaded, &opts)?;
            ok(match output.format {
                Format::Text => report::render_text(&r),
                Format::Machine => r.to_json(),
            })
        }
        Command::Verify { spec, suite, trials, seed, max_exact_states, trajectories, t_grid, negate_bound, output } => {
            let opts = VerifyOptions {
                max_exact_states: *max_exact_states,
                negate_bound: *negate_bound,
                trajectories: *trajectories,
                seed: *seed,
                grid: grid(t_grid)?,
            };
            let r = match spec {
                Some(path) => {
                    let loaded = load_spec(path)?;
                    check_spec(&loaded.process, loaded.reference.as_deref(), None, &opts)?
                }
                None => run_suites(&Family::parse(suite)?, *trials, *seed, &opts)?,
            };
            let body = match output.format {
                Format::Text => r.render_text(),
                Format::Machine => machine(&r),
            };
            Ok(Outcome { body, code: if r.passed() { 0 } else { EXIT_VERIFY_FAILED } })
        }
        Command::Envelope { spec, t_grid, which, n, theta, gamma2, delta_inf, output } => {
            let grid = grid(t_grid)?;
            let (mut inputs, thetas, sha) = match spec {
                Some(path) => {
                    let loaded = load_spec(path)?;
                    let opts = AnalyzeOptions { exact: false, max_exact_states: 0, grid: grid.clone(), which: vec![] };
                    let r = analyze(&loaded, &opts)?;
                    let thetas: Vec<f64> = r.thetas.iter().map(|t| t.0).collect();
                    let inputs = report::envelope_inputs(&loaded.process, &thetas, &r.norms);
                    (inputs, Some(thetas), Some(loaded.sha256))
                }
                None => (EnvelopeInputs::default(), None, None),
            };
            if n.is_some() {
                inputs.n = *n;
            }
            if let Some(t) = positive("theta", *theta)? {
                inputs.theta = Some(t);
            }
            if let Some(g) = positive("gamma2", *gamma2)? {
                inputs.gamma2 = Some(g);
            }
            if let Some(d) = positive("delta-inf", *delta_inf)? {
                inputs.delta_inf = Some(d);
            }
            // an explicit selection must be satisfiable; the default lists what was skipped
            let strict = which.is_some();
            let sec = envelope_section(&inputs, thetas.as_deref(), &grid, &kinds(which.as_deref())?, strict)?;
            ok(match output.format {
                Format::Text => report::render_envelopes(&sec),
                Format::Machine => {
                    machine(&EnvelopeDocument { format_version: FORMAT_VERSION, spec_sha256: sha, envelopes: sec })
                }
            })
        }
        Command::Sample { spec, seed, count, output } => {
            let loaded = load_spec(spec)?;
            let xs = sample(&loaded.process, *seed, *count)?;
            let alphabet = loaded.process.alphabet();
            let labelled: Vec<Vec<String>> = xs.iter().map(|x| alphabet.decode(x)).collect::<Result<_, _>>()?;
            ok(match output.format {
                Format::Text => labelled.iter().map(|x| x.join(" ") + "\n").collect(),
                Format::Machine => machine(&SampleDocument {
                    format_version: FORMAT_VERSION,
                    spec_sha256: loaded.sha256,
                    seed: *seed,
                    trajectories: labelled,
                }),
            })
        }
    }
}

impl Command {
    pub fn output(&self) -> &Output {
        match self {
            Command::Analyze { output, .. }
            | Command::Verify { output, .. }
            | Command::Envelope { output, .. }
            | Command::Sample { output, .. } => output,
        }
    }
}

/// Sizes the global thread pool from `MIXBOUND_THREADS` (0 or unset: one
/// thread per core).
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("MIXBOUND_THREADS") else { return Ok(()) };
    let threads: usize = raw.trim().parse().map_err(|_| {
        CliError::new(EXIT_SCHEMA, "bad-environment").with("variable", "MIXBOUND_THREADS").with("value", raw.clone())
    })?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Parses, runs and writes the result; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { 0 };
        }
    };
    let result = configure_threads().and_then(|()| execute(&cli.command)).and_then(|outcome| {
        match &cli.command.output().out {
            Some(path) => std::fs::write(path, &outcome.body).map_err(|e| {
                CliError::new(EXIT_SCHEMA, "io").with("path", path.display().to_string()).with("message", e.to_string())
            })?,
            None => print!("{}", outcome.body),
        }
        Ok(outcome.code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.code
        }
    }
}
