//! Mixing matrices and concentration envelopes.
//!
//! From η-mixing coefficients `η̄ᵢⱼ` (`i < j`) we build the upper-triangular
//! matrices `Δ` and `Γ` with unit diagonal, `Δᵢⱼ = η̄ᵢⱼ` and `Γᵢⱼ = √η̄ᵢⱼ`.
//! `‖Δ‖∞` is the largest row sum. `‖Γ‖₂` is the square root of the top
//! eigenvalue of `ΓᵀΓ`, estimated by power iteration and bounded above by
//! the largest row sum of `ΓᵀΓ` (Geršgorin).
//!
//! Envelopes bound `μ{|f − μf| > t}` (or the median deviation for Marton's
//! inequality) under different Lipschitz hypotheses:
//!
//! | envelope  | value                                   | hypothesis                          |
//! |-----------|-----------------------------------------|-------------------------------------|
//! | McDiarmid | `2 exp(−2nt²)`                          | product measure, `Lip(f) ≤ 1/n`     |
//! | Marton    | `2 exp(−2n(t(1−θ) − √(log 2 / 2n))²)`   | contracting chain, `Lip(f) ≤ 1/n`   |
//! | Samson    | `2 exp(−t² / 2‖Γ‖₂²)`                   | convex, `Lip(f) ≤ 1` in ℓ₂ on [0,1]ⁿ |
//! | K–R       | `2 exp(−t² / 2‖Δ‖∞²)`                   | `Lip(f) ≤ 1/√n`                      |

use std::fmt;

use crate::error::{Error, Result};
use crate::measure::INTERNAL_TOL;

/// Whether an η̄ entry is an upper bound or an exact value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Bound,
    Exact,
}

/// Strictly upper-triangular array of η̄ᵢⱼ, `1 ≤ i < j ≤ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaMatrix {
    n: usize,
    values: Vec<f64>,
    provenance: Vec<Provenance>,
}

impl EtaMatrix {
    pub fn zeros(n: usize) -> Self {
        let len = n * n.saturating_sub(1) / 2;
        Self { n, values: vec![0.0; len], provenance: vec![Provenance::Bound; len] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        if i == 0 || i >= j || j > self.n {
            return None;
        }
        // rows 1..i-1 hold (n-1) + (n-2) + ... + (n-i+1) entries
        let before = (i - 1) * (2 * self.n - i) / 2;
        Some(before + (j - i - 1))
    }

    /// Stores `value`, snapping round-off within `1e-12` of `[0, 1]` back
    /// into range.
    pub fn set(&mut self, i: usize, j: usize, value: f64, provenance: Provenance) -> Result<()> {
        let off = self
            .offset(i, j)
            .ok_or_else(|| Error::BadIndex(format!("pair ({i}, {j}) outside 1 <= i < j <= {}", self.n)))?;
        if !(-INTERNAL_TOL..=1.0 + INTERNAL_TOL).contains(&value) {
            return Err(Error::OutOfRange { what: "eta", value });
        }
        self.values[off] = value.clamp(0.0, 1.0);
        self.provenance[off] = provenance;
        Ok(())
    }

    /// # Panics
    ///
    /// If `(i, j)` is not a valid pair.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.offset(i, j).expect("valid eta pair")]
    }

    pub fn try_get(&self, i: usize, j: usize) -> Option<f64> {
        self.offset(i, j).map(|o| self.values[o])
    }

    pub fn provenance(&self, i: usize, j: usize) -> Option<Provenance> {
        self.offset(i, j).map(|o| self.provenance[o])
    }

    /// Row `i` as `η̄ᵢ,ᵢ₊₁ … η̄ᵢ,ₙ`.
    pub fn row(&self, i: usize) -> &[f64] {
        match self.offset(i, i + 1) {
            Some(start) => &self.values[start..start + (self.n - i)],
            None => &[],
        }
    }

    /// Iterates `(i, j, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (1..self.n).flat_map(move |i| ((i + 1)..=self.n).map(move |j| (i, j, self.get(i, j))))
    }
}

/// Upper-triangular `Δ` and `Γ`, unit diagonal, row-major `n × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrices {
    n: usize,
    delta: Vec<f64>,
    gamma: Vec<f64>,
}

pub fn build_matrices(eta: &EtaMatrix) -> Result<MixingMatrices> {
    let n = eta.n();
    let mut delta = vec![0.0; n * n];
    let mut gamma = vec![0.0; n * n];
    for i in 0..n {
        delta[i * n + i] = 1.0;
        gamma[i * n + i] = 1.0;
    }
    for (i, j, v) in eta.iter() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { what: "eta", value: v });
        }
        delta[(i - 1) * n + (j - 1)] = v;
        gamma[(i - 1) * n + (j - 1)] = v.sqrt();
    }
    Ok(MixingMatrices { n, delta, gamma })
}

/// Result of a power-iteration norm estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    /// `√λ` for the last Rayleigh quotient `λ`.
    pub value: f64,
    /// Square root of the largest row sum of `MᵀM`.
    pub gershgorin_upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_POWER_MAX_ITER: usize = 10_000;

impl MixingMatrices {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self, i: usize, j: usize) -> f64 {
        self.delta[(i - 1) * self.n + (j - 1)]
    }

    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.gamma[(i - 1) * self.n + (j - 1)]
    }

    /// `max_i (1 + Σ_{j>i} Δᵢⱼ)`.
    pub fn delta_inf_norm(&self) -> f64 {
        (0..self.n).map(|i| self.delta[i * self.n..(i + 1) * self.n].iter().sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn gamma_2_norm(&self, tol: f64, max_iter: usize) -> Result<NormEstimate> {
        two_norm(&self.gamma, self.n, tol, max_iter)
    }

    /// `‖Δ‖₂`, which may replace `‖Δ‖∞` in the K–R envelope. Not used by
    /// reports.
    pub fn delta_2_norm(&self, tol: f64, max_iter: usize) -> Result<NormEstimate> {
        two_norm(&self.delta, self.n, tol, max_iter)
    }
}

/// Power iteration on `MᵀM` for a nonnegative square `m` (row-major),
/// started from the all-ones vector and stopped once successive Rayleigh
/// quotients differ by less than `tol`.
pub fn two_norm(m: &[f64], n: usize, tol: f64, max_iter: usize) -> Result<NormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::OutOfRange { what: "power iteration tolerance", value: tol });
    }
    if m.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, found: m.len() });
    }
    if n == 0 {
        return Ok(NormEstimate { value: 0.0, gershgorin_upper: 0.0, iterations: 0, converged: true });
    }
    // G = MᵀM
    let mut g = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let s: f64 = (0..n).map(|r| m[r * n + a] * m[r * n + b]).sum();
            g[a * n + b] = s;
            g[b * n + a] = s;
        }
    }
    let gershgorin = (0..n).map(|r| g[r * n..(r + 1) * n].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);

    let matvec = |v: &[f64]| -> Vec<f64> {
        (0..n).map(|r| g[r * n..(r + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    };
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut gv = matvec(&v);
    let mut lambda: f64 = v.iter().zip(&gv).map(|(a, b)| a * b).sum();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let norm = gv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            converged = true;
            break;
        }
        v = gv.iter().map(|x| x / norm).collect();
        gv = matvec(&v);
        let next: f64 = v.iter().zip(&gv).map(|(a, b)| a * b).sum();
        let diff = (next - lambda).abs();
        lambda = next;
        if diff < tol {
            converged = true;
            break;
        }
    }
    Ok(NormEstimate { value: lambda.max(0.0).sqrt(), gershgorin_upper: gershgorin.sqrt(), iterations, converged })
}

/// `2 exp(−2nt²)`.
pub fn envelope_mcdiarmid(t: f64, n: usize) -> f64 {
    2.0 * (-2.0 * n as f64 * t * t).exp()
}

/// `2 exp(−2n(t(1−θ) − √(log 2 / 2n))²)` once `t(1−θ)` clears
/// `√(log 2 / 2n)`; below that threshold the trivial value 2.
pub fn envelope_marton(t: f64, n: usize, theta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::OutOfRange { what: "theta", value: theta });
    }
    let nf = n as f64;
    let shift = (std::f64::consts::LN_2 / (2.0 * nf)).sqrt();
    let lead = t * (1.0 - theta);
    if lead < shift {
        return Ok(2.0);
    }
    Ok(2.0 * (-2.0 * nf * (lead - shift).powi(2)).exp())
}

/// `2 exp(−t² / 2‖Γ‖₂²)`.
pub fn envelope_samson(t: f64, gamma2: f64) -> f64 {
    2.0 * (-t * t / (2.0 * gamma2 * gamma2)).exp()
}

/// `2 exp(−t² / 2‖Δ‖∞²)`.
pub fn envelope_kontram(t: f64, delta_inf: f64) -> f64 {
    2.0 * (-t * t / (2.0 * delta_inf * delta_inf)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvelopeKind {
    McDiarmid,
    Marton,
    Samson,
    KontRam,
}

impl EnvelopeKind {
    pub const ALL: [EnvelopeKind; 4] =
        [EnvelopeKind::McDiarmid, EnvelopeKind::Marton, EnvelopeKind::Samson, EnvelopeKind::KontRam];

    pub fn name(self) -> &'static str {
        match self {
            EnvelopeKind::McDiarmid => "mcdiarmid",
            EnvelopeKind::Marton => "marton",
            EnvelopeKind::Samson => "samson",
            EnvelopeKind::KontRam => "kontram",
        }
    }

    pub fn hypothesis(self) -> &'static str {
        match self {
            EnvelopeKind::McDiarmid => "product measure; Lip(f) <= 1/n under Hamming; deviation from mean",
            EnvelopeKind::Marton => "contracting Markov chain; Lip(f) <= 1/n under Hamming; deviation from a median",
            EnvelopeKind::Samson => "convex f on [0,1]^n; Lip(f) <= 1 under l2; deviation from mean",
            EnvelopeKind::KontRam => "Lip(f) <= 1/sqrt(n) under Hamming; deviation from mean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for EnvelopeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Quantities the envelopes depend on. Missing inputs disable the
/// corresponding envelope.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnvelopeInputs {
    pub n: Option<usize>,
    /// Uniform contraction coefficient, for Marton's inequality.
    pub theta: Option<f64>,
    pub gamma2: Option<f64>,
    pub delta_inf: Option<f64>,
}

impl EnvelopeInputs {
    pub fn evaluate(&self, kind: EnvelopeKind, t: f64) -> Result<f64> {
        let missing = |what: &str| Error::Hypothesis(format!("{} envelope requires {what}", kind.name()));
        match kind {
            EnvelopeKind::McDiarmid => Ok(envelope_mcdiarmid(t, self.n.ok_or_else(|| missing("n"))?)),
            EnvelopeKind::Marton => {
                let n = self.n.ok_or_else(|| missing("n"))?;
                let theta = self.theta.ok_or_else(|| missing("a chain contraction coefficient"))?;
                envelope_marton(t, n, theta)
            }
            EnvelopeKind::Samson => Ok(envelope_samson(t, self.gamma2.ok_or_else(|| missing("||Gamma||_2"))?)),
            EnvelopeKind::KontRam => Ok(envelope_kontram(t, self.delta_inf.ok_or_else(|| missing("||Delta||_inf"))?)),
        }
    }
}

/// Evenly spaced `t` values `start, start + step, …, ≤ stop`.
#[derive(Debug, Clone, PartialEq)]
pub struct TGrid(Vec<f64>);

impl TGrid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start >= 0.0) || !(stop >= start) || !(step > 0.0) || !stop.is_finite() {
            return Err(Error::OutOfRange { what: "t-grid", value: step });
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(Error::OutOfRange { what: "t-grid point count", value: count as f64 });
        }
        Ok(Self((0..count).map(|k| start + k as f64 * step).collect()))
    }

    /// Parses `"start:stop:step"`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::OutOfRange { what: "t-grid", value: f64::NAN };
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
        Self::new(nums[0], nums[1], nums[2])
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::OutOfRange { what: "t", value: bad });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRow {
    pub kind: EnvelopeKind,
    pub raw: Vec<f64>,
}

impl EnvelopeRow {
    pub fn capped(&self) -> Vec<f64> {
        self.raw.iter().map(|v| v.min(1.0)).collect()
    }

    pub fn vacuous(&self) -> Vec<bool> {
        self.raw.iter().map(|v| *v >= 1.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeTable {
    pub t: Vec<f64>,
    pub rows: Vec<EnvelopeRow>,
}

impl EnvelopeTable {
    pub fn evaluate(grid: &TGrid, inputs: &EnvelopeInputs, kinds: &[EnvelopeKind]) -> Result<Self> {
        let rows = kinds
            .iter()
            .map(|&kind| {
                let raw = grid.values().iter().map(|&t| inputs.evaluate(kind, t)).collect::<Result<Vec<_>>>()?;
                Ok(EnvelopeRow { kind, raw })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { t: grid.values().to_vec(), rows })
    }

    pub fn row(&self, kind: EnvelopeKind) -> Option<&EnvelopeRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }
}
