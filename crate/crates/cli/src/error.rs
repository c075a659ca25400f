use std::fmt;

use mixbound::Error as CoreError;

/// Exit code for malformed or unreadable input.
pub const EXIT_SCHEMA: i32 = 2;
/// Exit code when exact enumeration would exceed `--max-exact-states`.
pub const EXIT_CAP: i32 = 3;
/// Exit code for numeric validation failures.
pub const EXIT_NUMERIC: i32 = 4;
/// Exit code for a `verify` run that found a failing property.
pub const EXIT_VERIFY_FAILED: i32 = 1;

/// A failure with a stable exit code, rendered as one line of
/// `key=value` pairs: `error code=4 kind=not-stochastic kernel=2 column=b sum=0.98`.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub fields: Vec<(&'static str, String)>,
}

impl CliError {
    pub fn new(code: i32, kind: &'static str) -> Self {
        Self { code, kind, fields: Vec::new() }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self::new(EXIT_SCHEMA, "schema").with("message", message)
    }

    pub fn with(mut self, key: &'static str, value: impl Into<String>) -> Self {
        self.fields.push((key, value.into()));
        self
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str())
    }
}

fn render_value(v: &str) -> String {
    let plain = !v.is_empty() && v.chars().all(|c| !c.is_whitespace() && c != '"' && c != '=');
    if plain {
        v.to_string()
    } else {
        serde_json::to_string(v).expect("string serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error code={} kind={}", self.code, self.kind)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={}", render_value(v))?;
        }
        Ok(())
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let message = e.to_string();
        let err = match e {
            CoreError::CapExceeded { required, cap } => {
                return CliError::new(EXIT_CAP, "cap-exceeded")
                    .with("required", required.to_string())
                    .with("cap", cap.to_string())
            }
            CoreError::Alphabet(_)
            | CoreError::DimensionMismatch { .. }
            | CoreError::LengthMismatch { .. }
            | CoreError::SymbolOutOfRange { .. }
            | CoreError::BadIndex(_)
            | CoreError::Topology(_) => CliError::new(EXIT_SCHEMA, "schema"),
            CoreError::NegativeEntry { .. } => CliError::new(EXIT_NUMERIC, "negative-entry"),
            CoreError::NotStochastic { .. } | CoreError::InvalidDistribution(_) => {
                CliError::new(EXIT_NUMERIC, "not-stochastic")
            }
            CoreError::NonFinite { .. } => CliError::new(EXIT_NUMERIC, "non-finite"),
            CoreError::DegeneratePotential { .. } | CoreError::ZeroPartition | CoreError::ZeroConditioning { .. } => {
                CliError::new(EXIT_NUMERIC, "degenerate-potential")
            }
            CoreError::Underflow(_) => CliError::new(EXIT_NUMERIC, "underflow"),
            CoreError::Hypothesis(_) | CoreError::Premise { .. } => CliError::new(EXIT_NUMERIC, "hypothesis"),
            _ => CliError::new(EXIT_NUMERIC, "numeric"),
        };
        err.with("message", message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(EXIT_SCHEMA, "io").with("message", e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_parsable_line() {
        let e = CliError::new(EXIT_NUMERIC, "not-stochastic")
            .with("kernel", "2")
            .with("column", "b")
            .with("message", "sums to 0.98");
        assert_eq!(e.to_string(), "error code=4 kind=not-stochastic kernel=2 column=b message=\"sums to 0.98\"");
        assert_eq!(e.field("column"), Some("b"));
    }

    #[test]
    fn cap_errors_map_to_code_three() {
        let e: CliError = CoreError::CapExceeded { required: 10, cap: 5 }.into();
        assert_eq!(e.code, EXIT_CAP);
        assert_eq!(e.to_string(), "error code=3 kind=cap-exceeded required=10 cap=5");
    }
}
