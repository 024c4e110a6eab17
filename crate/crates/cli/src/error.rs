use std::path::Path;

use qdev_core::Error;
use serde_json::{json, Value};

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

/// Reported on stderr as `{code, message, context}`.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub context: Value,
    pub exit: u8,
}

impl CliError {
    pub fn validation(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into(), context: Value::Null, exit: EXIT_VALIDATION }
    }

    pub fn numerical(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into(), context: Value::Null, exit: EXIT_NUMERICAL }
    }

    pub fn with_context(mut self, context: Value) -> Self {
        self.context = context;
        self
    }

    pub fn io(e: impl std::fmt::Display) -> Self {
        Self::validation("io", e.to_string())
    }

    pub fn unreadable(path: &Path, e: std::io::Error) -> Self {
        Self::validation("unreadable_input", format!("cannot read {}: {e}", path.display()))
            .with_context(json!({ "path": path.display().to_string() }))
    }

    pub fn unwritable(path: &Path, e: std::io::Error) -> Self {
        Self::validation("unwritable_destination", format!("cannot write {}: {e}", path.display()))
            .with_context(json!({ "path": path.display().to_string() }))
    }

    pub fn to_json(&self) -> Value {
        json!({ "code": self.code, "message": self.message, "context": self.context })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, context) = match &e {
            Error::DimensionMismatch { expected, found } => {
                ("dimension_mismatch", json!({ "expected": expected, "found": found }))
            }
            Error::NotHermitian(dev) => ("not_hermitian", json!({ "deviation": dev })),
            Error::InvalidState(_) => ("invalid_state", Value::Null),
            Error::NotFaithful(min) => ("not_faithful", json!({ "min_eigenvalue": min })),
            Error::NoFaithfulStationaryState => ("no_faithful_stationary_state", Value::Null),
            Error::NotKmsSymmetric(dev) => ("not_kms_symmetric", json!({ "deviation": dev })),
            Error::AlignmentFailed(res) => ("alignment_failed", json!({ "residual": res })),
            Error::NoBohrFrequencies => ("no_bohr_frequencies", Value::Null),
            Error::DimensionGuard { dim, guard } => ("dimension_guard", json!({ "dim": dim, "guard": guard })),
            Error::NegativeThreshold { index, value } => {
                ("negative_threshold", json!({ "index": index, "value": value }))
            }
            Error::InvalidInput(_) => ("invalid_input", Value::Null),
            Error::MissingInput(_) => ("missing_input", Value::Null),
            Error::HypothesisNotAttested(_) => ("hypothesis_not_attested", Value::Null),
            Error::UnboundedDirection(_) => ("unbounded_direction", Value::Null),
            Error::AllPathsInvalid => ("all_paths_invalid", Value::Null),
            Error::Numerical(_) => ("numerical", Value::Null),
        };
        let exit = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_VALIDATION };
        Self { code: code.into(), message, context, exit }
    }
}
