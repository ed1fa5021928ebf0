use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectral grid: {0}")]
    InvalidGrid(String),

    #[error("spectral grids differ; resample onto a common grid first ({context})")]
    GridMismatch { context: String },

    /// A domain type's invariant was violated; `invariant` names the rule.
    #[error("invariant `{invariant}` violated: {detail}")]
    Invariant { invariant: &'static str, detail: String },

    /// A precondition of an operation does not hold; `precondition` names it.
    #[error("precondition `{precondition}` not met: {detail}")]
    Precondition { precondition: &'static str, detail: String },

    #[error("code {code} is outside the unsaturated range of channel {channel}")]
    SaturatedInput { code: u32, channel: usize },

    #[error("channel {channel}: every sample is saturated")]
    AllSaturated { channel: usize },

    #[error("channel {channel}: system is underdetermined ({equations} equations for {unknowns} unknowns)")]
    Underdetermined { channel: usize, equations: usize, unknowns: usize },

    #[error("measurement matrix is rank deficient (condition estimate {condition:e}); use the constrained basis estimator")]
    RankDeficient { condition: f64 },

    #[error("constrained solve is infeasible or ill-conditioned: {0}")]
    Infeasible(String),

    #[error("active-set solver did not converge after {iterations} iterations (max violation {max_violation:e}, KKT residual {kkt_residual:e})")]
    NotConverged { iterations: usize, max_violation: f64, kkt_residual: f64 },

    #[error("chromaticity undefined for an all-zero tristimulus{}", index.map(|i| format!(" (sample {i})")).unwrap_or_default())]
    UndefinedChromaticity { index: Option<usize> },

    #[error("degenerate sample geometry: {0}")]
    DegenerateGeometry(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("only {found} inner-gamut samples (need {required}); increase alpha")]
    TooFewInner { found: usize, required: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: u64, column: u64, message: String },

    #[error("{path}: schema version {found} is not supported (expected {expected})")]
    SchemaVersion { path: PathBuf, found: u64, expected: u64 },

    #[error("missing entries: {}", missing.join(", "))]
    MissingEntry { missing: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invariant(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant { invariant, detail: detail.into() }
    }

    pub(crate) fn precondition(precondition: &'static str, detail: impl Into<String>) -> Self {
        Error::Precondition { precondition, detail: detail.into() }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Stable machine-readable identifier for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::Invariant { .. } => "invariant",
            Error::Precondition { .. } => "precondition",
            Error::SaturatedInput { .. } => "saturated_input",
            Error::AllSaturated { .. } => "all_saturated",
            Error::Underdetermined { .. } => "underdetermined",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Infeasible(_) => "infeasible",
            Error::NotConverged { .. } => "not_converged",
            Error::UndefinedChromaticity { .. } => "undefined_chromaticity",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::Singular(_) => "singular",
            Error::TooFewInner { .. } => "too_few_inner",
            Error::Stage { source, .. } => source.kind(),
            Error::Parse { .. } => "parse",
            Error::SchemaVersion { .. } => "schema_version",
            Error::MissingEntry { .. } => "missing_entry",
            Error::Io { .. } => "io",
        }
    }

    /// Name of the violated rule (invariant or precondition), if any.
    pub fn rule(&self) -> Option<&'static str> {
        match self {
            Error::Invariant { invariant, .. } => Some(invariant),
            Error::Precondition { precondition, .. } => Some(precondition),
            Error::Stage { source, .. } => source.rule(),
            _ => None,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            kind: self.kind(),
            rule: self.rule(),
            stage: self.stage(),
            message: self.to_string(),
        }
    }
}

/// Serializable form of an [`Error`].
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<&'static str>,
    pub message: String,
}
