//! Error type shared by every stage.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or inconsistent inputs detected before computation.
    #[error("configuration error: {0}")]
    Config(String),

    /// The time stepper produced non-finite values.
    #[error("solver diverged: first non-finite output at time index {time_index}")]
    Divergence { time_index: usize },

    /// A linear system could not be solved.
    #[error("singular system: {0}")]
    Singular(String),

    /// An iterative solver hit its iteration cap.
    #[error("{what} did not converge after {iterations} iterations (gap {gap:e})")]
    Convergence { what: &'static str, iterations: usize, gap: f64 },

    /// Exhaustive enumeration would exceed the combinatorial budget.
    #[error("combinatorial budget exceeded: {count} candidates > {budget}")]
    Budget { count: u128, budget: u128 },

    /// Input carries no usable information (constant sample, zero norm, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Library assembly produced identically zero columns.
    #[error("library columns are identically zero: {}", .0.join(", "))]
    ZeroColumns(Vec<String>),

    /// Covariance estimation failed.
    #[error("covariance estimation failed: {0}")]
    Estimation(String),

    /// Knockoff sampling failed.
    #[error("knockoff sampling failed: {0}")]
    Sampling(String),

    /// A caller broke an API contract (e.g. mixed e-value base levels).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Screening could not reach the minimum support size.
    #[error("empty discovery: {0}")]
    EmptyDiscovery(String),

    /// A decision-matrix criterion evaluated to a non-finite value.
    #[error("criterion `{criterion}` is non-finite for alternative {alternative}")]
    NonFinite { alternative: String, criterion: &'static str },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    /// Error raised inside a named pipeline stage.
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach a stage name to an error.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage { stage, source: Box::new(other) },
        }
    }

    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 configuration, 3 numerical, 4 empty discovery.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::Contract(_) | Error::Json(_) | Error::Csv(_) | Error::Io(_) => 2,
            Error::EmptyDiscovery(_) => 4,
            _ => 3,
        }
    }
}

/// Extension for tagging results with a stage name.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_root_cause() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::EmptyDiscovery("x".into()).exit_code(), 4);
        assert_eq!(Error::Singular("x".into()).exit_code(), 3);
        let wrapped = Error::EmptyDiscovery("none".into()).in_stage("screen");
        assert_eq!(wrapped.exit_code(), 4);
        assert!(wrapped.to_string().starts_with("stage `screen`"));
    }
}
