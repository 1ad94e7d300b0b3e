use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the simulator and optimizer.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its contract.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Only the 7-cell wrap-around layout is supported.
    #[error("unsupported layout with {cells} cells (only 7 cells are supported)")]
    UnsupportedLayout { cells: usize },

    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A factorization or inversion failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Devices whose demand can never be met, even alone in a cluster.
    #[error("unschedulable devices: {devices:?}")]
    Unschedulable { devices: Vec<usize> },

    /// The coloring model has no solution within the palette.
    #[error("coloring infeasible with {palette} colors")]
    Infeasible { palette: usize },

    /// A malformed input file.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }

    /// True for errors caused by user configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::UnsupportedLayout { .. })
    }
}
