use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, lengths or index ranges that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// A parameter outside the domain of the operation (e.g. `tau <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("grid cell (lambda={lambda}, gamma={gamma}): {source}")]
    GridCell {
        lambda: f64,
        gamma: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    /// True when the error (possibly wrapped in a grid cell) is a divergence.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::Numerical(_) => true,
            Error::GridCell { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}
