use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad agent index, mismatched vector length and similar caller mistakes.
    #[error("domain error: {0}")]
    Domain(String),

    /// A trimmed mean was asked for with fewer than `2 * budget + 1` neighbor values.
    #[error("trim precondition violated: {neighbors} neighbor values but budget {budget} needs at least {required}")]
    TrimPrecondition {
        neighbors: usize,
        budget: usize,
        required: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    /// A receiver is missing the message of one of its in-neighbors.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("equilibrium oracle did not converge after {iterations} iterations (best residual {best_residual:e})")]
    OracleDiverged {
        iterations: usize,
        best_residual: f64,
    },

    #[error("undefined slope: {0}")]
    DegenerateSeries(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_round(self, round: usize) -> Self {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }

    /// Strips any round wrapper.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Domain(format!(
            "{what}: expected length {want}, got {got}"
        )));
    }
    Ok(())
}
