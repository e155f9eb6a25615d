use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value at layer {layer}")]
    NonFinite { layer: usize },

    #[error("non-finite function value at coordinate {coordinate}")]
    NonFiniteProbe { coordinate: usize },

    /// A matrix that must be symmetric positive definite failed to factor.
    #[error("factorization of {what} at stage {stage} failed (smallest eigenvalue {min_eigenvalue:e})")]
    Factorization {
        what: &'static str,
        stage: usize,
        min_eigenvalue: f64,
    },

    #[error("initial point is infeasible: max residual {0:e}")]
    InfeasibleStart(f64),

    #[error("outer iteration {iteration}: {source}")]
    Outer {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dense oracle refused: {0}")]
    Oracle(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
