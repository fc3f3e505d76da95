use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A truncated state space would exceed the configured size budget.
    #[error("state space needs {required} states but the budget is {budget}; raise the budget or lower the cap")]
    Capacity { required: usize, budget: usize },

    /// An iterative linear solve stopped above tolerance.
    #[error("{what} did not converge: residual {residual:.3e} above tolerance {tol:.3e}")]
    Convergence {
        what: &'static str,
        residual: f64,
        tol: f64,
    },

    /// A first-passage solve was requested on a chain with no absorption.
    #[error("birth-death chain has no absorbing rate anywhere below the cap")]
    NoAbsorption,

    /// File or serialization problem while emitting results.
    #[error("output error: {0}")]
    Output(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Output(e.to_string())
    }
}
