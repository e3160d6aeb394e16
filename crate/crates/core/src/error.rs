use thiserror::Error;

/// Errors raised by the simulator. Divergent fixed-point iterations are
/// not errors; they are reported through the solver's result type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("time step too large: dt·max|u|² = {product:.3e} exceeds 0.05, try dt ≤ {suggested:.3e}")]
    Stability { product: f64, suggested: f64 },

    #[error("non-finite value at step {step}")]
    NotFinite { step: usize },

    #[error("unitarity drift {drift:.3e} at node {node} for degree {n}, try a smaller dt")]
    Unitarity { n: usize, node: usize, drift: f64 },

    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
