//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A caller violated an operation precondition (stale cache, bad factor, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Invalid configuration value or an infeasible setting.
    #[error("configuration error: {0}")]
    Config(String),

    /// Class label outside {1..K}.
    #[error("label error: {0}")]
    Label(String),

    /// Empty or otherwise unusable metric/detector input.
    #[error("input error: {0}")]
    Input(String),

    /// Operation called on an object in the wrong state (empty bank, zero-count voter).
    #[error("state error: {0}")]
    State(String),

    /// Malformed binary file; `offset` is the byte position of the violation.
    #[error("format error at byte {offset}: {msg}")]
    Format { msg: String, offset: u64 },

    /// Paired files disagree (e.g. image/label counts).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// File shorter than its header promises.
    #[error("length error: {0}")]
    Length(String),

    /// A Monte-Carlo probe could not collect enough in-ball samples.
    #[error("insufficient samples: achieved {achieved}, required {required}")]
    InsufficientSamples { achieved: usize, required: usize },

    /// Training produced a non-finite loss and aborted.
    #[error("numeric abort: non-finite loss at epoch {epoch}, iteration {iteration} (lr={lr:e}, w={w})")]
    NumericAbort {
        epoch: usize,
        iteration: usize,
        lr: f64,
        w: f64,
    },

    /// Two runs handed to a comparison report were not produced by matched configs.
    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
