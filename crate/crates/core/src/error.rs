//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{scheme} diverged at step {step}: {detail}")]
    Divergence {
        scheme: String,
        step: usize,
        detail: String,
    },

    #[error("singular tridiagonal system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error("scheme {scheme} is not applicable to {pde}")]
    IncompatibleScheme { scheme: String, pde: String },

    #[error("unstable refinement: {0}")]
    UnstableRefinement(String),

    #[error("point {x} lies outside the spline domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("degenerate energy: |E(0)| = {0:e} is below the admissible threshold")]
    DegenerateEnergy(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error (HTTP {status}): {body}")]
    Protocol { status: u16, body: String },

    #[error("backend capability missing: {0}")]
    Capability(String),

    #[error("malformed slice at rollout step {step}: {reason}")]
    MalformedSlice { step: usize, reason: String },

    #[error("replay fixture has no entry for request {0}")]
    FixtureMiss(String),

    #[error("{failed} of {total} trials failed, above the 10% abort threshold")]
    ExcessiveFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures that originate at the generation backend rather than
    /// in local computation.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::Transport(_) | Error::Protocol { .. } | Error::Capability(_) | Error::FixtureMiss(_)
        )
    }
}
