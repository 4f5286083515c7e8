use thiserror::Error;

use crate::cost::ConstraintReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model schema error: {0}")]
    Schema(String),

    #[error("layer `{layer}`: {message}")]
    InvalidLayer { layer: String, message: String },

    #[error("duplicate layer id `{0}`")]
    DuplicateId(String),

    #[error("edge {producer} -> {consumer}: unknown layer `{missing}`")]
    UnknownLayer {
        producer: String,
        consumer: String,
        missing: String,
    },

    #[error(
        "shape mismatch on edge {producer} -> {consumer}: producer ofm {produced} != consumer ifm {expected}"
    )]
    ShapeMismatch {
        producer: String,
        consumer: String,
        produced: String,
        expected: String,
    },

    #[error("graph contains a cycle through layer `{0}`")]
    Cycle(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid tiling: {0}")]
    InvalidTiling(String),

    #[error("fusion {kind} is not admissible for ({first}, {second})")]
    InadmissibleKind {
        kind: String,
        first: String,
        second: String,
    },

    #[error("constraint violation: {0}")]
    Constraint(ConstraintReport),

    #[error("gpu spec error: {0}")]
    Gpu(String),

    #[error("missing roofline peaks on gpu `{0}`")]
    MissingRoofline(String),

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::InvalidLayer { .. } => "invalid_layer",
            Error::DuplicateId(_) => "duplicate_id",
            Error::UnknownLayer { .. } => "unknown_layer",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Cycle(_) => "cycle",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidTiling(_) => "invalid_tiling",
            Error::InadmissibleKind { .. } => "inadmissible_kind",
            Error::Constraint(_) => "constraint_violation",
            Error::Gpu(_) => "gpu_spec",
            Error::MissingRoofline(_) => "missing_roofline",
            Error::UnknownStrategy(_) => "unknown_strategy",
            Error::Internal(_) => "internal",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }

    /// Process exit status for this error: 2 for unreadable or malformed
    /// inputs, 3 for broken internal invariants, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_)
            | Error::InvalidLayer { .. }
            | Error::DuplicateId(_)
            | Error::UnknownLayer { .. }
            | Error::ShapeMismatch { .. }
            | Error::Cycle(_)
            | Error::Gpu(_)
            | Error::Json(_)
            | Error::Io(_) => 2,
            Error::Internal(_) => 3,
            _ => 1,
        }
    }
}
