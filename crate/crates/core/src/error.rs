use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {shapes}")]
    Shape { op: &'static str, shapes: String },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("unbound input `{0}`")]
    UnboundInput(String),

    #[error("non-finite state at step {step}, component {component}")]
    NonFinite { step: usize, component: usize },

    #[error("invalid time grid: {0}")]
    TimeGrid(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("unknown component `{name}` in block {block}; valid names: {valid}")]
    UnknownComponent {
        name: String,
        block: usize,
        valid: String,
    },

    #[error("malformed group code: {0}")]
    GroupCode(String),

    #[error("row {row}, column `{column}`: {msg}")]
    Schema {
        row: usize,
        column: String,
        msg: String,
    },

    #[error("held-out device `{device}` is not identifiable: {msg}")]
    Identifiability { device: String, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, shapes: &[&[usize]]) -> Self {
        let shapes = shapes
            .iter()
            .map(|s| format!("{s:?}"))
            .collect::<Vec<_>>()
            .join(" vs ");
        Error::Shape { op, shapes }
    }

    /// True for failures caused by numerics rather than by user input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Numerical(_))
    }
}
