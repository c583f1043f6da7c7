use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A document did not match its schema. `field` is a dotted path to the
    /// offending entry, e.g. `fingers[1].joints[0].axis`.
    #[error("invalid document at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("unknown {kind} `{id}` referenced by {referrer}")]
    Linkage {
        kind: &'static str,
        id: String,
        referrer: String,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("missing value for joint `{joint}` in {what}")]
    MissingJoint { joint: String, what: &'static str },

    #[error("Hessian is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grasp `{grasp}` is infeasible: {reason}")]
    Infeasible { grasp: String, reason: String },

    #[error("no parameter combination is feasible for every grasp; blocking grasps: {}", .blocking.join(", "))]
    NoFeasibleCombination { blocking: Vec<String> },

    #[error("finger `{finger}` has no one-dimensional manifold: {reason}")]
    UnsupportedManifold { finger: String, reason: String },
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}
