//! Stable process exit codes.

use synergy::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Code {
    /// Output could not be written, or an unexpected internal error.
    Internal = 1,
    /// An input file is missing, malformed, or fails its schema.
    Parse = 2,
    /// At least one grasp is not force closure.
    Closure = 3,
    /// No parameter combination is feasible for every grasp.
    Infeasible = 4,
    /// A prerequisite report or value is missing.
    MissingDependency = 5,
}

pub struct Failure {
    pub code: Code,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: Code, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// Classifies a library error raised while loading inputs or searching.
pub fn classify(e: &Error) -> Code {
    match e {
        Error::NoFeasibleCombination { .. } | Error::Infeasible { .. } => Code::Infeasible,
        Error::Schema { .. }
        | Error::Json(_)
        | Error::Linkage { .. }
        | Error::Dimension { .. }
        | Error::MissingJoint { .. }
        | Error::InvalidArgument(_)
        | Error::UnsupportedManifold { .. } => Code::Parse,
        Error::Io(_) | Error::Csv(_) | Error::NotPsd { .. } => Code::Internal,
    }
}

/// Adapts library results, attaching `context` to the message.
pub trait Classify<T> {
    fn classified(self, context: impl FnOnce() -> String) -> Outcome<T>;
}

impl<T> Classify<T> for synergy::Result<T> {
    fn classified(self, context: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| {
            let code = classify(&e);
            Failure::new(code, anyhow::Error::new(e).context(context()))
        })
    }
}

/// For output-side failures (writing reports).
pub trait Internal<T> {
    fn internal(self, context: impl FnOnce() -> String) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Internal<T> for Result<T, E> {
    fn internal(self, context: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::new(Code::Internal, e.into().context(context())))
    }
}
