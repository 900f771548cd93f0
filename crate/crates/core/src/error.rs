use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch{}: expected {expected}, found {found}", fmt_ctx(.context))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("parse error{}: {message}", fmt_ctx(.location))]
    Parse { location: String, message: String },

    #[error("no entries in {0}")]
    EmptyFile(PathBuf),

    #[error("invariant violated at {path}: {message}")]
    InvariantViolation { path: String, message: String },

    #[error("resampling requires both classes; {0} class is empty")]
    SingleClass(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("chronological split needs at least 10 distinct bugs, found {0}")]
    TooFewBugs(usize),

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("dangling reference: {0}")]
    DanglingReference(String),

    #[error("matrix grids differ: {0}")]
    GridMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_ctx(ctx: &str) -> String {
    if ctx.is_empty() {
        String::new()
    } else {
        format!(" ({ctx})")
    }
}

impl Error {
    pub(crate) fn dim(expected: usize, found: usize, context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected,
            found,
            context: context.into(),
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a short description of what was being done.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips [`Error::Context`] layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
