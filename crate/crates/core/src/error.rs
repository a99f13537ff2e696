use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Every variant renders as a single line so the CLI can prefix it with a
/// stable tag (see [`Error::kind`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Rows count data records from 1 (headers excluded); columns from 0.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("metric: {0}")]
    Metric(String),

    #[error("training diverged at batch {batch}: {message}")]
    Training { batch: usize, message: String },

    #[error("seed {seed}: {source}")]
    Seeded {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Numeric(_) => "numeric",
            Error::State(_) => "state",
            Error::Config(_) => "config",
            Error::Precondition(_) => "precondition",
            Error::Format { .. } => "format",
            Error::Parse { .. } => "parse",
            Error::Metric(_) => "metric",
            Error::Training { .. } => "training",
            Error::Seeded { source, .. } => source.kind(),
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
