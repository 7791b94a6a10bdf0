use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite {what} at step {index} (t = {time})")]
    Blowup {
        what: &'static str,
        index: usize,
        time: f64,
    },

    #[error("observational Gram matrix is not positive definite at step {index} (t = {time})")]
    SingularGram { index: usize, time: f64 },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("reference covariance of the relative entropy is singular")]
    DegenerateReference,

    #[error("smoother bank is at step {bank}, but the update is for step {update}")]
    BankIndex { bank: usize, update: usize },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error(
        "observational noise couples effect and neutralized coordinates ({a} vs {b}); \
         the exact limit is order-dependent, use large-noise conditioning instead"
    )]
    CoupledConditioning { a: usize, b: usize },

    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
