use thiserror::Error;

pub type Result<T> = std::result::Result<T, QecError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QecError {
    /// Two objects that must share a dimension or shape do not.
    #[error("{what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("operation requires dimension {expected}, got {found}")]
    UnsupportedDimension { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("duplicate class label `{0}`")]
    DuplicateClass(String),

    #[error("class `{0}` has no members")]
    EmptyClass(String),

    #[error("objective became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },
}

impl QecError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        QecError::Invalid(msg.into())
    }
}
