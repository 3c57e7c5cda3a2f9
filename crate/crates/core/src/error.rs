use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("scope error: {0}")]
    Scope(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("assignment error: {0}")]
    Assignment(String),

    #[error("invalid clique tree: {0}")]
    InvalidTree(String),

    #[error("clique {node} is not ready to send to {target}: missing message from {missing}")]
    NotReady {
        node: usize,
        target: usize,
        missing: usize,
    },

    /// No assignment has a finite objective. Not a failure of the engine.
    #[error("infeasible: no assignment satisfies the constraints")]
    Infeasible,

    #[error("monotonicity error: {0}")]
    Monotonicity(String),

    #[error("corrupt decision record: {0}")]
    CorruptRecord(String),

    #[error("enumeration budget exceeded: {needed} joint states > budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("length error: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    #[error("scale error: {0}")]
    Scale(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
