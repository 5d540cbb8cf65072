use bwslex::quality::QualityError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no session with id {0}")]
    UnknownSession(String),
    #[error("session {0} is locked out")]
    SessionLocked(String),
    #[error("tuple {0} is not in the design")]
    UnknownTuple(usize),
    #[error("tuple {tuple} is not the one currently served to session {session}")]
    TupleNotServed { session: String, tuple: usize },
    #[error("invalid choice: {0}")]
    InvalidChoice(String),
    #[error("this service annotates `{served}`, not `{requested}`")]
    UnknownDimension { requested: String, served: String },
    #[error("no instruction template for dimension `{0}`")]
    MissingTemplate(String),
    #[error("nonce {0} was already used for a different response")]
    NonceReuse(String),
    #[error("invalid template {name}: {message}")]
    Template { name: String, message: String },
    #[error("invalid gold question: {0}")]
    Gold(#[from] QualityError),
    #[error("log line {line}: {message}")]
    Replay { line: usize, message: String },
    #[error("log i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Machine-readable code for HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownSession(_) => "unknown_session",
            Self::SessionLocked(_) => "session_locked",
            Self::UnknownTuple(_) => "unknown_tuple",
            Self::TupleNotServed { .. } => "tuple_not_served",
            Self::InvalidChoice(_) => "invalid_choice",
            Self::UnknownDimension { .. } => "unknown_dimension",
            Self::MissingTemplate(_) => "missing_template",
            Self::NonceReuse(_) => "nonce_reuse",
            Self::Template { .. } => "invalid_template",
            Self::Gold(_) => "invalid_gold",
            Self::Replay { .. } => "log_replay",
            Self::Io(_) => "log_io",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            Self::UnknownSession(_) | Self::UnknownTuple(_) | Self::UnknownDimension { .. } | Self::MissingTemplate(_) => 404,
            Self::SessionLocked(_) => 403,
            Self::TupleNotServed { .. } | Self::NonceReuse(_) => 409,
            Self::InvalidChoice(_) => 422,
            Self::Template { .. } | Self::Gold(_) | Self::Replay { .. } | Self::Io(_) => 500,
        }
    }
}
