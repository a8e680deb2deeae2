use ftg_core::FtgError;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    BadRequest,
    NotFound,
    Infeasible,
    NoCheckpoint,
    Io,
    Internal,
}

/// Error with an HTTP status, a CLI exit code and a JSON body.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ServiceError {
    #[serde(rename = "code")]
    pub kind: ErrorKind,
    pub message: String,
    /// Offending time steps for infeasible rhythm constraints.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<usize>,
}

impl ServiceError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), columns: Vec::new() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, message)
    }

    /// Prefixes the message with a file path.
    pub fn with_context(mut self, path: &std::path::Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    pub fn status(&self) -> u16 {
        match self.kind {
            ErrorKind::BadRequest => 400,
            ErrorKind::NotFound => 404,
            ErrorKind::Infeasible => 409,
            ErrorKind::NoCheckpoint => 503,
            ErrorKind::Io | ErrorKind::Internal => 500,
        }
    }

    /// Process exit code for the CLI; 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::BadRequest => 3,
            ErrorKind::Infeasible => 4,
            ErrorKind::NotFound | ErrorKind::NoCheckpoint => 5,
            ErrorKind::Io => 6,
            ErrorKind::Internal => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self })
    }
}

impl std::fmt::Display for ServiceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ServiceError {}

impl From<FtgError> for ServiceError {
    fn from(e: FtgError) -> Self {
        let message = e.to_string();
        match e {
            FtgError::Infeasible { columns, .. } => Self { kind: ErrorKind::Infeasible, message, columns },
            FtgError::Io(_) => Self::new(ErrorKind::Io, message),
            FtgError::NonFinite { .. } | FtgError::Schedule(_) => Self::internal(message),
            _ => Self::bad_request(message),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        Self::new(ErrorKind::Io, e.to_string())
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        Self::bad_request(e.to_string())
    }
}
