use std::path::PathBuf;

use serde_json::json;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Pipeline(#[from] decorrel::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_DATA => "data",
            _ => "numerical",
        }
    }

    pub fn exit_code(&self) -> i32 {
        use decorrel::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Pipeline(e) => match e.root() {
                E::TooFewPoints { .. } => EXIT_DATA,
                E::InvalidNoise(_) | E::InvalidGrid(_) | E::InvalidParameter(_) => EXIT_USAGE,
                _ => EXIT_NUMERICAL,
            },
        }
    }

    /// Single-line JSON for the error stream.
    pub fn to_json(&self) -> String {
        let mut err = json!({
            "kind": self.kind(),
            "code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Pipeline(decorrel::Error::Replicate { index, .. }) = self {
            err["replicate"] = json!(index);
        }
        json!({ "error": err }).to_string()
    }
}

pub type CliResult<T> = Result<T, CliError>;
