use std::path::Path;

/// Exit status: 0 success, 1 internal error, 2 usage or validation error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(tooldag::Error),
    Internal(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Internal(format!("io error on {}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        use tooldag::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
                E::Io { .. } | E::Json(_) | E::Csv(_) => 1,
                _ => 2,
            },
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<tooldag::Error> for CliError {
    fn from(e: tooldag::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(format!("csv: {e}"))
    }
}
