use std::fmt;
use std::path::Path;

/// Machine-parsable prefix of every failure line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    Usage,
    Config,
    MissingArtifact,
    MissingMetadata,
    BadInput,
    UnreadableAudio,
    ConfigMismatch,
    ModelFile,
    Train,
    Quantize,
    Metrics,
    Io,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Usage => "E_USAGE",
            ErrorCode::Config => "E_CONFIG",
            ErrorCode::MissingArtifact => "E_MISSING_ARTIFACT",
            ErrorCode::MissingMetadata => "E_MISSING_METADATA",
            ErrorCode::BadInput => "E_BAD_INPUT",
            ErrorCode::UnreadableAudio => "E_UNREADABLE_AUDIO",
            ErrorCode::ConfigMismatch => "E_CONFIG_MISMATCH",
            ErrorCode::ModelFile => "E_MODEL_FILE",
            ErrorCode::Train => "E_TRAIN",
            ErrorCode::Quantize => "E_QUANTIZE",
            ErrorCode::Metrics => "E_METRICS",
            ErrorCode::Io => "E_IO",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: ErrorCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn missing(path: &Path, produced_by: &str) -> Self {
        Self::new(
            ErrorCode::MissingArtifact,
            format!("expected {} (run `esad {produced_by}` first)", path.display()),
        )
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new(ErrorCode::Io, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    /// Always one line: `E_CODE: message`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat: Vec<&str> = self.message.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        write!(f, "{}: {}", self.code.as_str(), flat.join("; "))
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attaches an error code to any displayable error.
pub trait Context<T> {
    fn code(self, code: ErrorCode) -> Result<T>;
    fn with_code(self, code: ErrorCode, what: &str) -> Result<T>;
}

impl<T, E: fmt::Display> Context<T> for std::result::Result<T, E> {
    fn code(self, code: ErrorCode) -> Result<T> {
        self.map_err(|e| CliError::new(code, e.to_string()))
    }

    fn with_code(self, code: ErrorCode, what: &str) -> Result<T> {
        self.map_err(|e| CliError::new(code, format!("{what}: {e}")))
    }
}
