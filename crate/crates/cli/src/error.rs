//! One-line error reporting and the exit-code table.
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | internal error |
//! | 2 | usage (bad flags, missing seed) |
//! | 3 | I/O |
//! | 4 | malformed input file or schema violation |
//! | 5 | invalid config or synth spec |
//! | 10 | DimensionMismatch |
//! | 11 | DegenerateLabels |
//! | 12 | EmptyGroup |
//! | 13 | EmptySelection |
//! | 14 | MOutOfRange, ROutOfRange, KOutOfRange, DOutOfRange |
//! | 15 | NoProgress |
//! | 16 | EmptyInput, EmptyMatrix, EmptyRanking, IncompleteProfession |
//! | 17 | InvalidArgument, NonFinite |

use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    Core(spd_core::Error),
    Usage(String),
    Config(String),
    Schema { path: String, line: usize, detail: String },
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn schema(path: &Path, line: usize, detail: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.display().to_string(),
            line,
            detail: detail.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Usage(_) => "Usage",
            CliError::Config(_) => "Config",
            CliError::Schema { .. } => "Schema",
            CliError::Io { .. } => "Io",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.code() {
            "Usage" => 2,
            "Io" => 3,
            "Format" | "Schema" => 4,
            "Config" | "SpecInvalid" => 5,
            "DimensionMismatch" => 10,
            "DegenerateLabels" => 11,
            "EmptyGroup" => 12,
            "EmptySelection" => 13,
            "MOutOfRange" | "ROutOfRange" | "KOutOfRange" | "DOutOfRange" => 14,
            "NoProgress" => 15,
            "EmptyInput" | "EmptyMatrix" | "EmptyRanking" | "IncompleteProfession" => 16,
            "InvalidArgument" | "NonFinite" => 17,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Config(m) => f.write_str(m),
            CliError::Schema { path, line, detail } => write!(f, "{path}:{line}: {detail}"),
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
        }
    }
}

impl From<spd_core::Error> for CliError {
    fn from(e: spd_core::Error) -> Self {
        match e {
            spd_core::Error::Io(source) => CliError::Io {
                path: String::from("<file>"),
                source,
            },
            other => CliError::Core(other),
        }
    }
}

/// Attaches the path to I/O failures raised inside core readers.
pub trait WithPath<T> {
    fn at(self, path: &Path) -> Result<T, CliError>;
}

impl<T> WithPath<T> for spd_core::Result<T> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|e| match e {
            spd_core::Error::Io(source) => CliError::io(path, source),
            spd_core::Error::Format { what, detail } => CliError::Core(spd_core::Error::Format {
                what,
                detail: format!("{}: {detail}", path.display()),
            }),
            other => CliError::Core(other),
        })
    }
}
