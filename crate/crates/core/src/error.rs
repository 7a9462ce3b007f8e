use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has no rows or no columns")]
    EmptyMatrix,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("m = {m} is outside 1..={dim}")]
    MOutOfRange { m: usize, dim: usize },
    #[error("r = {r} is outside 1..={max}")]
    ROutOfRange { r: usize, max: usize },
    #[error("K = {k} is out of range (ranking length {len})")]
    KOutOfRange { k: usize, len: usize },
    #[error("D = {dim} cannot host subsets of size {m1} and {m2}")]
    DOutOfRange { m1: usize, m2: usize, dim: usize },
    #[error("iteration {iteration} extracted no directions (rank-0 weight matrix)")]
    NoProgress { iteration: usize },
    #[error("low-confidence selection is empty (tau = {tau})")]
    EmptySelection { tau: f64 },
    #[error("group {0} has no samples")]
    EmptyGroup(String),
    #[error("query {query} has an empty ranking")]
    EmptyRanking { query: usize },
    #[error("profession {profession:?} has {found} records, expected {expected}")]
    IncompleteProfession {
        profession: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error lines and exit codes.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyMatrix => "EmptyMatrix",
            Error::NonFinite { .. } => "NonFinite",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyInput(_) => "EmptyInput",
            Error::DegenerateLabels(_) => "DegenerateLabels",
            Error::MOutOfRange { .. } => "MOutOfRange",
            Error::ROutOfRange { .. } => "ROutOfRange",
            Error::KOutOfRange { .. } => "KOutOfRange",
            Error::DOutOfRange { .. } => "DOutOfRange",
            Error::NoProgress { .. } => "NoProgress",
            Error::EmptySelection { .. } => "EmptySelection",
            Error::EmptyGroup(_) => "EmptyGroup",
            Error::EmptyRanking { .. } => "EmptyRanking",
            Error::IncompleteProfession { .. } => "IncompleteProfession",
            Error::SpecInvalid(_) => "SpecInvalid",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Format { .. } => "Format",
            Error::Io(_) => "Io",
        }
    }

    pub(crate) fn dims(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch { expected, found }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
