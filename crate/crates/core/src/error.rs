use thiserror::Error;

/// Errors produced anywhere in the imaging pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("coincident points (distance {distance:e} m) at target index {index}")]
    CoincidentPoints { index: usize, distance: f64 },

    #[error("non-positive wavelength {0}")]
    Wavelength(f64),

    #[error("PRIS schedules require unit gain, got a = {0}")]
    ModeGainMismatch(f64),

    #[error("amplification {gain} outside [1, {max}]")]
    AmplificationRange { gain: f64, max: f64 },

    #[error("schedule violation at (k={k}, t={t}, m={m}): |w|^2 = {power}")]
    ScheduleViolation {
        k: usize,
        t: usize,
        m: usize,
        power: f64,
    },

    #[error("sensing matrix of {rows}x{cols} = {entries} entries exceeds budget of {budget}")]
    MemoryBudget {
        rows: usize,
        cols: usize,
        entries: usize,
        budget: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank-deficient support: dependent columns {columns:?} (condition estimate {condition:e})")]
    RankDeficient { columns: Vec<usize>, condition: f64 },

    #[error("sparsity {sparsity} exceeds column count {columns}")]
    Sparsity { sparsity: usize, columns: usize },

    #[error("operation requires {expected} mode")]
    Mode { expected: &'static str },

    #[error("transmit vector norm {0} is not unit")]
    TransmitNorm(f64),

    #[error("power matching infeasible: PRIS transmit power would be {0} W")]
    InfeasibleMatching(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("toml parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short stable identifier used in the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::IndexOutOfRange { .. } => "index",
            Error::CoincidentPoints { .. } => "domain",
            Error::Wavelength(_) => "domain",
            Error::ModeGainMismatch(_) => "mode_gain",
            Error::AmplificationRange { .. } => "amplification",
            Error::ScheduleViolation { .. } => "schedule",
            Error::MemoryBudget { .. } => "memory",
            Error::Dimension(_) => "dimension",
            Error::RankDeficient { .. } => "rank",
            Error::Sparsity { .. } => "sparsity",
            Error::Mode { .. } => "mode",
            Error::TransmitNorm(_) => "transmit_norm",
            Error::InfeasibleMatching(_) => "infeasible",
            Error::Empty(_) => "empty",
            Error::UnknownExperiment(_) => "unknown_experiment",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Toml(_) => "toml",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
