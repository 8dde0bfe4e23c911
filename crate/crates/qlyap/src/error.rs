//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how a front end should report them: configuration
/// problems, numerical aborts (boundary loss, overflow), and file-integrity
/// failures. [`Error::exit_code`] maps each group to a process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("n_points must be a power of two >= 16, got {0}")]
    NonPowerOfTwoGrid(usize),

    #[error("degenerate interval: x_min = {x_min}, x_max = {x_max}")]
    DegenerateInterval { x_min: f64, x_max: f64 },

    #[error("wave packet truncated by grid boundary: edge probability mass {density:.3e} exceeds {limit:.1e}")]
    BoundaryTruncation { density: f64, limit: f64 },

    #[error("probability density reached the grid boundary at t = {t:.6}: edge mass {density:.3e} exceeds {limit:.1e}")]
    BoundaryViolation { t: f64, density: f64, limit: f64 },

    #[error("measurement strength k must be >= 0, got {0}")]
    NegativeMeasurementStrength(f64),

    #[error("measurement strength k must be > 0 for a measurement record")]
    RecordRequiresMeasurement,

    #[error("record step {step} out of range (record has {len} steps)")]
    RecordIndexOutOfRange { step: usize, len: usize },

    #[error("record/config mismatch on {field}: record has {record}, config has {config}")]
    RecordMismatch {
        field: &'static str,
        record: f64,
        config: f64,
    },

    #[error("record too short: {available} steps available, {requested} requested")]
    RecordTooShort { available: usize, requested: usize },

    #[error("trajectory separation {d:.3e} exceeded the tangent-regime margin {margin:.3e} at t = {t:.6}")]
    SeparationOverflow { d: f64, margin: f64, t: f64 },

    #[error("tangent vector overflowed between renormalizations at t = {t:.6}")]
    TangentOverflow { t: f64 },

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("config conflict: `{key}` is set both in the config file and on the command line")]
    ConfigConflict { key: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("trajectory {id} failed: {source}")]
    Trajectory {
        id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("bad magic in {path}: expected {expected}")]
    BadMagic { path: String, expected: &'static str },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    Version {
        path: String,
        found: u32,
        expected: u32,
    },

    #[error("checksum mismatch in {path}: file is corrupted")]
    Corrupted { path: String },

    #[error("snapshot was produced by a different configuration (hash mismatch)")]
    ConfigHashMismatch,

    #[error("trajectory shorter than requested: needs {needed} steps, ran {ran}")]
    TrajectoryTooShort { needed: u64, ran: u64 },

    #[error("histogram bins do not cover the grid support [{lo}, {hi}]")]
    BinsDoNotCover { lo: f64, hi: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("single-well potential: A = {0} <= 0 has no double-well minima")]
    SingleWell(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical abort, 4 I/O integrity.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config { .. } | ConfigConflict { .. } | ConfigParse(_) | NonPowerOfTwoGrid(_)
            | DegenerateInterval { .. } | NegativeMeasurementStrength(_)
            | RecordRequiresMeasurement | RecordMismatch { .. } | SingleWell(_)
            | BinsDoNotCover { .. } | EmptyInput(_) => 2,
            BoundaryTruncation { .. } | BoundaryViolation { .. } | SeparationOverflow { .. }
            | TangentOverflow { .. } | TrajectoryTooShort { .. } | RecordTooShort { .. }
            | RecordIndexOutOfRange { .. } => 3,
            Trajectory { source, .. } => source.exit_code(),
            BadMagic { .. } | Version { .. } | Corrupted { .. } | ConfigHashMismatch | Io(_) => 4,
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
