use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid utterance key {0:?}: must be non-empty without space, NUL or newline")]
    InvalidKey(String),
    #[error("matrix shape {rows}x{cols} does not match data length {len}")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("utterance {key}: {feats} feature frames but {labels} alignment labels")]
    FrameCountMismatch { key: String, feats: usize, labels: usize },
    #[error("utterance {key}: key mismatch with alignment {other}")]
    KeyMismatch { key: String, other: String },
    #[error("utterance {key}: label {label} at frame {frame} outside [0, {num_pdfs})")]
    LabelOutOfRange { key: String, frame: usize, label: i32, num_pdfs: usize },
    #[error("no frames to estimate priors from")]
    NoFrames,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("symbol table: {0}")]
    Symbols(String),
    #[error("graph validation failed: {}", .0.join("; "))]
    Graph(Vec<String>),
    #[error("beam collapse: no active tokens at frame {frame}")]
    BeamCollapse { frame: usize },
    #[error("improving epsilon cycle at frame {frame}")]
    EpsilonCycle { frame: usize },
    #[error("empty lattice")]
    EmptyLattice,
    #[error("hypothesis key {0} has no reference transcript")]
    UnknownHypothesis(String),
    #[error("duplicate transcript key {0}")]
    DuplicateTranscript(String),
}
