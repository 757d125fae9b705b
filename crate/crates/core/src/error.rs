use std::fmt;

use crate::model::LayerKind;

pub type Result<T> = std::result::Result<T, Error>;

/// Position of a syntax error inside a model-description document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextPos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for TextPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: TextPos, msg: String },

    #[error("shape mismatch between layer {producer} and layer {consumer}: {detail}")]
    ShapeMismatch {
        producer: String,
        consumer: String,
        detail: String,
    },

    #[error("layer {layer}: invalid dimension: {detail}")]
    InvalidDimension { layer: usize, detail: String },

    #[error("unsupported {what}: {value}")]
    Unsupported { what: &'static str, value: String },

    #[error("value {value} does not fit in {bits}-bit {signedness}")]
    OutOfRange {
        value: i64,
        bits: u32,
        signedness: &'static str,
    },

    #[error("lane mismatch: {0}")]
    LaneMismatch(String),

    #[error("keep={keep} out of range for tile width {width}")]
    KeepOutOfRange { keep: usize, width: usize },

    #[error("unbalanced weight tile: row {row} has {found} non-zeros, expected {expected}")]
    UnbalancedTile {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("invalid prune ratio {0}; expected one of 0, 0.25, 0.5, 0.75")]
    InvalidPruneRatio(f64),

    #[error("row length mismatch in activation block: {0}")]
    RowLengthMismatch(String),

    #[error("layer {layer}: 24-bit partial sum overflow ({value})")]
    PsumOverflow { layer: usize, value: i64 },

    #[error("layer {layer}: missing residual source {source_layer}")]
    MissingResidual { layer: usize, source_layer: usize },

    #[error("field `{field}` value {value} exceeds {width}-bit width")]
    FieldOverflow {
        field: &'static str,
        value: u64,
        width: u32,
    },

    #[error("illegal instruction: opcode {0}")]
    IllegalInstruction(u8),

    #[error("no cache partition for layer kind {0}")]
    NoCachePartition(LayerKind),

    #[error("dataflow analysis expects PW layers, got {0} at index {1}")]
    NotPointwise(LayerKind, usize),

    #[error("zero bandwidth configured for {0}")]
    ZeroBandwidth(&'static str),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("oracle mismatch at layer {layer}: {detail}")]
    OracleMismatch { layer: usize, detail: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors that indicate a broken internal invariant rather than
    /// bad user data.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::PsumOverflow { .. } | Error::OracleMismatch { .. }
        )
    }
}
