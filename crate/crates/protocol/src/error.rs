use dsdr_core::SdrError;
use thiserror::Error;

use crate::message::MessageType;

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// Why a frame could not be decoded. `offset` is the byte position inside
/// the frame where decoding stopped.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed frame at byte {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

impl DecodeError {
    pub(crate) fn new(offset: usize, reason: impl Into<String>) -> Self {
        Self {
            offset,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Core(#[from] SdrError),

    /// Connection or framing failure; `frame_offset` is the stream position
    /// of the frame being read or written when it happened.
    #[error("transport failure at frame offset {frame_offset}: {reason}")]
    TransportFailure { frame_offset: u64, reason: String },

    #[error("protocol violation: expected {expected}, received {found:?}")]
    ProtocolViolation {
        expected: &'static str,
        found: MessageType,
    },

    #[error("worker id {0} appears more than once")]
    DuplicateWorker(u32),

    #[error("worker {} failed (code {code}): {message}", fmt_worker(*.worker_id))]
    WorkerFailed {
        worker_id: Option<u32>,
        code: u32,
        message: String,
    },

    #[error("messages disagree on {what}: expected {expected}, found {found}")]
    Inconsistent {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("exact mode supports only SIR")]
    ExactRequiresSir,

    #[error("no workers")]
    NoWorkers,
}

impl ProtocolError {
    pub(crate) fn transport(frame_offset: u64, reason: impl ToString) -> Self {
        ProtocolError::TransportFailure {
            frame_offset,
            reason: reason.to_string(),
        }
    }

    /// Numeric code carried by an error frame.
    pub fn code(&self) -> u32 {
        match self {
            ProtocolError::Core(_) => 1,
            ProtocolError::TransportFailure { .. } => 2,
            ProtocolError::ProtocolViolation { .. } => 3,
            ProtocolError::DuplicateWorker(_) => 4,
            ProtocolError::WorkerFailed { .. } => 5,
            ProtocolError::Inconsistent { .. } => 6,
            ProtocolError::ExactRequiresSir => 7,
            ProtocolError::NoWorkers => 8,
        }
    }
}

fn fmt_worker(id: Option<u32>) -> String {
    id.map_or_else(|| "(unidentified)".to_string(), |i| i.to_string())
}
