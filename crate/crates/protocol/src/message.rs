use dsdr_core::Method;
use ndarray::{Array1, Array2};

/// Worker to master, first round: shard size, response range and column mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Round1Msg {
    pub worker_id: u32,
    pub n_s: u64,
    pub y_min: f64,
    pub y_max: f64,
    pub xbar: Array1<f64>,
}

/// Master to workers: the global slice grid and predictor mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast1 {
    pub grid: Vec<f64>,
    pub xbar_global: Array1<f64>,
}

/// Worker to master, second round: slice counts, sums of globally centered
/// predictors per slice, and the centered scatter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Round2Msg {
    pub worker_id: u32,
    pub n_s: u64,
    pub counts: Vec<u64>,
    /// `H x p`.
    pub sums: Array2<f64>,
    /// `p x p`.
    pub scatter: Array2<f64>,
}

/// Worker to master: leading eigenpairs of the local kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPayload {
    pub worker_id: u32,
    pub n_s: u64,
    pub method: Method,
    pub values: Array1<f64>,
    /// `p x K_s`, orthonormal columns.
    pub vectors: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorMsg {
    pub code: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Round1,
    Broadcast1,
    Round2,
    Eigen,
    Error,
}

impl MessageType {
    pub fn byte(self) -> u8 {
        match self {
            MessageType::Round1 => 0x01,
            MessageType::Broadcast1 => 0x02,
            MessageType::Round2 => 0x03,
            MessageType::Eigen => 0x04,
            MessageType::Error => 0x7F,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(MessageType::Round1),
            0x02 => Some(MessageType::Broadcast1),
            0x03 => Some(MessageType::Round2),
            0x04 => Some(MessageType::Eigen),
            0x7F => Some(MessageType::Error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Round1(Round1Msg),
    Broadcast1(Broadcast1),
    Round2(Round2Msg),
    Eigen(EigenPayload),
    Error(ErrorMsg),
}

impl Message {
    pub fn kind(&self) -> MessageType {
        match self {
            Message::Round1(_) => MessageType::Round1,
            Message::Broadcast1(_) => MessageType::Broadcast1,
            Message::Round2(_) => MessageType::Round2,
            Message::Eigen(_) => MessageType::Eigen,
            Message::Error(_) => MessageType::Error,
        }
    }

    /// Number of 8-byte payload scalars, excluding the dimension header.
    pub fn scalar_count(&self) -> u64 {
        let c = match self {
            Message::Round1(m) => 3 + m.xbar.len(),
            Message::Broadcast1(m) => m.grid.len() + m.xbar_global.len(),
            Message::Round2(m) => 2 + m.counts.len() + m.sums.len() + m.scatter.len(),
            Message::Eigen(m) => 3 + m.values.len() + m.vectors.len(),
            Message::Error(_) => 0,
        };
        c as u64
    }

    /// Sending worker, for worker-to-master messages.
    pub fn worker_id(&self) -> Option<u32> {
        match self {
            Message::Round1(m) => Some(m.worker_id),
            Message::Round2(m) => Some(m.worker_id),
            Message::Eigen(m) => Some(m.worker_id),
            Message::Broadcast1(_) | Message::Error(_) => None,
        }
    }
}

impl From<Round1Msg> for Message {
    fn from(m: Round1Msg) -> Self {
        Message::Round1(m)
    }
}

impl From<Broadcast1> for Message {
    fn from(m: Broadcast1) -> Self {
        Message::Broadcast1(m)
    }
}

impl From<Round2Msg> for Message {
    fn from(m: Round2Msg) -> Self {
        Message::Round2(m)
    }
}

impl From<EigenPayload> for Message {
    fn from(m: EigenPayload) -> Self {
        Message::Eigen(m)
    }
}

impl From<ErrorMsg> for Message {
    fn from(m: ErrorMsg) -> Self {
        Message::Error(m)
    }
}
