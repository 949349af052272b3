use crate::message::{Message, MessageType};
use crate::wire::HEADER_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Worker to master.
    Up,
    /// Master to worker.
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerRecord {
    pub round: u8,
    pub direction: Direction,
    pub kind: MessageType,
    /// `None` when an error frame arrives before the worker identified itself.
    pub worker_id: Option<u32>,
    pub frame_bytes: u64,
    pub payload_bytes: u64,
    pub scalars: u64,
}

/// Communication cost of one protocol run, message by message.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    records: Vec<LedgerRecord>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an encoded frame exchanged with `worker_id`.
    pub fn record(&mut self, round: u8, direction: Direction, worker_id: Option<u32>, msg: &Message, frame_len: usize) {
        self.records.push(LedgerRecord {
            round,
            direction,
            kind: msg.kind(),
            worker_id,
            frame_bytes: frame_len as u64,
            payload_bytes: frame_len.saturating_sub(HEADER_LEN) as u64,
            scalars: msg.scalar_count(),
        });
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    fn sum(&self, f: impl Fn(&LedgerRecord) -> bool, g: impl Fn(&LedgerRecord) -> u64) -> u64 {
        self.records.iter().filter(|r| f(r)).map(g).sum()
    }

    pub fn bytes(&self, direction: Direction) -> u64 {
        self.sum(|r| r.direction == direction, |r| r.frame_bytes)
    }

    pub fn bytes_up(&self) -> u64 {
        self.bytes(Direction::Up)
    }

    pub fn bytes_down(&self) -> u64 {
        self.bytes(Direction::Down)
    }

    /// Payload scalars of one message type in one direction.
    pub fn scalars(&self, direction: Direction, kind: MessageType) -> u64 {
        self.sum(|r| r.direction == direction && r.kind == kind, |r| r.scalars)
    }

    /// Payload scalars sent in `direction` during `round`.
    pub fn round_scalars(&self, round: u8, direction: Direction) -> u64 {
        self.sum(|r| r.round == round && r.direction == direction, |r| r.scalars)
    }

    pub fn rounds(&self) -> u8 {
        self.records.iter().map(|r| r.round).max().unwrap_or(0)
    }
}

/// Uplink scalars of the first exact round: `S (p + 3)`.
pub fn round1_scalars(workers: u64, p: u64) -> u64 {
    workers * (p + 3)
}

/// Uplink scalars of the second exact round: `S (2 + H + H p + p^2)`.
pub fn round2_scalars(workers: u64, p: u64, slices: u64) -> u64 {
    workers * (2 + slices + slices * p + p * p)
}

/// Uplink scalars of the eigen payloads: `sum_s (3 + K_s + K_s p)`.
pub fn eigen_scalars(p: u64, ks: &[u64]) -> u64 {
    ks.iter().map(|k| 3 + k + k * p).sum()
}
