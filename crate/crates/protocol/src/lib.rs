//! Master/worker protocols for distributed sufficient dimension reduction.
//!
//! * Exact two-round SIR: workers send sizes, response ranges and means;
//!   the master broadcasts a global grid and mean; workers answer with
//!   slice sums and scatter, from which the full-sample SIR fit is
//!   reconstructed exactly.
//! * Approximate one-shot aggregation for SIR, SAVE and DR: workers send the
//!   leading eigenpairs of their local kernels, the master averages the
//!   reconstructed kernels by sample size. An optional first round fixes a
//!   global centering and grid for heterogeneous shards.
//!
//! Messages use a fixed little-endian binary framing (see [`wire`]) over
//! in-process queues or TCP. Protocol values are `f64`, matching the wire.

pub mod error;
pub mod ledger;
pub mod message;
pub mod ops;
pub mod run;
pub mod transport;
pub mod wire;

pub use error::{DecodeError, ProtocolError, Result};
pub use ledger::{CommLedger, Direction, LedgerRecord};
pub use message::{Broadcast1, EigenPayload, ErrorMsg, Message, MessageType, Round1Msg, Round2Msg};
pub use ops::{
    approx_local, approx_master, edsir_finalize, edsir_master_round1, edsir_worker_round1, edsir_worker_round2,
    Aggregation, Standardization,
};
pub use run::{run_protocol, ProtocolConfig, ProtocolMode, ProtocolRun, RunTiming, TransportKind};
