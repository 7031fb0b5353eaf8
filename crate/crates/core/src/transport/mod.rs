//! All-gather of sync payloads across workers.
//!
//! Transports only move opaque frames ([`Collective::exchange`]); encoding,
//! validation and byte accounting happen once in [`Collective::all_gather`],
//! so every transport exercises the same wire path.

use std::time::Duration;

use thiserror::Error;

mod ledger;
pub mod memory;
pub mod tcp;
pub mod wire;

pub use ledger::{CommLedger, CommRecord};
pub use memory::{MemoryCollective, MemoryHub};
pub use tcp::TcpCollective;
pub use wire::{bytes_per_step, deserialize, serialize, IndexWidth, PayloadEntry, StepBytes, SyncPayload, WireError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("peer {rank} disconnected")]
    PeerDisconnected { rank: usize },
    #[error("step mismatch from rank {rank}: expected step {expected}, got {found}")]
    StepMismatch { rank: usize, expected: u32, found: u32 },
    #[error("rank mismatch: slot {slot} carried a payload from rank {found}")]
    RankMismatch { slot: usize, found: usize },
    #[error("all-gather timed out after {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("transport setup failed: {0}")]
    Setup(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// A clock-synchronous all-gather participant.
pub trait Collective: Send {
    fn rank(&self) -> usize;
    fn world_size(&self) -> usize;

    /// Contributes `frame` for `step` and blocks until every rank's frame for
    /// the same step is available. Returns all frames indexed by rank.
    fn exchange(&mut self, step: u32, frame: Vec<u8>) -> Result<Vec<Vec<u8>>, TransportError>;

    fn ledger(&self) -> &CommLedger;
    fn ledger_mut(&mut self) -> &mut CommLedger;

    /// Serializes `payload`, exchanges it, and decodes the rank-ordered result.
    fn all_gather(&mut self, payload: &SyncPayload) -> Result<Vec<SyncPayload>, TransportError> {
        let frame = serialize(payload)?;
        let frames = self.exchange(payload.step, frame)?;
        let (gathered, record) = decode_gathered(self.rank(), payload, &frames)?;
        self.ledger_mut().record(record);
        Ok(gathered)
    }
}

/// Decodes gathered frames, checks step and rank ordering, and builds the
/// ledger record for `rank`.
pub fn decode_gathered(
    rank: usize,
    own: &SyncPayload,
    frames: &[Vec<u8>],
) -> Result<(Vec<SyncPayload>, CommRecord), TransportError> {
    let mut gathered = Vec::with_capacity(frames.len());
    let mut received = 0u64;
    let mut sent = 0u64;
    for (slot, frame) in frames.iter().enumerate() {
        let p = deserialize(frame)?;
        if p.step != own.step {
            return Err(TransportError::StepMismatch {
                rank: slot,
                expected: own.step,
                found: p.step,
            });
        }
        if p.rank as usize != slot {
            return Err(TransportError::RankMismatch {
                slot,
                found: p.rank as usize,
            });
        }
        if slot == rank {
            sent = frame.len() as u64;
        } else {
            received += frame.len() as u64;
        }
        gathered.push(p);
    }
    let record = CommRecord {
        step: own.step,
        rank,
        bytes_sent: sent,
        bytes_received: received,
        payload_bytes_per_tensor: own.body_bytes_per_tensor(),
    };
    Ok((gathered, record))
}
