use std::fmt::Write as _;

/// Byte counts for one all-gather on one worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommRecord {
    pub step: u32,
    pub rank: usize,
    /// Serialized size of the worker's own message.
    pub bytes_sent: u64,
    /// Serialized size of the messages received from peers.
    pub bytes_received: u64,
    /// Index plus amplitude bytes per tensor in the worker's own message.
    pub payload_bytes_per_tensor: Vec<u64>,
}

impl CommRecord {
    pub fn payload_bytes(&self) -> u64 {
        self.payload_bytes_per_tensor.iter().sum()
    }
}

/// Per-step communication log of one worker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    records: Vec<CommRecord>,
    total_sent: u64,
    total_received: u64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, r: CommRecord) {
        self.total_sent += r.bytes_sent;
        self.total_received += r.bytes_received;
        self.records.push(r);
    }

    pub fn records(&self) -> &[CommRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&CommRecord> {
        self.records.last()
    }

    pub fn total_sent(&self) -> u64 {
        self.total_sent
    }

    pub fn total_received(&self) -> u64 {
        self.total_received
    }

    pub const CSV_HEADER: &'static str = "step,rank,bytes_sent,bytes_received";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.step, r.rank, r.bytes_sent, r.bytes_received);
        }
        out
    }
}
