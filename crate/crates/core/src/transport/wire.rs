//! Binary encoding of per-step sync payloads.
//!
//! All integers are little-endian.
//!
//! ```text
//! header (15 bytes)
//!   magic         4  b"DEMO"
//!   version       u8 = 1
//!   rank          u16
//!   step          u32
//!   tensor_count  u32
//! per tensor (11 bytes + body)
//!   tensor_id     u32
//!   k             u16
//!   chunk_count   u32
//!   index_width   u8  (2 when the chunk has <= 65536 elements, else 4)
//!   indices       chunk_count * k * index_width
//!   amplitudes    chunk_count * k * 4   (IEEE-754 binary32)
//! ```
//!
//! On a stream each message is preceded by its byte length as a `u32`.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::compaction::CompressedComponents;
use crate::error::TensorError;
use crate::tensor::{ChunkGeometry, Element};

pub const MAGIC: [u8; 4] = *b"DEMO";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 15;
pub const TENSOR_HEADER_BYTES: usize = 11;
pub const AMPLITUDE_BYTES: usize = 4;
/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_BYTES: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed payload at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("cannot encode payload: {0}")]
    Unencodable(String),
}

fn malformed(offset: usize, reason: impl Into<String>) -> WireError {
    WireError::Malformed {
        offset,
        reason: reason.into(),
    }
}

/// Byte width of a frequency index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexWidth {
    U16,
    U32,
}

impl IndexWidth {
    pub fn for_chunk_len(chunk_len: usize) -> Self {
        if chunk_len <= 1 << 16 {
            IndexWidth::U16
        } else {
            IndexWidth::U32
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            IndexWidth::U16 => 2,
            IndexWidth::U32 => 4,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            2 => Some(IndexWidth::U16),
            4 => Some(IndexWidth::U32),
            _ => None,
        }
    }
}

/// Wire form of one tensor's compressed components.
#[derive(Debug, Clone, PartialEq)]
pub struct PayloadEntry {
    pub tensor_id: u32,
    pub k: usize,
    pub chunk_count: usize,
    pub index_width: IndexWidth,
    pub freq: Vec<u32>,
    pub ampl: Vec<f32>,
}

impl PayloadEntry {
    pub fn from_components<T: Element>(c: &CompressedComponents<T>) -> Self {
        Self {
            tensor_id: c.tensor_id,
            k: c.k,
            chunk_count: c.geometry.num_chunks(),
            index_width: IndexWidth::for_chunk_len(c.geometry.chunk_len()),
            freq: c.freq.clone(),
            ampl: c.ampl.iter().map(|a| a.widen() as f32).collect(),
        }
    }

    /// Rebuilds components against the receiver's geometry for this tensor.
    pub fn to_components<T: Element>(&self, geometry: &ChunkGeometry) -> Result<CompressedComponents<T>, TensorError> {
        if self.chunk_count != geometry.num_chunks()
            || self.index_width != IndexWidth::for_chunk_len(geometry.chunk_len())
        {
            return Err(TensorError::GeometryMismatch);
        }
        let c = CompressedComponents {
            tensor_id: self.tensor_id,
            geometry: geometry.clone(),
            k: self.k,
            freq: self.freq.clone(),
            ampl: self.ampl.iter().map(|&a| T::cast(a as f64)).collect(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Index plus amplitude bytes, excluding the per-tensor header.
    pub fn body_bytes(&self) -> usize {
        self.chunk_count * self.k * (self.index_width.bytes() + AMPLITUDE_BYTES)
    }
}

/// Everything one worker contributes to one all-gather.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncPayload {
    pub rank: u16,
    pub step: u32,
    pub entries: Vec<PayloadEntry>,
}

impl SyncPayload {
    pub fn new(rank: usize, step: u32, entries: Vec<PayloadEntry>) -> Self {
        Self {
            rank: rank as u16,
            step,
            entries,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES
            + self
                .entries
                .iter()
                .map(|e| TENSOR_HEADER_BYTES + e.body_bytes())
                .sum::<usize>()
    }

    pub fn body_bytes_per_tensor(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.body_bytes() as u64).collect()
    }
}

pub fn serialize(p: &SyncPayload) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(p.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&p.rank.to_le_bytes());
    out.extend_from_slice(&p.step.to_le_bytes());
    let count = u32::try_from(p.entries.len()).map_err(|_| WireError::Unencodable("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    let mut last_id = None;
    for e in &p.entries {
        if last_id.is_some_and(|prev| prev >= e.tensor_id) {
            return Err(WireError::Unencodable("tensor ids must be strictly increasing".into()));
        }
        last_id = Some(e.tensor_id);
        let k = u16::try_from(e.k).map_err(|_| WireError::Unencodable(format!("k = {} exceeds u16", e.k)))?;
        let chunks = u32::try_from(e.chunk_count)
            .map_err(|_| WireError::Unencodable(format!("chunk count {} exceeds u32", e.chunk_count)))?;
        let n = e.chunk_count * e.k;
        if e.freq.len() != n || e.ampl.len() != n {
            return Err(WireError::Unencodable(format!(
                "tensor {} has {} indices and {} amplitudes, expected {n}",
                e.tensor_id,
                e.freq.len(),
                e.ampl.len()
            )));
        }
        out.extend_from_slice(&e.tensor_id.to_le_bytes());
        out.extend_from_slice(&k.to_le_bytes());
        out.extend_from_slice(&chunks.to_le_bytes());
        out.push(e.index_width.bytes() as u8);
        match e.index_width {
            IndexWidth::U16 => {
                for &f in &e.freq {
                    let f = u16::try_from(f)
                        .map_err(|_| WireError::Unencodable(format!("index {f} does not fit in 2 bytes")))?;
                    out.extend_from_slice(&f.to_le_bytes());
                }
            }
            IndexWidth::U32 => {
                for &f in &e.freq {
                    out.extend_from_slice(&f.to_le_bytes());
                }
            }
        }
        for &a in &e.ampl {
            out.extend_from_slice(&a.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(malformed(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, WireError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, WireError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<SyncPayload, WireError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(malformed(0, "bad magic"));
    }
    let version = cur.u8("version")?;
    if version != VERSION {
        return Err(malformed(4, format!("unsupported version {version}")));
    }
    let rank = cur.u16("rank")?;
    let step = cur.u32("step")?;
    let count = cur.u32("tensor count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    let mut last_id = None;
    for _ in 0..count {
        let at = cur.pos;
        let tensor_id = cur.u32("tensor id")?;
        if last_id.is_some_and(|prev| prev >= tensor_id) {
            return Err(malformed(at, format!("tensor id {tensor_id} out of order")));
        }
        last_id = Some(tensor_id);
        let k = cur.u16("k")? as usize;
        let chunk_count = cur.u32("chunk count")? as usize;
        let width_at = cur.pos;
        let index_width = IndexWidth::from_byte(cur.u8("index width")?)
            .ok_or_else(|| malformed(width_at, "index width must be 2 or 4"))?;
        let n = chunk_count
            .checked_mul(k)
            .ok_or_else(|| malformed(at, "entry size overflows"))?;
        let raw = cur.take(n * index_width.bytes(), "indices")?;
        let freq = match index_width {
            IndexWidth::U16 => raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]]) as u32).collect(),
            IndexWidth::U32 => raw
                .chunks_exact(4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        };
        let ampl = cur
            .take(n * AMPLITUDE_BYTES, "amplitudes")?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        entries.push(PayloadEntry {
            tensor_id,
            k,
            chunk_count,
            index_width,
            freq,
            ampl,
        });
    }
    if cur.pos != bytes.len() {
        return Err(malformed(cur.pos, format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(SyncPayload { rank, step, entries })
}

pub fn write_frame(w: &mut impl Write, msg: &[u8]) -> io::Result<()> {
    let len = u32::try_from(msg.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(msg)?;
    w.flush()
}

pub fn read_frame(r: &mut impl Read) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Per-step byte counts predicted from geometry alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepBytes {
    /// Index and amplitude bytes one worker contributes.
    pub payload: u64,
    /// Full serialized message one worker contributes.
    pub message: u64,
    /// Serialized bytes one worker receives from its `W - 1` peers.
    pub received: u64,
}

/// `k` actually used for a tensor: the requested value capped at the chunk size.
pub fn effective_k(k: usize, g: &ChunkGeometry) -> usize {
    k.clamp(1, g.chunk_len())
}

/// Analytic byte count: `sum over tensors of chunks * k * (index_width + 4)`.
pub fn bytes_per_step(geometries: &[ChunkGeometry], k: usize, world_size: usize) -> StepBytes {
    let payload: u64 = geometries
        .iter()
        .map(|g| {
            let width = IndexWidth::for_chunk_len(g.chunk_len()).bytes();
            (g.num_chunks() * effective_k(k, g) * (width + AMPLITUDE_BYTES)) as u64
        })
        .sum();
    let message = payload + (HEADER_BYTES + TENSOR_HEADER_BYTES * geometries.len()) as u64;
    StepBytes {
        payload,
        message,
        received: message * world_size.saturating_sub(1) as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_payload_is_header_only() {
        let p = SyncPayload::new(3, 7, Vec::new());
        let bytes = serialize(&p).unwrap();
        assert_eq!(bytes.len(), HEADER_BYTES);
        assert_eq!(&bytes[..], &[b'D', b'E', b'M', b'O', 1, 3, 0, 7, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(deserialize(&bytes).unwrap(), p);
    }

    #[test]
    fn index_width_rule() {
        let g = ChunkGeometry::new([64, 64], [64, 64]).unwrap();
        assert_eq!(IndexWidth::for_chunk_len(g.chunk_len()), IndexWidth::U16);
        let g = ChunkGeometry::new([70000], [70000]).unwrap();
        assert_eq!(IndexWidth::for_chunk_len(g.chunk_len()), IndexWidth::U32);
        assert_eq!(IndexWidth::for_chunk_len(65536), IndexWidth::U16);
        assert_eq!(IndexWidth::for_chunk_len(65537), IndexWidth::U32);
    }

    #[test]
    fn four_byte_indices_round_trip() {
        let e = PayloadEntry {
            tensor_id: 0,
            k: 2,
            chunk_count: 1,
            index_width: IndexWidth::U32,
            freq: vec![69_999, 65_536],
            ampl: vec![1.5, -0.25],
        };
        let p = SyncPayload::new(0, 1, vec![e]);
        let bytes = serialize(&p).unwrap();
        assert_eq!(bytes.len(), HEADER_BYTES + TENSOR_HEADER_BYTES + 2 * 8);
        assert_eq!(deserialize(&bytes).unwrap(), p);
    }

    #[test]
    fn single_tensor_arithmetic() {
        let g = ChunkGeometry::new([64, 64], [64, 64]).unwrap();
        let b = bytes_per_step(&[g], 1, 1);
        assert_eq!(b.payload, 6);
        assert_eq!(b.message, 6 + 15 + 11);
        assert_eq!(b.received, 0);
    }

    #[test]
    fn sparse_payload_is_under_one_percent_of_dense() {
        let shapes: [&[usize]; 2] = [&[256, 256], &[128, 64]];
        let geoms: Vec<ChunkGeometry> = shapes.iter().map(|s| crate::clamp_chunk_shape(s, 64).unwrap()).collect();
        let params: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        let b = bytes_per_step(&geoms, 8, 4);
        assert_eq!(b.payload, (16 + 2) * 8 * 6);
        let dense = (4 * params) as u64;
        assert!(b.payload * 100 < dense);
        assert_eq!(b.payload as f64 / dense as f64, 3.0 / 1024.0);
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        let p = SyncPayload::new(
            1,
            2,
            vec![PayloadEntry {
                tensor_id: 4,
                k: 1,
                chunk_count: 2,
                index_width: IndexWidth::U16,
                freq: vec![0, 3],
                ampl: vec![1.0, 2.0],
            }],
        );
        let bytes = serialize(&p).unwrap();
        for cut in [0, 3, 10, 16, bytes.len() - 1] {
            assert!(matches!(deserialize(&bytes[..cut]), Err(WireError::Malformed { .. })), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(deserialize(&bad), Err(malformed(0, "bad magic")));
        let mut bad = bytes.clone();
        bad[HEADER_BYTES + 10] = 3;
        assert!(matches!(deserialize(&bad), Err(WireError::Malformed { offset, .. }) if offset == HEADER_BYTES + 10));
        let mut long = bytes;
        long.push(0);
        assert!(deserialize(&long).is_err());
    }

    #[test]
    fn unordered_ids_are_rejected() {
        let e = |id| PayloadEntry {
            tensor_id: id,
            k: 1,
            chunk_count: 1,
            index_width: IndexWidth::U16,
            freq: vec![0],
            ampl: vec![0.0],
        };
        assert!(serialize(&SyncPayload::new(0, 0, vec![e(2), e(1)])).is_err());
        assert!(serialize(&SyncPayload::new(0, 0, vec![e(1), e(1)])).is_err());
    }

    #[test]
    fn frames_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"abc").unwrap();
        write_frame(&mut buf, b"").unwrap();
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap(), b"abc");
        assert_eq!(read_frame(&mut r).unwrap(), b"");
        assert!(read_frame(&mut r).is_err());
    }

    fn arb_payload() -> impl Strategy<Value = SyncPayload> {
        let entry = (1usize..5, 1usize..6, any::<bool>()).prop_flat_map(|(k, chunks, wide)| {
            let n = k * chunks;
            let max = if wide { u32::MAX } else { u16::MAX as u32 };
            (
                prop::collection::vec(0..=max, n),
                prop::collection::vec(any::<f32>(), n),
            )
                .prop_map(move |(freq, ampl)| PayloadEntry {
                    tensor_id: 0,
                    k,
                    chunk_count: chunks,
                    index_width: if wide { IndexWidth::U32 } else { IndexWidth::U16 },
                    freq,
                    ampl,
                })
        });
        (any::<u16>(), any::<u32>(), prop::collection::vec(entry, 0..5)).prop_map(|(rank, step, mut entries)| {
            for (i, e) in entries.iter_mut().enumerate() {
                e.tensor_id = (i * 3) as u32;
            }
            SyncPayload { rank, step, entries }
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless_and_canonical(p in arb_payload()) {
            let bytes = serialize(&p).unwrap();
            prop_assert_eq!(bytes.len(), p.encoded_len());
            let back = deserialize(&bytes).unwrap();
            // compare bit patterns so NaN amplitudes count as equal
            prop_assert_eq!(serialize(&back).unwrap(), bytes);
            prop_assert_eq!(back.entries.len(), p.entries.len());
        }
    }
}
