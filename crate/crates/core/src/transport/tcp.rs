//! Full-mesh TCP all-gather.
//!
//! Every pair of ranks shares one persistent connection. The higher rank
//! dials the lower one and announces itself with a 2-byte hello frame. Each
//! all-gather writes the local frame to all peers on helper threads while the
//! calling thread reads one frame from each peer.

use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{read_frame, write_frame};
use super::{CommLedger, Collective, TransportError};

#[derive(Debug)]
pub struct TcpCollective {
    rank: usize,
    world: usize,
    peers: Vec<Option<TcpStream>>,
    ledger: CommLedger,
    timeout: Duration,
}

fn setup(msg: impl Into<String>) -> TransportError {
    TransportError::Setup(msg.into())
}

fn io_error(rank: usize, e: io::Error, timeout: Duration) -> TransportError {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => TransportError::Timeout(timeout),
        ErrorKind::UnexpectedEof
        | ErrorKind::ConnectionReset
        | ErrorKind::ConnectionAborted
        | ErrorKind::BrokenPipe => TransportError::PeerDisconnected { rank },
        _ => TransportError::Io(format!("peer {rank}: {e}")),
    }
}

impl TcpCollective {
    /// Joins the mesh. `listener` must already be bound to `peers[rank]`;
    /// binding every listener before any rank dials avoids connect races.
    pub fn establish(
        rank: usize,
        listener: TcpListener,
        peers: &[SocketAddr],
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let world = peers.len();
        if rank >= world {
            return Err(setup(format!("rank {rank} outside world of {world}")));
        }
        let deadline = Instant::now() + timeout;
        let mut streams: Vec<Option<TcpStream>> = (0..world).map(|_| None).collect();

        for (peer, addr) in peers.iter().enumerate().take(rank) {
            let stream = loop {
                match TcpStream::connect_timeout(addr, timeout) {
                    Ok(s) => break s,
                    Err(_) if Instant::now() < deadline => {
                        thread::sleep(Duration::from_millis(20));
                    }
                    Err(e) => return Err(setup(format!("connect to rank {peer} at {addr}: {e}"))),
                }
            };
            let mut stream = configure(stream, timeout)?;
            write_frame(&mut stream, &(rank as u16).to_le_bytes()).map_err(|e| io_error(peer, e, timeout))?;
            streams[peer] = Some(stream);
        }

        listener
            .set_nonblocking(true)
            .map_err(|e| setup(format!("listener: {e}")))?;
        let mut pending = world - rank - 1;
        while pending > 0 {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream
                        .set_nonblocking(false)
                        .map_err(|e| setup(format!("accept: {e}")))?;
                    let mut stream = configure(stream, timeout)?;
                    let hello = read_frame(&mut stream).map_err(|e| setup(format!("hello: {e}")))?;
                    let peer = match hello.as_slice() {
                        [a, b] => u16::from_le_bytes([*a, *b]) as usize,
                        _ => return Err(setup("malformed hello")),
                    };
                    if peer <= rank || peer >= world || streams[peer].is_some() {
                        return Err(setup(format!("unexpected hello from rank {peer}")));
                    }
                    streams[peer] = Some(stream);
                    pending -= 1;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(TransportError::Timeout(timeout));
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(setup(format!("accept: {e}"))),
            }
        }

        Ok(Self {
            rank,
            world,
            peers: streams,
            ledger: CommLedger::new(),
            timeout,
        })
    }

    /// Binds one listener per rank on `host`, using `base_port + rank`, or an
    /// ephemeral port when `base_port` is 0.
    pub fn bind_local(host: &str, base_port: u16, world: usize) -> Result<Vec<TcpListener>, TransportError> {
        (0..world)
            .map(|rank| {
                let port = if base_port == 0 { 0 } else { base_port + rank as u16 };
                TcpListener::bind((host, port)).map_err(|e| setup(format!("bind {host}:{port}: {e}")))
            })
            .collect()
    }

    pub fn into_ledger(self) -> CommLedger {
        self.ledger
    }
}

fn configure(stream: TcpStream, timeout: Duration) -> Result<TcpStream, TransportError> {
    stream
        .set_nodelay(true)
        .and_then(|_| stream.set_read_timeout(Some(timeout)))
        .and_then(|_| stream.set_write_timeout(Some(timeout)))
        .map_err(|e| setup(format!("socket options: {e}")))?;
    Ok(stream)
}

impl Collective for TcpCollective {
    fn rank(&self) -> usize {
        self.rank
    }

    fn world_size(&self) -> usize {
        self.world
    }

    fn exchange(&mut self, _step: u32, frame: Vec<u8>) -> Result<Vec<Vec<u8>>, TransportError> {
        let timeout = self.timeout;
        let rank = self.rank;
        let mut out: Vec<Vec<u8>> = vec![Vec::new(); self.world];
        let frame_ref = &frame;
        let peers = &mut self.peers;
        let result = thread::scope(|scope| {
            let mut writers = Vec::new();
            for (peer, stream) in peers.iter().enumerate() {
                let Some(stream) = stream else { continue };
                let mut w = stream
                    .try_clone()
                    .map_err(|e| io_error(peer, e, timeout))?;
                writers.push(scope.spawn(move || write_frame(&mut w, frame_ref).map_err(|e| io_error(peer, e, timeout))));
            }
            let mut first_err = None;
            for (peer, stream) in peers.iter_mut().enumerate() {
                let Some(stream) = stream else { continue };
                match read_frame(stream) {
                    Ok(buf) => out[peer] = buf,
                    Err(e) => {
                        first_err = Some(io_error(peer, e, timeout));
                        break;
                    }
                }
            }
            for w in writers {
                let r = w.join().unwrap_or_else(|_| Err(TransportError::Io("writer thread panicked".into())));
                if let (Err(e), None) = (r, &first_err) {
                    first_err = Some(e);
                }
            }
            match first_err {
                Some(e) => Err(e),
                None => Ok(()),
            }
        });
        if let Err(e) = result {
            // A broken mesh cannot be resynchronised; close everything.
            for s in self.peers.iter_mut() {
                if let Some(s) = s.take() {
                    let _ = s.shutdown(std::net::Shutdown::Both);
                }
            }
            return Err(e);
        }
        out[rank] = frame;
        Ok(out)
    }

    fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    fn ledger_mut(&mut self) -> &mut CommLedger {
        &mut self.ledger
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{IndexWidth, PayloadEntry, SyncPayload};

    fn mesh(world: usize, timeout: Duration) -> Vec<thread::JoinHandle<Result<TcpCollective, TransportError>>> {
        let listeners = TcpCollective::bind_local("127.0.0.1", 0, world).unwrap();
        let addrs: Vec<SocketAddr> = listeners.iter().map(|l| l.local_addr().unwrap()).collect();
        listeners
            .into_iter()
            .enumerate()
            .map(|(rank, l)| {
                let addrs = addrs.clone();
                thread::spawn(move || TcpCollective::establish(rank, l, &addrs, timeout))
            })
            .collect()
    }

    fn payload(rank: usize, step: u32, n: usize) -> SyncPayload {
        SyncPayload::new(
            rank,
            step,
            vec![PayloadEntry {
                tensor_id: 1,
                k: 1,
                chunk_count: n,
                index_width: IndexWidth::U16,
                freq: vec![rank as u32; n],
                ampl: (0..n).map(|i| (i + rank) as f32).collect(),
            }],
        )
    }

    #[test]
    fn gathers_in_rank_order() {
        let handles = mesh(3, Duration::from_secs(10));
        let cols: Vec<TcpCollective> = handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect();
        let workers: Vec<_> = cols
            .into_iter()
            .map(|mut c| {
                thread::spawn(move || {
                    let mut all = Vec::new();
                    for step in 0..20 {
                        // large enough to exceed socket buffers on some steps
                        let n = if step % 5 == 0 { 200_000 } else { 3 };
                        all.push(c.all_gather(&payload(c.rank(), step, n)).unwrap());
                    }
                    (all, c.into_ledger())
                })
            })
            .collect();
        let results: Vec<_> = workers.into_iter().map(|h| h.join().unwrap()).collect();
        for (all, ledger) in &results {
            assert_eq!(ledger.records().len(), 20);
            for (step, gathered) in all.iter().enumerate() {
                let n = if step % 5 == 0 { 200_000 } else { 3 };
                let expected: Vec<_> = (0..3).map(|r| payload(r, step as u32, n)).collect();
                assert_eq!(gathered, &expected);
            }
        }
    }

    #[test]
    fn disconnect_is_detected() {
        let handles = mesh(2, Duration::from_secs(5));
        let mut cols: Vec<TcpCollective> = handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect();
        let quitter = cols.pop().unwrap();
        let mut c = cols.pop().unwrap();
        drop(quitter);
        let err = c.all_gather(&payload(0, 0, 1)).unwrap_err();
        assert!(matches!(err, TransportError::PeerDisconnected { .. } | TransportError::Io(_)), "{err:?}");
    }

    #[test]
    fn step_mismatch_over_tcp() {
        let handles = mesh(2, Duration::from_secs(5));
        let cols: Vec<TcpCollective> = handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect();
        let handles: Vec<_> = cols
            .into_iter()
            .map(|mut c| thread::spawn(move || c.all_gather(&payload(c.rank(), c.rank() as u32, 1))))
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(results.iter().all(|r| matches!(r, Err(TransportError::StepMismatch { .. }))));
    }
}
