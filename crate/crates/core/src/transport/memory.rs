//! In-process rendezvous all-gather for worker threads.

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use super::{CommLedger, Collective, TransportError};

#[derive(Debug)]
struct Round {
    step: Option<u32>,
    slots: Vec<Option<Vec<u8>>>,
    arrived: usize,
    /// Frames of the completed round, handed out until every rank took a copy.
    result: Option<Arc<Vec<Vec<u8>>>>,
    taken: usize,
    generation: u64,
    poisoned: Option<TransportError>,
}

#[derive(Debug)]
struct Shared {
    world: usize,
    timeout: Duration,
    round: Mutex<Round>,
    cv: Condvar,
}

/// Creates the connected set of in-memory collectives for `world` workers.
#[derive(Debug)]
pub struct MemoryHub;

impl MemoryHub {
    pub fn create(world: usize, timeout: Duration) -> Vec<MemoryCollective> {
        assert!(world >= 1, "world size must be at least 1");
        let shared = Arc::new(Shared {
            world,
            timeout,
            round: Mutex::new(Round {
                step: None,
                slots: vec![None; world],
                arrived: 0,
                result: None,
                taken: 0,
                generation: 0,
                poisoned: None,
            }),
            cv: Condvar::new(),
        });
        (0..world)
            .map(|rank| MemoryCollective {
                rank,
                shared: Arc::clone(&shared),
                ledger: CommLedger::new(),
                finished: false,
            })
            .collect()
    }
}

/// One worker's handle on an in-memory rendezvous.
#[derive(Debug)]
pub struct MemoryCollective {
    rank: usize,
    shared: Arc<Shared>,
    ledger: CommLedger,
    finished: bool,
}

impl MemoryCollective {
    /// Marks this worker as done; dropping without calling this while peers
    /// are still waiting reports a disconnect to them.
    pub fn finish(mut self) -> CommLedger {
        self.finished = true;
        std::mem::take(&mut self.ledger)
    }

    fn lock(&self) -> MutexGuard<'_, Round> {
        self.shared.round.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn wait<'a>(
        &'a self,
        guard: MutexGuard<'a, Round>,
        deadline: Instant,
    ) -> Result<MutexGuard<'a, Round>, TransportError> {
        let now = Instant::now();
        if now >= deadline {
            drop(guard);
            return Err(self.poison(TransportError::Timeout(self.shared.timeout)));
        }
        let (g, _) = self
            .shared
            .cv
            .wait_timeout(guard, deadline - now)
            .unwrap_or_else(|e| e.into_inner());
        Ok(g)
    }

    fn poison(&self, err: TransportError) -> TransportError {
        let mut round = self.lock();
        if round.poisoned.is_none() {
            round.poisoned = Some(err.clone());
        }
        self.shared.cv.notify_all();
        err
    }
}

impl Collective for MemoryCollective {
    fn rank(&self) -> usize {
        self.rank
    }

    fn world_size(&self) -> usize {
        self.shared.world
    }

    fn exchange(&mut self, step: u32, frame: Vec<u8>) -> Result<Vec<Vec<u8>>, TransportError> {
        let deadline = Instant::now() + self.shared.timeout;
        let mut round = self.lock();
        // Previous round still being drained by slower ranks.
        while round.result.is_some() {
            if let Some(e) = &round.poisoned {
                return Err(e.clone());
            }
            round = self.wait(round, deadline)?;
        }
        if let Some(e) = &round.poisoned {
            return Err(e.clone());
        }
        match round.step {
            None => round.step = Some(step),
            Some(expected) if expected != step => {
                let err = TransportError::StepMismatch {
                    rank: self.rank,
                    expected,
                    found: step,
                };
                drop(round);
                return Err(self.poison(err));
            }
            Some(_) => {}
        }
        round.slots[self.rank] = Some(frame);
        round.arrived += 1;
        let generation = round.generation;
        if round.arrived == self.shared.world {
            let frames: Vec<Vec<u8>> = round.slots.iter_mut().map(|s| s.take().unwrap_or_default()).collect();
            round.result = Some(Arc::new(frames));
            round.generation += 1;
            round.arrived = 0;
            round.step = None;
            self.shared.cv.notify_all();
        } else {
            while round.generation == generation {
                if let Some(e) = &round.poisoned {
                    return Err(e.clone());
                }
                round = self.wait(round, deadline)?;
            }
        }
        let frames = round.result.as_ref().map(|r| r.as_ref().clone()).unwrap_or_default();
        round.taken += 1;
        if round.taken == self.shared.world {
            round.taken = 0;
            round.result = None;
            self.shared.cv.notify_all();
        }
        Ok(frames)
    }

    fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    fn ledger_mut(&mut self) -> &mut CommLedger {
        &mut self.ledger
    }
}

impl Drop for MemoryCollective {
    fn drop(&mut self) {
        if !self.finished {
            self.poison(TransportError::PeerDisconnected { rank: self.rank });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{PayloadEntry, SyncPayload};
    use std::thread;

    fn payload(rank: usize, step: u32) -> SyncPayload {
        SyncPayload::new(
            rank,
            step,
            vec![PayloadEntry {
                tensor_id: 0,
                k: 1,
                chunk_count: 1,
                index_width: crate::transport::IndexWidth::U16,
                freq: vec![rank as u32],
                ampl: vec![step as f32],
            }],
        )
    }

    #[test]
    fn single_worker_gathers_itself() {
        let mut c = MemoryHub::create(1, DEFAULT).pop().unwrap();
        let p = payload(0, 1);
        let got = c.all_gather(&p).unwrap();
        assert_eq!(got, vec![p.clone()]);
        let rec = c.ledger().last().unwrap();
        assert_eq!(rec.bytes_sent, crate::transport::serialize(&p).unwrap().len() as u64);
        assert_eq!(rec.bytes_received, 0);
        c.finish();
    }

    const DEFAULT: Duration = Duration::from_secs(10);

    #[test]
    fn rank_ordered_over_many_steps() {
        let hub = MemoryHub::create(4, DEFAULT);
        let handles: Vec<_> = hub
            .into_iter()
            .map(|mut c| {
                thread::spawn(move || {
                    let mut seen = Vec::new();
                    for step in 0..50 {
                        if c.rank() == 2 && step % 7 == 0 {
                            thread::sleep(Duration::from_millis(2));
                        }
                        let got = c.all_gather(&payload(c.rank(), step)).unwrap();
                        seen.push(got);
                    }
                    c.finish();
                    seen
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        for step in 0..50u32 {
            let expected: Vec<_> = (0..4).map(|r| payload(r, step)).collect();
            for r in &results {
                assert_eq!(r[step as usize], expected);
            }
        }
    }

    #[test]
    fn step_mismatch_is_reported() {
        let hub = MemoryHub::create(2, DEFAULT);
        let handles: Vec<_> = hub
            .into_iter()
            .map(|mut c| {
                thread::spawn(move || {
                    let step = c.rank() as u32;
                    let r = c.all_gather(&payload(c.rank(), step));
                    c.finish();
                    r
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(results
            .iter()
            .all(|r| matches!(r, Err(TransportError::StepMismatch { .. }))));
    }

    #[test]
    fn dropped_peer_disconnects() {
        let mut hub = MemoryHub::create(2, DEFAULT);
        let quitter = hub.pop().unwrap();
        let mut c = hub.pop().unwrap();
        let h = thread::spawn(move || c.all_gather(&payload(0, 0)));
        thread::sleep(Duration::from_millis(20));
        drop(quitter);
        assert_eq!(h.join().unwrap(), Err(TransportError::PeerDisconnected { rank: 1 }));
    }

    #[test]
    fn timeout_when_peer_is_silent() {
        let mut hub = MemoryHub::create(2, Duration::from_millis(50));
        let _silent = hub.pop().unwrap();
        let mut c = hub.pop().unwrap();
        assert!(matches!(c.all_gather(&payload(0, 0)), Err(TransportError::Timeout(_))));
    }
}
