//! Latest-wins pose cell fed by a UDP ingest loop.

use std::net::UdpSocket;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::codec::{decode_pose, PoseSample, POSE_DATAGRAM_LEN};

/// Single-slot shared cell holding only the freshest pose by sequence
/// number. Stale and malformed arrivals are counted, never surfaced.
#[derive(Debug, Default)]
pub struct PoseCell {
    latest: Mutex<Option<PoseSample>>,
    accepted: AtomicU64,
    stale: AtomicU64,
    malformed: AtomicU64,
    out_of_order_ts: AtomicU64,
}

/// Counters snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoseCellStats {
    pub accepted: u64,
    pub stale_dropped: u64,
    pub malformed: u64,
    /// Accepted samples whose timestamp ran backwards (counted, not fatal).
    pub out_of_order_timestamps: u64,
}

impl PoseCell {
    pub fn new() -> Self {
        Self::default()
    }

    /// Offer a decoded sample; newest seq wins. Returns true if accepted.
    pub fn offer(&self, sample: PoseSample) -> bool {
        let mut slot = self.latest.lock().unwrap();
        match *slot {
            Some(prev) if sample.seq <= prev.seq => {
                self.stale.fetch_add(1, Ordering::Relaxed);
                false
            }
            _ => {
                if let Some(prev) = *slot {
                    if sample.timestamp_ns < prev.timestamp_ns {
                        self.out_of_order_ts.fetch_add(1, Ordering::Relaxed);
                    }
                }
                *slot = Some(sample);
                self.accepted.fetch_add(1, Ordering::Relaxed);
                true
            }
        }
    }

    /// Offer raw datagram bytes; malformed input is counted and dropped.
    pub fn offer_bytes(&self, bytes: &[u8]) -> bool {
        match decode_pose(bytes) {
            Ok(sample) => self.offer(sample),
            Err(_) => {
                self.malformed.fetch_add(1, Ordering::Relaxed);
                false
            }
        }
    }

    /// Freshest sample seen so far.
    pub fn latest(&self) -> Option<PoseSample> {
        *self.latest.lock().unwrap()
    }

    pub fn stats(&self) -> PoseCellStats {
        PoseCellStats {
            accepted: self.accepted.load(Ordering::Relaxed),
            stale_dropped: self.stale.load(Ordering::Relaxed),
            malformed: self.malformed.load(Ordering::Relaxed),
            out_of_order_timestamps: self.out_of_order_ts.load(Ordering::Relaxed),
        }
    }
}

/// Drain pose datagrams from `socket` into `cell` until `stop` is set.
/// Never blocks longer than the poll timeout, so shutdown is prompt and the
/// render loop reading the cell is never held up.
pub fn spawn_pose_ingest(
    socket: UdpSocket,
    cell: Arc<PoseCell>,
    stop: Arc<AtomicBool>,
) -> JoinHandle<()> {
    socket
        .set_read_timeout(Some(Duration::from_millis(50)))
        .expect("set_read_timeout");
    std::thread::spawn(move || {
        let mut buf = [0u8; POSE_DATAGRAM_LEN + 16];
        while !stop.load(Ordering::Relaxed) {
            match socket.recv(&mut buf) {
                Ok(n) => {
                    cell.offer_bytes(&buf[..n]);
                }
                Err(e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut => {}
                Err(_) => break,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::codec::encode_pose;
    use nalgebra::{UnitQuaternion, Vector3};

    fn sample(seq: u32) -> PoseSample {
        PoseSample::new(seq, seq as u64 * 1000, Vector3::zeros(), UnitQuaternion::identity())
    }

    #[test]
    fn newest_seq_wins() {
        let cell = PoseCell::new();
        for s in [1, 2, 3] {
            assert!(cell.offer(sample(s)));
        }
        assert_eq!(cell.latest().unwrap().seq, 3);
        assert_eq!(cell.stats().stale_dropped, 0);
    }

    #[test]
    fn stale_seq_dropped_and_counted() {
        let cell = PoseCell::new();
        cell.offer(sample(1));
        cell.offer(sample(3));
        assert!(!cell.offer(sample(2)));
        assert_eq!(cell.latest().unwrap().seq, 3);
        let stats = cell.stats();
        assert_eq!(stats.stale_dropped, 1);
        assert_eq!(stats.accepted, 2);
    }

    #[test]
    fn burst_replay_harness() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let cell = PoseCell::new();
        let mut seqs: Vec<u32> = (0..10_000).collect();
        seqs.shuffle(&mut rng);
        let mut arrivals = 0u64;
        for s in &seqs {
            let bytes = encode_pose(&sample(*s));
            cell.offer_bytes(&bytes);
            arrivals += 1;
        }
        let stats = cell.stats();
        assert_eq!(cell.latest().unwrap().seq, 9999);
        assert_eq!(stats.accepted + stats.stale_dropped, arrivals);
        assert_eq!(stats.malformed, 0);
    }

    #[test]
    fn malformed_datagrams_counted_and_skipped() {
        let cell = PoseCell::new();
        cell.offer_bytes(&[0u8; 5]);
        let mut bad = encode_pose(&sample(1));
        bad[0] = 0;
        cell.offer_bytes(&bad);
        assert!(cell.latest().is_none());
        assert_eq!(cell.stats().malformed, 2);
    }

    #[test]
    fn never_yields_older_than_previously_yielded() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let cell = PoseCell::new();
        let mut seqs: Vec<u32> = (0..2000).collect();
        seqs.shuffle(&mut rng);
        let mut last_seen = 0u32;
        for s in seqs {
            cell.offer(sample(s));
            let now = cell.latest().unwrap().seq;
            assert!(now >= last_seen);
            last_seen = now;
        }
    }

    #[test]
    fn socket_ingest_smoke() {
        let recv = UdpSocket::bind("127.0.0.1:0").unwrap();
        let addr = recv.local_addr().unwrap();
        let cell = Arc::new(PoseCell::new());
        let stop = Arc::new(AtomicBool::new(false));
        let handle = spawn_pose_ingest(recv, cell.clone(), stop.clone());

        let send = UdpSocket::bind("127.0.0.1:0").unwrap();
        for s in 1..=50u32 {
            send.send_to(&encode_pose(&sample(s)), addr).unwrap();
        }
        let deadline = std::time::Instant::now() + Duration::from_secs(5);
        while cell.latest().map(|p| p.seq) != Some(50) && std::time::Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(10));
        }
        stop.store(true, Ordering::Relaxed);
        handle.join().unwrap();
        assert_eq!(cell.latest().unwrap().seq, 50);
    }
}
