//! Reordering jitter buffer over a virtual clock.
//!
//! Packets are released strictly in sequence order. A hole in the sequence is
//! held open for `reorder_window` after the packet that revealed it arrived;
//! after that the hole is reported as a [`JitterOutput::Lost`] marker and the
//! buffer moves past it. Late and duplicate packets are dropped silently.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::time::Duration;

use super::seq::seq_distance;
use super::RtpPacket;

pub const DEFAULT_REORDER_WINDOW: Duration = Duration::from_millis(100);
pub const DEFAULT_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JitterOutput {
    Packet(RtpPacket),
    Lost(u16),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JitterStats {
    pub emitted: u64,
    pub lost: u64,
    pub dropped_late: u64,
    pub dropped_duplicate: u64,
}

#[derive(Debug)]
pub struct JitterBuffer {
    capacity: usize,
    reorder_window: Duration,
    /// Extended (unwrapped) sequence number of the next packet to release.
    next_expected: Option<u64>,
    /// Highest extended sequence number seen so far.
    highest: Option<u64>,
    /// Set once anything has been released; until then an earlier packet
    /// may still move the stream origin backwards.
    started: bool,
    held: BTreeMap<u64, RtpPacket>,
    loss_deadline: BTreeMap<u64, Duration>,
    stats: JitterStats,
}

impl Default for JitterBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY, DEFAULT_REORDER_WINDOW)
    }
}

impl JitterBuffer {
    pub fn new(capacity: usize, reorder_window: Duration) -> Self {
        Self {
            capacity: capacity.max(1),
            reorder_window,
            next_expected: None,
            highest: None,
            started: false,
            held: BTreeMap::new(),
            loss_deadline: BTreeMap::new(),
            stats: JitterStats::default(),
        }
    }

    pub fn reorder_window(&self) -> Duration {
        self.reorder_window
    }

    pub fn stats(&self) -> JitterStats {
        self.stats
    }

    pub fn held_len(&self) -> usize {
        self.held.len()
    }

    /// Next sequence number the buffer will release, if any packet was seen.
    pub fn next_expected(&self) -> Option<u16> {
        self.next_expected.map(|e| e as u16)
    }

    fn extend(&self, seq: u16) -> Option<u64> {
        let base = self.highest?;
        let ext = base as i64 + seq_distance(base as u16, seq) as i64;
        (ext >= 0).then_some(ext as u64)
    }

    pub fn push(&mut self, packet: RtpPacket, now: Duration) {
        let ext = match self.extend(packet.sequence) {
            None if self.highest.is_none() => {
                // Start high enough that backwards distances never underflow.
                let ext = (1u64 << 32) + packet.sequence as u64;
                self.next_expected = Some(ext);
                self.highest = Some(ext);
                ext
            }
            None => {
                self.stats.dropped_late += 1;
                return;
            }
            Some(ext) => ext,
        };
        let next = self.next_expected.expect("initialized above");
        if ext < next {
            if self.started {
                self.stats.dropped_late += 1;
                return;
            }
            let deadline = now + self.reorder_window;
            for missing in ext + 1..next {
                self.loss_deadline.insert(missing, deadline);
            }
            self.next_expected = Some(ext);
        }
        if self.held.contains_key(&ext) {
            self.stats.dropped_duplicate += 1;
            return;
        }
        let highest = self.highest.expect("initialized above");
        if ext > highest {
            let deadline = now + self.reorder_window;
            for missing in highest + 1..ext {
                self.loss_deadline.insert(missing, deadline);
            }
            self.highest = Some(ext);
        }
        self.loss_deadline.remove(&ext);
        self.held.insert(ext, packet);
    }

    /// Releases everything that is ready at `now`, in sequence order.
    pub fn pop_ready(&mut self, now: Duration) -> Vec<JitterOutput> {
        let mut out = Vec::new();
        let Some(mut next) = self.next_expected else {
            return out;
        };
        loop {
            if let Some(p) = self.held.remove(&next) {
                out.push(JitterOutput::Packet(p));
                self.stats.emitted += 1;
            } else if let Some(&deadline) = self.loss_deadline.get(&next) {
                let over_capacity = self.held.len() > self.capacity;
                if deadline > now && !over_capacity {
                    break;
                }
                self.loss_deadline.remove(&next);
                out.push(JitterOutput::Lost(next as u16));
                self.stats.lost += 1;
            } else {
                break;
            }
            next += 1;
        }
        self.started |= !out.is_empty();
        self.next_expected = Some(next);
        out
    }

    /// Earliest virtual time at which `pop_ready` could release something new
    /// without another push.
    pub fn next_deadline(&self) -> Option<Duration> {
        let next = self.next_expected?;
        self.loss_deadline.get(&next).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn pkt(seq: u16) -> RtpPacket {
        RtpPacket::new(96, seq, 0, 1)
    }

    fn seqs(out: &[JitterOutput]) -> Vec<i64> {
        out.iter()
            .map(|o| match o {
                JitterOutput::Packet(p) => p.sequence as i64,
                JitterOutput::Lost(s) => -(*s as i64),
            })
            .collect()
    }

    const MS: Duration = Duration::from_millis(1);

    #[test]
    fn reorders_within_window() {
        let mut jb = JitterBuffer::default();
        jb.push(pkt(2), MS);
        jb.push(pkt(1), MS);
        jb.push(pkt(3), MS);
        assert_eq!(seqs(&jb.pop_ready(MS)), vec![1, 2, 3]);

        let mut jb = JitterBuffer::default();
        jb.push(pkt(1), MS);
        jb.push(pkt(3), MS);
        jb.push(pkt(2), 2 * MS);
        assert_eq!(seqs(&jb.pop_ready(2 * MS)), vec![1, 2, 3]);
    }

    #[test]
    fn reorders_before_first_pop() {
        // Common case in the media path: the first packet starts the stream.
        let mut jb = JitterBuffer::default();
        jb.push(pkt(1), MS);
        assert_eq!(seqs(&jb.pop_ready(MS)), vec![1]);
        jb.push(pkt(3), MS);
        jb.push(pkt(2), MS);
        jb.push(pkt(4), MS);
        assert_eq!(seqs(&jb.pop_ready(MS)), vec![2, 3, 4]);
    }

    #[test]
    fn hole_becomes_loss_after_window() {
        let mut jb = JitterBuffer::default();
        jb.push(pkt(1), Duration::ZERO);
        jb.push(pkt(3), Duration::ZERO);
        assert_eq!(seqs(&jb.pop_ready(50 * MS)), vec![1]);
        assert_eq!(jb.next_deadline(), Some(100 * MS));
        assert_eq!(seqs(&jb.pop_ready(100 * MS)), vec![-2, 3]);
        assert_eq!(jb.stats().lost, 1);
    }

    #[test]
    fn late_packet_after_loss_is_dropped() {
        let mut jb = JitterBuffer::default();
        jb.push(pkt(1), Duration::ZERO);
        jb.push(pkt(3), Duration::ZERO);
        jb.pop_ready(200 * MS);
        jb.push(pkt(2), 201 * MS);
        assert!(jb.pop_ready(201 * MS).is_empty());
        assert_eq!(jb.stats().dropped_late, 1);
    }

    #[test]
    fn wraparound_order() {
        let mut jb = JitterBuffer::default();
        jb.push(pkt(65535), MS);
        jb.push(pkt(0), MS);
        assert_eq!(seqs(&jb.pop_ready(MS)), vec![65535, 0]);
    }

    #[test]
    fn duplicates_dropped() {
        let mut jb = JitterBuffer::default();
        jb.push(pkt(5), MS);
        jb.push(pkt(7), MS);
        jb.push(pkt(7), MS);
        jb.pop_ready(MS);
        jb.push(pkt(5), MS);
        assert_eq!(jb.stats().dropped_duplicate, 1);
        assert_eq!(jb.stats().dropped_late, 1);
    }

    #[test]
    fn over_capacity_forces_progress() {
        let mut jb = JitterBuffer::new(4, Duration::from_secs(10));
        jb.push(pkt(0), MS);
        for s in 2..8 {
            jb.push(pkt(s), MS);
        }
        assert_eq!(seqs(&jb.pop_ready(MS)), vec![0, -1, 2, 3, 4, 5, 6, 7]);
    }

    proptest! {
        // Conservation: every distinct sequence number from the first one to
        // the highest pushed is reported exactly once, as packet or loss, and
        // the release order is strictly increasing.
        #[test]
        fn conservation(start: u16, raw in proptest::collection::vec((0u16..300, 0u64..150), 1..200)) {
            let mut jb = JitterBuffer::default();
            let mut now = Duration::ZERO;
            let mut pushed = alloc::collections::BTreeSet::new();
            let mut out = Vec::new();
            // The first push fixes the stream origin.
            jb.push(pkt(start), now);
            pushed.insert(0u16);
            for (off, dt) in raw {
                now += Duration::from_millis(dt);
                jb.push(pkt(start.wrapping_add(off)), now);
                pushed.insert(off);
                out.extend(jb.pop_ready(now));
            }
            out.extend(jb.pop_ready(now + Duration::from_secs(1)));
            let max = *pushed.iter().max().unwrap();
            let mut seen = Vec::new();
            let mut emitted = alloc::collections::BTreeSet::new();
            for o in &out {
                let (s, is_pkt) = match o {
                    JitterOutput::Packet(p) => (p.sequence, true),
                    JitterOutput::Lost(s) => (*s, false),
                };
                let off = s.wrapping_sub(start);
                seen.push(off);
                if is_pkt {
                    emitted.insert(off);
                    prop_assert!(pushed.contains(&off));
                }
            }
            let expected: Vec<u16> = (0..=max).collect();
            prop_assert_eq!(seen, expected);
            // Every emitted packet was pushed; no packet both emitted and lost.
            prop_assert!(emitted.iter().all(|o| pushed.contains(o)));
        }
    }
}
