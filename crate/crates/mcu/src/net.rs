//! Seeded datagram network: loss, delay with uniform jitter, adjacent
//! reordering and a token-bucket bandwidth cap, all on virtual time.
//!
//! Jitter varies the delay but a link stays first-in first-out; only the
//! reorder draw changes delivery order.
//!
//! Every send draws from the generator in the same pattern (loss, jitter if
//! enabled, reorder) whether or not the datagram survives, so the delivery
//! schedule depends only on the seed and the send schedule.

use std::collections::BTreeMap;
use std::net::SocketAddrV4;
use std::time::Duration;

use mcu_core::stun::{classify_datagram, DatagramKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConditions {
    pub loss_prob: f64,
    pub reorder_prob: f64,
    pub base_delay: Duration,
    /// Half-width of the uniform delay variation.
    pub jitter: Duration,
    /// Bits per second; `None` is unlimited.
    pub bandwidth_cap: Option<u64>,
    pub seed: u64,
}

impl Default for NetConditions {
    fn default() -> Self {
        Self {
            loss_prob: 0.0,
            reorder_prob: 0.0,
            base_delay: Duration::from_millis(20),
            jitter: Duration::ZERO,
            bandwidth_cap: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DropReason {
    Loss,
    Bandwidth,
}

/// Links the bandwidth cap applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapScope {
    AllLinks,
    /// Only links leaving this address.
    From(SocketAddrV4),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropRecord {
    pub at: Duration,
    pub from: SocketAddrV4,
    pub to: SocketAddrV4,
    pub reason: DropReason,
    /// SSRC and sequence number from the cleartext RTP header, if any.
    pub rtp: Option<(u32, u16)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub at: Duration,
    pub from: SocketAddrV4,
    pub to: SocketAddrV4,
    pub payload: Vec<u8>,
}

type Link = (SocketAddrV4, SocketAddrV4);

#[derive(Debug, Clone)]
struct TokenBucket {
    tokens: f64,
    last: Duration,
}

pub struct NetSim {
    conditions: NetConditions,
    cap_scope: CapScope,
    rng: ChaCha20Rng,
    queue: BTreeMap<(Duration, u64), Delivery>,
    next_id: u64,
    last_on_link: BTreeMap<Link, (Duration, u64)>,
    last_due: BTreeMap<Link, Duration>,
    buckets: BTreeMap<Link, TokenBucket>,
    drops: Vec<DropRecord>,
    sent: u64,
}

/// SSRC and sequence number of an RTP or SRTP datagram.
pub fn rtp_tag(payload: &[u8]) -> Option<(u32, u16)> {
    if classify_datagram(payload) != DatagramKind::Rtp || payload.len() < 12 {
        return None;
    }
    let seq = u16::from_be_bytes([payload[2], payload[3]]);
    let ssrc = u32::from_be_bytes(payload[8..12].try_into().expect("4 bytes"));
    Some((ssrc, seq))
}

impl NetSim {
    pub fn new(conditions: NetConditions, cap_scope: CapScope) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(conditions.seed),
            conditions,
            cap_scope,
            queue: BTreeMap::new(),
            next_id: 0,
            last_on_link: BTreeMap::new(),
            last_due: BTreeMap::new(),
            buckets: BTreeMap::new(),
            drops: Vec::new(),
            sent: 0,
        }
    }

    pub fn conditions(&self) -> &NetConditions {
        &self.conditions
    }

    /// Changes the cap from `now` on. Buckets keep their current fill.
    pub fn set_bandwidth_cap(&mut self, cap: Option<u64>, now: Duration) {
        for b in self.buckets.values_mut() {
            b.last = b.last.max(now);
        }
        self.conditions.bandwidth_cap = cap;
    }

    fn capped(&self, from: SocketAddrV4) -> bool {
        match self.cap_scope {
            CapScope::AllLinks => true,
            CapScope::From(a) => a == from,
        }
    }

    /// Whether the bucket for `link` has room for `len` bytes at `now`;
    /// takes the tokens if so.
    fn admit(&mut self, link: Link, len: usize, now: Duration) -> bool {
        let Some(cap) = self.conditions.bandwidth_cap else {
            return true;
        };
        let rate = cap as f64 / 8.0;
        // 100 ms of burst, but never less than two full-size datagrams.
        let depth = (rate * 0.1).max(3000.0);
        let b = self.buckets.entry(link).or_insert(TokenBucket {
            tokens: depth,
            last: now,
        });
        let elapsed = now.saturating_sub(b.last).as_secs_f64();
        b.tokens = (b.tokens + elapsed * rate).min(depth);
        b.last = b.last.max(now);
        if b.tokens < len as f64 {
            return false;
        }
        b.tokens -= len as f64;
        true
    }

    /// Schedules one datagram. Returns its delivery time, or `None` if the
    /// network dropped it (the drop is logged).
    pub fn send(
        &mut self,
        from: SocketAddrV4,
        to: SocketAddrV4,
        payload: Vec<u8>,
        now: Duration,
    ) -> Option<Duration> {
        self.sent += 1;
        let c = self.conditions;
        let lose = self.rng.gen::<f64>() < c.loss_prob;
        let j = c.jitter.as_micros() as i64;
        let offset = if j > 0 { self.rng.gen_range(-j..=j) } else { 0 };
        let reorder = self.rng.gen::<f64>() < c.reorder_prob;

        let link = (from, to);
        let reason = if lose {
            Some(DropReason::Loss)
        } else if self.capped(from) && !self.admit(link, payload.len(), now) {
            Some(DropReason::Bandwidth)
        } else {
            None
        };
        if let Some(reason) = reason {
            self.drops.push(DropRecord {
                at: now,
                from,
                to,
                reason,
                rtp: rtp_tag(&payload),
            });
            return None;
        }

        let delay = (c.base_delay.as_micros() as i64 + offset).max(0) as u64;
        let due = self
            .last_due
            .get(&link)
            .map_or(Duration::ZERO, |d| *d)
            .max(now + Duration::from_micros(delay));
        self.last_due.insert(link, due);
        let mut key = (due, self.next_id);
        self.next_id += 1;
        if reorder {
            // Trade places with the previous datagram on this link if it is
            // still in flight.
            if let Some(prev_key) = self.last_on_link.get(&link).copied() {
                if let Some(mut prev) = self.queue.remove(&prev_key) {
                    prev.at = key.0;
                    self.queue.insert(key, prev);
                    key = prev_key;
                }
            }
        }
        self.queue.insert(
            key,
            Delivery {
                at: key.0,
                from,
                to,
                payload,
            },
        );
        self.last_on_link.insert(link, key);
        Some(key.0)
    }

    pub fn next_delivery(&self) -> Option<Duration> {
        self.queue.keys().next().map(|k| k.0)
    }

    /// The earliest datagram due at or before `now`.
    pub fn pop_due(&mut self, now: Duration) -> Option<Delivery> {
        let (&key, _) = self.queue.iter().next()?;
        if key.0 > now {
            return None;
        }
        self.queue.remove(&key)
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn drops(&self) -> &[DropRecord] {
        &self.drops
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }
}
