use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::net::SocketAddrV4;
use core::time::Duration;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use super::room::*;
use super::{ConferenceError, ParticipantStats};
use crate::media::MediaType;
use crate::recording::RecordingChunk;
use crate::sdp::{AnswerParams, SessionDescription};
use crate::stun::{
    classify_datagram, decode_stun, encode_stun, handle_binding, DatagramKind, IceLiteEndpoint,
};

#[derive(Debug, Clone)]
pub struct McuConfig {
    /// The media address advertised in answers and bound by the caller.
    pub local_addr: SocketAddrV4,
    /// Seeds credentials, keys, SSRCs and initial sequence numbers.
    pub seed: u64,
    /// Mode of rooms created implicitly by a join.
    pub default_mode: Mode,
    pub conference: ConferenceConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmit {
    pub dst: SocketAddrV4,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum McuEvent {
    Record {
        room: String,
        chunk: RecordingChunk,
    },
    LossDeclared {
        room: String,
        at: Duration,
        loss: LossRecord,
    },
    ProfileChanged {
        room: String,
        switch: ProfileSwitch,
    },
}

/// Datagrams the MCU could not use, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct McuCounters {
    pub stun_success: u64,
    pub stun_error: u64,
    pub garbage: u64,
    pub unknown_source: u64,
    pub auth_failures: u64,
    pub rejected_packets: u64,
    /// Outbound packets for participants whose address is not latched yet.
    pub unlatched_drops: u64,
}

const ICE_CHARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// The media server as a state machine: datagrams and signaling calls in,
/// datagrams and events out.
pub struct Mcu {
    config: McuConfig,
    rng: ChaCha20Rng,
    rooms: BTreeMap<String, Conference>,
    by_ufrag: BTreeMap<String, (String, String)>,
    by_addr: BTreeMap<SocketAddrV4, (String, String)>,
    next_tick: Duration,
    transmits: Vec<Transmit>,
    events: Vec<McuEvent>,
    counters: McuCounters,
}

impl Mcu {
    pub fn new(config: McuConfig) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            config,
            rooms: BTreeMap::new(),
            by_ufrag: BTreeMap::new(),
            by_addr: BTreeMap::new(),
            next_tick: Duration::ZERO,
            transmits: Vec::new(),
            events: Vec::new(),
            counters: McuCounters::default(),
        }
    }

    pub fn local_addr(&self) -> SocketAddrV4 {
        self.config.local_addr
    }

    pub fn counters(&self) -> McuCounters {
        self.counters
    }

    pub fn room(&self, room: &str) -> Option<&Conference> {
        self.rooms.get(room)
    }

    pub fn rooms(&self) -> impl Iterator<Item = &Conference> {
        self.rooms.values()
    }

    pub fn create_room(&mut self, room: &str, mode: Mode) -> &mut Conference {
        let config = self.config.conference;
        self.rooms
            .entry(room.to_string())
            .or_insert_with(|| Conference::new(room, mode, config))
    }

    /// Removes `room` if nobody is in it.
    pub fn close_room(&mut self, room: &str) -> bool {
        if self.rooms.get(room).is_some_and(Conference::is_empty) {
            self.rooms.remove(room);
            return true;
        }
        false
    }

    fn room_mut(&mut self, room: &str) -> Result<&mut Conference, ConferenceError> {
        self.rooms
            .get_mut(room)
            .ok_or_else(|| ConferenceError::NoSuchRoom(room.to_string()))
    }

    fn token(&mut self, len: usize) -> String {
        (0..len)
            .map(|_| ICE_CHARS[(self.rng.next_u32() % ICE_CHARS.len() as u32) as usize] as char)
            .collect()
    }

    fn fresh_ssrc(&mut self) -> u32 {
        loop {
            let s = self.rng.next_u32();
            let used = self.rooms.values().any(|c| {
                c.participants().any(|p| {
                    p.composite_ssrcs().contains(&s) || p.contributed_ssrcs().any(|(x, _)| x == s)
                })
            });
            if !used {
                return s;
            }
        }
    }

    /// Adds a participant to `room`, creating the room in the default mode
    /// if needed, and returns the answer to its offer.
    pub fn join(
        &mut self,
        room: &str,
        id: &str,
        offer: &SessionDescription,
        screen_width: u32,
    ) -> Result<SessionDescription, ConferenceError> {
        let mut ufrag = self.token(8);
        while self.by_ufrag.contains_key(&ufrag) {
            ufrag = self.token(8);
        }
        let mut key = [0u8; 30];
        self.rng.fill_bytes(&mut key);
        let params = JoinParams {
            answer: AnswerParams {
                address: self.config.local_addr.ip().to_string(),
                port: self.config.local_addr.port(),
                ice_ufrag: ufrag.clone(),
                ice_pwd: self.token(24),
                session_id: u64::from(self.rng.next_u32()),
            },
            key,
            composite_ssrcs: [self.fresh_ssrc(), self.fresh_ssrc()],
            seq_bases: [self.rng.next_u32() as u16, self.rng.next_u32() as u16],
            ts_bases: [self.rng.next_u32(), self.rng.next_u32()],
        };
        let created = !self.rooms.contains_key(room);
        let mode = self.config.default_mode;
        let result = self
            .create_room(room, mode)
            .join(id, offer, screen_width, params);
        match &result {
            Ok(_) => {
                self.by_ufrag
                    .insert(ufrag, (room.to_string(), id.to_string()));
            }
            Err(_) if created => {
                self.rooms.remove(room);
            }
            Err(_) => {}
        }
        result
    }

    pub fn join_synthetic(&mut self, room: &str, id: &str) -> Result<(), ConferenceError> {
        let ssrcs = [self.fresh_ssrc(), self.fresh_ssrc()];
        self.room_mut(room)?.join_synthetic(id, ssrcs)
    }

    pub fn leave(&mut self, room: &str, id: &str) -> Result<(), ConferenceError> {
        let p = self.room_mut(room)?.leave(id)?;
        if let Some(t) = &p.transport {
            self.by_ufrag.remove(&t.ice.local_ufrag);
            if let Some(addr) = t.ice.latched_remote() {
                self.by_addr.remove(&addr);
            }
        }
        Ok(())
    }

    pub fn set_mode(&mut self, room: &str, mode: Mode) -> Result<(), ConferenceError> {
        self.room_mut(room)?.set_mode(mode);
        Ok(())
    }

    pub fn set_recording(&mut self, room: &str, on: bool) -> Result<(), ConferenceError> {
        self.room_mut(room)?.set_recording(on);
        Ok(())
    }

    pub fn stats(&self, room: &str) -> Result<Vec<(String, ParticipantStats)>, ConferenceError> {
        let conf = self
            .rooms
            .get(room)
            .ok_or_else(|| ConferenceError::NoSuchRoom(room.to_string()))?;
        Ok(conf
            .participants()
            .map(|p| (p.id.clone(), p.stats()))
            .collect())
    }

    pub fn on_receiver_report(
        &mut self,
        room: &str,
        id: &str,
        bytes: u64,
        now: Duration,
    ) -> Result<(), ConferenceError> {
        self.poll(now);
        let conf = self.room_mut(room)?;
        if let Some(change) = conf.on_receiver_report(id, bytes, now)? {
            let switch = ProfileSwitch {
                at: now,
                participant: id.to_string(),
                change,
            };
            self.events.push(McuEvent::ProfileChanged {
                room: room.to_string(),
                switch,
            });
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn inject_frame(
        &mut self,
        room: &str,
        id: &str,
        ssrc: u32,
        kind: MediaType,
        payload: &[u8],
        media_time_us: u64,
        now: Duration,
    ) -> Result<(), ConferenceError> {
        self.poll(now);
        let out = self
            .room_mut(room)?
            .inject_frame(id, ssrc, kind, payload, media_time_us, now)?;
        self.dispatch(room, out, now);
        Ok(())
    }

    pub fn handle_datagram(&mut self, src: SocketAddrV4, data: &[u8], now: Duration) {
        self.poll(now);
        match classify_datagram(data) {
            DatagramKind::Stun => self.handle_stun(src, data),
            DatagramKind::Rtp => self.handle_srtp(src, data, now),
            DatagramKind::Garbage => self.counters.garbage += 1,
        }
    }

    fn handle_stun(&mut self, src: SocketAddrV4, data: &[u8]) {
        let Ok(msg) = decode_stun(data) else {
            self.counters.garbage += 1;
            return;
        };
        let target = msg
            .username()
            .and_then(|u| u.split_once(':'))
            .and_then(|(local, _)| self.by_ufrag.get(local))
            .cloned();
        let ice = target.as_ref().and_then(|(room, id)| {
            self.rooms
                .get_mut(room)?
                .participant_mut(id)?
                .transport
                .as_mut()
                .map(|t| &mut t.ice)
        });
        let mut stranger = IceLiteEndpoint::new("", "");
        let ice = ice.unwrap_or(&mut stranger);
        let was_latched = ice.latched_remote().is_some();
        let Ok(resp) = handle_binding(data, src, ice) else {
            self.counters.garbage += 1;
            return;
        };
        if !was_latched {
            if let (Some(addr), Some(target)) = (ice.latched_remote(), target) {
                self.by_addr.insert(addr, target);
            }
        }
        if resp.error_code().is_some() {
            self.counters.stun_error += 1;
        } else {
            self.counters.stun_success += 1;
        }
        self.transmits.push(Transmit {
            dst: src,
            payload: encode_stun(&resp),
        });
    }

    fn handle_srtp(&mut self, src: SocketAddrV4, data: &[u8], now: Duration) {
        let Some((room, id)) = self.by_addr.get(&src).cloned() else {
            self.counters.unknown_source += 1;
            return;
        };
        let Some(conf) = self.rooms.get_mut(&room) else {
            self.counters.unknown_source += 1;
            return;
        };
        let Some(p) = conf.participant_mut(&id) else {
            self.counters.unknown_source += 1;
            return;
        };
        let Some(transport) = p.transport.as_mut() else {
            return;
        };
        let packet = match transport.srtp_in.unprotect(data) {
            Ok(packet) => packet,
            Err(_) => {
                p.stats_mut().auth_failures += 1;
                self.counters.auth_failures += 1;
                return;
            }
        };
        let stats = p.stats_mut();
        stats.packets_received += 1;
        stats.bytes_received += data.len() as u64;
        match conf.receive_packet(&id, packet, now) {
            Ok(out) => self.dispatch(&room, out, now),
            Err(_) => self.counters.rejected_packets += 1,
        }
    }

    fn dispatch(&mut self, room: &str, out: MediaOutput, now: Duration) {
        let Some(conf) = self.rooms.get_mut(room) else {
            return;
        };
        for (dst, packet) in out.packets {
            let Some(p) = conf.participant_mut(&dst) else {
                continue;
            };
            let Some(remote) = p.remote_addr() else {
                self.counters.unlatched_drops += 1;
                continue;
            };
            let transport = p.transport.as_mut().expect("latched implies transport");
            let Ok(payload) = transport.srtp_out.protect(&packet) else {
                continue;
            };
            let stats = p.stats_mut();
            stats.packets_sent += 1;
            stats.bytes_sent += payload.len() as u64;
            self.transmits.push(Transmit {
                dst: remote,
                payload,
            });
        }
        for loss in out.losses {
            self.events.push(McuEvent::LossDeclared {
                room: room.to_string(),
                at: now,
                loss,
            });
        }
        for chunk in out.records {
            self.events.push(McuEvent::Record {
                room: room.to_string(),
                chunk,
            });
        }
    }

    /// Runs every timer due at or before `now`: jitter buffer deadlines and
    /// the 20 ms media tick, in time order.
    pub fn poll(&mut self, now: Duration) {
        loop {
            let jitter = self
                .rooms
                .values()
                .filter_map(Conference::next_deadline)
                .min();
            let t = match jitter {
                Some(j) if j < self.next_tick => j,
                _ => self.next_tick,
            };
            if t > now {
                break;
            }
            let names: Vec<String> = self.rooms.keys().cloned().collect();
            for name in &names {
                let out = self.rooms.get_mut(name).expect("listed").poll(t);
                self.dispatch(name, out, t);
            }
            if t == self.next_tick {
                for name in &names {
                    let out = self.rooms.get_mut(name).expect("listed").tick(t);
                    self.dispatch(name, out, t);
                }
                self.next_tick += TICK;
            }
        }
    }

    /// When `poll` next has work, absent new input.
    pub fn next_timeout(&self) -> Duration {
        self.rooms
            .values()
            .filter_map(Conference::next_deadline)
            .fold(self.next_tick, Duration::min)
    }

    pub fn drain_transmits(&mut self) -> Vec<Transmit> {
        core::mem::take(&mut self.transmits)
    }

    pub fn drain_events(&mut self) -> Vec<McuEvent> {
        core::mem::take(&mut self.events)
    }
}
