//! Synthetic conference client: the client side of signaling, SDP, STUN,
//! SRTP and RTP, fed by deterministic audio and video sources.
//!
//! Media is a pure function of (client index, tick index). A tick is 20 ms;
//! audio goes out on every tick and video on every fifth.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::net::SocketAddrV4;
use std::time::Duration;

use mcu_core::conference::Mode;
use mcu_core::media::{MediaType, VideoFrame, SAMPLES_PER_FRAME};
use mcu_core::rtp::{packetize_frame, seq_precedes, FrameAssembler, JitterBuffer, JitterOutput};
use mcu_core::sdp::*;
use mcu_core::srtp::{SrtpSession, SUITE_NAME};
use mcu_core::stun::{
    classify_datagram, decode_stun, encode_stun, verify_message_integrity, DatagramKind,
    StunMessage, BINDING_SUCCESS,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::json;

use crate::checksum::{payload_hash, PayloadHash};
use crate::signaling::SignalMessage;

pub const TICK: Duration = Duration::from_millis(20);
pub const VIDEO_EVERY: u64 = 5;
pub const SOURCE_WIDTH: u32 = 320;
pub const SOURCE_HEIGHT: u32 = 180;
pub const TONE_AMPLITUDE: f64 = 8000.0;
pub const STUN_RETRY: Duration = Duration::from_millis(50);
pub const REPORT_INTERVAL: Duration = Duration::from_millis(500);
pub const CLIENT_MTU: usize = 1200;

/// Per-client source colors (Y, U, V). None of them is black.
pub const PALETTE: [(u8, u8, u8); 8] = [
    (81, 90, 240),
    (145, 54, 34),
    (41, 240, 110),
    (210, 16, 146),
    (170, 166, 16),
    (106, 202, 222),
    (180, 128, 128),
    (235, 128, 128),
];

pub fn tone_frequency(index: usize) -> f64 {
    200.0 + 50.0 * index as f64
}

/// One 20 ms frame of the client's sine tone, big-endian 16-bit samples.
pub fn audio_frame(index: usize, tick: u64) -> Vec<u8> {
    let f = tone_frequency(index);
    let first = tick * SAMPLES_PER_FRAME as u64;
    (0..SAMPLES_PER_FRAME as u64)
        .flat_map(|i| {
            let n = (first + i) as f64;
            let s = (TONE_AMPLITUDE * (TAU * f * n / 48_000.0).sin()).round() as i16;
            s.to_be_bytes()
        })
        .collect()
}

/// Video frame `frame_no` of the client: a solid palette color with the
/// frame counter in the first four luma bytes, big-endian.
pub fn video_frame(index: usize, frame_no: u32) -> Vec<u8> {
    let (y, u, v) = PALETTE[index % PALETTE.len()];
    let f = VideoFrame::solid(SOURCE_WIDTH, SOURCE_HEIGHT, (y, u, v), 0).expect("even source size");
    let mut bytes = Vec::with_capacity(VideoFrame::byte_len(SOURCE_WIDTH, SOURCE_HEIGHT));
    bytes.extend_from_slice(&f.y);
    bytes[..4].copy_from_slice(&frame_no.to_be_bytes());
    bytes.extend_from_slice(&f.u);
    bytes.extend_from_slice(&f.v);
    bytes
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub index: usize,
    pub id: String,
    pub room: String,
    pub addr: SocketAddrV4,
    pub screen_width: u32,
    pub seed: u64,
    /// No media tick runs before this.
    pub media_start: Duration,
    /// No media tick runs at or after this.
    pub media_stop: Duration,
    /// Mode requested if the join creates the room.
    pub room_mode: Option<Mode>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ClientStats {
    pub packets_sent: u64,
    pub bytes_sent: u64,
    pub frames_sent: u64,
    pub packets_received: u64,
    pub bytes_received: u64,
    pub audio_packets_received: u64,
    pub video_packets_received: u64,
    pub frames_received: u64,
    pub losses_declared: u64,
    pub streams_in: usize,
    pub auth_failures: u64,
    pub order_violations: u64,
    pub self_deliveries: u64,
    pub stun_requests: u64,
    pub signaling_errors: u64,
    pub connected_at_us: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientOutput {
    Datagram { to: SocketAddrV4, payload: Vec<u8> },
    Signal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    AwaitingAnswer,
    Connecting { next_check: Duration },
    Connected,
    Left,
}

struct Remote {
    addr: SocketAddrV4,
    ufrag: String,
    pwd: String,
    tx: SrtpSession,
    rx: SrtpSession,
    audio: bool,
    video: bool,
}

#[derive(Debug, Clone, Copy)]
struct Source {
    ssrc: u32,
    next_seq: u16,
    ts_base: u32,
}

struct Inbound {
    kind: Option<MediaType>,
    jitter: JitterBuffer,
    assembler: FrameAssembler,
    last_emitted: Option<u16>,
    frames: Vec<PayloadHash>,
}

pub struct SyntheticClient {
    cfg: ClientConfig,
    rng: ChaCha20Rng,
    key: [u8; 30],
    ufrag: String,
    pwd: String,
    state: State,
    remote: Option<Remote>,
    pending_txid: Option<[u8; 12]>,
    audio: Source,
    video: Source,
    next_tick: Option<Duration>,
    next_report: Option<Duration>,
    window_bytes: u64,
    inbound: BTreeMap<u32, Inbound>,
    sent: BTreeMap<u32, Vec<PayloadHash>>,
    markers: Vec<(u32, u16)>,
    stats: ClientStats,
}

const TOKEN_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

impl SyntheticClient {
    pub fn new(cfg: ClientConfig) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(
            cfg.seed ^ (cfg.index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let mut key = [0u8; 30];
        rng.fill_bytes(&mut key);
        let mut token = |len: usize| -> String {
            (0..len)
                .map(|_| TOKEN_CHARS[rng.gen_range(0..TOKEN_CHARS.len())] as char)
                .collect()
        };
        let ufrag = token(8);
        let pwd = token(24);
        // The low bits carry the client index, so SSRCs never collide
        // between clients of one run.
        let high = rng.next_u32() & 0xFFFF_0000;
        let idx = (cfg.index as u32 & 0x7FFF) << 1;
        let audio = Source {
            ssrc: high | idx,
            next_seq: rng.gen(),
            ts_base: rng.gen(),
        };
        let video = Source {
            ssrc: high | idx | 1,
            next_seq: rng.gen(),
            ts_base: rng.gen(),
        };
        Self {
            cfg,
            rng,
            key,
            ufrag,
            pwd,
            state: State::Idle,
            remote: None,
            pending_txid: None,
            audio,
            video,
            next_tick: None,
            next_report: None,
            window_bytes: 0,
            inbound: BTreeMap::new(),
            sent: BTreeMap::new(),
            markers: Vec::new(),
            stats: ClientStats::default(),
        }
    }

    pub fn id(&self) -> &str {
        &self.cfg.id
    }

    pub fn index(&self) -> usize {
        self.cfg.index
    }

    pub fn addr(&self) -> SocketAddrV4 {
        self.cfg.addr
    }

    pub fn audio_ssrc(&self) -> u32 {
        self.audio.ssrc
    }

    pub fn video_ssrc(&self) -> u32 {
        self.video.ssrc
    }

    pub fn is_connected(&self) -> bool {
        self.state == State::Connected
    }

    pub fn stats(&self) -> ClientStats {
        let mut s = self.stats.clone();
        s.streams_in = self.inbound.len();
        s
    }

    /// Hashes of every frame this client generated, per SSRC, in order.
    pub fn sent_frames(&self) -> &BTreeMap<u32, Vec<PayloadHash>> {
        &self.sent
    }

    /// Hashes of the frames reassembled per received SSRC, in order.
    pub fn received_frames(&self) -> BTreeMap<u32, &[PayloadHash]> {
        self.inbound
            .iter()
            .map(|(&s, st)| (s, st.frames.as_slice()))
            .collect()
    }

    pub fn received_kind(&self, ssrc: u32) -> Option<MediaType> {
        self.inbound.get(&ssrc).and_then(|s| s.kind)
    }

    /// Loss markers emitted by this client's jitter buffers, in order.
    pub fn loss_markers(&self) -> &[(u32, u16)] {
        &self.markers
    }

    pub fn offer(&self) -> SessionDescription {
        let addr = self.cfg.addr.ip().to_string();
        let mut sd =
            SessionDescription::new(Origin::ipv4("-", 1000 + self.cfg.index as u64, 1, &addr));
        let formats = [
            (
                MediaKind::Audio,
                PayloadFormat::new(AUDIO_PT, "L16", 48_000, Some(1)),
            ),
            (
                MediaKind::Video,
                PayloadFormat::new(VIDEO_PT, "RAW", 90_000, None),
            ),
        ];
        for (kind, f) in formats {
            let mut m = MediaSection::new(kind, self.cfg.addr.port()).with_format(f);
            m.connection = Some(format!("IN IP4 {addr}"));
            m.ice_ufrag = Some(self.ufrag.clone());
            m.ice_pwd = Some(self.pwd.clone());
            m.crypto = Some(Crypto {
                tag: 1,
                suite: SUITE_NAME.into(),
                key_material: self.key,
            });
            m.candidates
                .push(Candidate::host(&addr, self.cfg.addr.port()));
            sd.media.push(m);
        }
        sd
    }

    /// The join request, offer included.
    pub fn join_line(&mut self) -> String {
        self.state = State::AwaitingAnswer;
        let mut m = SignalMessage::join(
            &self.cfg.room,
            &self.cfg.id,
            self.cfg.screen_width,
            Some(serialize_sdp(&self.offer())),
        );
        m.mode = self.cfg.room_mode.map(|m| m.name().to_string());
        m.to_line()
    }

    pub fn leave_line(&mut self) -> String {
        self.state = State::Left;
        self.next_tick = None;
        self.next_report = None;
        SignalMessage {
            room: Some(self.cfg.room.clone()),
            client_id: Some(self.cfg.id.clone()),
            ..SignalMessage::new("leave")
        }
        .to_line()
    }

    pub fn on_signal(&mut self, line: &str, now: Duration) {
        let Ok(msg) = SignalMessage::parse_line(line) else {
            self.stats.signaling_errors += 1;
            return;
        };
        match msg.kind.as_str() {
            "answer" if self.state == State::AwaitingAnswer => {
                match msg.sdp.as_deref().map(parse_sdp) {
                    Some(Ok(answer)) => self.accept_answer(&answer, now),
                    _ => self.stats.signaling_errors += 1,
                }
            }
            "error" => {
                log::warn!(
                    "{}: signaling error {:?}: {:?}",
                    self.cfg.id,
                    msg.code,
                    msg.message
                );
                self.stats.signaling_errors += 1;
            }
            _ => {}
        }
    }

    fn accept_answer(&mut self, answer: &SessionDescription, now: Duration) {
        let accepted: Vec<&MediaSection> =
            answer.media.iter().filter(|m| !m.is_rejected()).collect();
        let Some(first) = accepted.first() else {
            self.stats.signaling_errors += 1;
            return;
        };
        let addr = first
            .candidates
            .iter()
            .find_map(|c| Some(SocketAddrV4::new(c.address.parse().ok()?, c.port)))
            .or_else(|| {
                let ip = first
                    .connection
                    .as_deref()?
                    .rsplit(' ')
                    .next()?
                    .parse()
                    .ok()?;
                Some(SocketAddrV4::new(ip, first.port))
            });
        let (Some(addr), Some(ufrag), Some(pwd), Some(crypto)) = (
            addr,
            first.ice_ufrag.clone(),
            first.ice_pwd.clone(),
            first.crypto.as_ref(),
        ) else {
            self.stats.signaling_errors += 1;
            return;
        };
        let has = |k: MediaKind| {
            accepted
                .iter()
                .any(|m| m.kind == k && m.direction.receives())
        };
        self.remote = Some(Remote {
            addr,
            ufrag,
            pwd,
            tx: SrtpSession::from_keying_material(&self.key).expect("30-byte key"),
            rx: SrtpSession::from_keying_material(&crypto.key_material).expect("30-byte key"),
            audio: has(MediaKind::Audio),
            video: has(MediaKind::Video),
        });
        self.state = State::Connecting { next_check: now };
    }

    pub fn on_datagram(&mut self, data: &[u8], now: Duration) {
        match classify_datagram(data) {
            DatagramKind::Stun => self.on_stun(data, now),
            DatagramKind::Rtp => self.on_rtp(data, now),
            DatagramKind::Garbage => {}
        }
    }

    fn on_stun(&mut self, data: &[u8], now: Duration) {
        let (Ok(msg), Some(remote)) = (decode_stun(data), self.remote.as_ref()) else {
            return;
        };
        if msg.msg_type != BINDING_SUCCESS
            || Some(msg.transaction_id) != self.pending_txid
            || !verify_message_integrity(data, remote.pwd.as_bytes())
        {
            return;
        }
        self.pending_txid = None;
        if let State::Connecting { .. } = self.state {
            self.state = State::Connected;
            self.stats.connected_at_us = Some(now.as_micros() as u64);
            let start = now.max(self.cfg.media_start);
            let ticks = start.as_micros().div_ceil(TICK.as_micros()) as u32;
            self.next_tick = Some(TICK * ticks);
        }
    }

    fn on_rtp(&mut self, data: &[u8], now: Duration) {
        let Some(remote) = self.remote.as_mut() else {
            return;
        };
        let packet = match remote.rx.unprotect(data) {
            Ok(p) => p,
            Err(_) => {
                self.stats.auth_failures += 1;
                return;
            }
        };
        self.stats.packets_received += 1;
        self.stats.bytes_received += data.len() as u64;
        let kind = match packet.payload_type {
            AUDIO_PT => {
                self.stats.audio_packets_received += 1;
                Some(MediaType::Audio)
            }
            VIDEO_PT => {
                self.stats.video_packets_received += 1;
                Some(MediaType::Video)
            }
            _ => None,
        };
        if packet.ssrc == self.audio.ssrc || packet.ssrc == self.video.ssrc {
            self.stats.self_deliveries += 1;
        }
        if self.next_report.is_none() && now < self.cfg.media_stop {
            self.next_report = Some(now + REPORT_INTERVAL);
        }
        self.window_bytes += data.len() as u64;
        let ssrc = packet.ssrc;
        let stream = self.inbound.entry(ssrc).or_insert_with(|| Inbound {
            kind,
            jitter: JitterBuffer::default(),
            assembler: FrameAssembler::new(),
            last_emitted: None,
            frames: Vec::new(),
        });
        stream.jitter.push(packet, now);
        self.drain(ssrc, now);
    }

    fn drain(&mut self, ssrc: u32, now: Duration) {
        let stream = self.inbound.get_mut(&ssrc).expect("present");
        for item in stream.jitter.pop_ready(now) {
            let seq = match &item {
                JitterOutput::Packet(p) => p.sequence,
                JitterOutput::Lost(s) => *s,
            };
            if stream.last_emitted.is_some_and(|l| !seq_precedes(l, seq)) {
                self.stats.order_violations += 1;
            }
            stream.last_emitted = Some(seq);
            match item {
                JitterOutput::Packet(p) => {
                    if let Some((_, frame)) = stream.assembler.push(p) {
                        self.stats.frames_received += 1;
                        stream.frames.push(payload_hash(&frame));
                    }
                }
                JitterOutput::Lost(seq) => {
                    self.stats.losses_declared += 1;
                    stream.assembler.mark_loss();
                    self.markers.push((ssrc, seq));
                }
            }
        }
    }

    /// Runs everything due at `now` and returns what the client sends.
    pub fn poll(&mut self, now: Duration) -> Vec<ClientOutput> {
        let mut out = Vec::new();
        let ssrcs: Vec<u32> = self.inbound.keys().copied().collect();
        for ssrc in ssrcs {
            self.drain(ssrc, now);
        }
        if let State::Connecting { next_check } = self.state {
            if next_check <= now {
                out.push(self.binding_request());
                self.state = State::Connecting {
                    next_check: now + STUN_RETRY,
                };
            }
        }
        while let Some(t) = self.next_tick.filter(|t| *t <= now) {
            if t >= self.cfg.media_stop {
                self.next_tick = None;
                break;
            }
            self.media_tick(t, &mut out);
            self.next_tick = Some(t + TICK);
        }
        if let Some(t) = self.next_report.filter(|t| *t <= now) {
            if t >= self.cfg.media_stop {
                self.next_report = None;
            } else {
                let report = SignalMessage {
                    room: Some(self.cfg.room.clone()),
                    client_id: Some(self.cfg.id.clone()),
                    stats: Some(json!({ "bytes_received": self.window_bytes })),
                    ..SignalMessage::new("stats")
                };
                out.push(ClientOutput::Signal(report.to_line()));
                self.window_bytes = 0;
                self.next_report = Some(t + REPORT_INTERVAL);
            }
        }
        out
    }

    fn binding_request(&mut self) -> ClientOutput {
        let remote = self.remote.as_ref().expect("connecting implies an answer");
        let mut txid = [0u8; 12];
        self.rng.fill_bytes(&mut txid);
        self.pending_txid = Some(txid);
        self.stats.stun_requests += 1;
        let req = StunMessage::binding_request(
            txid,
            &format!("{}:{}", remote.ufrag, self.ufrag),
            remote.pwd.as_bytes(),
        );
        ClientOutput::Datagram {
            to: remote.addr,
            payload: encode_stun(&req),
        }
    }

    fn media_tick(&mut self, t: Duration, out: &mut Vec<ClientOutput>) {
        let k = (t.as_micros() / TICK.as_micros()) as u64;
        let remote = self.remote.as_ref().expect("connected");
        let (send_audio, send_video) = (remote.audio, remote.video);
        if send_audio {
            let payload = audio_frame(self.cfg.index, k);
            let ts = self
                .audio
                .ts_base
                .wrapping_add((k * SAMPLES_PER_FRAME as u64) as u32);
            self.send_frame(MediaType::Audio, &payload, ts, out);
        }
        if send_video && k.is_multiple_of(VIDEO_EVERY) {
            let payload = video_frame(self.cfg.index, (k / VIDEO_EVERY) as u32);
            let ts = self.video.ts_base.wrapping_add((k * 1800) as u32);
            self.send_frame(MediaType::Video, &payload, ts, out);
        }
    }

    fn send_frame(
        &mut self,
        kind: MediaType,
        payload: &[u8],
        ts: u32,
        out: &mut Vec<ClientOutput>,
    ) {
        let (src, pt) = match kind {
            MediaType::Audio => (&mut self.audio, AUDIO_PT),
            MediaType::Video => (&mut self.video, VIDEO_PT),
        };
        let packets = packetize_frame(payload, pt, src.ssrc, ts, src.next_seq, CLIENT_MTU)
            .expect("MTU above header");
        src.next_seq = src.next_seq.wrapping_add(packets.len() as u16);
        self.sent
            .entry(src.ssrc)
            .or_default()
            .push(payload_hash(payload));
        self.stats.frames_sent += 1;
        let remote = self.remote.as_mut().expect("connected");
        for p in &packets {
            let wire = remote.tx.protect(p).expect("fresh session");
            self.stats.packets_sent += 1;
            self.stats.bytes_sent += wire.len() as u64;
            out.push(ClientOutput::Datagram {
                to: remote.addr,
                payload: wire,
            });
        }
    }

    /// When `poll` next has work.
    pub fn next_timeout(&self) -> Option<Duration> {
        let connecting = match self.state {
            State::Connecting { next_check } => Some(next_check),
            _ => None,
        };
        let jitter = self
            .inbound
            .values()
            .filter_map(|s| s.jitter.next_deadline())
            .min();
        [connecting, self.next_tick, self.next_report, jitter]
            .into_iter()
            .flatten()
            .min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcu_core::media::{decode_frame, FrameKind, MediaFrame, AUDIO_FRAME_BYTES};

    #[test]
    fn audio_is_the_indexed_tone() {
        let a = audio_frame(2, 3);
        assert_eq!(a.len(), AUDIO_FRAME_BYTES);
        let MediaFrame::Audio(f) = decode_frame(FrameKind::Audio, &a, 0).unwrap() else {
            panic!()
        };
        // 300 Hz at 48 kHz: sample n of tick 3 is n + 2880.
        for (i, s) in f.samples.iter().enumerate() {
            let want = 8000.0 * (TAU * 300.0 * (2880 + i) as f64 / 48_000.0).sin();
            assert!((f64::from(*s) - want).abs() <= 0.5);
        }
        assert_eq!(audio_frame(2, 3), a);
        assert_ne!(audio_frame(1, 3), a);
    }

    #[test]
    fn video_carries_color_and_counter() {
        let v = video_frame(1, 0x0102_0304);
        let MediaFrame::Video(f) =
            decode_frame(FrameKind::video_for_len(v.len()).unwrap(), &v, 0).unwrap()
        else {
            panic!()
        };
        assert_eq!((f.width, f.height), (320, 180));
        assert_eq!(&f.y[..4], &[1, 2, 3, 4]);
        assert_eq!(f.pixel(160, 90), PALETTE[1]);
    }

    #[test]
    fn palette_avoids_black() {
        assert!(PALETTE.iter().all(|c| *c != mcu_core::media::BLACK));
    }
}
