//! Discrete-event scenario runner: N synthetic clients, the MCU and the
//! network emulator on one virtual clock, plus the invariant checks that
//! decide the run's verdict.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::path::{Path, PathBuf};
use std::time::Duration;

use mcu_core::conference::{ConferenceConfig, Mcu, McuConfig, McuEvent, Mode};
use mcu_core::media::{select_profile, StreamProfile, HEADROOM};
use mcu_core::rtp::seq_distance;
use serde::Serialize;

use crate::checksum::{multiset_digest, payload_hash, sequence_digest, PayloadHash};
use crate::client::{ClientConfig, ClientOutput, ClientStats, SyntheticClient};
use crate::net::{rtp_tag, CapScope, DropReason, NetConditions, NetSim};
use crate::recorder::{read_recording_file, ReadError, RecorderError, Replayer};
use crate::signaling::{ConnId, SignalingServer, StatsBody};

pub const MCU_ADDR: SocketAddrV4 = SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 1), 4000);
pub const ROOM: &str = "sim";
pub const REPLAY_ID: &str = "replay";
/// Clients start media no earlier than this, leaving time to connect.
pub const MEDIA_START: Duration = Duration::from_millis(200);
/// Time after the last generated frame for in-flight media to settle.
pub const DRAIN: Duration = Duration::from_millis(500);
/// Time after everyone leaves for the last datagrams and loss deadlines.
pub const FLUSH: Duration = Duration::from_millis(300);
/// Bound on the time to a logged downgrade after the cap is halved.
pub const ADAPTATION_BOUND: Duration = Duration::from_secs(2);

#[derive(Debug, Clone)]
pub struct ReplaySource {
    pub path: PathBuf,
    pub speed: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub clients: usize,
    pub mode: Mode,
    pub conditions: NetConditions,
    pub duration: Duration,
    pub screen_width: u32,
    pub bandwidth_halve_at: Option<Duration>,
    pub record: Option<PathBuf>,
    pub replay: Option<ReplaySource>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            clients: 3,
            mode: Mode::Forward,
            conditions: NetConditions::default(),
            duration: Duration::from_secs(5),
            screen_width: 320,
            bandwidth_halve_at: None,
            record: None,
            replay: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error("replay: {0}")]
    Replay(String),
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::ConfigInvalid(m.to_string()));
        let c = &self.conditions;
        if self.clients == 0 || self.clients > 1000 {
            return bad("clients must be between 1 and 1000");
        }
        if !(0.0..=1.0).contains(&c.loss_prob) || !(0.0..=1.0).contains(&c.reorder_prob) {
            return bad("loss and reorder must be probabilities in [0, 1]");
        }
        if self.duration.is_zero() {
            return bad("duration must be positive");
        }
        if self.screen_width == 0 {
            return bad("screen width must be positive");
        }
        if c.bandwidth_cap == Some(0) {
            return bad("bandwidth cap must be positive (omit it for no cap)");
        }
        if self.bandwidth_halve_at.is_some() && c.bandwidth_cap.is_none() {
            return bad("halving the bandwidth needs a bandwidth cap");
        }
        if let Some(r) = &self.replay {
            if !(r.speed > 0.0 && r.speed.is_finite()) {
                return bad("replay speed must be a positive number");
            }
        }
        Ok(())
    }
}

pub fn client_addr(index: usize) -> SocketAddrV4 {
    SocketAddrV4::new(
        Ipv4Addr::new(10, 0, 1 + (index / 250) as u8, 1 + (index % 250) as u8),
        5000,
    )
}

pub fn client_id(index: usize) -> String {
    format!("client-{index}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionsReport {
    pub loss: f64,
    pub reorder: f64,
    pub delay_ms: f64,
    pub jitter_ms: f64,
    pub bandwidth_bps: Option<u64>,
    pub bandwidth_halve_at_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamDigest {
    pub ssrc: u32,
    pub kind: String,
    pub frames: usize,
    /// Digest of the frame hashes in order.
    pub digest: String,
    /// Order-independent digest, comparable with `inspect` output.
    pub multiset_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantReport {
    pub id: String,
    pub mcu: Option<StatsBody>,
    pub client: Option<ClientStats>,
    pub sent_streams: Vec<StreamDigest>,
    pub received_streams: Vec<StreamDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchReport {
    pub time_s: f64,
    pub participant: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub path: String,
    pub speed: f64,
    pub chunks: usize,
    pub stream_ids: Vec<u32>,
    pub span_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NetworkReport {
    pub datagrams_sent: u64,
    pub dropped_loss: usize,
    pub dropped_bandwidth: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct McuCountersReport {
    pub stun_success: u64,
    pub stun_error: u64,
    pub garbage: u64,
    pub unknown_source: u64,
    pub auth_failures: u64,
    pub rejected_packets: u64,
    pub unlatched_drops: u64,
    pub record_errors: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub applicable: bool,
    pub passed: bool,
}

impl CheckResult {
    fn skipped() -> Self {
        Self {
            applicable: false,
            passed: true,
        }
    }

    fn run(passed: bool) -> Self {
        Self {
            applicable: true,
            passed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LossAccounting {
    pub applicable: bool,
    pub passed: bool,
    /// Loss markers emitted by all jitter buffers.
    pub markers: usize,
    /// Network drops the receivers could observe as gaps.
    pub expected: usize,
    pub missing_markers: usize,
    pub spurious_markers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Checks {
    pub payload_fidelity: CheckResult,
    pub stream_counts: CheckResult,
    pub strictly_increasing: CheckResult,
    pub no_self_delivery: CheckResult,
    pub packet_conservation: CheckResult,
    pub loss_accounting: LossAccounting,
    pub adaptation: CheckResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub duration_s: f64,
    pub mode: String,
    pub clients: usize,
    pub seed: u64,
    pub screen_width: u32,
    pub conditions: ConditionsReport,
    pub participants: Vec<ParticipantReport>,
    pub profile_switches: Vec<SwitchReport>,
    pub recording: Option<String>,
    pub replay: Option<ReplayReport>,
    pub network: NetworkReport,
    pub mcu_counters: McuCountersReport,
    pub checks: Checks,
    pub violations: Vec<String>,
}

impl StatsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_json())
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantReport> {
        self.participants.iter().find(|p| p.id == id)
    }
}

/// Maps 16-bit sequence numbers to a per-SSRC extended space, advanced by
/// senders. Receivers map relative to the sender's latest, which is close.
#[derive(Default)]
struct LossOracle {
    highest: BTreeMap<u32, u64>,
    dropped: BTreeMap<(SocketAddrV4, SocketAddrV4, u32), BTreeSet<u64>>,
    first_arrival: BTreeMap<(SocketAddrV4, u32), u64>,
    max_arrival: BTreeMap<(SocketAddrV4, u32), u64>,
    markers: BTreeMap<(SocketAddrV4, u32), BTreeSet<u64>>,
    last_marker: BTreeMap<(SocketAddrV4, u32), u64>,
    marker_order_violations: u64,
    duplicate_markers: u64,
}

impl LossOracle {
    fn map(&self, ssrc: u32, seq: u16) -> u64 {
        let h = *self
            .highest
            .get(&ssrc)
            .unwrap_or(&((1u64 << 32) | u64::from(seq)));
        (h as i64 + i64::from(seq_distance(h as u16, seq))) as u64
    }

    fn on_send(
        &mut self,
        from: SocketAddrV4,
        to: SocketAddrV4,
        tag: Option<(u32, u16)>,
        dropped: bool,
    ) {
        let Some((ssrc, seq)) = tag else {
            return;
        };
        let ext = self.map(ssrc, seq);
        let h = self.highest.entry(ssrc).or_insert(ext);
        *h = (*h).max(ext);
        if dropped {
            self.dropped
                .entry((from, to, ssrc))
                .or_default()
                .insert(ext);
        }
    }

    fn on_arrival(&mut self, to: SocketAddrV4, tag: Option<(u32, u16)>) {
        let Some((ssrc, seq)) = tag else {
            return;
        };
        let ext = self.map(ssrc, seq);
        self.first_arrival.entry((to, ssrc)).or_insert(ext);
        let m = self.max_arrival.entry((to, ssrc)).or_insert(ext);
        *m = (*m).max(ext);
    }

    fn on_marker(&mut self, at: SocketAddrV4, ssrc: u32, seq: u16) {
        let ext = self.map(ssrc, seq);
        let key = (at, ssrc);
        if self.last_marker.get(&key).is_some_and(|l| *l >= ext) {
            self.marker_order_violations += 1;
        }
        self.last_marker.insert(key, ext);
        if !self.markers.entry(key).or_default().insert(ext) {
            self.duplicate_markers += 1;
        }
    }

    /// Compares every receiver's markers with the drops it could observe:
    /// drops on its own inbound link, plus, for forwarded streams, drops on
    /// the sender's uplink, restricted to the receiver's arrival window.
    fn evaluate(&self, forward: bool) -> LossAccounting {
        let mut out = LossAccounting::default();
        let receivers: BTreeSet<(SocketAddrV4, u32)> = self
            .first_arrival
            .keys()
            .chain(self.markers.keys())
            .copied()
            .collect();
        for (rx, ssrc) in receivers {
            let markers = self.markers.get(&(rx, ssrc)).cloned().unwrap_or_default();
            let mut expected = BTreeSet::new();
            if let (Some(&lo), Some(&hi)) = (
                self.first_arrival.get(&(rx, ssrc)),
                self.max_arrival.get(&(rx, ssrc)),
            ) {
                for ((_, to, s), set) in &self.dropped {
                    let relevant =
                        *s == ssrc && (*to == rx || (forward && rx != MCU_ADDR && *to == MCU_ADDR));
                    if relevant {
                        expected.extend(set.range(lo..=hi).copied());
                    }
                }
            }
            out.markers += markers.len();
            out.expected += expected.len();
            out.missing_markers += expected.difference(&markers).count();
            out.spurious_markers += markers.difference(&expected).count();
        }
        out
    }
}

struct Run {
    server: SignalingServer,
    net: NetSim,
    clients: Vec<SyntheticClient>,
    by_addr: BTreeMap<SocketAddrV4, usize>,
    oracle: LossOracle,
    switches: Vec<SwitchReport>,
    marker_seen: Vec<usize>,
    replayer: Option<Replayer>,
    replay_failures: u64,
}

impl Run {
    fn send(&mut self, from: SocketAddrV4, to: SocketAddrV4, payload: Vec<u8>, now: Duration) {
        let tag = rtp_tag(&payload);
        let delivered = self.net.send(from, to, payload, now).is_some();
        self.oracle.on_send(from, to, tag, !delivered);
    }

    fn pump_mcu(&mut self, now: Duration) {
        for t in self.server.mcu_mut().drain_transmits() {
            self.send(MCU_ADDR, t.dst, t.payload, now);
        }
        for event in self.server.pump_events() {
            match event {
                McuEvent::LossDeclared { loss, .. } => {
                    self.oracle.on_marker(MCU_ADDR, loss.ssrc, loss.seq)
                }
                McuEvent::ProfileChanged { switch, .. } => self.switches.push(SwitchReport {
                    time_s: switch.at.as_secs_f64(),
                    participant: switch.participant,
                    from: switch.change.from.name().to_string(),
                    to: switch.change.to.name().to_string(),
                }),
                McuEvent::Record { .. } => {}
            }
        }
    }

    fn collect_markers(&mut self, i: usize) {
        let c = &self.clients[i];
        let addr = c.addr();
        let new: Vec<(u32, u16)> = c.loss_markers()[self.marker_seen[i]..].to_vec();
        self.marker_seen[i] += new.len();
        for (ssrc, seq) in new {
            self.oracle.on_marker(addr, ssrc, seq);
        }
    }

    fn signal(&mut self, i: usize, line: &str, now: Duration) {
        let outcome = self.server.handle_line(i as ConnId, line, now);
        for (conn, reply) in outcome.replies {
            self.clients[conn as usize].on_signal(&reply.to_line(), now);
        }
        self.pump_mcu(now);
    }

    fn poll_client(&mut self, i: usize, now: Duration) {
        let outputs = self.clients[i].poll(now);
        self.collect_markers(i);
        let from = self.clients[i].addr();
        for o in outputs {
            match o {
                ClientOutput::Datagram { to, payload } => self.send(from, to, payload, now),
                ClientOutput::Signal(line) => self.signal(i, &line, now),
            }
        }
    }

    fn step(&mut self, now: Duration) {
        while let Some(d) = self.net.pop_due(now) {
            let tag = rtp_tag(&d.payload);
            self.oracle.on_arrival(d.to, tag);
            if d.to == MCU_ADDR {
                self.server
                    .mcu_mut()
                    .handle_datagram(d.from, &d.payload, now);
                self.pump_mcu(now);
            } else if let Some(&i) = self.by_addr.get(&d.to) {
                self.clients[i].on_datagram(&d.payload, now);
                self.collect_markers(i);
            }
        }
        if let Some(r) = self.replayer.as_mut() {
            if let Err(e) = r.inject_due(self.server.mcu_mut(), ROOM, REPLAY_ID, now) {
                log::warn!("replay injection failed: {e}");
                self.replay_failures += 1;
            }
        }
        self.server.mcu_mut().poll(now);
        self.pump_mcu(now);
        for i in 0..self.clients.len() {
            self.poll_client(i, now);
        }
    }

    /// Advances virtual time to `end`, applying a pending cap change.
    fn run_until(
        &mut self,
        mut now: Duration,
        end: Duration,
        halve: &mut Option<(Duration, Option<u64>)>,
    ) -> Duration {
        loop {
            let mut t = self.next_event();
            if let Some((h, _)) = *halve {
                t = t.min(h);
            }
            if t > end {
                return end;
            }
            now = t.max(now);
            if let Some((h, cap)) = halve.filter(|(h, _)| *h <= now) {
                self.net.set_bandwidth_cap(cap, h);
                *halve = None;
            }
            self.step(now);
        }
    }

    fn next_event(&self) -> Duration {
        let mut t = self.server.mcu().next_timeout();
        let others = [
            self.net.next_delivery(),
            self.replayer.as_ref().and_then(Replayer::next_due),
        ];
        for x in others.into_iter().flatten().chain(
            self.clients
                .iter()
                .filter_map(SyntheticClient::next_timeout),
        ) {
            t = t.min(x);
        }
        t
    }
}

fn stream_digest(ssrc: u32, kind: &str, frames: &[PayloadHash]) -> StreamDigest {
    StreamDigest {
        ssrc,
        kind: kind.to_string(),
        frames: frames.len(),
        digest: sequence_digest(frames),
        multiset_digest: multiset_digest(frames.iter().copied()),
    }
}

/// Runs one scenario to completion on virtual time.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<StatsReport, ScenarioError> {
    cfg.validate()?;
    let seed = cfg.conditions.seed;
    let mcu = Mcu::new(McuConfig {
        local_addr: MCU_ADDR,
        seed,
        default_mode: cfg.mode,
        conference: ConferenceConfig::default(),
    });
    let mut server = SignalingServer::new(mcu, std::env::temp_dir());
    server.mcu_mut().create_room(ROOM, cfg.mode);

    let clients: Vec<SyntheticClient> = (0..cfg.clients)
        .map(|i| {
            SyntheticClient::new(ClientConfig {
                index: i,
                id: client_id(i),
                room: ROOM.to_string(),
                addr: client_addr(i),
                screen_width: cfg.screen_width,
                seed,
                media_start: MEDIA_START,
                media_stop: cfg.duration,
                room_mode: Some(cfg.mode),
            })
        })
        .collect();

    let replayer = match &cfg.replay {
        None => None,
        Some(r) => {
            let rec = read_recording_file(&r.path)?;
            let replayer = Replayer::new(rec.chunks, r.speed, MEDIA_START)
                .map_err(|e| ScenarioError::Replay(e.to_string()))?;
            let live: BTreeSet<u32> = clients
                .iter()
                .flat_map(|c| [c.audio_ssrc(), c.video_ssrc()])
                .collect();
            if let Some(id) = replayer
                .stream_ids()
                .into_iter()
                .find(|id| live.contains(id))
            {
                return Err(ScenarioError::ConfigInvalid(format!(
                    "recorded stream id {id:#010x} collides with a live client SSRC; use another --seed"
                )));
            }
            server
                .mcu_mut()
                .join_synthetic(ROOM, REPLAY_ID)
                .map_err(|e| ScenarioError::Replay(e.to_string()))?;
            Some(replayer)
        }
    };
    if let Some(path) = &cfg.record {
        server.start_recording(ROOM, path)?;
    }

    let mut run = Run {
        server,
        net: NetSim::new(cfg.conditions, CapScope::From(MCU_ADDR)),
        by_addr: clients
            .iter()
            .enumerate()
            .map(|(i, c)| (c.addr(), i))
            .collect(),
        marker_seen: vec![0; clients.len()],
        clients,
        oracle: LossOracle::default(),
        switches: Vec::new(),
        replayer,
        replay_failures: 0,
    };

    let mut now = Duration::ZERO;
    for i in 0..run.clients.len() {
        let line = run.clients[i].join_line();
        run.signal(i, &line, now);
    }

    let end = cfg.duration.max(MEDIA_START) + DRAIN;
    let mut halve = cfg
        .bandwidth_halve_at
        .map(|at| (at, cfg.conditions.bandwidth_cap.map(|c| c / 2)));
    now = run.run_until(now, end, &mut halve);

    let mcu_stats: BTreeMap<String, StatsBody> = run
        .server
        .mcu()
        .stats(ROOM)
        .unwrap_or_default()
        .iter()
        .map(|(id, s)| (id.clone(), s.into()))
        .collect();
    let room_mode = run
        .server
        .mcu()
        .room(ROOM)
        .map(|c| c.mode())
        .unwrap_or(cfg.mode);
    for i in 0..run.clients.len() {
        let line = run.clients[i].leave_line();
        run.signal(i, &line, now);
    }
    // Let in-flight media land and pending holes reach their loss deadline.
    run.run_until(now, end + FLUSH, &mut None);
    let recording = match &cfg.record {
        Some(_) => run
            .server
            .stop_recording(ROOM)?
            .map(|p| p.display().to_string()),
        None => None,
    };

    Ok(build_report(cfg, &run, mcu_stats, room_mode, recording))
}

#[allow(clippy::field_reassign_with_default)]
fn build_report(
    cfg: &ScenarioConfig,
    run: &Run,
    mcu_stats: BTreeMap<String, StatsBody>,
    room_mode: Mode,
    recording: Option<String>,
) -> StatsReport {
    let c = &cfg.conditions;
    let forward = room_mode == Mode::Forward;
    let lossless = c.loss_prob == 0.0 && c.bandwidth_cap.is_none();
    let mut violations = Vec::new();

    let mut participants = Vec::new();
    for client in &run.clients {
        let kind_name = |ssrc: u32| {
            if ssrc == client.audio_ssrc() {
                "audio"
            } else {
                "video"
            }
        };
        let sent = client
            .sent_frames()
            .iter()
            .map(|(&s, f)| stream_digest(s, kind_name(s), f))
            .collect();
        let received = client
            .received_frames()
            .into_iter()
            .map(|(s, f)| {
                stream_digest(
                    s,
                    client.received_kind(s).map_or("unknown", |k| k.name()),
                    f,
                )
            })
            .collect();
        participants.push(ParticipantReport {
            id: client.id().to_string(),
            mcu: mcu_stats.get(client.id()).cloned(),
            client: Some(client.stats()),
            sent_streams: sent,
            received_streams: received,
        });
    }
    if let Some(r) = &run.replayer {
        let mut by_stream: BTreeMap<u32, (String, Vec<PayloadHash>)> = BTreeMap::new();
        for ch in r.chunks() {
            by_stream
                .entry(ch.stream_id)
                .or_insert_with(|| (ch.kind.name().to_string(), Vec::new()))
                .1
                .push(payload_hash(&ch.payload));
        }
        participants.push(ParticipantReport {
            id: REPLAY_ID.to_string(),
            mcu: mcu_stats.get(REPLAY_ID).cloned(),
            client: None,
            sent_streams: by_stream
                .iter()
                .map(|(&s, (k, f))| stream_digest(s, k, f))
                .collect(),
            received_streams: Vec::new(),
        });
    }

    let mut checks = Checks::default();

    // Every forwarded frame must arrive intact and in order.
    checks.payload_fidelity =
        if forward && lossless {
            let mut ok = true;
            let mut sources: Vec<(String, BTreeMap<u32, Vec<PayloadHash>>)> = run
                .clients
                .iter()
                .map(|c| (c.id().to_string(), c.sent_frames().clone()))
                .collect();
            if let Some(r) = &run.replayer {
                let mut m: BTreeMap<u32, Vec<PayloadHash>> = BTreeMap::new();
                for ch in r.chunks() {
                    m.entry(ch.stream_id)
                        .or_default()
                        .push(payload_hash(&ch.payload));
                }
                sources.push((REPLAY_ID.to_string(), m));
            }
            for rx in &run.clients {
                let got = rx.received_frames();
                for (src_id, streams) in &sources {
                    if src_id == rx.id() {
                        continue;
                    }
                    for (ssrc, frames) in streams {
                        let received = got.get(ssrc).copied().unwrap_or(&[]);
                        if received != frames.as_slice() {
                            ok = false;
                            violations.push(format!(
                            "{}: stream {ssrc:#010x} from {src_id}: {} of {} frames byte-identical",
                            rx.id(),
                            received.iter().zip(frames).take_while(|(a, b)| a == b).count(),
                            frames.len()
                        ));
                        }
                    }
                }
            }
            CheckResult::run(ok)
        } else {
            CheckResult::skipped()
        };

    checks.stream_counts = if lossless && run.clients.len() >= 2 {
        let replay_streams = run.replayer.as_ref().map_or(0, |r| r.stream_ids().len());
        let want = if forward {
            2 * (run.clients.len() - 1) + replay_streams
        } else {
            2
        };
        let mut ok = true;
        for client in &run.clients {
            let got = client.stats().streams_in;
            let mcu_side = mcu_stats.get(client.id()).map(|s| s.streams_in);
            if got != want || mcu_side != Some(want) {
                ok = false;
                violations.push(format!(
                    "{}: {got} inbound streams (MCU counts {mcu_side:?}), expected {want}",
                    client.id()
                ));
            }
        }
        CheckResult::run(ok)
    } else {
        CheckResult::skipped()
    };

    let order_violations: u64 = run
        .clients
        .iter()
        .map(|c| c.stats().order_violations)
        .sum::<u64>()
        + run.oracle.marker_order_violations
        + run.oracle.duplicate_markers;
    checks.strictly_increasing = CheckResult::run(order_violations == 0);
    if order_violations > 0 {
        violations.push(format!(
            "{order_violations} jitter buffer outputs out of sequence order"
        ));
    }

    let self_deliveries: u64 = run.clients.iter().map(|c| c.stats().self_deliveries).sum();
    checks.no_self_delivery = CheckResult::run(self_deliveries == 0);
    if self_deliveries > 0 {
        violations.push(format!(
            "{self_deliveries} packets delivered back to their sender"
        ));
    }

    // Uplink conservation: each packet a client sent was received by the
    // MCU or dropped by the network on the way.
    let client_sent: u64 = run.clients.iter().map(|c| c.stats().packets_sent).sum();
    let mcu_received: u64 = mcu_stats.values().map(|s| s.packets_received).sum();
    let uplink_drops = run
        .net
        .drops()
        .iter()
        .filter(|d| d.to == MCU_ADDR && d.rtp.is_some())
        .count() as u64;
    checks.packet_conservation = CheckResult::run(client_sent == mcu_received + uplink_drops);
    if !checks.packet_conservation.passed {
        violations.push(format!(
            "clients sent {client_sent} packets; MCU received {mcu_received} and the network dropped {uplink_drops}"
        ));
    }

    let mut loss = run.oracle.evaluate(forward);
    loss.applicable = true;
    loss.passed = loss.missing_markers == 0 && loss.spurious_markers == 0;
    if !loss.passed {
        violations.push(format!(
            "loss markers disagree with the drop log: {} missing, {} spurious",
            loss.missing_markers, loss.spurious_markers
        ));
    }
    checks.loss_accounting = loss;

    checks.adaptation = match (cfg.bandwidth_halve_at, c.bandwidth_cap) {
        (Some(at), Some(cap)) if !forward => {
            let halved = (cap / 2) as f64;
            let mut ok = true;
            for client in &run.clients {
                let mut profile = select_profile(f64::INFINITY, cfg.screen_width);
                for s in run
                    .switches
                    .iter()
                    .filter(|s| s.participant == client.id() && s.time_s <= at.as_secs_f64())
                {
                    profile = StreamProfile::from_name(&s.to).unwrap_or(profile);
                }
                let affected = profile.lower().is_some()
                    && profile.target_bitrate() as f64 > HEADROOM * halved;
                let deadline = (at + ADAPTATION_BOUND).as_secs_f64();
                let downgraded = run.switches.iter().any(|s| {
                    s.participant == client.id()
                        && s.time_s > at.as_secs_f64()
                        && s.time_s <= deadline
                        && StreamProfile::from_name(&s.to) < StreamProfile::from_name(&s.from)
                });
                if affected && !downgraded {
                    ok = false;
                    violations.push(format!(
                        "{}: no downgrade within {:?} of the bandwidth drop",
                        client.id(),
                        ADAPTATION_BOUND
                    ));
                }
            }
            CheckResult::run(ok)
        }
        _ => CheckResult::skipped(),
    };

    if run.replay_failures > 0 {
        violations.push(format!("{} replay injections failed", run.replay_failures));
    }
    let counters = run.server.mcu().counters();
    if counters.rejected_packets > 0 || counters.auth_failures > 0 {
        violations.push(format!(
            "MCU rejected {} packets and failed to authenticate {}",
            counters.rejected_packets, counters.auth_failures
        ));
    }

    StatsReport {
        duration_s: cfg.duration.as_secs_f64(),
        mode: room_mode.name().to_string(),
        clients: cfg.clients,
        seed: c.seed,
        screen_width: cfg.screen_width,
        conditions: ConditionsReport {
            loss: c.loss_prob,
            reorder: c.reorder_prob,
            delay_ms: c.base_delay.as_secs_f64() * 1000.0,
            jitter_ms: c.jitter.as_secs_f64() * 1000.0,
            bandwidth_bps: c.bandwidth_cap,
            bandwidth_halve_at_s: cfg.bandwidth_halve_at.map(|d| d.as_secs_f64()),
        },
        participants,
        profile_switches: run.switches.clone(),
        recording,
        replay: cfg
            .replay
            .as_ref()
            .zip(run.replayer.as_ref())
            .map(|(src, r)| ReplayReport {
                path: src.path.display().to_string(),
                speed: src.speed,
                chunks: r.chunks().count(),
                stream_ids: r.stream_ids(),
                span_s: r.span().as_secs_f64(),
            }),
        network: NetworkReport {
            datagrams_sent: run.net.sent(),
            dropped_loss: run
                .net
                .drops()
                .iter()
                .filter(|d| d.reason == DropReason::Loss)
                .count(),
            dropped_bandwidth: run
                .net
                .drops()
                .iter()
                .filter(|d| d.reason == DropReason::Bandwidth)
                .count(),
        },
        mcu_counters: McuCountersReport {
            stun_success: counters.stun_success,
            stun_error: counters.stun_error,
            garbage: counters.garbage,
            unknown_source: counters.unknown_source,
            auth_failures: counters.auth_failures,
            rejected_packets: counters.rejected_packets,
            unlatched_drops: counters.unlatched_drops,
            record_errors: run.server.record_errors(),
        },
        checks,
        violations,
    }
}
