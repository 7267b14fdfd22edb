//! Line-delimited JSON signaling, co-located with the MCU.
//!
//! One JSON object per line. A connection must `join` before anything else;
//! the join (or a following `offer`) carries the client's SDP offer and is
//! answered with the MCU's SDP. Errors are replies, never panics.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use mcu_core::conference::{ConferenceError, Mcu, McuEvent, Mode, ParticipantStats};
use mcu_core::sdp::{parse_sdp, serialize_sdp};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::recorder::{create_recording, Recorder, RecorderError};

pub type ConnId = u64;

pub const BAD_JSON: &str = "bad-json";
pub const UNKNOWN_TYPE: &str = "unknown-type";
pub const NOT_JOINED: &str = "not-joined";
pub const NO_SUCH_ROOM: &str = "no-such-room";
pub const DUPLICATE_ID: &str = "duplicate-id";
pub const BAD_SDP: &str = "bad-sdp";
pub const RECORD_FAILED: &str = "record-failed";

/// Consecutive unparseable lines after which a connection is closed.
pub const MAX_BAD_LINES: u32 = 3;

pub const DEFAULT_SCREEN_WIDTH: u32 = 1280;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalMessage {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, rename = "ref", skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<Value>,
}

impl SignalMessage {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            ..Self::default()
        }
    }

    pub fn error(code: &str, message: impl Into<String>, reference: Option<&str>) -> Self {
        Self {
            code: Some(code.to_string()),
            message: Some(message.into()),
            reference: reference.map(str::to_string),
            ..Self::new("error")
        }
    }

    pub fn join(room: &str, client_id: &str, screen_width: u32, sdp: Option<String>) -> Self {
        Self {
            room: Some(room.to_string()),
            client_id: Some(client_id.to_string()),
            screen_width: Some(screen_width),
            sdp,
            ..Self::new("join")
        }
    }

    /// One line of JSON, without the terminator. JSON string escaping keeps
    /// newlines out of the output.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn parse_line(line: &str) -> Result<Self, serde_json::Error> {
        let value: Value = serde_json::from_str(line)?;
        if !value.is_object() {
            return Err(serde::de::Error::custom("signal must be a JSON object"));
        }
        serde_json::from_value(value)
    }
}

/// Per-participant counters as reported on the signaling channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsBody {
    pub packets_sent: u64,
    pub packets_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub losses_declared: u64,
    pub current_profile: Option<String>,
    pub streams_in: usize,
    pub streams_in_audio: usize,
    pub streams_in_video: usize,
    pub streams_out: usize,
    pub auth_failures: u64,
    pub frames_rejected: u64,
}

impl From<&ParticipantStats> for StatsBody {
    fn from(s: &ParticipantStats) -> Self {
        Self {
            packets_sent: s.packets_sent,
            packets_received: s.packets_received,
            bytes_sent: s.bytes_sent,
            bytes_received: s.bytes_received,
            losses_declared: s.losses_declared,
            current_profile: s.current_profile.map(|p| p.name().to_string()),
            streams_in: s.streams_in,
            streams_in_audio: s.streams_in_audio,
            streams_in_video: s.streams_in_video,
            streams_out: s.streams_out,
            auth_failures: s.auth_failures,
            frames_rejected: s.frames_rejected,
        }
    }
}

#[derive(Debug, Clone)]
struct PendingJoin {
    room: String,
    client_id: String,
    screen_width: u32,
    mode: Option<Mode>,
}

#[derive(Debug, Default)]
struct Connection {
    joined: Option<(String, String)>,
    pending: Option<PendingJoin>,
    bad_lines: u32,
}

#[derive(Debug, Default)]
pub struct LineOutcome {
    pub replies: Vec<(ConnId, SignalMessage)>,
    /// The connection should be closed after the replies are sent.
    pub close: bool,
}

struct ActiveRecording {
    recorder: Recorder<BufWriter<File>>,
    path: PathBuf,
}

pub struct SignalingServer {
    mcu: Mcu,
    conns: BTreeMap<ConnId, Connection>,
    recordings: BTreeMap<String, ActiveRecording>,
    record_dir: PathBuf,
    record_seq: u32,
    record_errors: u64,
    events: Vec<McuEvent>,
}

fn join_error_code(e: &ConferenceError) -> &'static str {
    match e {
        ConferenceError::DuplicateId(_) => DUPLICATE_ID,
        ConferenceError::NoSuchRoom(_) => NO_SUCH_ROOM,
        _ => BAD_SDP,
    }
}

impl SignalingServer {
    pub fn new(mcu: Mcu, record_dir: impl Into<PathBuf>) -> Self {
        Self {
            mcu,
            conns: BTreeMap::new(),
            recordings: BTreeMap::new(),
            record_dir: record_dir.into(),
            record_seq: 0,
            record_errors: 0,
            events: Vec::new(),
        }
    }

    pub fn mcu(&self) -> &Mcu {
        &self.mcu
    }

    pub fn mcu_mut(&mut self) -> &mut Mcu {
        &mut self.mcu
    }

    /// Chunks that could not be written since the server started.
    pub fn record_errors(&self) -> u64 {
        self.record_errors
    }

    pub fn handle_line(&mut self, conn: ConnId, line: &str, now: Duration) -> LineOutcome {
        let mut out = LineOutcome::default();
        let state = self.conns.entry(conn).or_default();
        let msg = match SignalMessage::parse_line(line.trim_end_matches(['\r', '\n'])) {
            Ok(m) => {
                state.bad_lines = 0;
                m
            }
            Err(e) => {
                state.bad_lines += 1;
                out.replies
                    .push((conn, SignalMessage::error(BAD_JSON, e.to_string(), None)));
                if state.bad_lines >= MAX_BAD_LINES {
                    out.close = true;
                    self.disconnect(conn);
                }
                return out;
            }
        };
        if let Some(reply) = self.dispatch(conn, &msg, now) {
            out.replies.push((conn, reply));
        }
        out
    }

    fn dispatch(
        &mut self,
        conn: ConnId,
        msg: &SignalMessage,
        now: Duration,
    ) -> Option<SignalMessage> {
        let kind = msg.kind.as_str();
        let err = |code: &str, text: &str| Some(SignalMessage::error(code, text, Some(kind)));
        if kind == "join" {
            return self.on_join(conn, msg);
        }
        if !matches!(
            kind,
            "offer"
                | "answer-ack"
                | "leave"
                | "set-mode"
                | "record-start"
                | "record-stop"
                | "stats-request"
                | "stats"
        ) {
            return err(UNKNOWN_TYPE, "unknown message type");
        }
        let state = self.conns.get(&conn).expect("registered by handle_line");
        if kind == "offer" {
            if state.joined.is_some() {
                return err(BAD_SDP, "renegotiation is not supported");
            }
            let Some(pending) = state.pending.clone() else {
                return err(NOT_JOINED, "join first");
            };
            let Some(sdp) = &msg.sdp else {
                return err(BAD_SDP, "offer carries no sdp");
            };
            return Some(self.complete_join(conn, pending, sdp));
        }
        let Some((room, id)) = state.joined.clone() else {
            return err(NOT_JOINED, "join first");
        };
        let target = msg.room.clone().unwrap_or_else(|| room.clone());
        match kind {
            "answer-ack" => None,
            "leave" => {
                let _ = self.mcu.leave(&room, &id);
                self.conns.get_mut(&conn).expect("registered").joined = None;
                None
            }
            "set-mode" => {
                let Some(mode) = msg.mode.as_deref().and_then(Mode::from_name) else {
                    return err(BAD_JSON, "mode must be \"forward\" or \"mix\"");
                };
                match self.mcu.set_mode(&target, mode) {
                    Ok(()) => None,
                    Err(_) => err(NO_SUCH_ROOM, "no such room"),
                }
            }
            "record-start" => {
                if self.mcu.room(&target).is_none() {
                    return err(NO_SUCH_ROOM, "no such room");
                }
                if self.recordings.contains_key(&target) {
                    return None;
                }
                self.record_seq += 1;
                let path =
                    self.record_dir
                        .join(format!("{}-{}.mcur", sanitize(&target), self.record_seq));
                match self.start_recording(&target, &path) {
                    Ok(()) => None,
                    Err(e) => err(RECORD_FAILED, &e.to_string()),
                }
            }
            "record-stop" => match self.stop_recording(&target) {
                Ok(_) => None,
                Err(e) => err(RECORD_FAILED, &e.to_string()),
            },
            "stats-request" => Some(self.emit_stats(&target)),
            "stats" => {
                let Some(bytes) = msg
                    .stats
                    .as_ref()
                    .and_then(|s| s.get("bytes_received"))
                    .and_then(Value::as_u64)
                else {
                    return err(BAD_JSON, "stats report needs stats.bytes_received");
                };
                match self.mcu.on_receiver_report(&room, &id, bytes, now) {
                    Ok(()) => None,
                    Err(_) => err(NO_SUCH_ROOM, "participant is gone"),
                }
            }
            _ => unreachable!("filtered above"),
        }
    }

    fn on_join(&mut self, conn: ConnId, msg: &SignalMessage) -> Option<SignalMessage> {
        let err = |code: &str, text: &str| Some(SignalMessage::error(code, text, Some("join")));
        let state = self.conns.get(&conn).expect("registered by handle_line");
        if state.joined.is_some() || state.pending.is_some() {
            return err(DUPLICATE_ID, "connection already joined");
        }
        let (Some(room), Some(client_id)) = (msg.room.clone(), msg.client_id.clone()) else {
            return err(BAD_JSON, "join needs room and client_id");
        };
        let mode = match msg.mode.as_deref() {
            None => None,
            Some(m) => match Mode::from_name(m) {
                Some(mode) => Some(mode),
                None => return err(BAD_JSON, "mode must be \"forward\" or \"mix\""),
            },
        };
        let pending = PendingJoin {
            room,
            client_id,
            screen_width: msg.screen_width.unwrap_or(DEFAULT_SCREEN_WIDTH),
            mode,
        };
        match &msg.sdp {
            Some(sdp) => Some(self.complete_join(conn, pending, sdp)),
            None => {
                self.conns.get_mut(&conn).expect("registered").pending = Some(pending);
                None
            }
        }
    }

    fn complete_join(&mut self, conn: ConnId, p: PendingJoin, sdp: &str) -> SignalMessage {
        let offer = match parse_sdp(sdp) {
            Ok(o) => o,
            Err(e) => return SignalMessage::error(BAD_SDP, e.to_string(), Some("join")),
        };
        let created = self.mcu.room(&p.room).is_none();
        if let (true, Some(mode)) = (created, p.mode) {
            self.mcu.create_room(&p.room, mode);
        }
        match self.mcu.join(&p.room, &p.client_id, &offer, p.screen_width) {
            Ok(answer) => {
                let state = self.conns.get_mut(&conn).expect("registered");
                state.pending = None;
                state.joined = Some((p.room.clone(), p.client_id.clone()));
                SignalMessage {
                    room: Some(p.room),
                    client_id: Some(p.client_id),
                    sdp: Some(serialize_sdp(&answer)),
                    ..SignalMessage::new("answer")
                }
            }
            Err(e) => {
                if created {
                    self.mcu.close_room(&p.room);
                }
                SignalMessage::error(join_error_code(&e), e.to_string(), Some("join"))
            }
        }
    }

    /// Forgets the connection; a joined participant leaves its room.
    pub fn disconnect(&mut self, conn: ConnId) {
        if let Some(Connection {
            joined: Some((room, id)),
            ..
        }) = self.conns.remove(&conn)
        {
            let _ = self.mcu.leave(&room, &id);
        }
    }

    pub fn emit_stats(&self, room: &str) -> SignalMessage {
        let Ok(stats) = self.mcu.stats(room) else {
            return SignalMessage::error(NO_SUCH_ROOM, "no such room", Some("stats-request"));
        };
        let mode = self.mcu.room(room).map(|c| c.mode().name());
        let participants: BTreeMap<String, StatsBody> =
            stats.iter().map(|(id, s)| (id.clone(), s.into())).collect();
        SignalMessage {
            room: Some(room.to_string()),
            stats: Some(json!({ "mode": mode, "participants": participants })),
            ..SignalMessage::new("stats")
        }
    }

    /// Starts writing `room`'s record events to `path` and switches the
    /// room's recording on.
    pub fn start_recording(&mut self, room: &str, path: &Path) -> Result<(), RecorderError> {
        let recorder = create_recording(path)?;
        self.recordings.insert(
            room.to_string(),
            ActiveRecording {
                recorder,
                path: path.to_path_buf(),
            },
        );
        let _ = self.mcu.set_recording(room, true);
        Ok(())
    }

    pub fn stop_recording(&mut self, room: &str) -> Result<Option<PathBuf>, RecorderError> {
        let _ = self.mcu.set_recording(room, false);
        let Some(active) = self.recordings.remove(room) else {
            return Ok(None);
        };
        self.flush_records();
        active.recorder.finalize()?;
        Ok(Some(active.path))
    }

    fn flush_records(&mut self) {
        for event in self.mcu.drain_events() {
            match event {
                McuEvent::Record { room, chunk } => {
                    if let Some(active) = self.recordings.get_mut(&room) {
                        if let Err(e) = active.recorder.append(&chunk) {
                            log::warn!("room {room}: dropping record chunk: {e}");
                            self.record_errors += 1;
                        }
                    }
                }
                other => self.events.push(other),
            }
        }
    }

    /// Writes pending record events to their rooms' files and returns the
    /// remaining events.
    pub fn pump_events(&mut self) -> Vec<McuEvent> {
        self.flush_records();
        std::mem::take(&mut self.events)
    }
}

fn sanitize(room: &str) -> String {
    room.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
