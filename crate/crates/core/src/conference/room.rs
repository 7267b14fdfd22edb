use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::time::Duration;

use super::estimator::{BandwidthEstimator, ProfileChange};
use super::participant::*;
use super::ConferenceError;
use crate::media::*;
use crate::recording::{RecordingChunk, FLAG_COMPOSITE};
use crate::rtp::{JitterOutput, RtpPacket, DEFAULT_REORDER_WINDOW};
use crate::sdp::*;
use crate::srtp::SrtpSession;
use crate::stun::IceLiteEndpoint;

pub const TICK: Duration = Duration::from_millis(20);
/// Composite video is produced on every fifth tick (10 frames/s).
pub const VIDEO_INTERVAL: Duration = Duration::from_millis(100);
/// A video source silent this long shows as a black tile.
pub const STALE_VIDEO: Duration = Duration::from_secs(1);
pub const DEFAULT_MTU: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Forward,
    Mix,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Mix => "mix",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "forward" => Some(Self::Forward),
            "mix" => Some(Self::Mix),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConferenceConfig {
    pub mtu: usize,
    pub reorder_window: Duration,
}

impl Default for ConferenceConfig {
    fn default() -> Self {
        Self {
            mtu: DEFAULT_MTU,
            reorder_window: DEFAULT_REORDER_WINDOW,
        }
    }
}

/// Values the transport layer chooses for a new participant.
#[derive(Debug, Clone)]
pub struct JoinParams {
    pub answer: AnswerParams,
    /// SRTP keying material for everything the MCU sends this participant.
    pub key: [u8; 30],
    pub composite_ssrcs: [u32; 2],
    pub seq_bases: [u16; 2],
    pub ts_bases: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossRecord {
    pub participant: String,
    pub ssrc: u32,
    pub seq: u16,
}

/// Everything a media step produced, for the transport layer to act on.
#[derive(Debug, Clone, Default)]
pub struct MediaOutput {
    /// Packets to protect and send, by destination participant.
    pub packets: Vec<(String, RtpPacket)>,
    pub losses: Vec<LossRecord>,
    pub records: Vec<RecordingChunk>,
}

impl MediaOutput {
    fn append(&mut self, mut other: MediaOutput) {
        self.packets.append(&mut other.packets);
        self.losses.append(&mut other.losses);
        self.records.append(&mut other.records);
    }
}

/// One participant's composites for a tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixOutput {
    pub dst: String,
    pub audio: Option<AudioFrame>,
    pub video: Option<VideoFrame>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSwitch {
    pub at: Duration,
    pub participant: String,
    pub change: ProfileChange,
}

#[derive(Debug)]
pub struct Conference {
    room: String,
    mode: Mode,
    pending_mode: Option<Mode>,
    config: ConferenceConfig,
    participants: BTreeMap<String, Participant>,
    ssrc_owner: BTreeMap<u32, String>,
    recording: bool,
    switches: Vec<ProfileSwitch>,
    black: VideoFrame,
}

impl Conference {
    pub fn new(room: impl Into<String>, mode: Mode, config: ConferenceConfig) -> Self {
        assert!(
            config.mtu > crate::rtp::RTP_HEADER_LEN,
            "MTU must exceed the RTP header"
        );
        Self {
            room: room.into(),
            mode,
            pending_mode: None,
            config,
            participants: BTreeMap::new(),
            ssrc_owner: BTreeMap::new(),
            recording: false,
            switches: Vec::new(),
            black: VideoFrame::black(2, 2, 0).expect("even dimensions"),
        }
    }

    pub fn room(&self) -> &str {
        &self.room
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Takes effect at the next tick.
    pub fn set_mode(&mut self, mode: Mode) {
        self.pending_mode = Some(mode);
    }

    pub fn recording(&self) -> bool {
        self.recording
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.get(id)
    }

    pub fn participant_mut(&mut self, id: &str) -> Option<&mut Participant> {
        self.participants.get_mut(id)
    }

    pub fn participants(&self) -> impl Iterator<Item = &Participant> {
        self.participants.values()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn profile_switches(&self) -> &[ProfileSwitch] {
        &self.switches
    }

    /// Every ordered pair of distinct participants.
    pub fn matrix(&self) -> BTreeSet<(String, String)> {
        let ids: Vec<&String> = self.participants.keys().collect();
        ids.iter()
            .flat_map(|a| {
                ids.iter()
                    .filter(move |b| a != *b)
                    .map(move |b| ((*a).clone(), (*b).clone()))
            })
            .collect()
    }

    fn ssrc_in_use(&self, ssrc: u32) -> bool {
        self.ssrc_owner.contains_key(&ssrc)
            || self
                .participants
                .values()
                .any(|p| p.composite_ssrcs().contains(&ssrc))
    }

    /// Answers `offer` and admits the participant. All accepted sections
    /// must share one SRTP key, since each participant has a single receive
    /// session.
    pub fn join(
        &mut self,
        id: &str,
        offer: &SessionDescription,
        screen_width: u32,
        params: JoinParams,
    ) -> Result<SessionDescription, ConferenceError> {
        if self.participants.contains_key(id) {
            return Err(ConferenceError::DuplicateId(id.to_string()));
        }
        if params.composite_ssrcs.iter().any(|&s| self.ssrc_in_use(s))
            || params.composite_ssrcs[0] == params.composite_ssrcs[1]
        {
            return Err(ConferenceError::SsrcCollision(params.composite_ssrcs[0]));
        }
        let keys = vec![params.key; offer.media.len()];
        let mut answer = make_answer(offer, &Capabilities::raw_media(), &params.answer, &keys)?;

        let mut audio = None;
        let mut video = None;
        let mut client_key: Option<[u8; 30]> = None;
        for (offered, section) in offer.media.iter().zip(answer.media.iter_mut()) {
            if section.is_rejected() {
                continue;
            }
            let slot = match section.kind {
                MediaKind::Audio => &mut audio,
                MediaKind::Video => &mut video,
                MediaKind::Other(_) => continue,
            };
            if slot.is_some() {
                // One stream per kind; later sections of the same kind are refused.
                *section = rejected_section(offered);
                continue;
            }
            let key = offered
                .crypto
                .as_ref()
                .map(|c| c.key_material)
                .ok_or(ConferenceError::BadSdp("accepted section without crypto"))?;
            if client_key.is_some_and(|k| k != key) {
                return Err(ConferenceError::BadSdp("sections use different SRTP keys"));
            }
            client_key = Some(key);
            *slot = Some(NegotiatedKind {
                payload_type: section.payload_map[0].payload_type,
                sends: offered.direction.sends(),
                receives: section.direction.sends(),
            });
        }
        let client_key = client_key.ok_or(SdpError::NoCommonCodec)?;

        let out = |i: usize, kind: Option<NegotiatedKind>, default_pt: u8| OutboundStream {
            ssrc: params.composite_ssrcs[i],
            payload_type: kind.map_or(default_pt, |k| k.payload_type),
            next_seq: params.seq_bases[i],
            ts_base: params.ts_bases[i],
        };
        let participant = Participant {
            id: id.to_string(),
            screen_width,
            offer: Some(offer.clone()),
            answer: Some(answer.clone()),
            transport: Some(Transport {
                ice: IceLiteEndpoint::new(
                    params.answer.ice_ufrag.clone(),
                    params.answer.ice_pwd.clone(),
                ),
                srtp_in: SrtpSession::from_keying_material(&client_key).expect("30-byte key"),
                srtp_out: SrtpSession::from_keying_material(&params.key).expect("30-byte key"),
            }),
            out_audio: out(0, audio, AUDIO_PT),
            out_video: out(1, video, VIDEO_PT),
            audio,
            video,
            estimator: BandwidthEstimator::new(screen_width),
            inbound: BTreeMap::new(),
            delivered: BTreeMap::new(),
            stats: ParticipantStats::default(),
        };
        self.participants.insert(id.to_string(), participant);
        Ok(answer)
    }

    /// Admits a participant with no transport that only contributes media
    /// through [`Conference::inject_frame`], such as a recording replay.
    pub fn join_synthetic(
        &mut self,
        id: &str,
        composite_ssrcs: [u32; 2],
    ) -> Result<(), ConferenceError> {
        if self.participants.contains_key(id) {
            return Err(ConferenceError::DuplicateId(id.to_string()));
        }
        let sender = |payload_type| {
            Some(NegotiatedKind {
                payload_type,
                sends: true,
                receives: false,
            })
        };
        let out = |ssrc, payload_type| OutboundStream {
            ssrc,
            payload_type,
            next_seq: 0,
            ts_base: 0,
        };
        self.participants.insert(
            id.to_string(),
            Participant {
                id: id.to_string(),
                screen_width: 0,
                offer: None,
                answer: None,
                transport: None,
                audio: sender(AUDIO_PT),
                video: sender(VIDEO_PT),
                estimator: BandwidthEstimator::new(0),
                inbound: BTreeMap::new(),
                delivered: BTreeMap::new(),
                out_audio: out(composite_ssrcs[0], AUDIO_PT),
                out_video: out(composite_ssrcs[1], VIDEO_PT),
                stats: ParticipantStats::default(),
            },
        );
        Ok(())
    }

    pub fn leave(&mut self, id: &str) -> Result<Participant, ConferenceError> {
        let p = self
            .participants
            .remove(id)
            .ok_or_else(|| ConferenceError::NoSuchParticipant(id.to_string()))?;
        for ssrc in p.inbound.keys() {
            self.ssrc_owner.remove(ssrc);
            for other in self.participants.values_mut() {
                other.delivered.remove(ssrc);
            }
        }
        Ok(p)
    }

    /// Forward mode: a copy for every other participant that receives this
    /// kind, header untouched. Mix mode consumes packets, so nothing is routed.
    pub fn route_inbound(
        &self,
        from: &str,
        packet: &RtpPacket,
    ) -> Result<Vec<(String, RtpPacket)>, ConferenceError> {
        let src = self
            .participants
            .get(from)
            .ok_or_else(|| ConferenceError::UnknownSource(from.to_string()))?;
        if self.mode != Mode::Forward {
            return Ok(Vec::new());
        }
        let Some(kind) = src
            .inbound
            .get(&packet.ssrc)
            .map(|s| s.kind)
            .or_else(|| src.kind_for_payload_type(packet.payload_type))
        else {
            return Ok(Vec::new());
        };
        Ok(self
            .participants
            .values()
            .filter(|p| p.id != from && p.receives(kind))
            .map(|p| (p.id.clone(), packet.clone()))
            .collect())
    }

    /// Accepts an unprotected packet from a participant into its stream's
    /// jitter buffer and processes whatever that releases.
    pub fn receive_packet(
        &mut self,
        from: &str,
        packet: RtpPacket,
        now: Duration,
    ) -> Result<MediaOutput, ConferenceError> {
        let reorder_window = self.config.reorder_window;
        let p = self
            .participants
            .get_mut(from)
            .ok_or_else(|| ConferenceError::UnknownSource(from.to_string()))?;
        let kind = p
            .kind_for_payload_type(packet.payload_type)
            .ok_or(ConferenceError::UnknownPayloadType(packet.payload_type))?;
        let ssrc = packet.ssrc;
        match self.ssrc_owner.get(&ssrc) {
            Some(owner) if owner != from => return Err(ConferenceError::SsrcCollision(ssrc)),
            Some(_) => {}
            None => {
                if self
                    .participants
                    .values()
                    .any(|q| q.composite_ssrcs().contains(&ssrc))
                {
                    return Err(ConferenceError::SsrcCollision(ssrc));
                }
                self.ssrc_owner.insert(ssrc, from.to_string());
            }
        }
        let p = self.participants.get_mut(from).expect("checked above");
        let stream = p
            .inbound
            .entry(ssrc)
            .or_insert_with(|| InboundStream::new(kind, reorder_window));
        if stream.kind != kind {
            return Err(ConferenceError::SsrcCollision(ssrc));
        }
        stream.jitter.push(packet, now);
        Ok(self.drain_stream(from, ssrc, now))
    }

    /// Releases whatever jitter buffer deadlines have passed.
    pub fn poll(&mut self, now: Duration) -> MediaOutput {
        let streams: Vec<(String, u32)> = self
            .participants
            .values()
            .flat_map(|p| p.inbound.keys().map(move |&s| (p.id.clone(), s)))
            .collect();
        let mut out = MediaOutput::default();
        for (id, ssrc) in streams {
            out.append(self.drain_stream(&id, ssrc, now));
        }
        out
    }

    pub fn next_deadline(&self) -> Option<Duration> {
        self.participants
            .values()
            .flat_map(|p| p.inbound.values())
            .filter_map(|s| s.jitter.next_deadline())
            .min()
    }

    fn drain_stream(&mut self, from: &str, ssrc: u32, now: Duration) -> MediaOutput {
        let mut out = MediaOutput::default();
        let Some(released) = self
            .participants
            .get_mut(from)
            .and_then(|p| p.inbound.get_mut(&ssrc))
            .map(|s| s.jitter.pop_ready(now))
        else {
            return out;
        };
        for item in released {
            match item {
                JitterOutput::Packet(packet) => {
                    let routes = self.route_inbound(from, &packet).unwrap_or_default();
                    for (dst, copy) in routes {
                        let kind = self.participants[from].inbound[&ssrc].kind;
                        if let Some(d) = self.participants.get_mut(&dst) {
                            d.delivered.insert(ssrc, kind);
                        }
                        out.packets.push((dst, copy));
                    }
                    let p = self.participants.get_mut(from).expect("present");
                    let stream = p.inbound.get_mut(&ssrc).expect("present");
                    if let Some((ts, payload)) = stream.assembler.push(packet) {
                        self.handle_frame(from, ssrc, ts, payload, now, &mut out);
                    }
                }
                JitterOutput::Lost(seq) => {
                    let p = self.participants.get_mut(from).expect("present");
                    p.stats.losses_declared += 1;
                    p.inbound
                        .get_mut(&ssrc)
                        .expect("present")
                        .assembler
                        .mark_loss();
                    out.losses.push(LossRecord {
                        participant: from.to_string(),
                        ssrc,
                        seq,
                    });
                }
            }
        }
        out
    }

    fn handle_frame(
        &mut self,
        from: &str,
        ssrc: u32,
        ts: u32,
        payload: Vec<u8>,
        now: Duration,
        out: &mut MediaOutput,
    ) {
        let recording = self.recording;
        let p = self.participants.get_mut(from).expect("present");
        let stream = p.inbound.get_mut(&ssrc).expect("present");
        let kind = match stream.kind {
            MediaType::Audio => Some(FrameKind::Audio),
            MediaType::Video => FrameKind::video_for_len(payload.len()),
        };
        let Some(frame) = kind.and_then(|k| decode_frame(k, &payload, ts).ok()) else {
            p.stats.frames_rejected += 1;
            return;
        };
        let timestamp_us = stream.frame_time_us(ts, now);
        match frame {
            MediaFrame::Audio(a) => stream.latest_audio = Some(a),
            MediaFrame::Video(v) => stream.latest_video = Some((v, now)),
        }
        if recording {
            out.records.push(RecordingChunk {
                stream_id: ssrc,
                kind: stream.kind,
                flags: 0,
                timestamp_us,
                payload,
            });
        }
    }

    /// Feeds one encoded frame from a synthetic participant, packetized as
    /// if it had arrived over the network in order.
    pub fn inject_frame(
        &mut self,
        id: &str,
        ssrc: u32,
        kind: MediaType,
        payload: &[u8],
        media_time_us: u64,
        now: Duration,
    ) -> Result<MediaOutput, ConferenceError> {
        let mtu = self.config.mtu;
        let reorder_window = self.config.reorder_window;
        let p = self
            .participants
            .get_mut(id)
            .ok_or_else(|| ConferenceError::NoSuchParticipant(id.to_string()))?;
        let pt = p
            .negotiated(kind)
            .filter(|n| n.sends)
            .ok_or(ConferenceError::BadSdp(
                "participant does not send this kind",
            ))?
            .payload_type;
        let seq = p.inbound.get(&ssrc).map_or(0, |s| s.injected_seq);
        let ts = (media_time_us * u64::from(kind.clock_rate()) / 1_000_000) as u32;
        let packets =
            crate::rtp::packetize_frame(payload, pt, ssrc, ts, seq, mtu).expect("MTU validated");
        let next = seq.wrapping_add(packets.len() as u16);
        let mut out = MediaOutput::default();
        for packet in packets {
            out.append(self.receive_packet(id, packet, now)?);
        }
        let p = self.participants.get_mut(id).expect("present");
        p.inbound
            .entry(ssrc)
            .or_insert_with(|| InboundStream::new(kind, reorder_window))
            .injected_seq = next;
        Ok(out)
    }

    /// Builds each participant's mix-minus composites from the freshest
    /// frame of every other source. Audio frames are consumed; video frames
    /// persist until stale. Video composites come every [`VIDEO_INTERVAL`].
    pub fn tick_mix(&mut self, now: Duration) -> Vec<MixOutput> {
        let video_due = now.as_micros().is_multiple_of(VIDEO_INTERVAL.as_micros());
        let audio_ts = (now.as_micros() as u64 * u64::from(AUDIO_CLOCK_RATE) / 1_000_000) as u32;
        let mut outputs = Vec::new();
        for p in self.participants.values() {
            let audio = p.receives(MediaType::Audio).then(|| {
                let inputs: Vec<&AudioFrame> = self
                    .participants
                    .values()
                    .filter(|q| q.id != p.id)
                    .flat_map(|q| q.inbound.values())
                    .filter_map(|s| s.latest_audio.as_ref())
                    .collect();
                mix_audio(&inputs, audio_ts)
            });
            let video = (video_due && p.receives(MediaType::Video)).then(|| {
                let mut tiles: Vec<(u32, &VideoFrame)> = self
                    .participants
                    .values()
                    .filter(|q| q.id != p.id)
                    .flat_map(|q| q.inbound.iter())
                    .filter(|(_, s)| s.kind == MediaType::Video)
                    .map(|(&ssrc, s)| match &s.latest_video {
                        Some((f, at)) if now.saturating_sub(*at) <= STALE_VIDEO => (ssrc, f),
                        _ => (ssrc, &self.black),
                    })
                    .collect();
                tiles.sort_by_key(|(ssrc, _)| *ssrc);
                let frames: Vec<&VideoFrame> = tiles.into_iter().map(|(_, f)| f).collect();
                let profile = p.profile();
                let mut v = compose_grid(&frames, profile.width(), profile.height())
                    .expect("ladder sizes are even");
                v.timestamp =
                    (now.as_micros() as u64 * u64::from(VIDEO_CLOCK_RATE) / 1_000_000) as u32;
                v
            });
            if audio.is_some() || video.is_some() {
                outputs.push(MixOutput {
                    dst: p.id.clone(),
                    audio,
                    video,
                });
            }
        }
        for s in self
            .participants
            .values_mut()
            .flat_map(|p| p.inbound.values_mut())
        {
            s.latest_audio = None;
        }
        outputs
    }

    /// Media clock tick: applies a pending mode change, then in mix mode
    /// produces and packetizes the composites.
    pub fn tick(&mut self, now: Duration) -> MediaOutput {
        if let Some(mode) = self.pending_mode.take() {
            if mode != self.mode {
                self.mode = mode;
                for p in self.participants.values_mut() {
                    p.delivered.clear();
                }
            }
        }
        let mut out = MediaOutput::default();
        if self.mode != Mode::Mix {
            return out;
        }
        let mtu = self.config.mtu;
        for mix in self.tick_mix(now) {
            let p = self.participants.get_mut(&mix.dst).expect("present");
            let frames = [
                mix.audio.map(MediaFrame::Audio),
                mix.video.map(MediaFrame::Video),
            ];
            for frame in frames.into_iter().flatten() {
                let (kind, stream) = match frame {
                    MediaFrame::Audio(_) => (MediaType::Audio, &mut p.out_audio),
                    MediaFrame::Video(_) => (MediaType::Video, &mut p.out_video),
                };
                let payload = encode_frame(&frame);
                p.delivered.insert(stream.ssrc, kind);
                out.packets.extend(
                    stream
                        .packetize(&payload, now, kind.clock_rate(), mtu)
                        .into_iter()
                        .map(|pkt| (mix.dst.clone(), pkt)),
                );
                if self.recording {
                    out.records.push(RecordingChunk {
                        stream_id: stream.ssrc,
                        kind,
                        flags: FLAG_COMPOSITE,
                        timestamp_us: now.as_micros() as u64,
                        payload,
                    });
                }
            }
        }
        out
    }

    /// One receiver report window for `id`. A profile change is logged and
    /// shapes composites from the next tick on.
    pub fn on_receiver_report(
        &mut self,
        id: &str,
        bytes: u64,
        now: Duration,
    ) -> Result<Option<ProfileChange>, ConferenceError> {
        let p = self
            .participants
            .get_mut(id)
            .ok_or_else(|| ConferenceError::NoSuchParticipant(id.to_string()))?;
        let change = p.estimator.on_window(bytes);
        if let Some(change) = change {
            self.switches.push(ProfileSwitch {
                at: now,
                participant: id.to_string(),
                change,
            });
        }
        Ok(change)
    }
}
