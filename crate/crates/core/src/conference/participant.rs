use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use super::estimator::BandwidthEstimator;
use crate::media::{AudioFrame, MediaType, StreamProfile, VideoFrame};
use crate::rtp::{FrameAssembler, JitterBuffer, RtpPacket, DEFAULT_CAPACITY};
use crate::sdp::SessionDescription;
use crate::srtp::SrtpSession;
use crate::stun::IceLiteEndpoint;

/// Counters from the MCU's side of the link: "received" is participant to
/// MCU, "sent" is MCU to participant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParticipantStats {
    pub packets_sent: u64,
    pub packets_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub losses_declared: u64,
    pub current_profile: Option<StreamProfile>,
    /// Distinct SSRCs delivered to the participant under the current mode.
    pub streams_in: usize,
    pub streams_in_audio: usize,
    pub streams_in_video: usize,
    /// SSRCs the participant contributes.
    pub streams_out: usize,
    pub auth_failures: u64,
    pub frames_rejected: u64,
}

/// What was agreed for one media kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegotiatedKind {
    /// Payload type number in the participant's own numbering.
    pub payload_type: u8,
    /// The participant sends this kind to the MCU.
    pub sends: bool,
    /// The MCU sends this kind to the participant.
    pub receives: bool,
}

#[derive(Debug)]
pub struct Transport {
    pub ice: IceLiteEndpoint,
    pub srtp_in: SrtpSession,
    pub srtp_out: SrtpSession,
}

#[derive(Debug)]
pub(super) struct InboundStream {
    pub kind: MediaType,
    pub jitter: JitterBuffer,
    pub assembler: FrameAssembler,
    pub latest_audio: Option<AudioFrame>,
    pub latest_video: Option<(VideoFrame, Duration)>,
    clock: Option<MediaClock>,
    /// Next sequence number for frames injected without a transport.
    pub injected_seq: u16,
}

/// Maps a stream's RTP timestamps onto conference time, anchored at the
/// arrival of its first frame.
#[derive(Debug, Clone, Copy)]
struct MediaClock {
    base_us: u64,
    last_ts: u32,
    elapsed_ticks: u64,
}

impl InboundStream {
    pub fn new(kind: MediaType, reorder_window: Duration) -> Self {
        Self {
            kind,
            jitter: JitterBuffer::new(DEFAULT_CAPACITY, reorder_window),
            assembler: FrameAssembler::new(),
            latest_audio: None,
            latest_video: None,
            clock: None,
            injected_seq: 0,
        }
    }

    /// Conference time in microseconds for a frame with RTP timestamp `ts`.
    /// Never decreases, even if the sender's timestamps do.
    pub fn frame_time_us(&mut self, ts: u32, now: Duration) -> u64 {
        let rate = u64::from(self.kind.clock_rate());
        let c = self.clock.get_or_insert(MediaClock {
            base_us: now.as_micros() as u64,
            last_ts: ts,
            elapsed_ticks: 0,
        });
        let delta = ts.wrapping_sub(c.last_ts) as i32;
        if delta > 0 {
            c.elapsed_ticks += delta as u64;
            c.last_ts = ts;
        }
        c.base_us + c.elapsed_ticks * 1_000_000 / rate
    }
}

/// A composite stream the MCU originates toward one participant.
#[derive(Debug, Clone)]
pub struct OutboundStream {
    pub ssrc: u32,
    pub payload_type: u8,
    pub next_seq: u16,
    pub ts_base: u32,
}

impl OutboundStream {
    pub fn packetize(
        &mut self,
        payload: &[u8],
        now: Duration,
        clock_rate: u32,
        mtu: usize,
    ) -> Vec<RtpPacket> {
        let ts = self
            .ts_base
            .wrapping_add((now.as_micros() as u64 * u64::from(clock_rate) / 1_000_000) as u32);
        let packets = crate::rtp::packetize_frame(
            payload,
            self.payload_type,
            self.ssrc,
            ts,
            self.next_seq,
            mtu,
        )
        .expect("MTU validated at construction");
        self.next_seq = self.next_seq.wrapping_add(packets.len() as u16);
        packets
    }
}

#[derive(Debug)]
pub struct Participant {
    pub id: String,
    pub screen_width: u32,
    pub offer: Option<SessionDescription>,
    pub answer: Option<SessionDescription>,
    /// Absent for synthetic participants such as recording replays.
    pub transport: Option<Transport>,
    pub audio: Option<NegotiatedKind>,
    pub video: Option<NegotiatedKind>,
    pub estimator: BandwidthEstimator,
    pub(super) inbound: BTreeMap<u32, InboundStream>,
    pub(super) delivered: BTreeMap<u32, MediaType>,
    pub(super) out_audio: OutboundStream,
    pub(super) out_video: OutboundStream,
    pub(super) stats: ParticipantStats,
}

impl Participant {
    pub fn negotiated(&self, kind: MediaType) -> Option<NegotiatedKind> {
        match kind {
            MediaType::Audio => self.audio,
            MediaType::Video => self.video,
        }
    }

    pub fn receives(&self, kind: MediaType) -> bool {
        self.negotiated(kind).is_some_and(|n| n.receives)
    }

    pub fn kind_for_payload_type(&self, pt: u8) -> Option<MediaType> {
        [MediaType::Audio, MediaType::Video].into_iter().find(|&k| {
            self.negotiated(k)
                .is_some_and(|n| n.sends && n.payload_type == pt)
        })
    }

    pub fn profile(&self) -> StreamProfile {
        self.estimator.profile()
    }

    pub fn composite_ssrcs(&self) -> [u32; 2] {
        [self.out_audio.ssrc, self.out_video.ssrc]
    }

    pub fn contributed_ssrcs(&self) -> impl Iterator<Item = (u32, MediaType)> + '_ {
        self.inbound.iter().map(|(&s, st)| (s, st.kind))
    }

    pub fn stats(&self) -> ParticipantStats {
        let mut s = self.stats.clone();
        s.current_profile = Some(self.profile());
        s.streams_in = self.delivered.len();
        s.streams_in_audio = self
            .delivered
            .values()
            .filter(|k| **k == MediaType::Audio)
            .count();
        s.streams_in_video = s.streams_in - s.streams_in_audio;
        s.streams_out = self.inbound.len();
        s
    }

    pub fn stats_mut(&mut self) -> &mut ParticipantStats {
        &mut self.stats
    }

    pub fn remote_addr(&self) -> Option<core::net::SocketAddrV4> {
        self.transport.as_ref()?.ice.latched_remote()
    }
}
