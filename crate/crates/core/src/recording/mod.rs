//! The "MCUR" recording container, as bytes. File handling lives in the std
//! crate; this module only encodes, decodes and schedules.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! header: "MCUR" version:u16
//! chunk:  stream_id:u32 kind:u8 flags:u8 timestamp_us:u64 payload_len:u32 payload
//! ```

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::time::Duration;

use crate::media::MediaType;

pub const MAGIC: [u8; 4] = *b"MCUR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 6;
pub const CHUNK_HEADER_LEN: usize = 18;

/// Flag bit 0: the chunk belongs to a composite the MCU produced.
pub const FLAG_COMPOSITE: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingChunk {
    pub stream_id: u32,
    pub kind: MediaType,
    pub flags: u8,
    pub timestamp_us: u64,
    pub payload: Vec<u8>,
}

impl RecordingChunk {
    pub fn is_composite(&self) -> bool {
        self.flags & FLAG_COMPOSITE != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RecordingError {
    #[error("not a recording (bad magic)")]
    BadMagic,
    #[error("unsupported recording version {0}")]
    UnsupportedVersion(u16),
    #[error("stream {stream_id}: timestamp {timestamp_us} us precedes {previous_us} us")]
    TimestampRegression {
        stream_id: u32,
        timestamp_us: u64,
        previous_us: u64,
    },
    #[error("unknown media kind {0}")]
    BadKind(u8),
    #[error("recording has no chunks")]
    EmptyRecording,
}

pub fn encode_header() -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4..].copy_from_slice(&VERSION.to_le_bytes());
    h
}

pub fn encode_chunk(chunk: &RecordingChunk, out: &mut Vec<u8>) {
    out.reserve(CHUNK_HEADER_LEN + chunk.payload.len());
    out.extend_from_slice(&chunk.stream_id.to_le_bytes());
    out.push(chunk.kind as u8);
    out.push(chunk.flags);
    out.extend_from_slice(&chunk.timestamp_us.to_le_bytes());
    out.extend_from_slice(&(chunk.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&chunk.payload);
}

/// Tracks the last timestamp per stream so writers can refuse regressions.
#[derive(Debug, Clone, Default)]
pub struct MonotonicGuard {
    last: BTreeMap<u32, u64>,
}

impl MonotonicGuard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&self, chunk: &RecordingChunk) -> Result<(), RecordingError> {
        match self.last.get(&chunk.stream_id) {
            Some(&previous_us) if chunk.timestamp_us < previous_us => {
                Err(RecordingError::TimestampRegression {
                    stream_id: chunk.stream_id,
                    timestamp_us: chunk.timestamp_us,
                    previous_us,
                })
            }
            _ => Ok(()),
        }
    }

    pub fn commit(&mut self, chunk: &RecordingChunk) {
        self.last.insert(chunk.stream_id, chunk.timestamp_us);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodedRecording {
    pub chunks: Vec<RecordingChunk>,
    /// 1 if the data ended inside a chunk, which was dropped.
    pub truncated_tail: usize,
}

/// Decodes a whole recording. A chunk cut short by the end of input is
/// dropped and counted rather than failing the read.
pub fn decode_recording(data: &[u8]) -> Result<DecodedRecording, RecordingError> {
    if data.len() < 4 || data[..4] != MAGIC {
        return Err(RecordingError::BadMagic);
    }
    if data.len() < HEADER_LEN {
        return Ok(DecodedRecording {
            chunks: Vec::new(),
            truncated_tail: 1,
        });
    }
    let version = u16::from_le_bytes([data[4], data[5]]);
    if version != VERSION {
        return Err(RecordingError::UnsupportedVersion(version));
    }
    let mut rest = &data[HEADER_LEN..];
    let mut out = DecodedRecording::default();
    while !rest.is_empty() {
        if rest.len() < CHUNK_HEADER_LEN {
            out.truncated_tail = 1;
            break;
        }
        let len = u32::from_le_bytes(rest[14..18].try_into().expect("4 bytes")) as usize;
        if rest.len() - CHUNK_HEADER_LEN < len {
            out.truncated_tail = 1;
            break;
        }
        let kind = MediaType::from_u8(rest[4]).ok_or(RecordingError::BadKind(rest[4]))?;
        out.chunks.push(RecordingChunk {
            stream_id: u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")),
            kind,
            flags: rest[5],
            timestamp_us: u64::from_le_bytes(rest[6..14].try_into().expect("8 bytes")),
            payload: rest[CHUNK_HEADER_LEN..CHUNK_HEADER_LEN + len].to_vec(),
        });
        rest = &rest[CHUNK_HEADER_LEN + len..];
    }
    Ok(out)
}

/// Whether each stream's timestamps are non-decreasing in file order.
pub fn stream_monotonicity(chunks: &[RecordingChunk]) -> BTreeMap<u32, bool> {
    let mut last: BTreeMap<u32, (u64, bool)> = BTreeMap::new();
    for c in chunks {
        last.entry(c.stream_id)
            .and_modify(|(prev, ok)| {
                *ok &= c.timestamp_us >= *prev;
                *prev = c.timestamp_us;
            })
            .or_insert((c.timestamp_us, true));
    }
    last.into_iter().map(|(id, (_, ok))| (id, ok)).collect()
}

/// Offsets at which each chunk should be re-injected: the recording's own
/// spacing from its first chunk, divided by `speed`.
pub fn replay_schedule(
    chunks: &[RecordingChunk],
    speed: f64,
) -> Result<Vec<Duration>, RecordingError> {
    let first = chunks
        .iter()
        .map(|c| c.timestamp_us)
        .min()
        .ok_or(RecordingError::EmptyRecording)?;
    let speed = if speed > 0.0 { speed } else { 1.0 };
    Ok(chunks
        .iter()
        .map(|c| Duration::from_micros(((c.timestamp_us - first) as f64 / speed) as u64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn chunk(stream_id: u32, ts: u64, payload: &[u8]) -> RecordingChunk {
        RecordingChunk {
            stream_id,
            kind: MediaType::Audio,
            flags: 0,
            timestamp_us: ts,
            payload: payload.to_vec(),
        }
    }

    #[test]
    fn header_only() {
        assert_eq!(encode_header(), [0x4D, 0x43, 0x55, 0x52, 0x01, 0x00]);
        assert_eq!(
            decode_recording(&encode_header()).unwrap(),
            DecodedRecording::default()
        );
    }

    #[test]
    fn one_chunk_layout() {
        let mut file = encode_header().to_vec();
        let c = RecordingChunk {
            stream_id: 0x0403_0201,
            kind: MediaType::Video,
            flags: 1,
            timestamp_us: 5,
            payload: vec![9; 4],
        };
        encode_chunk(&c, &mut file);
        assert_eq!(file.len(), 6 + 18 + 4);
        assert_eq!(&file[6..12], &[1, 2, 3, 4, 1, 1]);
        assert_eq!(&file[12..20], &[5, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&file[20..24], &[4, 0, 0, 0]);
        assert_eq!(decode_recording(&file).unwrap().chunks, vec![c]);
    }

    #[test]
    fn bad_magic_and_version() {
        assert_eq!(
            decode_recording(b"XXXX\x01\x00"),
            Err(RecordingError::BadMagic)
        );
        assert_eq!(
            decode_recording(b"MCUR\x02\x00"),
            Err(RecordingError::UnsupportedVersion(2))
        );
    }

    #[test]
    fn truncated_tail_dropped() {
        let mut file = encode_header().to_vec();
        encode_chunk(&chunk(1, 0, b"abc"), &mut file);
        encode_chunk(&chunk(1, 1, b"defg"), &mut file);
        for cut in 1..22 {
            let d = decode_recording(&file[..file.len() - cut]).unwrap();
            assert_eq!(d.chunks, vec![chunk(1, 0, b"abc")]);
            assert_eq!(d.truncated_tail, 1);
        }
    }

    #[test]
    fn guard_refuses_regression() {
        let mut g = MonotonicGuard::new();
        g.commit(&chunk(1, 100, b""));
        assert!(g.check(&chunk(1, 100, b"")).is_ok());
        assert!(g.check(&chunk(2, 5, b"")).is_ok());
        assert_eq!(
            g.check(&chunk(1, 99, b"")),
            Err(RecordingError::TimestampRegression {
                stream_id: 1,
                timestamp_us: 99,
                previous_us: 100
            })
        );
    }

    #[test]
    fn schedule_scales_with_speed() {
        let chunks = [
            chunk(1, 1_000_000, b""),
            chunk(2, 3_500_000, b""),
            chunk(1, 6_000_000, b""),
        ];
        let s1 = replay_schedule(&chunks, 1.0).unwrap();
        assert_eq!(*s1.last().unwrap(), Duration::from_secs(5));
        let s2 = replay_schedule(&chunks, 2.0).unwrap();
        assert_eq!(*s2.last().unwrap(), Duration::from_millis(2500));
        assert_eq!(
            replay_schedule(&[], 1.0),
            Err(RecordingError::EmptyRecording)
        );
    }

    #[test]
    fn monotonicity_per_stream() {
        let m = stream_monotonicity(&[
            chunk(1, 5, b""),
            chunk(2, 1, b""),
            chunk(1, 4, b""),
            chunk(2, 1, b""),
        ]);
        assert_eq!(m.get(&1), Some(&false));
        assert_eq!(m.get(&2), Some(&true));
    }

    proptest! {
        #[test]
        fn round_trip(chunks in prop::collection::vec(
            (any::<u32>(), any::<bool>(), any::<u8>(), any::<u64>(), prop::collection::vec(any::<u8>(), 0..64)), 0..50)
        ) {
            let chunks: Vec<RecordingChunk> = chunks.into_iter().map(|(id, v, flags, ts, payload)| RecordingChunk {
                stream_id: id, kind: if v { MediaType::Video } else { MediaType::Audio }, flags, timestamp_us: ts, payload,
            }).collect();
            let mut file = encode_header().to_vec();
            for c in &chunks {
                encode_chunk(c, &mut file);
            }
            let d = decode_recording(&file).unwrap();
            prop_assert_eq!(d.truncated_tail, 0);
            prop_assert_eq!(d.chunks, chunks);
        }
    }
}
