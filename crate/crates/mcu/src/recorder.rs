//! Recording files: an append-only writer over any `io::Write`, a reader,
//! the `inspect` summary, and replay into a running MCU.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use mcu_core::conference::{ConferenceError, Mcu};
use mcu_core::recording::{
    decode_recording, encode_chunk, encode_header, replay_schedule, DecodedRecording,
    MonotonicGuard, RecordingChunk, RecordingError,
};
use serde::Serialize;

use crate::checksum::{multiset_digest, payload_hash};

#[derive(Debug, thiserror::Error)]
pub enum RecorderError {
    #[error("stream {stream_id}: timestamp {timestamp_us} us precedes {previous_us} us")]
    TimestampRegression {
        stream_id: u32,
        timestamp_us: u64,
        previous_us: u64,
    },
    #[error("recording sink failed: {0}")]
    SinkFailure(#[from] io::Error),
}

/// Writes the container incrementally. Each chunk goes out in one write and
/// is flushed, so the file is readable after every append.
pub struct Recorder<W: Write> {
    sink: W,
    guard: MonotonicGuard,
    buf: Vec<u8>,
    chunks: u64,
}

impl<W: Write> Recorder<W> {
    pub fn open(mut sink: W) -> Result<Self, RecorderError> {
        sink.write_all(&encode_header())?;
        sink.flush()?;
        Ok(Self {
            sink,
            guard: MonotonicGuard::new(),
            buf: Vec::new(),
            chunks: 0,
        })
    }

    pub fn append(&mut self, chunk: &RecordingChunk) -> Result<(), RecorderError> {
        if let Err(RecordingError::TimestampRegression {
            stream_id,
            timestamp_us,
            previous_us,
        }) = self.guard.check(chunk)
        {
            return Err(RecorderError::TimestampRegression {
                stream_id,
                timestamp_us,
                previous_us,
            });
        }
        self.buf.clear();
        encode_chunk(chunk, &mut self.buf);
        self.sink.write_all(&self.buf)?;
        self.sink.flush()?;
        self.guard.commit(chunk);
        self.chunks += 1;
        Ok(())
    }

    pub fn chunks_written(&self) -> u64 {
        self.chunks
    }

    pub fn finalize(mut self) -> Result<W, RecorderError> {
        self.sink.flush()?;
        Ok(self.sink)
    }
}

pub fn create_recording(path: &Path) -> Result<Recorder<BufWriter<File>>, RecorderError> {
    Recorder::open(BufWriter::new(File::create(path)?))
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Format(#[from] RecordingError),
    #[error("reading recording: {0}")]
    Io(#[from] io::Error),
}

pub fn read_recording<R: Read>(mut source: R) -> Result<DecodedRecording, ReadError> {
    let mut data = Vec::new();
    source.read_to_end(&mut data)?;
    let decoded = decode_recording(&data)?;
    if decoded.truncated_tail > 0 {
        log::warn!("recording ends inside a chunk; dropped the partial tail");
    }
    Ok(decoded)
}

pub fn read_recording_file(path: &Path) -> Result<DecodedRecording, ReadError> {
    read_recording(File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StreamSummary {
    pub stream_id: u32,
    pub kind: &'static str,
    pub composite: bool,
    pub chunks: usize,
    pub first_us: u64,
    pub last_us: u64,
    pub monotonic: bool,
    /// Order-independent digest of the stream's payloads.
    pub payload_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InspectSummary {
    pub chunks: usize,
    pub streams: Vec<StreamSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<u64>,
    #[serde(skip_serializing_if = "is_zero")]
    pub truncated_tail: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

pub fn summarize(rec: &DecodedRecording) -> InspectSummary {
    let mut groups: BTreeMap<u32, Vec<&RecordingChunk>> = BTreeMap::new();
    for c in &rec.chunks {
        groups.entry(c.stream_id).or_default().push(c);
    }
    let streams = groups
        .into_iter()
        .map(|(stream_id, chunks)| StreamSummary {
            stream_id,
            kind: chunks[0].kind.name(),
            composite: chunks.iter().any(|c| c.is_composite()),
            chunks: chunks.len(),
            first_us: chunks[0].timestamp_us,
            last_us: chunks[chunks.len() - 1].timestamp_us,
            monotonic: chunks
                .windows(2)
                .all(|w| w[0].timestamp_us <= w[1].timestamp_us),
            payload_digest: multiset_digest(chunks.iter().map(|c| payload_hash(&c.payload))),
        })
        .collect();
    let first = rec.chunks.iter().map(|c| c.timestamp_us).min();
    let last = rec.chunks.iter().map(|c| c.timestamp_us).max();
    InspectSummary {
        chunks: rec.chunks.len(),
        streams,
        duration_us: first.zip(last).map(|(a, b)| b - a),
        truncated_tail: rec.truncated_tail,
    }
}

pub fn inspect_recording(path: &Path) -> Result<InspectSummary, ReadError> {
    Ok(summarize(&read_recording_file(path)?))
}

/// Re-injects recorded source streams as a synthetic participant, one frame
/// at a time as virtual time reaches each frame's slot. Composite chunks are
/// skipped: they are outputs of the mix, not sources.
#[derive(Debug)]
pub struct Replayer {
    plan: Vec<(Duration, RecordingChunk)>,
    next: usize,
}

impl Replayer {
    pub fn new(
        chunks: Vec<RecordingChunk>,
        speed: f64,
        start: Duration,
    ) -> Result<Self, RecordingError> {
        let sources: Vec<RecordingChunk> =
            chunks.into_iter().filter(|c| !c.is_composite()).collect();
        let offsets = replay_schedule(&sources, speed)?;
        let mut plan: Vec<(Duration, RecordingChunk)> = offsets
            .into_iter()
            .map(|o| start + o)
            .zip(sources)
            .collect();
        plan.sort_by_key(|(at, _)| *at);
        Ok(Self { plan, next: 0 })
    }

    pub fn next_due(&self) -> Option<Duration> {
        self.plan.get(self.next).map(|(at, _)| *at)
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.plan.len()
    }

    /// Span from the first to the last injection.
    pub fn span(&self) -> Duration {
        match (self.plan.first(), self.plan.last()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => Duration::ZERO,
        }
    }

    /// Stream ids the synthetic participant will send.
    pub fn stream_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.plan.iter().map(|(_, c)| c.stream_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn chunks(&self) -> impl Iterator<Item = &RecordingChunk> {
        self.plan.iter().map(|(_, c)| c)
    }

    /// Injects every frame due at or before `now`; returns how many.
    pub fn inject_due(
        &mut self,
        mcu: &mut Mcu,
        room: &str,
        id: &str,
        now: Duration,
    ) -> Result<usize, ConferenceError> {
        let mut n = 0;
        while let Some((at, chunk)) = self.plan.get(self.next) {
            if *at > now {
                break;
            }
            mcu.inject_frame(
                room,
                id,
                chunk.stream_id,
                chunk.kind,
                &chunk.payload,
                at.as_micros() as u64,
                *at,
            )?;
            self.next += 1;
            n += 1;
        }
        Ok(n)
    }
}

/// Replays `chunks` into `room` as participant `id` from `start`, driving the
/// MCU clock to the end of the schedule. Returns the virtual time span.
pub fn replay_into(
    mcu: &mut Mcu,
    room: &str,
    id: &str,
    chunks: Vec<RecordingChunk>,
    speed: f64,
    start: Duration,
) -> Result<Duration, ReplayError> {
    let mut r = Replayer::new(chunks, speed, start)?;
    mcu.join_synthetic(room, id)?;
    while let Some(at) = r.next_due() {
        r.inject_due(mcu, room, id, at)?;
    }
    Ok(r.span())
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error(transparent)]
    Conference(#[from] ConferenceError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcu_core::media::MediaType;

    fn chunk(stream_id: u32, ts: u64, payload: Vec<u8>) -> RecordingChunk {
        RecordingChunk {
            stream_id,
            kind: MediaType::Audio,
            flags: 0,
            timestamp_us: ts,
            payload,
        }
    }

    #[test]
    fn empty_recording_is_six_bytes() {
        let bytes = Recorder::open(Vec::new()).unwrap().finalize().unwrap();
        assert_eq!(bytes, [0x4D, 0x43, 0x55, 0x52, 0x01, 0x00]);
        let rec = read_recording(&bytes[..]).unwrap();
        assert!(rec.chunks.is_empty());
        assert_eq!(
            serde_json::to_string(&summarize(&rec)).unwrap(),
            r#"{"chunks":0,"streams":[]}"#
        );
    }

    #[test]
    fn one_chunk_file_length() {
        let mut r = Recorder::open(Vec::new()).unwrap();
        r.append(&chunk(1, 0, vec![1, 2, 3, 4])).unwrap();
        assert_eq!(r.finalize().unwrap().len(), 6 + 18 + 4);
    }

    #[test]
    fn regression_is_refused_and_not_written() {
        let mut r = Recorder::open(Vec::new()).unwrap();
        r.append(&chunk(1, 10, vec![0])).unwrap();
        r.append(&chunk(2, 5, vec![0])).unwrap();
        assert!(matches!(
            r.append(&chunk(1, 9, vec![0])),
            Err(RecorderError::TimestampRegression { stream_id: 1, .. })
        ));
        r.append(&chunk(1, 10, vec![0])).unwrap();
        assert_eq!(r.chunks_written(), 3);
        assert_eq!(
            read_recording(&r.finalize().unwrap()[..])
                .unwrap()
                .chunks
                .len(),
            3
        );
    }

    struct FailingSink;

    impl Write for FailingSink {
        fn write(&mut self, _: &[u8]) -> io::Result<usize> {
            Err(io::Error::other("disk full"))
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn sink_failure_surfaces() {
        assert!(matches!(
            Recorder::open(FailingSink),
            Err(RecorderError::SinkFailure(_))
        ));
    }

    #[test]
    fn truncated_tail_is_reported() {
        let mut r = Recorder::open(Vec::new()).unwrap();
        r.append(&chunk(7, 0, vec![9; 10])).unwrap();
        r.append(&chunk(7, 20_000, vec![9; 10])).unwrap();
        let mut bytes = r.finalize().unwrap();
        bytes.truncate(bytes.len() - 3);
        let s = summarize(&read_recording(&bytes[..]).unwrap());
        assert_eq!(s.chunks, 1);
        assert_eq!(s.truncated_tail, 1);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains(r#""truncated_tail":1"#), "{json}");
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(
            read_recording(&b"XXXX\x01\x00"[..]),
            Err(ReadError::Format(RecordingError::BadMagic))
        ));
    }

    #[test]
    fn replay_span_scales_with_speed() {
        let chunks: Vec<RecordingChunk> = (0..=250)
            .map(|i| chunk(1, i * 20_000, vec![0; 1920]))
            .collect();
        let r1 = Replayer::new(chunks.clone(), 1.0, Duration::ZERO).unwrap();
        assert_eq!(r1.span(), Duration::from_secs(5));
        let r2 = Replayer::new(chunks, 2.0, Duration::ZERO).unwrap();
        assert_eq!(r2.span(), Duration::from_millis(2500));
        assert!(matches!(
            Replayer::new(Vec::new(), 1.0, Duration::ZERO),
            Err(RecordingError::EmptyRecording)
        ));
    }
}
