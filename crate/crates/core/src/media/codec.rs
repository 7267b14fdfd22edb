use alloc::vec::Vec;

use super::audio::{AudioFrame, AUDIO_FRAME_BYTES};
use super::profile::StreamProfile;
use super::video::{check_dims, VideoFrame};
use super::MediaError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MediaFrame {
    Audio(AudioFrame),
    Video(VideoFrame),
}

impl MediaFrame {
    pub fn timestamp(&self) -> u32 {
        match self {
            Self::Audio(f) => f.timestamp,
            Self::Video(f) => f.timestamp,
        }
    }
}

/// What a payload is expected to decode to. Timestamps travel in RTP, not in
/// the payload, so the caller supplies them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Audio,
    Video { width: u32, height: u32 },
}

impl FrameKind {
    /// Video dimensions are not carried in band. Every picture the system
    /// produces is one of the ladder sizes, so the payload length names it.
    pub fn video_for_len(len: usize) -> Option<Self> {
        StreamProfile::LADDER
            .into_iter()
            .find(|p| VideoFrame::byte_len(p.width(), p.height()) == len)
            .map(|p| Self::Video {
                width: p.width(),
                height: p.height(),
            })
    }
}

pub fn encode_frame(frame: &MediaFrame) -> Vec<u8> {
    match frame {
        MediaFrame::Audio(a) => a.samples.iter().flat_map(|s| s.to_be_bytes()).collect(),
        MediaFrame::Video(v) => {
            let mut out = Vec::with_capacity(v.y.len() + v.u.len() + v.v.len());
            out.extend_from_slice(&v.y);
            out.extend_from_slice(&v.u);
            out.extend_from_slice(&v.v);
            out
        }
    }
}

pub fn decode_frame(
    kind: FrameKind,
    bytes: &[u8],
    timestamp: u32,
) -> Result<MediaFrame, MediaError> {
    match kind {
        FrameKind::Audio => {
            if bytes.len() != AUDIO_FRAME_BYTES {
                return Err(MediaError::SizeMismatch {
                    expected: AUDIO_FRAME_BYTES,
                    found: bytes.len(),
                });
            }
            let samples = bytes
                .chunks_exact(2)
                .map(|c| i16::from_be_bytes([c[0], c[1]]))
                .collect();
            Ok(MediaFrame::Audio(AudioFrame { samples, timestamp }))
        }
        FrameKind::Video { width, height } => {
            check_dims(width, height)?;
            let expected = VideoFrame::byte_len(width, height);
            if bytes.len() != expected {
                return Err(MediaError::SizeMismatch {
                    expected,
                    found: bytes.len(),
                });
            }
            let luma = (width * height) as usize;
            let chroma = luma / 4;
            Ok(MediaFrame::Video(VideoFrame {
                width,
                height,
                y: bytes[..luma].to_vec(),
                u: bytes[luma..luma + chroma].to_vec(),
                v: bytes[luma + chroma..].to_vec(),
                timestamp,
            }))
        }
    }
}
