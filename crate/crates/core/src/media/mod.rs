//! Raw media frames, the codec that carries them in RTP payloads, and the
//! MCU's processing stages: audio mixing, video scaling, grid composition
//! and the adaptation profile ladder.

mod audio;
mod codec;
mod profile;
mod video;

pub use audio::{mix_audio, AudioFrame, AUDIO_CLOCK_RATE, AUDIO_FRAME_BYTES, SAMPLES_PER_FRAME};
pub use codec::{decode_frame, encode_frame, FrameKind, MediaFrame};
pub use profile::{select_profile, StreamProfile, HEADROOM};
pub use video::{compose_grid, grid_cells, scale_frame, Rect, VideoFrame, BLACK, VIDEO_CLOCK_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MediaType {
    Audio = 0,
    Video = 1,
}

impl MediaType {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Audio),
            1 => Some(Self::Video),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Audio => "audio",
            Self::Video => "video",
        }
    }

    pub fn clock_rate(self) -> u32 {
        match self {
            Self::Audio => AUDIO_CLOCK_RATE,
            Self::Video => VIDEO_CLOCK_RATE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MediaError {
    #[error("payload is {found} bytes, expected {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("frame dimensions {width}x{height} are not even and positive")]
    BadDimensions { width: u32, height: u32 },
}
