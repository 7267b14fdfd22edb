use alloc::vec;
use alloc::vec::Vec;

pub const AUDIO_CLOCK_RATE: u32 = 48_000;
pub const SAMPLES_PER_FRAME: usize = 960;
pub const AUDIO_FRAME_BYTES: usize = SAMPLES_PER_FRAME * 2;

/// 20 ms of mono 16-bit audio at 48 kHz.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioFrame {
    pub samples: Vec<i16>,
    /// 48 kHz media clock.
    pub timestamp: u32,
}

impl AudioFrame {
    pub fn silence(timestamp: u32) -> Self {
        Self {
            samples: vec![0; SAMPLES_PER_FRAME],
            timestamp,
        }
    }
}

/// Sums every input per sample in an `i32` accumulator and clamps once, so
/// the result does not depend on input order. Frames shorter than 960
/// samples contribute silence for the missing tail.
pub fn mix_audio(inputs: &[&AudioFrame], timestamp: u32) -> AudioFrame {
    let mut acc = [0i32; SAMPLES_PER_FRAME];
    for f in inputs {
        for (a, &s) in acc.iter_mut().zip(&f.samples) {
            *a += i32::from(s);
        }
    }
    AudioFrame {
        samples: acc
            .iter()
            .map(|&a| a.clamp(i16::MIN.into(), i16::MAX.into()) as i16)
            .collect(),
        timestamp,
    }
}
