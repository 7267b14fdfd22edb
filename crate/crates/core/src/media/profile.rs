/// Rungs of the adaptation ladder, ordered low to high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StreamProfile {
    Low,
    Mid,
    High,
}

/// Fraction of the estimated bandwidth a profile's bitrate may use.
pub const HEADROOM: f64 = 0.9;

impl StreamProfile {
    pub const LADDER: [StreamProfile; 3] =
        [StreamProfile::Low, StreamProfile::Mid, StreamProfile::High];

    pub fn name(self) -> &'static str {
        match self {
            Self::Low => "LOW",
            Self::Mid => "MID",
            Self::High => "HIGH",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::LADDER
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
    }

    pub fn width(self) -> u32 {
        match self {
            Self::Low => 320,
            Self::Mid => 640,
            Self::High => 1280,
        }
    }

    pub fn height(self) -> u32 {
        self.width() * 9 / 16
    }

    pub fn target_bitrate(self) -> u64 {
        match self {
            Self::Low => 150_000,
            Self::Mid => 500_000,
            Self::High => 1_500_000,
        }
    }

    pub fn lower(self) -> Option<Self> {
        match self {
            Self::Low => None,
            Self::Mid => Some(Self::Low),
            Self::High => Some(Self::Mid),
        }
    }

    pub fn higher(self) -> Option<Self> {
        match self {
            Self::Low => Some(Self::Mid),
            Self::Mid => Some(Self::High),
            Self::High => None,
        }
    }

    /// Whether the profile's bitrate fits the headroom rule for `bw`.
    pub fn fits(self, estimated_bw: f64) -> bool {
        self.target_bitrate() as f64 <= HEADROOM * estimated_bw
    }
}

/// Highest rung that fits both the bandwidth and the screen, else LOW.
pub fn select_profile(estimated_bw: f64, screen_width: u32) -> StreamProfile {
    StreamProfile::LADDER
        .into_iter()
        .rev()
        .find(|p| p.fits(estimated_bw) && p.width() <= screen_width)
        .unwrap_or(StreamProfile::Low)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ladder_values() {
        assert_eq!(
            (StreamProfile::High.width(), StreamProfile::High.height()),
            (1280, 720)
        );
        assert_eq!(
            (StreamProfile::Mid.width(), StreamProfile::Mid.height()),
            (640, 360)
        );
        assert_eq!(
            (StreamProfile::Low.width(), StreamProfile::Low.height()),
            (320, 180)
        );
        for w in StreamProfile::LADDER.windows(2) {
            assert!(w[0].width() < w[1].width() && w[0].target_bitrate() < w[1].target_bitrate());
        }
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_profile(1_000_000.0, 1280), StreamProfile::Mid);
        assert_eq!(select_profile(10_000_000.0, 320), StreamProfile::Low);
        assert_eq!(select_profile(0.0, 1920), StreamProfile::Low);
        assert_eq!(select_profile(1_666_667.0, 1280), StreamProfile::High);
        assert_eq!(select_profile(1_666_666.0, 1280), StreamProfile::Mid);
    }

    proptest! {
        #[test]
        fn monotone_in_bandwidth(a in 0.0f64..5e6, b in 0.0f64..5e6, w in 0u32..2000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(select_profile(lo, w) <= select_profile(hi, w));
        }
    }
}
