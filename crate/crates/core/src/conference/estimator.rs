use core::time::Duration;

use crate::media::{select_profile, StreamProfile, HEADROOM};

pub const REPORT_WINDOW: Duration = Duration::from_millis(500);
pub const EWMA_ALPHA: f64 = 0.3;
pub const DOWNGRADE_WINDOWS: u32 = 2;
pub const UPGRADE_WINDOWS: u32 = 4;
/// An upgrade needs this much margin over the next rung's bitrate.
pub const UPGRADE_MARGIN: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProfileChange {
    pub from: StreamProfile,
    pub to: StreamProfile,
}

/// Downstream bandwidth estimate from receiver byte counts, with
/// hysteresis on the resulting profile.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthEstimator {
    ewma: Option<f64>,
    below: u32,
    above: u32,
    profile: StreamProfile,
    screen_width: u32,
}

impl BandwidthEstimator {
    /// Starts at the best rung the screen can show.
    pub fn new(screen_width: u32) -> Self {
        Self {
            ewma: None,
            below: 0,
            above: 0,
            profile: select_profile(f64::INFINITY, screen_width),
            screen_width,
        }
    }

    pub fn estimate(&self) -> Option<f64> {
        self.ewma
    }

    pub fn profile(&self) -> StreamProfile {
        self.profile
    }

    /// Feeds one window's byte count. The first window seeds the average.
    pub fn on_window(&mut self, bytes: u64) -> Option<ProfileChange> {
        let raw = bytes as f64 * 8.0 / REPORT_WINDOW.as_secs_f64();
        let est = match self.ewma {
            Some(prev) => EWMA_ALPHA * raw + (1.0 - EWMA_ALPHA) * prev,
            None => raw,
        };
        self.ewma = Some(est);

        let from = self.profile;
        let below = from.lower().is_some() && est < HEADROOM * from.target_bitrate() as f64;
        let next = from.higher().filter(|n| n.width() <= self.screen_width);
        let above = next.is_some_and(|n| est > UPGRADE_MARGIN * n.target_bitrate() as f64);
        self.below = if below { self.below + 1 } else { 0 };
        self.above = if above { self.above + 1 } else { 0 };

        let to = if self.below >= DOWNGRADE_WINDOWS {
            from.lower()
        } else if self.above >= UPGRADE_WINDOWS {
            next
        } else {
            None
        }?;
        self.profile = to;
        self.below = 0;
        self.above = 0;
        Some(ProfileChange { from, to })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bytes_for(bps: f64) -> u64 {
        (bps * REPORT_WINDOW.as_secs_f64() / 8.0) as u64
    }

    #[test]
    fn initial_profile_from_screen() {
        assert_eq!(BandwidthEstimator::new(1920).profile(), StreamProfile::High);
        assert_eq!(BandwidthEstimator::new(640).profile(), StreamProfile::Mid);
        assert_eq!(BandwidthEstimator::new(100).profile(), StreamProfile::Low);
    }

    #[test]
    fn steady_rate_converges() {
        let mut e = BandwidthEstimator::new(1280);
        e.on_window(125_000);
        assert_eq!(e.estimate(), Some(2_000_000.0));
        let mut e = BandwidthEstimator::new(1280);
        e.on_window(0);
        for _ in 0..60 {
            e.on_window(125_000);
        }
        assert!((e.estimate().unwrap() - 2_000_000.0).abs() < 1.0);
    }

    #[test]
    fn two_low_windows_downgrade() {
        let mut e = BandwidthEstimator::new(640);
        assert_eq!(e.on_window(bytes_for(300_000.0)), None);
        assert_eq!(
            e.on_window(bytes_for(300_000.0)),
            Some(ProfileChange {
                from: StreamProfile::Mid,
                to: StreamProfile::Low
            })
        );
        assert_eq!(e.on_window(0), None);
    }

    #[test]
    fn low_then_high_keeps_profile() {
        let mut e = BandwidthEstimator::new(640);
        e.on_window(bytes_for(600_000.0));
        assert_eq!(e.on_window(bytes_for(100_000.0)), None);
        assert_eq!(e.on_window(bytes_for(5_000_000.0)), None);
        assert_eq!(e.profile(), StreamProfile::Mid);
    }

    #[test]
    fn four_high_windows_upgrade_within_screen() {
        let mut e = BandwidthEstimator::new(1280);
        for _ in 0..4 {
            e.on_window(bytes_for(100_000.0));
        }
        assert_eq!(e.profile(), StreamProfile::Low);
        let mut changes = alloc::vec::Vec::new();
        for _ in 0..20 {
            changes.extend(e.on_window(bytes_for(10_000_000.0)));
        }
        assert_eq!(e.profile(), StreamProfile::High);
        assert_eq!(changes.len(), 2);

        let mut capped = BandwidthEstimator::new(640);
        for _ in 0..20 {
            capped.on_window(bytes_for(10_000_000.0));
        }
        assert_eq!(capped.profile(), StreamProfile::Mid);
    }

    proptest! {
        #[test]
        fn changes_respect_hysteresis(rates in prop::collection::vec(0.0f64..4e6, 1..80), screen in 0u32..2000) {
            let mut e = BandwidthEstimator::new(screen);
            let mut last_change: Option<(usize, ProfileChange)> = None;
            for (i, r) in rates.iter().enumerate() {
                prop_assert!(e.estimate().unwrap_or(0.0) >= 0.0);
                if let Some(c) = e.on_window(bytes_for(*r)) {
                    prop_assert!(c.to.width() <= screen.max(StreamProfile::Low.width()));
                    if let Some((j, prev)) = last_change {
                        if prev.to > prev.from && c.to < c.from {
                            prop_assert!(i - j >= DOWNGRADE_WINDOWS as usize);
                        }
                        if prev.to < prev.from && c.to > c.from {
                            prop_assert!(i - j >= UPGRADE_WINDOWS as usize);
                        }
                    }
                    last_change = Some((i, c));
                }
            }
        }
    }
}
