/// Sliding 64-packet replay window over 48-bit SRTP packet indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayWindow {
    highest: Option<u64>,
    /// Bit `n` set means `highest - n` was accepted.
    bitmap: u64,
}

pub const REPLAY_WINDOW_SIZE: u64 = 64;

impl ReplayWindow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Would `index` be accepted? Does not modify the window.
    pub fn check(&self, index: u64) -> bool {
        match self.highest {
            None => true,
            Some(h) if index > h => true,
            Some(h) => {
                let delta = h - index;
                delta < REPLAY_WINDOW_SIZE && self.bitmap & (1 << delta) == 0
            }
        }
    }

    /// Marks `index` as received. Call only after authentication succeeded.
    pub fn mark(&mut self, index: u64) {
        match self.highest {
            None => {
                self.highest = Some(index);
                self.bitmap = 1;
            }
            Some(h) if index > h => {
                let shift = index - h;
                self.bitmap = if shift >= REPLAY_WINDOW_SIZE {
                    0
                } else {
                    self.bitmap << shift
                };
                self.bitmap |= 1;
                self.highest = Some(index);
            }
            Some(h) => {
                let delta = h - index;
                if delta < REPLAY_WINDOW_SIZE {
                    self.bitmap |= 1 << delta;
                }
            }
        }
    }

    /// Check-and-mark in one step.
    pub fn accept(&mut self, index: u64) -> bool {
        let ok = self.check(index);
        if ok {
            self.mark(index);
        }
        ok
    }

    pub fn highest(&self) -> Option<u64> {
        self.highest
    }
}
