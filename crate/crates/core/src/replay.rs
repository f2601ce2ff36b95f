//! Sliding anti-replay window over 64-bit counters.

/// Largest supported window.
pub const MAX_WINDOW: u32 = 64;

/// Tracks the highest counter seen plus a bitmap of the `size` counters
/// below it. A size of 0 is a strict high-water mark: only counters above
/// the highest one seen are fresh.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayWindow {
    size: u32,
    highest: Option<u64>,
    // bit i set: counter `highest - i` was seen
    seen: u64,
}

impl Default for ReplayWindow {
    fn default() -> Self {
        Self::strict()
    }
}

impl ReplayWindow {
    pub fn strict() -> Self {
        Self::new(0)
    }

    /// Sizes above [`MAX_WINDOW`] are clamped.
    pub fn new(size: u32) -> Self {
        Self {
            size: size.min(MAX_WINDOW),
            highest: None,
            seen: 0,
        }
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn highest(&self) -> Option<u64> {
        self.highest
    }

    pub fn is_fresh(&self, counter: u64) -> bool {
        let Some(high) = self.highest else {
            return true;
        };
        if counter > high {
            return true;
        }
        let age = high - counter;
        age < self.size as u64 && age > 0 && self.seen & (1 << age) == 0
    }

    /// Records `counter`; returns false (and changes nothing) if it is a replay.
    pub fn accept(&mut self, counter: u64) -> bool {
        if !self.is_fresh(counter) {
            return false;
        }
        match self.highest {
            Some(high) if counter <= high => self.seen |= 1 << (high - counter),
            Some(high) => {
                let shift = counter - high;
                self.seen = if shift >= 64 { 0 } else { self.seen << shift };
                self.seen |= 1;
                self.highest = Some(counter);
            }
            None => {
                self.seen = 1;
                self.highest = Some(counter);
            }
        }
        true
    }
}
