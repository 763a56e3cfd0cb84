//! Wall-clock abstraction so generation and fine-tuning timings can be
//! recorded without `std`.

use core::cell::Cell;

pub trait Clock {
    /// Monotonic seconds since an arbitrary origin.
    fn now_seconds(&self) -> f64;
}

/// A clock that advances by a fixed step on every read. `step = 0.0` gives a
/// frozen clock, which makes recorded timings reproducible in tests.
#[derive(Debug, Default)]
pub struct FixedClock {
    now: Cell<f64>,
    step: f64,
}

impl FixedClock {
    pub fn new(step: f64) -> Self {
        Self { now: Cell::new(0.0), step }
    }
}

impl Clock for FixedClock {
    fn now_seconds(&self) -> f64 {
        let t = self.now.get();
        self.now.set(t + self.step);
        t
    }
}
