/// Simulated nanosecond clock. Only latency accounting moves it forward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now_ns: u64,
}

impl SimClock {
    pub fn now_ns(&self) -> u64 {
        self.now_ns
    }

    pub fn advance(&mut self, ns: u64) {
        self.now_ns += ns;
    }

    /// Moves to `t` if it lies in the future; never goes backward.
    pub fn advance_to(&mut self, t: u64) {
        self.now_ns = self.now_ns.max(t);
    }

    pub(crate) fn restore(now_ns: u64) -> Self {
        Self { now_ns }
    }
}
