//! Time source shared by every process of a run.
//!
//! Timestamps are durations since the start of the run. A simulated clock
//! only moves when the scheduler sets it, which makes runs reproducible.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub enum Clock {
    System { epoch: Instant },
    Sim(Arc<AtomicU64>),
}

impl Clock {
    pub fn system() -> Self {
        Clock::System {
            epoch: Instant::now(),
        }
    }

    pub fn sim() -> Self {
        Clock::Sim(Arc::new(AtomicU64::new(0)))
    }

    pub fn is_sim(&self) -> bool {
        matches!(self, Clock::Sim(_))
    }

    pub fn now(&self) -> Duration {
        match self {
            Clock::System { epoch } => epoch.elapsed(),
            Clock::Sim(nanos) => Duration::from_nanos(nanos.load(Ordering::SeqCst)),
        }
    }

    /// Moves a simulated clock to `at`. Never goes backwards; no-op on a system clock.
    pub fn set(&self, at: Duration) {
        if let Clock::Sim(nanos) = self {
            nanos.fetch_max(at.as_nanos() as u64, Ordering::SeqCst);
        }
    }

    pub fn advance(&self, by: Duration) {
        self.set(self.now() + by);
    }

    /// Blocks until `at` on a system clock; moves a simulated clock forward.
    pub fn sleep_until(&self, at: Duration) {
        match self {
            Clock::System { .. } => {
                let now = self.now();
                if at > now {
                    std::thread::sleep(at - now);
                }
            }
            Clock::Sim(_) => self.set(at),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_clock_is_monotonic_and_shared() {
        let clock = Clock::sim();
        let other = clock.clone();
        clock.set(Duration::from_millis(10));
        assert_eq!(other.now(), Duration::from_millis(10));
        clock.set(Duration::from_millis(5));
        assert_eq!(other.now(), Duration::from_millis(10));
        other.advance(Duration::from_millis(1));
        assert_eq!(clock.now(), Duration::from_millis(11));
    }
}
