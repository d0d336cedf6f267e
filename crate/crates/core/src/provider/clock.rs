use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Time source for rate limiting and backoff, swappable in tests.
pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Virtual time: `sleep` advances the clock instantly.
#[derive(Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl FakeClock {
    pub fn new() -> Self {
        FakeClock::default()
    }

    pub fn advance(&self, duration: Duration) {
        *self.now.lock().unwrap_or_else(|e| e.into_inner()) += duration;
    }

    /// Every duration passed to `sleep`, in call order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn sleep(&self, duration: Duration) {
        self.sleeps.lock().unwrap_or_else(|e| e.into_inner()).push(duration);
        self.advance(duration);
    }
}

/// Spaces acquisitions at least `1 / rate` apart. Slots are reserved under
/// the lock and waited for outside it.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Duration>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    /// `per_second` must be positive and finite.
    pub fn new(per_second: f64, clock: Arc<dyn Clock>) -> Self {
        assert!(per_second.is_finite() && per_second > 0.0, "rate must be positive");
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / per_second),
            next: Mutex::new(None),
            clock,
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = self.clock.now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            self.clock.sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_requests_at_two_per_second_take_four_and_a_half_seconds() {
        let clock = Arc::new(FakeClock::new());
        let limiter = RateLimiter::new(2.0, clock.clone());
        for _ in 0..10 {
            limiter.acquire();
        }
        assert!(clock.now() >= Duration::from_millis(4500), "{:?}", clock.now());
        assert_eq!(clock.sleeps().len(), 9);
    }

    #[test]
    fn idle_time_is_not_banked() {
        let clock = Arc::new(FakeClock::new());
        let limiter = RateLimiter::new(1.0, clock.clone());
        limiter.acquire();
        clock.advance(Duration::from_secs(10));
        limiter.acquire();
        limiter.acquire();
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(1)]);
    }
}
