//! Time source, request-rate limiting and in-flight bounding for provider clients.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
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
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Manually driven clock; `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
}

impl FakeClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }
    fn sleep(&self, d: Duration) {
        self.advance(d)
    }
}

/// Sliding-window limiter: no half-open window `[t, t + 1s)` ever holds more
/// than `requests_per_second` admitted requests.
///
/// Capacity is `max(1, floor(rps))` per window of `max(1s, capacity / rps)`.
pub struct RateLimiter {
    clock: Arc<dyn Clock>,
    capacity: usize,
    window: Duration,
    admitted: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64, clock: Arc<dyn Clock>) -> Self {
        assert!(requests_per_second > 0.0, "requests_per_second must be positive");
        let capacity = (requests_per_second.floor() as usize).max(1);
        let window = Duration::from_secs_f64((capacity as f64 / requests_per_second).max(1.0));
        RateLimiter { clock, capacity, window, admitted: Mutex::new(VecDeque::new()) }
    }

    /// Blocks (via the clock) until a request may be issued, then records it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut log = self.admitted.lock().unwrap();
                let now = self.clock.now();
                while log.front().is_some_and(|&t| t + self.window <= now) {
                    log.pop_front();
                }
                if log.len() < self.capacity {
                    log.push_back(now);
                    return;
                }
                (log[0] + self.window) - now
            };
            self.clock.sleep(wait);
        }
    }
}

/// Counting semaphore bounding in-flight requests.
pub struct ConcurrencyLimit {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limit: &'a ConcurrencyLimit,
}

impl ConcurrencyLimit {
    pub fn new(max: usize) -> Self {
        ConcurrencyLimit { max: max.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit { limit: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().unwrap()
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limit.in_flight.lock().unwrap() -= 1;
        self.limit.freed.notify_one();
    }
}
