use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Process-wide limiter: at most `max_concurrent` requests in flight and at
/// most `per_window` request starts in any sliding `window`.
pub struct Throttle {
    max_concurrent: usize,
    per_window: Option<u32>,
    window: Duration,
    state: Mutex<State>,
    freed: Condvar,
}

#[derive(Default)]
struct State {
    in_flight: usize,
    starts: VecDeque<Instant>,
}

pub struct Permit<'a> {
    throttle: &'a Throttle,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.throttle.state.lock().unwrap().in_flight -= 1;
        self.throttle.freed.notify_all();
    }
}

impl Throttle {
    pub fn new(max_concurrent: usize, per_window: Option<u32>, window: Duration) -> Self {
        Throttle { max_concurrent: max_concurrent.max(1), per_window, window, state: Mutex::default(), freed: Condvar::new() }
    }

    pub fn unlimited() -> Self {
        Throttle::new(usize::MAX, None, Duration::from_secs(60))
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap();
        loop {
            let now = Instant::now();
            while st.starts.front().is_some_and(|&t| now.duration_since(t) >= self.window) {
                st.starts.pop_front();
            }
            let rate_full = self.per_window.is_some_and(|n| st.starts.len() >= n as usize);
            if st.in_flight < self.max_concurrent && !rate_full {
                st.in_flight += 1;
                st.starts.push_back(now);
                return Permit { throttle: self };
            }
            st = if rate_full {
                let oldest = *st.starts.front().expect("rate window holds starts");
                let wait = (oldest + self.window).saturating_duration_since(now);
                self.freed.wait_timeout(st, wait).unwrap().0
            } else {
                self.freed.wait(st).unwrap()
            };
        }
    }
}
