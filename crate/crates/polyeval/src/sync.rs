//! Counting semaphores.

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};

pub struct Semaphore {
    available: Mutex<usize>,
    cond: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Semaphore {
            available: Mutex::new(permits.max(1)),
            cond: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphorePermit<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.cond.wait(n).unwrap();
        }
        *n -= 1;
        SemaphorePermit { sem: self }
    }
}

pub struct SemaphorePermit<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphorePermit<'_> {
    fn drop(&mut self) {
        *self.sem.available.lock().unwrap() += 1;
        self.sem.cond.notify_one();
    }
}

/// One in-flight counter per key, all sharing the same limit.
pub struct KeyedLimiter {
    limit: usize,
    in_flight: Mutex<HashMap<String, usize>>,
    cond: Condvar,
}

impl KeyedLimiter {
    pub fn new(limit: usize) -> Self {
        KeyedLimiter {
            limit: limit.max(1),
            in_flight: Mutex::new(HashMap::new()),
            cond: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn acquire(&self, key: &str) -> KeyedPermit<'_> {
        let mut map = self.in_flight.lock().unwrap();
        loop {
            let n = map.entry(key.to_string()).or_insert(0);
            if *n < self.limit {
                *n += 1;
                break;
            }
            map = self.cond.wait(map).unwrap();
        }
        KeyedPermit {
            limiter: self,
            key: key.to_string(),
        }
    }
}

pub struct KeyedPermit<'a> {
    limiter: &'a KeyedLimiter,
    key: String,
}

impl Drop for KeyedPermit<'_> {
    fn drop(&mut self) {
        let mut map = self.limiter.in_flight.lock().unwrap();
        if let Some(n) = map.get_mut(&self.key) {
            *n -= 1;
        }
        self.limiter.cond.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    #[test]
    fn keyed_limiter_bounds_each_key_independently() {
        let limiter = KeyedLimiter::new(2);
        let current: HashMap<&str, AtomicUsize> =
            [("a", AtomicUsize::new(0)), ("b", AtomicUsize::new(0))].into_iter().collect();
        let peak: HashMap<&str, AtomicUsize> =
            [("a", AtomicUsize::new(0)), ("b", AtomicUsize::new(0))].into_iter().collect();
        std::thread::scope(|s| {
            for i in 0..16 {
                let key = if i % 2 == 0 { "a" } else { "b" };
                let (limiter, current, peak) = (&limiter, &current, &peak);
                s.spawn(move || {
                    let _p = limiter.acquire(key);
                    let now = current[key].fetch_add(1, Ordering::SeqCst) + 1;
                    peak[key].fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    current[key].fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak["a"].load(Ordering::SeqCst) <= 2);
        assert!(peak["b"].load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn semaphore_releases_on_drop() {
        let sem = Semaphore::new(1);
        drop(sem.acquire());
        let _again = sem.acquire();
    }
}
