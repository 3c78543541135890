//! Provider error classes and the retry schedule.

use alloc::collections::BTreeSet;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Timeout,
    RateLimited,
    ServerError,
    ConnectionError,
    Auth,
    BadRequest,
    /// The provider answered 2xx but the payload could not be normalized.
    MalformedResponse,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Timeout => "timeout",
            ErrorClass::RateLimited => "rate_limited",
            ErrorClass::ServerError => "server_error",
            ErrorClass::ConnectionError => "connection_error",
            ErrorClass::Auth => "auth",
            ErrorClass::BadRequest => "bad_request",
            ErrorClass::MalformedResponse => "malformed_response",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What came back from one transport attempt, before interpretation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireStatus {
    Http(u16),
    ConnectFailed,
    ReadFailed,
    DeadlineExceeded,
}

/// Maps a non-success wire status to its error class.
///
/// 2xx and 3xx are not errors; they map to `BadRequest` only if a caller
/// insists on classifying them, which the gateway never does.
pub fn classify_provider_error(status: WireStatus) -> ErrorClass {
    match status {
        WireStatus::Http(429) => ErrorClass::RateLimited,
        WireStatus::Http(401) | WireStatus::Http(403) => ErrorClass::Auth,
        WireStatus::Http(408) => ErrorClass::Timeout,
        WireStatus::Http(s) if (500..600).contains(&s) => ErrorClass::ServerError,
        WireStatus::Http(_) => ErrorClass::BadRequest,
        WireStatus::ConnectFailed | WireStatus::ReadFailed => ErrorClass::ConnectionError,
        WireStatus::DeadlineExceeded => ErrorClass::Timeout,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub multiplier: f64,
    pub jitter_fraction: f64,
    pub retryable_classes: BTreeSet<ErrorClass>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay_ms: 500,
            multiplier: 2.0,
            jitter_fraction: 0.1,
            retryable_classes: [
                ErrorClass::Timeout,
                ErrorClass::RateLimited,
                ErrorClass::ServerError,
                ErrorClass::ConnectionError,
            ]
            .into_iter()
            .collect(),
        }
    }
}

impl RetryPolicy {
    pub fn is_retryable(&self, class: ErrorClass) -> bool {
        self.retryable_classes.contains(&class)
    }

    /// Delay before retrying after failed attempt `attempt` (1-based),
    /// without jitter: `base_delay_ms * multiplier^(attempt-1)`.
    pub fn nominal_delay_ms(&self, attempt: u32) -> u64 {
        let exp = attempt.saturating_sub(1) as i32;
        let ms = self.base_delay_ms as f64 * powi(self.multiplier, exp);
        if ms >= u64::MAX as f64 {
            u64::MAX
        } else {
            round(ms) as u64
        }
    }

    /// Applies jitter to a nominal delay. `unit` is a sample in `[-1, 1]`.
    pub fn jittered_delay_ms(&self, nominal_ms: u64, unit: f64) -> u64 {
        let unit = unit.clamp(-1.0, 1.0);
        let factor = 1.0 + self.jitter_fraction.clamp(0.0, 1.0) * unit;
        let ms = nominal_ms as f64 * factor;
        if ms <= 0.0 {
            0
        } else {
            round(ms) as u64
        }
    }
}

// core has no float intrinsics beyond the basics; these suffice here.
fn powi(base: f64, exp: i32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..exp {
        acc *= base;
        if acc.is_infinite() {
            break;
        }
    }
    acc
}

fn round(x: f64) -> f64 {
    let t = x as u64 as f64;
    if x - t >= 0.5 {
        t + 1.0
    } else {
        t
    }
}
