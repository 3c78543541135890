use alloc::format;
use alloc::string::String;

use chrono::{DateTime, Utc};

/// Length of every id produced by [`make_run_id`].
pub const RUN_ID_LEN: usize = 29;

/// `run-YYYYMMDDThhmmssZ-xxxxxxxx`, the suffix being the entropy in hex.
pub fn make_run_id(clock: DateTime<Utc>, entropy: [u8; 4]) -> String {
    format!(
        "run-{}-{:08x}",
        clock.format("%Y%m%dT%H%M%SZ"),
        u32::from_be_bytes(entropy)
    )
}
