use std::path::Path;

use super::ProviderResponse;
use crate::codec::{self, CodecError};

pub const DEFAULT_FIXTURE: &str = "default.response";

/// Looks up `<dir>/<key>.response`, then `<dir>/default.response`.
pub fn lookup(dir: &Path, key: &str) -> Result<Option<ProviderResponse>, CodecError> {
    for name in [format!("{key}.response"), DEFAULT_FIXTURE.to_string()] {
        match codec::read::<ProviderResponse>(&dir.join(name)) {
            Ok(mut r) => {
                r.latency_ms = 0;
                return Ok(Some(r));
            }
            Err(e) if e.is_not_found() => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Writes a single-completion fixture answering `key`.
pub fn write_fixture(dir: &Path, key: &str, text: &str) -> Result<(), CodecError> {
    let response = ProviderResponse {
        completions: vec![text.to_string()],
        latency_ms: 0,
        provider_meta: Default::default(),
    };
    codec::write(&dir.join(format!("{key}.response")), &response)
}
