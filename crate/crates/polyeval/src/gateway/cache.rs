use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::ProviderResponse;
use crate::codec::{self, CodecError};

/// Content-addressed response store: `<root>/<key[..2]>/<key>.response`.
pub struct ResponseCache {
    root: PathBuf,
    writes: Mutex<()>,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache {
            root: root.into(),
            writes: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or(key);
        self.root.join(shard).join(format!("{key}.response"))
    }

    pub fn get(&self, key: &str) -> Result<Option<ProviderResponse>, CodecError> {
        match codec::read(&self.path_for(key)) {
            Ok(r) => Ok(Some(r)),
            Err(e) if e.is_not_found() => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &str, response: &ProviderResponse) -> Result<(), CodecError> {
        let _guard = self.writes.lock().unwrap_or_else(|p| p.into_inner());
        codec::write(&self.path_for(key), response)
    }
}
