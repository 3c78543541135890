//! Credentials are only ever looked up by name, at request time.

use std::collections::HashMap;
use std::fmt;

/// A credential value. `Debug` and `Display` never reveal it.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Secret(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

pub trait SecretSource: Send + Sync {
    fn lookup(&self, name: &str) -> Option<Secret>;
}

/// Reads credentials from the process environment.
#[derive(Debug, Default, Clone, Copy)]
pub struct EnvSecrets;

impl SecretSource for EnvSecrets {
    fn lookup(&self, name: &str) -> Option<Secret> {
        std::env::var(name).ok().filter(|v| !v.is_empty()).map(Secret)
    }
}

/// Fixed name -> value table, for tests and embedding.
#[derive(Debug, Default, Clone)]
pub struct StaticSecrets {
    values: HashMap<String, Secret>,
}

impl StaticSecrets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: &str) -> Self {
        self.values.insert(name.to_string(), Secret::new(value));
        self
    }
}

impl SecretSource for StaticSecrets {
    fn lookup(&self, name: &str) -> Option<Secret> {
        self.values.get(name).cloned()
    }
}
