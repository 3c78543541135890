//! Request digests and SHA-256 helpers.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use sha2::{Digest, Sha256};

use crate::model::Sampling;

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in hash.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Byte layout hashed into an idempotency key:
/// `model_id \n prompt_text \n temperature(6dp) \n max_output_tokens \n sample_index`.
pub fn idempotency_preimage(
    model_id: &str,
    prompt_text: &str,
    sampling: &Sampling,
    sample_index: u32,
) -> Vec<u8> {
    let mut out = String::with_capacity(model_id.len() + prompt_text.len() + 32);
    out.push_str(model_id);
    out.push('\n');
    out.push_str(prompt_text);
    out.push('\n');
    let _ = write!(out, "{:.6}", sampling.temperature);
    out.push('\n');
    let _ = write!(out, "{}", sampling.max_output_tokens);
    out.push('\n');
    let _ = write!(out, "{sample_index}");
    out.into_bytes()
}

pub fn compute_idempotency_key(
    model_id: &str,
    prompt_text: &str,
    sampling: &Sampling,
    sample_index: u32,
) -> String {
    sha256_hex(&idempotency_preimage(model_id, prompt_text, sampling, sample_index))
}

pub fn is_idempotency_key(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}
