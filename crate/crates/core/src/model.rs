//! Shared data model: tasks, models, run configuration, samples and outcomes.
//!
//! Every value here is plain data. Loading from disk and path resolution live
//! in the `polyeval` crate; this module only knows about strings.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Hard upper bound on a task's timeout, in seconds.
pub const MAX_TIMEOUT_S: f64 = 300.0;

/// Captured output is truncated to its last `OUTPUT_TAIL_CAP` bytes.
pub const OUTPUT_TAIL_CAP: usize = 8 * 1024;

/// One programming problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub title: String,
    /// The description sent verbatim to every model.
    pub prompt_text: String,
    /// Name of the function (or class) the tests call.
    pub entry_point: String,
    /// Test program appended to the candidate code.
    pub test_source: String,
    pub timeout_s: f64,
    pub runtime_profile_id: String,
}

/// Which wire style an adapter speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    ChatCompletion,
    CookieSession,
    PredictionPoll,
    InferenceEndpoint,
    Mock,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 5] = [
        ProviderKind::ChatCompletion,
        ProviderKind::CookieSession,
        ProviderKind::PredictionPoll,
        ProviderKind::InferenceEndpoint,
        ProviderKind::Mock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::ChatCompletion => "chat_completion",
            ProviderKind::CookieSession => "cookie_session",
            ProviderKind::PredictionPoll => "prediction_poll",
            ProviderKind::InferenceEndpoint => "inference_endpoint",
            ProviderKind::Mock => "mock",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ProviderKind::ChatCompletion => "chat-completion JSON API with bearer token (GPT series)",
            ProviderKind::CookieSession => "session API authenticated by a cookie map (Bard-style)",
            ProviderKind::PredictionPoll => "create a prediction, then poll until it completes (Replicate-style)",
            ProviderKind::InferenceEndpoint => "single-shot text-generation endpoint (Hugging Face-style)",
            ProviderKind::Mock => "offline fixture lookup keyed by request digest",
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_samples_per_request")]
    pub samples_per_request: u32,
}

fn default_max_output_tokens() -> u32 {
    1024
}

fn default_samples_per_request() -> u32 {
    1
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            samples_per_request: default_samples_per_request(),
        }
    }
}

/// One evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub display_name: String,
    pub vendor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<String>,
    pub provider_kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the credential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_ref: Option<String>,
    /// Model name sent on the wire; defaults to `model_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_dir: Option<String>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default = "default_request_timeout_s")]
    pub request_timeout_s: f64,
}

fn default_request_timeout_s() -> f64 {
    120.0
}

impl ModelSpec {
    pub fn wire_model(&self) -> &str {
        self.remote_model.as_deref().unwrap_or(&self.model_id)
    }
}

/// Interpreter configuration used by the sandbox.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeProfile {
    #[serde(default)]
    pub profile_id: String,
    /// Command and arguments; the harness file path is appended.
    pub interpreter_cmd: Vec<String>,
    /// Variables copied from the parent environment.
    #[serde(default)]
    pub env_allowlist: Vec<String>,
    /// Variables set to fixed values in the child.
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    /// Language tag used for fence matching and failure markers.
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default = "default_harness_file")]
    pub harness_file: String,
    /// Run the child in a fresh network namespace (Linux `unshare`).
    #[serde(default)]
    pub isolate_network: bool,
}

fn default_language() -> String {
    String::from("python")
}

fn default_harness_file() -> String {
    String::from("harness.py")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    Record,
    Replay,
    #[default]
    Bypass,
}

impl fmt::Display for CacheMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CacheMode::Record => "record",
            CacheMode::Replay => "replay",
            CacheMode::Bypass => "bypass",
        })
    }
}

/// A fully resolved run: tasks and profiles inlined, paths absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub tasks: Vec<TaskSpec>,
    pub runtime_profiles: BTreeMap<String, RuntimeProfile>,
    pub models: Vec<ModelSpec>,
    pub n_samples: u32,
    pub k_values: Vec<u32>,
    pub per_provider_concurrency: u32,
    pub cache_mode: CacheMode,
    pub output_dir: String,
}

/// The part of a run configuration that determines results.
///
/// Execution knobs (cache mode, concurrency, output location) are excluded so
/// that a run can be resumed with different knobs.
#[derive(Serialize)]
pub struct ConfigIdentity<'a> {
    pub run_id: &'a str,
    pub tasks: &'a [TaskSpec],
    pub runtime_profiles: &'a BTreeMap<String, RuntimeProfile>,
    pub models: &'a [ModelSpec],
    pub n_samples: u32,
    pub k_values: &'a [u32],
}

impl RunConfig {
    pub fn identity(&self) -> ConfigIdentity<'_> {
        ConfigIdentity {
            run_id: &self.run_id,
            tasks: &self.tasks,
            runtime_profiles: &self.runtime_profiles,
            models: &self.models,
            n_samples: self.n_samples,
            k_values: &self.k_values,
        }
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn model(&self, model_id: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.model_id == model_id)
    }
}

/// Identifies one sample within a run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleKey {
    pub model_id: String,
    pub task_id: String,
    pub sample_index: u32,
}

impl SampleKey {
    pub fn new(model_id: impl Into<String>, task_id: impl Into<String>, sample_index: u32) -> Self {
        SampleKey {
            model_id: model_id.into(),
            task_id: task_id.into(),
            sample_index,
        }
    }
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.model_id, self.task_id, self.sample_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    FencedTagged,
    FencedUntagged,
    HeuristicLines,
    WholeResponse,
    Empty,
}

/// One raw model response plus the code extracted from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub run_id: String,
    pub model_id: String,
    pub task_id: String,
    pub sample_index: u32,
    pub raw_response: String,
    pub extracted_code: String,
    pub extraction_method: ExtractionMethod,
    pub provider_latency_ms: u64,
    /// Set when generation failed; the sample then carries no code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_error: Option<String>,
}

impl GeneratedSample {
    pub fn key(&self) -> SampleKey {
        SampleKey::new(self.model_id.clone(), self.task_id.clone(), self.sample_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Passed,
    Failed,
    RuntimeError,
    Timeout,
    SandboxError,
    EmptyCode,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeStatus::Passed => "passed",
            OutcomeStatus::Failed => "failed",
            OutcomeStatus::RuntimeError => "runtime_error",
            OutcomeStatus::Timeout => "timeout",
            OutcomeStatus::SandboxError => "sandbox_error",
            OutcomeStatus::EmptyCode => "empty_code",
        }
    }
}

impl fmt::Display for OutcomeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sandbox verdict for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub model_id: String,
    pub task_id: String,
    pub sample_index: u32,
    pub status: OutcomeStatus,
    pub duration_ms: u64,
    pub stdout_tail: String,
    pub stderr_tail: String,
}

impl ExecutionOutcome {
    pub fn key(&self) -> SampleKey {
        SampleKey::new(self.model_id.clone(), self.task_id.clone(), self.sample_index)
    }
}

/// Keeps the last `cap` bytes of `text`, cut at a char boundary.
pub fn tail_at_char_boundary(text: &str, cap: usize) -> &str {
    if text.len() <= cap {
        return text;
    }
    let mut start = text.len() - cap;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    &text[start..]
}
