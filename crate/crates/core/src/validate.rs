//! Invariant checks for tasks, models and run configurations.
//!
//! Validation never stops at the first problem: every violated invariant is
//! reported with a machine-readable code.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::model::{ModelSpec, ProviderKind, RunConfig, TaskSpec, MAX_TIMEOUT_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    NoTasks,
    NoModels,
    KExceedsN,
    NoKValues,
    InvalidK,
    InvalidNSamples,
    InvalidConcurrency,
    EmptyRunId,
    EmptyOutputDir,
    EmptyTaskId,
    UnsafeTaskId,
    DuplicateTaskId,
    InvalidTimeout,
    EmptyPrompt,
    EmptyTestSource,
    EmptyEntryPoint,
    UnknownRuntimeProfile,
    EmptyInterpreterCmd,
    EmptyModelId,
    UnsafeModelId,
    DuplicateModelId,
    MissingEndpoint,
    MissingAuthRef,
    InvalidAuthRef,
    MissingFixtureDir,
    InvalidTemperature,
    InvalidMaxOutputTokens,
    InvalidSamplesPerRequest,
    InvalidRequestTimeout,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            NoTasks => "NO_TASKS",
            NoModels => "NO_MODELS",
            KExceedsN => "K_EXCEEDS_N",
            NoKValues => "NO_K_VALUES",
            InvalidK => "INVALID_K",
            InvalidNSamples => "INVALID_N_SAMPLES",
            InvalidConcurrency => "INVALID_CONCURRENCY",
            EmptyRunId => "EMPTY_RUN_ID",
            EmptyOutputDir => "EMPTY_OUTPUT_DIR",
            EmptyTaskId => "EMPTY_TASK_ID",
            UnsafeTaskId => "UNSAFE_TASK_ID",
            DuplicateTaskId => "DUPLICATE_TASK_ID",
            InvalidTimeout => "INVALID_TIMEOUT",
            EmptyPrompt => "EMPTY_PROMPT",
            EmptyTestSource => "EMPTY_TEST_SOURCE",
            EmptyEntryPoint => "EMPTY_ENTRY_POINT",
            UnknownRuntimeProfile => "UNKNOWN_RUNTIME_PROFILE",
            EmptyInterpreterCmd => "EMPTY_INTERPRETER_CMD",
            EmptyModelId => "EMPTY_MODEL_ID",
            UnsafeModelId => "UNSAFE_MODEL_ID",
            DuplicateModelId => "DUPLICATE_MODEL_ID",
            MissingEndpoint => "MISSING_ENDPOINT",
            MissingAuthRef => "MISSING_AUTH_REF",
            InvalidAuthRef => "INVALID_AUTH_REF",
            MissingFixtureDir => "MISSING_FIXTURE_DIR",
            InvalidTemperature => "INVALID_TEMPERATURE",
            InvalidMaxOutputTokens => "INVALID_MAX_OUTPUT_TOKENS",
            InvalidSamplesPerRequest => "INVALID_SAMPLES_PER_REQUEST",
            InvalidRequestTimeout => "INVALID_REQUEST_TIMEOUT",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

impl Violation {
    fn new(code: ViolationCode, detail: impl Into<String>) -> Self {
        Violation {
            code,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

/// Ids become path components, so they are restricted to a portable set.
pub fn is_path_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.len() <= 128
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

/// An auth_ref names an environment variable: `[A-Z_][A-Z0-9_]*`, at most 64 chars.
pub fn is_valid_auth_ref(name: &str) -> bool {
    let bytes = name.as_bytes();
    !bytes.is_empty()
        && bytes.len() <= 64
        && (bytes[0].is_ascii_uppercase() || bytes[0] == b'_')
        && bytes
            .iter()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || *b == b'_')
}

fn is_blank(s: &str) -> bool {
    s.trim().is_empty()
}

/// Checks the per-task invariants and id uniqueness.
pub fn validate_tasks(tasks: &[TaskSpec]) -> Vec<Violation> {
    let mut out = Vec::new();
    if tasks.is_empty() {
        out.push(Violation::new(ViolationCode::NoTasks, "no tasks"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for task in tasks {
        *counts.entry(task.task_id.as_str()).or_default() += 1;
        let id = &task.task_id;
        if id.is_empty() {
            out.push(Violation::new(ViolationCode::EmptyTaskId, "task with empty task_id"));
        } else if !is_path_safe_id(id) {
            out.push(Violation::new(
                ViolationCode::UnsafeTaskId,
                format!("task_id {id:?} may only contain [A-Za-z0-9._-]"),
            ));
        }
        if !(task.timeout_s > 0.0 && task.timeout_s <= MAX_TIMEOUT_S) {
            out.push(Violation::new(
                ViolationCode::InvalidTimeout,
                format!("task {id:?}: timeout_s {} not in (0, {MAX_TIMEOUT_S}]", task.timeout_s),
            ));
        }
        if is_blank(&task.prompt_text) {
            out.push(Violation::new(ViolationCode::EmptyPrompt, format!("task {id:?}: empty prompt_text")));
        }
        if is_blank(&task.test_source) {
            out.push(Violation::new(
                ViolationCode::EmptyTestSource,
                format!("task {id:?}: empty test_source"),
            ));
        }
        if is_blank(&task.entry_point) {
            out.push(Violation::new(
                ViolationCode::EmptyEntryPoint,
                format!("task {id:?}: empty entry_point"),
            ));
        }
    }
    let dups: Vec<&str> = counts
        .iter()
        .filter(|(id, n)| **n > 1 && !id.is_empty())
        .map(|(id, _)| *id)
        .collect();
    if !dups.is_empty() {
        out.push(Violation::new(
            ViolationCode::DuplicateTaskId,
            format!("duplicate task_id: {}", dups.join(", ")),
        ));
    }
    out
}

fn validate_model(model: &ModelSpec, out: &mut Vec<Violation>) {
    let id = &model.model_id;
    if id.is_empty() {
        out.push(Violation::new(ViolationCode::EmptyModelId, "model with empty model_id"));
    } else if !is_path_safe_id(id) {
        out.push(Violation::new(
            ViolationCode::UnsafeModelId,
            format!("model_id {id:?} may only contain [A-Za-z0-9._-]"),
        ));
    }
    if model.provider_kind == ProviderKind::Mock {
        if model.fixture_dir.as_deref().is_none_or(is_blank) {
            out.push(Violation::new(
                ViolationCode::MissingFixtureDir,
                format!("model {id:?}: mock provider requires fixture_dir"),
            ));
        }
    } else {
        if model.endpoint.as_deref().is_none_or(is_blank) {
            out.push(Violation::new(
                ViolationCode::MissingEndpoint,
                format!("model {id:?}: endpoint required for {}", model.provider_kind),
            ));
        }
        if model.auth_ref.is_none() {
            out.push(Violation::new(
                ViolationCode::MissingAuthRef,
                format!("model {id:?}: auth_ref required for {}", model.provider_kind),
            ));
        }
    }
    if let Some(auth_ref) = &model.auth_ref {
        if !is_valid_auth_ref(auth_ref) {
            // never echo the value: it may be a pasted credential
            out.push(Violation::new(
                ViolationCode::InvalidAuthRef,
                format!("model {id:?}: auth_ref must be an environment variable name like OPENAI_API_KEY"),
            ));
        }
    }
    let s = &model.sampling;
    if !(0.0..=2.0).contains(&s.temperature) {
        out.push(Violation::new(
            ViolationCode::InvalidTemperature,
            format!("model {id:?}: temperature {} not in [0, 2]", s.temperature),
        ));
    }
    if s.max_output_tokens == 0 {
        out.push(Violation::new(
            ViolationCode::InvalidMaxOutputTokens,
            format!("model {id:?}: max_output_tokens must be positive"),
        ));
    }
    if s.samples_per_request == 0 {
        out.push(Violation::new(
            ViolationCode::InvalidSamplesPerRequest,
            format!("model {id:?}: samples_per_request must be positive"),
        ));
    }
    if !(model.request_timeout_s > 0.0 && model.request_timeout_s.is_finite()) {
        out.push(Violation::new(
            ViolationCode::InvalidRequestTimeout,
            format!("model {id:?}: request_timeout_s must be positive"),
        ));
    }
}

/// Returns every violated invariant of `config`; empty means valid.
pub fn validate_run_config(config: &RunConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.run_id.trim().is_empty() {
        out.push(Violation::new(ViolationCode::EmptyRunId, "run_id is empty"));
    }
    if config.output_dir.trim().is_empty() {
        out.push(Violation::new(ViolationCode::EmptyOutputDir, "output_dir is empty"));
    }
    out.extend(validate_tasks(&config.tasks));
    for task in &config.tasks {
        if !config.runtime_profiles.contains_key(&task.runtime_profile_id) {
            out.push(Violation::new(
                ViolationCode::UnknownRuntimeProfile,
                format!(
                    "task {:?}: runtime profile {:?} not defined",
                    task.task_id, task.runtime_profile_id
                ),
            ));
        }
    }
    for (id, profile) in &config.runtime_profiles {
        if profile.interpreter_cmd.is_empty() || profile.interpreter_cmd[0].is_empty() {
            out.push(Violation::new(
                ViolationCode::EmptyInterpreterCmd,
                format!("runtime profile {id:?}: interpreter_cmd is empty"),
            ));
        }
    }

    if config.models.is_empty() {
        out.push(Violation::new(ViolationCode::NoModels, "no models"));
    }
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for model in &config.models {
        if !seen.insert(model.model_id.as_str()) && !model.model_id.is_empty() {
            dups.insert(model.model_id.as_str());
        }
        validate_model(model, &mut out);
    }
    if !dups.is_empty() {
        let list: Vec<&str> = dups.into_iter().collect();
        out.push(Violation::new(
            ViolationCode::DuplicateModelId,
            format!("duplicate model_id: {}", list.join(", ")),
        ));
    }

    if config.n_samples == 0 {
        out.push(Violation::new(ViolationCode::InvalidNSamples, "n_samples must be positive"));
    }
    if config.k_values.is_empty() {
        out.push(Violation::new(ViolationCode::NoKValues, "k_values is empty"));
    }
    if config.k_values.contains(&0) {
        out.push(Violation::new(ViolationCode::InvalidK, "k values must be positive"));
    }
    if let Some(&max_k) = config.k_values.iter().max() {
        if max_k > config.n_samples {
            out.push(Violation::new(
                ViolationCode::KExceedsN,
                format!("k = {max_k} exceeds n_samples = {}", config.n_samples),
            ));
        }
    }
    if config.per_provider_concurrency == 0 {
        out.push(Violation::new(
            ViolationCode::InvalidConcurrency,
            "per_provider_concurrency must be positive",
        ));
    }
    out
}

pub fn codes(violations: &[Violation]) -> Vec<ViolationCode> {
    violations.iter().map(|v| v.code).collect()
}
