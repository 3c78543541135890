#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use polyeval::config::{load_run_config, reference_suite, Overrides};
use polyeval::gateway::mock::write_fixture;
use polyeval::gateway::{HttpRequest, HttpResponse, Transport, TransportError};
use polyeval_core::{compute_idempotency_key, ModelSpec, ProviderKind, RunConfig, Sampling, TaskSpec};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde_json::json;

pub const DEMO_SEED: u64 = 2024;

/// (model_id, accurate tasks out of 10) for the seven demo models.
pub const DEMO_COUNTS: [(&str, u32); 7] = [
    ("gpt4t-mock", 6),
    ("gpt4-mock", 5),
    ("gpt35t-mock", 7),
    ("gpt35-mock", 5),
    ("bard-mock", 4),
    ("llama-mock", 2),
    ("hf-mock", 2),
];

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn demo_dir() -> PathBuf {
    crate_dir().join("data/demo")
}

pub fn solution(task_id: &str) -> String {
    std::fs::read_to_string(crate_dir().join("data/solutions").join(format!("{task_id}.py")))
        .unwrap_or_else(|e| panic!("solution for {task_id}: {e}"))
}

pub fn correct_response(task: &TaskSpec) -> String {
    format!(
        "Here is an implementation.\n\n```python\n{}\n```\n\nIt follows the requested interface.\n",
        solution(&task.task_id).trim_end()
    )
}

/// Plausible wrong answers: a stub that fails the tests, or prose only.
pub fn wrong_response(task: &TaskSpec, variant: usize) -> String {
    if variant.is_multiple_of(2) {
        format!(
            "```python\ndef {}(*args, **kwargs):\n    return None\n```\n",
            task.entry_point
        )
    } else {
        "I am not able to complete this request as described.".to_string()
    }
}

/// Tasks a demo model answers correctly: a seeded shuffle of the suite.
pub fn passing_tasks(model_id: &str, accurate: u32) -> BTreeSet<String> {
    let salt: u64 = model_id.bytes().map(u64::from).sum();
    let mut rng = StdRng::seed_from_u64(DEMO_SEED ^ salt);
    let mut ids: Vec<String> = reference_suite().tasks.iter().map(|t| t.task_id.clone()).collect();
    ids.shuffle(&mut rng);
    ids.into_iter().take(accurate as usize).collect()
}

/// Writes fixtures for `model` such that exactly `passing` tasks succeed.
pub fn write_model_fixtures(dir: &Path, model: &ModelSpec, tasks: &[TaskSpec], passing: &BTreeSet<String>, n_samples: u32) {
    for (i, task) in tasks.iter().enumerate() {
        for s in 0..n_samples {
            let key = compute_idempotency_key(&model.model_id, &task.prompt_text, &model.sampling, s);
            let text = if passing.contains(&task.task_id) {
                correct_response(task)
            } else {
                wrong_response(task, i)
            };
            write_fixture(dir, &key, &text).unwrap();
        }
    }
}

/// Writes the whole demo fixture tree under `fixtures_root`.
pub fn write_demo_fixtures(fixtures_root: &Path) {
    let suite = reference_suite();
    for (model_id, accurate) in DEMO_COUNTS {
        let model = mock_model(model_id, "");
        write_model_fixtures(
            &fixtures_root.join(model_id),
            &model,
            &suite.tasks,
            &passing_tasks(model_id, accurate),
            1,
        );
    }
}

/// The committed demo config with its output redirected.
pub fn demo_config(output_dir: &Path) -> RunConfig {
    let mut config = load_run_config(&demo_dir().join("demo.toml"), &Overrides::default(), || unreachable!()).unwrap();
    config.output_dir = output_dir.to_string_lossy().into_owned();
    config
}

pub fn mock_model(model_id: &str, fixture_dir: &str) -> ModelSpec {
    ModelSpec {
        model_id: model_id.into(),
        display_name: model_id.into(),
        vendor: "Test".into(),
        parameter_count: None,
        provider_kind: ProviderKind::Mock,
        endpoint: None,
        auth_ref: None,
        remote_model: None,
        fixture_dir: Some(fixture_dir.into()),
        sampling: Sampling::default(),
        request_timeout_s: 120.0,
    }
}

pub fn chat_model(model_id: &str, endpoint: &str, auth_ref: &str) -> ModelSpec {
    ModelSpec {
        provider_kind: ProviderKind::ChatCompletion,
        endpoint: Some(endpoint.into()),
        auth_ref: Some(auth_ref.into()),
        fixture_dir: None,
        ..mock_model(model_id, "")
    }
}

/// A small config over the first `n_tasks` reference tasks.
pub fn small_config(models: Vec<ModelSpec>, n_tasks: usize, output_dir: &Path) -> RunConfig {
    let suite = reference_suite();
    RunConfig {
        run_id: "test-run".into(),
        tasks: suite.tasks.into_iter().take(n_tasks).collect(),
        runtime_profiles: suite.runtime_profiles,
        models,
        n_samples: 1,
        k_values: vec![1],
        per_provider_concurrency: 2,
        cache_mode: Default::default(),
        output_dir: output_dir.to_string_lossy().into_owned(),
    }
}

/// Mock models over the first `n_tasks` tasks; model i passes tasks whose
/// index is not a multiple of i + 2.
pub fn mock_setup(n_models: usize, n_tasks: usize, n_samples: u32, root: &Path) -> RunConfig {
    let suite = reference_suite();
    let tasks: Vec<TaskSpec> = suite.tasks.iter().take(n_tasks).cloned().collect();
    let mut models = Vec::new();
    for m in 0..n_models {
        let id = format!("mock-{m}");
        let dir = root.join("fixtures").join(&id);
        let model = mock_model(&id, &dir.to_string_lossy());
        let passing = tasks
            .iter()
            .enumerate()
            .filter(|(i, _)| i % (m + 2) != 0)
            .map(|(_, t)| t.task_id.clone())
            .collect();
        write_model_fixtures(&dir, &model, &tasks, &passing, n_samples);
        models.push(model);
    }
    let mut config = small_config(models, n_tasks, &root.join("out"));
    config.n_samples = n_samples;
    config
}

/// One scripted transport reply.
#[derive(Debug, Clone)]
pub enum Reply {
    Status(u16),
    Text(String),
    Fail(TransportError),
}

/// Chat-completion fake: answers by prompt, counts calls, tracks peak
/// in-flight requests per URL and can play a script first.
#[derive(Default)]
pub struct FakeChat {
    answers: HashMap<String, String>,
    script: Mutex<VecDeque<Reply>>,
    pub calls: AtomicUsize,
    in_flight: Mutex<HashMap<String, usize>>,
    peak: Mutex<HashMap<String, usize>>,
    latency: Duration,
    seen: Mutex<Vec<HttpRequest>>,
}

impl FakeChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn answering(mut self, prompt: &str, text: &str) -> Self {
        self.answers.insert(prompt.to_string(), text.to_string());
        self
    }

    /// Answers every reference task: correct for `passing`, wrong otherwise.
    pub fn answering_suite(mut self, passing: &BTreeSet<String>) -> Self {
        for (i, task) in reference_suite().tasks.iter().enumerate() {
            let text = if passing.contains(&task.task_id) {
                correct_response(task)
            } else {
                wrong_response(task, i)
            };
            self.answers.insert(task.prompt_text.clone(), text);
        }
        self
    }

    pub fn scripted(self, replies: impl IntoIterator<Item = Reply>) -> Self {
        self.script.lock().unwrap().extend(replies);
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak(&self, url: &str) -> usize {
        self.peak.lock().unwrap().get(url).copied().unwrap_or(0)
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.seen.lock().unwrap().clone()
    }

    fn reply(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let scripted = self.script.lock().unwrap().pop_front();
        let text = match scripted {
            Some(Reply::Status(code)) => {
                return Ok(HttpResponse::json(code, &json!({"error": {"message": format!("scripted {code}")}})))
            }
            Some(Reply::Fail(e)) => return Err(e),
            Some(Reply::Text(t)) => t,
            None => {
                let body = request.json_body().unwrap_or_default();
                let prompt = body["messages"][0]["content"].as_str().unwrap_or_default().to_string();
                match self.answers.get(&prompt) {
                    Some(t) => t.clone(),
                    None => return Ok(HttpResponse::json(404, &json!({"error": {"message": "unknown prompt"}}))),
                }
            }
        };
        Ok(HttpResponse::json(
            200,
            &json!({
                "id": "chatcmpl-test",
                "model": "fake",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                "usage": {"prompt_tokens": 10, "completion_tokens": 20}
            }),
        ))
    }
}

impl Transport for FakeChat {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().unwrap().push(request.clone());
        {
            let mut m = self.in_flight.lock().unwrap();
            let n = m.entry(request.url.clone()).or_insert(0);
            *n += 1;
            let mut p = self.peak.lock().unwrap();
            let peak = p.entry(request.url.clone()).or_insert(0);
            *peak = (*peak).max(*n);
        }
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let reply = self.reply(request);
        *self.in_flight.lock().unwrap().get_mut(&request.url).unwrap() -= 1;
        reply
    }
}

/// Transport that must never be reached.
pub struct NoNetwork;

impl Transport for NoNetwork {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        panic!("unexpected network request to {}", request.url)
    }
}

/// Every regular file under `dir`, recursively.
pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}

/// Relative path -> bytes for every file under `dir` matching `keep`.
pub fn snapshot(dir: &Path, keep: impl Fn(&Path) -> bool) -> Vec<(PathBuf, Vec<u8>)> {
    files_under(dir)
        .into_iter()
        .filter(|p| keep(p))
        .map(|p| (p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()))
        .collect()
}

/// Transport backed by a closure, for wire-shape tests.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(&HttpRequest) -> Result<HttpResponse, TransportError> + Send + Sync,
{
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (self.0)(request)
    }
}
