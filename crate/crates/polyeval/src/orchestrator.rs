//! Plans a run, drives every item through generation, extraction and
//! execution, and persists progress so an interrupted run can resume.

use std::collections::{BTreeMap, VecDeque};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use polyeval_core::{
    build_matrix, extract_code, plan_run, score_models, sha256_hex, ExecutionOutcome,
    ExtractionMethod, GeneratedSample, MetricsError, ModelSpec, OutcomeStatus, PatternFile,
    RetryPolicy, RunConfig, RunResults, SampleKey, Violation, WorkPlan,
};
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};
use crate::codec::{self, CodecError};
use crate::config::Overrides;
use crate::gateway::{Gateway, HttpTransport, ProviderRequest, Transport};
use crate::sandbox::Sandbox;
use crate::secrets::{EnvSecrets, SecretSource};

pub const MANIFEST_FILE: &str = "manifest";
pub const CONFIG_FILE: &str = "config";
pub const RESULTS_FILE: &str = "results";
pub const CACHE_DIR: &str = "cache";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemState {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub state: ItemState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub started_at: DateTime<Utc>,
    #[serde(default)]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub degraded: bool,
    /// Keyed by `model_id/task_id/sample_index`.
    pub items: BTreeMap<String, ItemRecord>,
}

impl RunManifest {
    pub fn count(&self, state: ItemState) -> usize {
        self.items.values().filter(|r| r.state == state).count()
    }

    pub fn state_of(&self, key: &SampleKey) -> Option<ItemState> {
        self.items.get(&key.to_string()).map(|r| r.state)
    }
}

/// Result of one `execute_run` / `resume_run` call.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    /// Items processed by this call.
    pub executed: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid run config: {}", violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid { violations: Vec<Violation> },
    #[error("cannot prepare run directory {path}: {source}")]
    Setup {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config_changed: {run_dir} was started with a different configuration")]
    ConfigChanged { run_dir: PathBuf },
    #[error("no run manifest in {0}")]
    NoManifest(PathBuf),
    #[error("run interrupted after {completed} item(s)")]
    Interrupted { completed: usize },
    #[error(transparent)]
    Storage(#[from] CodecError),
    #[error("scoring failed: {0}")]
    Metrics(#[from] MetricsError),
}

/// Called after each item is persisted with the running count of items
/// completed by this call. `Break` stops the run as if it had crashed.
pub type AfterItemHook = dyn Fn(usize, &SampleKey) -> ControlFlow<()> + Send + Sync;

pub fn config_digest(config: &RunConfig) -> String {
    sha256_hex(codec::encode(&config.identity()).as_bytes())
}

pub fn run_dir(config: &RunConfig) -> PathBuf {
    Path::new(&config.output_dir).join(&config.run_id)
}

pub fn sample_path(run_dir: &Path, key: &SampleKey) -> PathBuf {
    run_dir
        .join("samples")
        .join(&key.model_id)
        .join(&key.task_id)
        .join(format!("{}.sample", key.sample_index))
}

pub fn outcome_path(run_dir: &Path, key: &SampleKey) -> PathBuf {
    run_dir
        .join("outcomes")
        .join(&key.model_id)
        .join(&key.task_id)
        .join(format!("{}.outcome", key.sample_index))
}

pub struct Orchestrator {
    transport: Arc<dyn Transport>,
    secrets: Arc<dyn SecretSource>,
    clock: Arc<dyn Clock>,
    sandbox: Sandbox,
    patterns: PatternFile,
    policy: RetryPolicy,
    after_item: Option<Box<AfterItemHook>>,
}

impl Orchestrator {
    pub fn new(transport: Arc<dyn Transport>, secrets: Arc<dyn SecretSource>, clock: Arc<dyn Clock>) -> Self {
        Orchestrator {
            transport,
            secrets,
            clock,
            sandbox: Sandbox::default(),
            patterns: PatternFile::builtin(),
            policy: RetryPolicy::default(),
            after_item: None,
        }
    }

    /// Real network, credentials from the environment, wall clock.
    pub fn from_env() -> Result<Self, crate::gateway::TransportError> {
        Ok(Self::new(
            Arc::new(HttpTransport::new()?),
            Arc::new(EnvSecrets),
            Arc::new(SystemClock::new()),
        ))
    }

    pub fn with_sandbox(mut self, sandbox: Sandbox) -> Self {
        self.sandbox = sandbox;
        self
    }

    pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_after_item(
        mut self,
        hook: impl Fn(usize, &SampleKey) -> ControlFlow<()> + Send + Sync + 'static,
    ) -> Self {
        self.after_item = Some(Box::new(hook));
        self
    }

    /// Runs every item not yet done. Safe to call again on the same config:
    /// finished runs are left untouched, interrupted ones continue.
    /// [`resume_run`](Self::resume_run) also retries failed items of a
    /// finished run.
    pub fn execute_run(&self, config: &RunConfig) -> Result<RunSummary, RunError> {
        self.drive(config, false)
    }

    fn drive(&self, config: &RunConfig, retry_finished: bool) -> Result<RunSummary, RunError> {
        let plan = plan_run(config).map_err(|violations| RunError::Invalid { violations })?;
        let dir = run_dir(config);
        std::fs::create_dir_all(&dir).map_err(|source| RunError::Setup {
            path: dir.clone(),
            source,
        })?;
        let digest = config_digest(config);
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = match codec::read::<RunManifest>(&manifest_path) {
            Ok(m) if m.config_digest != digest => return Err(RunError::ConfigChanged { run_dir: dir }),
            Ok(m) => m,
            Err(e) if e.is_not_found() => {
                let m = RunManifest {
                    run_id: config.run_id.clone(),
                    config_digest: digest,
                    started_at: self.clock.now_utc(),
                    finished_at: None,
                    degraded: false,
                    items: plan
                        .items
                        .iter()
                        .map(|k| {
                            (
                                k.to_string(),
                                ItemRecord {
                                    state: ItemState::Pending,
                                    reason: None,
                                },
                            )
                        })
                        .collect(),
                };
                codec::write(&dir.join(CONFIG_FILE), config)?;
                codec::write(&manifest_path, &m)?;
                m
            }
            Err(e) => return Err(e.into()),
        };
        let pending: Vec<SampleKey> = plan
            .items
            .iter()
            .filter(|k| manifest.state_of(k) != Some(ItemState::Done))
            .cloned()
            .collect();
        if manifest.finished_at.is_some() && (pending.is_empty() || !retry_finished) {
            return Ok(RunSummary {
                run_dir: dir,
                manifest,
                executed: 0,
            });
        }
        log::info!(
            "run {}: {} of {} item(s) to execute",
            config.run_id,
            pending.len(),
            plan.len()
        );
        let (manifest, executed) = self.execute_items(config, &dir, manifest, pending)?;
        let manifest = self.finalize(config, &plan, &dir, manifest)?;
        Ok(RunSummary {
            run_dir: dir,
            manifest,
            executed,
        })
    }

    /// Continues the run stored in `run_dir` with its stored config.
    pub fn resume_run(&self, run_dir: &Path) -> Result<RunSummary, RunError> {
        self.resume_with(run_dir, &Overrides::default())
    }

    /// [`resume_run`](Self::resume_run) with cache-mode or concurrency
    /// overrides; these knobs are outside the config digest.
    pub fn resume_with(&self, run_dir: &Path, overrides: &Overrides) -> Result<RunSummary, RunError> {
        let manifest: RunManifest = codec::read(&run_dir.join(MANIFEST_FILE)).map_err(|e| {
            if e.is_not_found() {
                RunError::NoManifest(run_dir.to_path_buf())
            } else {
                e.into()
            }
        })?;
        let mut config: RunConfig = codec::read(&run_dir.join(CONFIG_FILE))?;
        if config_digest(&config) != manifest.config_digest {
            return Err(RunError::ConfigChanged {
                run_dir: run_dir.to_path_buf(),
            });
        }
        // the directory may have moved since the run started
        if let Some(parent) = run_dir.parent() {
            config.output_dir = parent.to_string_lossy().into_owned();
        }
        overrides.apply(&mut config);
        self.drive(&config, true)
    }

    fn execute_items(
        &self,
        config: &RunConfig,
        dir: &Path,
        manifest: RunManifest,
        pending: Vec<SampleKey>,
    ) -> Result<(RunManifest, usize), RunError> {
        let gateway = Gateway::new(
            Arc::clone(&self.transport),
            Arc::clone(&self.secrets),
            Arc::clone(&self.clock),
            config.per_provider_concurrency as usize,
        )
        .with_cache_dir(Path::new(&config.output_dir).join(CACHE_DIR));

        let mut queues: BTreeMap<String, VecDeque<SampleKey>> = BTreeMap::new();
        for key in pending {
            let model = config.model(&key.model_id).expect("planned model exists");
            queues.entry(provider_key(model)).or_default().push_back(key);
        }
        let queues: Vec<Mutex<VecDeque<SampleKey>>> = queues.into_values().map(Mutex::new).collect();
        let workers = config.per_provider_concurrency.max(1) as usize;

        let shared = Mutex::new(Progress {
            manifest,
            completed: 0,
            error: None,
        });
        let stop = AtomicBool::new(false);
        let ctx = ItemContext {
            config,
            dir,
            gateway: &gateway,
            orchestrator: self,
        };
        std::thread::scope(|s| {
            for queue in &queues {
                for _ in 0..workers.min(queue.lock().unwrap().len()) {
                    s.spawn(|| loop {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let Some(key) = queue.lock().unwrap().pop_front() else {
                            break;
                        };
                        let result = ctx.run_item(&key);
                        let mut progress = shared.lock().unwrap();
                        match result {
                            Ok(record) => {
                                progress.manifest.items.insert(key.to_string(), record);
                                if let Err(e) = codec::write(&dir.join(MANIFEST_FILE), &progress.manifest) {
                                    progress.error.get_or_insert(e.into());
                                    stop.store(true, Ordering::SeqCst);
                                    break;
                                }
                                progress.completed += 1;
                                if let Some(hook) = &self.after_item {
                                    if hook(progress.completed, &key).is_break() {
                                        stop.store(true, Ordering::SeqCst);
                                    }
                                }
                            }
                            Err(e) => {
                                progress.error.get_or_insert(e);
                                stop.store(true, Ordering::SeqCst);
                                break;
                            }
                        }
                    });
                }
            }
        });
        let progress = shared.into_inner().unwrap();
        if let Some(e) = progress.error {
            return Err(e);
        }
        if stop.load(Ordering::SeqCst) {
            return Err(RunError::Interrupted {
                completed: progress.completed,
            });
        }
        Ok((progress.manifest, progress.completed))
    }

    fn finalize(
        &self,
        config: &RunConfig,
        plan: &WorkPlan,
        dir: &Path,
        mut manifest: RunManifest,
    ) -> Result<RunManifest, RunError> {
        let outcomes = plan
            .items
            .iter()
            .map(|k| codec::read::<ExecutionOutcome>(&outcome_path(dir, k)))
            .collect::<Result<Vec<_>, _>>()?;
        let matrix = build_matrix(plan, &outcomes)?;
        let results = score_models(&matrix, &config.models, &config.k_values)?;
        codec::write(&dir.join(RESULTS_FILE), &results)?;
        let failed = manifest.count(ItemState::Failed);
        manifest.degraded = failed * 2 > manifest.items.len();
        manifest.finished_at = Some(self.clock.now_utc());
        codec::write(&dir.join(MANIFEST_FILE), &manifest)?;
        if manifest.degraded {
            log::warn!("run {}: degraded, {failed} of {} item(s) failed", config.run_id, plan.len());
        }
        Ok(manifest)
    }
}

pub fn load_results(run_dir: &Path) -> Result<RunResults, CodecError> {
    codec::read(&run_dir.join(RESULTS_FILE))
}

pub fn load_manifest(run_dir: &Path) -> Result<RunManifest, CodecError> {
    codec::read(&run_dir.join(MANIFEST_FILE))
}

fn provider_key(model: &ModelSpec) -> String {
    format!(
        "{}|{}",
        model.provider_kind.as_str(),
        model.endpoint.as_deref().unwrap_or("")
    )
}

struct Progress {
    manifest: RunManifest,
    completed: usize,
    error: Option<RunError>,
}

struct ItemContext<'a> {
    config: &'a RunConfig,
    dir: &'a Path,
    gateway: &'a Gateway,
    orchestrator: &'a Orchestrator,
}

impl ItemContext<'_> {
    /// Generates, extracts, executes and persists one item.
    fn run_item(&self, key: &SampleKey) -> Result<ItemRecord, RunError> {
        let config = self.config;
        let model = config.model(&key.model_id).expect("planned model exists");
        let task = config.task(&key.task_id).expect("planned task exists");
        let profile = &config.runtime_profiles[&task.runtime_profile_id];
        let request = ProviderRequest::new(model, &task.prompt_text, key.sample_index);
        let orch = self.orchestrator;

        let (sample, outcome, record) =
            match self.gateway.send(model, &request, &orch.policy, config.cache_mode) {
                Ok(delivery) => {
                    let raw = delivery.response.text().to_string();
                    let extracted =
                        extract_code(&raw, &profile.language, &orch.patterns.language(&profile.language));
                    let verdict = orch.sandbox.evaluate_sample(&extracted.code, task, profile);
                    let sample = GeneratedSample {
                        run_id: config.run_id.clone(),
                        model_id: key.model_id.clone(),
                        task_id: key.task_id.clone(),
                        sample_index: key.sample_index,
                        raw_response: raw,
                        extracted_code: extracted.code,
                        extraction_method: extracted.method,
                        provider_latency_ms: delivery.response.latency_ms,
                        generation_error: None,
                    };
                    let record = ItemRecord {
                        state: ItemState::Done,
                        reason: None,
                    };
                    (sample, verdict.into_outcome(key), record)
                }
                Err(e) => {
                    let reason = e.to_string();
                    let sample = GeneratedSample {
                        run_id: config.run_id.clone(),
                        model_id: key.model_id.clone(),
                        task_id: key.task_id.clone(),
                        sample_index: key.sample_index,
                        raw_response: String::new(),
                        extracted_code: String::new(),
                        extraction_method: ExtractionMethod::Empty,
                        provider_latency_ms: 0,
                        generation_error: Some(reason.clone()),
                    };
                    let outcome = ExecutionOutcome {
                        model_id: key.model_id.clone(),
                        task_id: key.task_id.clone(),
                        sample_index: key.sample_index,
                        status: OutcomeStatus::EmptyCode,
                        duration_ms: 0,
                        stdout_tail: String::new(),
                        stderr_tail: reason.clone(),
                    };
                    let record = ItemRecord {
                        state: ItemState::Failed,
                        reason: Some(reason),
                    };
                    (sample, outcome, record)
                }
            };
        codec::write(&sample_path(self.dir, key), &sample)?;
        codec::write(&outcome_path(self.dir, key), &outcome)?;
        match &record.reason {
            Some(reason) => log::warn!("{key}: failed: {reason}"),
            None => log::info!("{key}: {} ({} ms)", outcome.status, outcome.duration_ms),
        }
        Ok(record)
    }
}
