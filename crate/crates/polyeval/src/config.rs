//! Task-suite and run-config files.
//!
//! Both are TOML. Relative paths inside a file resolve against the
//! directory containing that file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use polyeval_core::validate::{validate_run_config, validate_tasks, Violation};
use polyeval_core::{CacheMode, ModelSpec, RunConfig, RuntimeProfile, TaskSpec};
use serde::{Deserialize, Serialize};

/// The reference suite shipped with the crate.
pub const REFERENCE_SUITE: &str = include_str!("../data/reference_suite.toml");

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: invalid: {}", join_violations(.violations))]
    Invalid {
        path: PathBuf,
        violations: Vec<Violation>,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    pub suite_name: String,
    #[serde(default)]
    pub runtime_profiles: BTreeMap<String, RuntimeProfile>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

/// A loaded, validated task suite.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSuite {
    pub suite_name: String,
    pub runtime_profiles: BTreeMap<String, RuntimeProfile>,
    pub tasks: Vec<TaskSpec>,
}

fn read_text(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, LoadError> {
    toml::from_str(text).map_err(|e| LoadError::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })
}

pub fn parse_task_suite(path: &Path, text: &str) -> Result<TaskSuite, LoadError> {
    let file: SuiteFile = parse_toml(path, text)?;
    let violations = validate_tasks(&file.tasks);
    if !violations.is_empty() {
        return Err(LoadError::Invalid {
            path: path.to_path_buf(),
            violations,
        });
    }
    let runtime_profiles = file
        .runtime_profiles
        .into_iter()
        .map(|(id, mut p)| {
            p.profile_id = id.clone();
            (id, p)
        })
        .collect();
    Ok(TaskSuite {
        suite_name: file.suite_name,
        runtime_profiles,
        tasks: file.tasks,
    })
}

/// Loads a suite file; tasks keep file order.
pub fn load_task_suite(path: &Path) -> Result<TaskSuite, LoadError> {
    parse_task_suite(path, &read_text(path)?)
}

pub fn reference_suite() -> TaskSuite {
    parse_task_suite(Path::new("<reference suite>"), REFERENCE_SUITE).expect("reference suite is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub suite_path: String,
    pub models: Vec<ModelSpec>,
    #[serde(default = "one")]
    pub n_samples: u32,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<u32>,
    #[serde(default = "default_concurrency")]
    pub per_provider_concurrency: u32,
    #[serde(default)]
    pub cache_mode: CacheMode,
    pub output_dir: String,
}

fn one() -> u32 {
    1
}

fn default_k_values() -> Vec<u32> {
    vec![1]
}

fn default_concurrency() -> u32 {
    4
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub cache_mode: Option<CacheMode>,
    pub per_provider_concurrency: Option<u32>,
    pub run_id: Option<String>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(mode) = self.cache_mode {
            config.cache_mode = mode;
        }
        if let Some(n) = self.per_provider_concurrency {
            config.per_provider_concurrency = n;
        }
        if let Some(id) = &self.run_id {
            config.run_id = id.clone();
        }
    }
}

fn resolve(base: &Path, p: &str) -> String {
    let path = Path::new(p);
    let joined = if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    };
    normalize(&joined).to_string_lossy().into_owned()
}

/// Lexical `.`/`..` removal; the path need not exist.
fn normalize(path: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

/// Resolves a config file: loads its suite, makes every path absolute and
/// fills `run_id` with `fresh_run_id()` when the file leaves it out.
///
/// The result is not validated; see [`load_run_config`].
pub fn resolve_run_config(
    path: &Path,
    text: &str,
    overrides: &Overrides,
    fresh_run_id: impl FnOnce() -> String,
) -> Result<(RunConfig, TaskSuite), LoadError> {
    let file: RunConfigFile = parse_toml(path, text)?;
    let base = path
        .parent()
        .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
        .unwrap_or(Path::new("."));
    let base = fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
    let suite_path = PathBuf::from(resolve(&base, &file.suite_path));
    let suite = load_task_suite(&suite_path)?;
    let models = file
        .models
        .into_iter()
        .map(|mut m| {
            m.fixture_dir = m.fixture_dir.map(|d| resolve(&base, &d));
            m
        })
        .collect();
    let mut config = RunConfig {
        run_id: file.run_id.unwrap_or_else(fresh_run_id),
        tasks: suite.tasks.clone(),
        runtime_profiles: suite.runtime_profiles.clone(),
        models,
        n_samples: file.n_samples,
        k_values: file.k_values,
        per_provider_concurrency: file.per_provider_concurrency,
        cache_mode: file.cache_mode,
        output_dir: resolve(&base, &file.output_dir),
    };
    overrides.apply(&mut config);
    Ok((config, suite))
}

/// Loads and validates a run-config file.
pub fn load_run_config(
    path: &Path,
    overrides: &Overrides,
    fresh_run_id: impl FnOnce() -> String,
) -> Result<RunConfig, LoadError> {
    let text = read_text(path)?;
    let (config, _) = resolve_run_config(path, &text, overrides, fresh_run_id)?;
    let violations = validate_run_config(&config);
    if !violations.is_empty() {
        return Err(LoadError::Invalid {
            path: path.to_path_buf(),
            violations,
        });
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use polyeval_core::ViolationCode;

    #[test]
    fn reference_suite_has_ten_tasks_in_order() {
        let suite = reference_suite();
        assert_eq!(suite.tasks.len(), 10);
        assert!(suite.tasks[0]
            .prompt_text
            .starts_with("A simple Python program for creating and using flashcards"));
        assert!(suite.tasks[9]
            .prompt_text
            .starts_with("A Python-based basic arithmetic calculator"));
        assert_eq!(suite.runtime_profiles["python3"].profile_id, "python3");
        let stand_ins = suite.tasks.iter().filter(|t| t.title.contains("(stand-in)")).count();
        assert_eq!(stand_ins, 5);
    }

    #[test]
    fn empty_suite_is_rejected() {
        let err = parse_task_suite(Path::new("s.toml"), "suite_name = \"x\"\n").unwrap_err();
        match err {
            LoadError::Invalid { violations, .. } => {
                assert_eq!(violations[0].code, ViolationCode::NoTasks);
                assert_eq!(violations[0].detail, "no tasks");
            }
            other => panic!("unexpected {other}"),
        }
    }

    const TASK: &str = r#"
[[tasks]]
task_id = "calc"
title = "c"
prompt_text = "p"
entry_point = "f"
test_source = "assert True"
timeout_s = 1
runtime_profile_id = "py"
"#;

    #[test]
    fn duplicate_ids_are_listed() {
        let text = format!("suite_name = \"x\"\n{TASK}{TASK}");
        let err = parse_task_suite(Path::new("s.toml"), &text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("DUPLICATE_TASK_ID"), "{msg}");
        assert!(msg.contains("calc"), "{msg}");
    }

    #[test]
    fn parse_errors_name_line_and_field() {
        let text = "suite_name = \"x\"\n[[tasks]]\ntask_id = \"a\"\ntimeout_s = \"soon\"\n";
        let msg = parse_task_suite(Path::new("s.toml"), text).unwrap_err().to_string();
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("timeout_s") || msg.contains("soon"), "{msg}");
        let text = "suite_name = \"x\"\n[[tasks]]\ntask_id = \"a\"\n";
        let msg = parse_task_suite(Path::new("s.toml"), text).unwrap_err().to_string();
        assert!(msg.contains("missing field"), "{msg}");
    }

    #[test]
    fn run_config_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("suite.toml"), REFERENCE_SUITE).unwrap();
        let cfg = r#"
suite_path = "suite.toml"
output_dir = "out/../runs"
cache_mode = "replay"

[[models]]
model_id = "m"
display_name = "M"
vendor = "V"
provider_kind = "mock"
fixture_dir = "fixtures/m"
"#;
        let path = dir.path().join("run.toml");
        fs::write(&path, cfg).unwrap();
        let c = load_run_config(&path, &Overrides::default(), || "run-x".into()).unwrap();
        let root = fs::canonicalize(dir.path()).unwrap();
        assert_eq!(c.run_id, "run-x");
        assert_eq!(c.output_dir, root.join("runs").to_string_lossy());
        assert_eq!(c.models[0].fixture_dir.as_deref().unwrap(), root.join("fixtures/m").to_string_lossy());
        assert_eq!(c.tasks.len(), 10);
        assert_eq!(c.n_samples, 1);
        assert_eq!(c.k_values, vec![1]);
        assert_eq!(c.cache_mode, CacheMode::Replay);

        let o = Overrides {
            cache_mode: Some(CacheMode::Bypass),
            per_provider_concurrency: Some(9),
            run_id: None,
        };
        let c = load_run_config(&path, &o, || "run-y".into()).unwrap();
        assert_eq!(c.cache_mode, CacheMode::Bypass);
        assert_eq!(c.per_provider_concurrency, 9);
    }

    #[test]
    fn invalid_run_config_reports_violations() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("suite.toml"), REFERENCE_SUITE).unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "suite_path = \"suite.toml\"\noutput_dir = \"o\"\nmodels = []\nn_samples = 3\nk_values = [5]\n").unwrap();
        match load_run_config(&path, &Overrides::default(), || "r".into()).unwrap_err() {
            LoadError::Invalid { violations, .. } => {
                let codes: Vec<_> = violations.iter().map(|v| v.code).collect();
                assert_eq!(codes, vec![ViolationCode::NoModels, ViolationCode::KExceedsN]);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn normalize_is_lexical() {
        assert_eq!(normalize(Path::new("/a/b/../c/./d")), PathBuf::from("/a/c/d"));
        assert_eq!(normalize(Path::new("a/../../b")), PathBuf::from("../b"));
    }
}
