//! The unbiased pass@k estimator, per-model aggregation and star ratings.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{ExecutionOutcome, ModelSpec, OutcomeStatus, SampleKey};
use crate::plan::WorkPlan;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("pass@k domain error: n={n}, c={c}, k={k} (need 1 <= k <= n and c <= n)")]
    Domain { n: u64, c: u64, k: u64 },
    #[error("task {task_id:?} of model {model_id:?} has n={n} < k={k}")]
    TooFewSamples {
        model_id: String,
        task_id: String,
        n: u32,
        k: u32,
    },
    #[error("model {0:?} has no tasks in the matrix")]
    UnknownModel(String),
    #[error("rate {0} outside [0, 1]")]
    RateOutOfRange(f64),
    #[error("incomplete run: {} outcome(s) missing, first {}", missing.len(), missing[0])]
    IncompleteRun { missing: Vec<SampleKey> },
    #[error("outcome {0} is not part of the plan")]
    UnplannedOutcome(SampleKey),
}

/// Probability that at least one of `k` draws (without replacement) from `n`
/// samples, `c` of them correct, is correct: `1 - C(n-c, k) / C(n, k)`.
///
/// Evaluated as `1 - prod_{i<k} (n-c-i)/(n-i)`, never through factorials.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if k < 1 || k > n || c > n {
        return Err(MetricsError::Domain { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let mut all_wrong = 1.0_f64;
    for i in 0..k {
        all_wrong *= (n - c - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - all_wrong)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n: u32,
    pub c: u32,
}

/// Per (model, task) sample counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskResultMatrix {
    entries: BTreeMap<(String, String), Counts>,
}

impl TaskResultMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces an entry. Panics if `c > n` or `n == 0`.
    pub fn insert(&mut self, model_id: &str, task_id: &str, counts: Counts) {
        assert!(counts.n > 0 && counts.c <= counts.n, "invalid counts {counts:?}");
        self.entries
            .insert((String::from(model_id), String::from(task_id)), counts);
    }

    pub fn get(&self, model_id: &str, task_id: &str) -> Option<Counts> {
        self.entries
            .get(&(String::from(model_id), String::from(task_id)))
            .copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, Counts)> {
        self.entries
            .iter()
            .map(|((m, t), c)| (m.as_str(), t.as_str(), *c))
    }

    pub fn model_ids(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|(m, _)| m.as_str()).collect()
    }

    pub fn tasks_of<'a>(&'a self, model_id: &'a str) -> impl Iterator<Item = (&'a str, Counts)> + 'a {
        self.entries
            .iter()
            .filter(move |((m, _), _)| m == model_id)
            .map(|((_, t), c)| (t.as_str(), *c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Unweighted mean of per-task pass@k for one model.
pub fn aggregate_pass_at_k(
    matrix: &TaskResultMatrix,
    model_id: &str,
    k: u32,
) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    let mut tasks = 0usize;
    for (task_id, counts) in matrix.tasks_of(model_id) {
        if counts.n < k {
            return Err(MetricsError::TooFewSamples {
                model_id: String::from(model_id),
                task_id: String::from(task_id),
                n: counts.n,
                k,
            });
        }
        sum += pass_at_k(counts.n.into(), counts.c.into(), k.into())?;
        tasks += 1;
    }
    if tasks == 0 {
        return Err(MetricsError::UnknownModel(String::from(model_id)));
    }
    Ok(sum / tasks as f64)
}

/// Slack absorbing float noise so that e.g. 0.6 maps to 3 stars, not 4.
const STAR_EPSILON: f64 = 1e-9;

/// `ceil(5 * rate)`, clamped to `[0, 5]`.
pub fn stars(rate: f64) -> Result<u8, MetricsError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(MetricsError::RateOutOfRange(rate));
    }
    let scaled = 5.0 * rate - STAR_EPSILON;
    let mut s = 0u8;
    while (s as f64) < scaled && s < 5 {
        s += 1;
    }
    Ok(s)
}

/// Counts outcomes per (model, task); `c` counts `passed`.
///
/// Every planned item must have exactly one outcome.
pub fn build_matrix(
    plan: &WorkPlan,
    outcomes: &[ExecutionOutcome],
) -> Result<TaskResultMatrix, MetricsError> {
    let planned: BTreeSet<&SampleKey> = plan.items.iter().collect();
    let mut by_key: BTreeMap<SampleKey, OutcomeStatus> = BTreeMap::new();
    for o in outcomes {
        let key = o.key();
        if !planned.contains(&key) {
            return Err(MetricsError::UnplannedOutcome(key));
        }
        by_key.insert(key, o.status);
    }
    let missing: Vec<SampleKey> = plan
        .items
        .iter()
        .filter(|k| !by_key.contains_key(*k))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::IncompleteRun { missing });
    }
    let mut counts: BTreeMap<(String, String), Counts> = BTreeMap::new();
    for (key, status) in &by_key {
        let e = counts
            .entry((key.model_id.clone(), key.task_id.clone()))
            .or_insert(Counts { n: 0, c: 0 });
        e.n += 1;
        if *status == OutcomeStatus::Passed {
            e.c += 1;
        }
    }
    Ok(TaskResultMatrix { entries: counts })
}

/// Scored leaderboard entry for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model_id: String,
    pub display_name: String,
    pub vendor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<String>,
    pub tasks: u32,
    pub per_k: BTreeMap<u32, f64>,
    /// Tasks with at least one passing sample.
    pub accurate_tasks: u32,
    pub stars: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub model_id: String,
    pub task_id: String,
    pub n: u32,
    pub c: u32,
}

/// Content of a run's `results` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub k_values: Vec<u32>,
    pub models: Vec<ModelScore>,
    pub matrix: Vec<MatrixEntry>,
}

/// Orders by accurate tasks descending, then model_id ascending.
pub fn sort_scores(scores: &mut [ModelScore]) {
    scores.sort_by(|a, b| {
        b.accurate_tasks
            .cmp(&a.accurate_tasks)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
}

/// Scores every model. Stars come from aggregate pass@1.
pub fn score_models(
    matrix: &TaskResultMatrix,
    models: &[ModelSpec],
    k_values: &[u32],
) -> Result<RunResults, MetricsError> {
    let mut ks: Vec<u32> = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut scores = Vec::with_capacity(models.len());
    for model in models {
        let id = model.model_id.as_str();
        let mut per_k = BTreeMap::new();
        for &k in &ks {
            per_k.insert(k, aggregate_pass_at_k(matrix, id, k)?);
        }
        let pass1 = aggregate_pass_at_k(matrix, id, 1)?;
        let tasks = matrix.tasks_of(id).count() as u32;
        let accurate_tasks = matrix.tasks_of(id).filter(|(_, c)| c.c >= 1).count() as u32;
        scores.push(ModelScore {
            model_id: model.model_id.clone(),
            display_name: model.display_name.clone(),
            vendor: model.vendor.clone(),
            parameter_count: model.parameter_count.clone(),
            tasks,
            per_k,
            accurate_tasks,
            stars: stars(pass1)?,
        });
    }
    sort_scores(&mut scores);
    let matrix = matrix
        .iter()
        .map(|(m, t, c)| MatrixEntry {
            model_id: String::from(m),
            task_id: String::from(t),
            n: c.n,
            c: c.c,
        })
        .collect();
    Ok(RunResults {
        k_values: ks,
        models: scores,
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn spot_values() {
        assert_eq!(pass_at_k(10, 0, 5).unwrap(), 0.0);
        assert!(close(pass_at_k(5, 2, 1).unwrap(), 0.4));
        assert!(close(pass_at_k(10, 3, 5).unwrap(), 11.0 / 12.0));
        assert_eq!(pass_at_k(4, 2, 3).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors() {
        assert!(pass_at_k(3, 0, 4).is_err());
        assert!(pass_at_k(3, 4, 1).is_err());
        assert!(pass_at_k(3, 1, 0).is_err());
        assert!(pass_at_k(0, 0, 0).is_err());
    }

    #[test]
    fn star_rule_matches_table_rows() {
        assert_eq!(stars(0.7).unwrap(), 4);
        assert_eq!(stars(0.2).unwrap(), 1);
        assert_eq!(stars(0.0).unwrap(), 0);
        assert_eq!(stars(0.5).unwrap(), 3);
        assert_eq!(stars(0.6).unwrap(), 3);
        assert_eq!(stars(0.6000000000000001).unwrap(), 3);
        assert_eq!(stars(1.0).unwrap(), 5);
        assert_eq!(stars(0.01).unwrap(), 1);
        assert!(stars(1.5).is_err());
        assert!(stars(-0.1).is_err());
        assert!(stars(f64::NAN).is_err());
    }

    fn matrix_with(model: &str, rows: &[(u32, u32)]) -> TaskResultMatrix {
        let mut m = TaskResultMatrix::new();
        for (i, &(n, c)) in rows.iter().enumerate() {
            m.insert(model, &alloc::format!("t{i:02}"), Counts { n, c });
        }
        m
    }

    #[test]
    fn aggregate_is_mean_over_tasks() {
        let rows: Vec<(u32, u32)> = (0..10).map(|i| (1, u32::from(i < 7))).collect();
        let m = matrix_with("m", &rows);
        assert_eq!(aggregate_pass_at_k(&m, "m", 1).unwrap(), 0.7);
        let rows: Vec<(u32, u32)> = (0..10).map(|i| (1, u32::from(i < 6))).collect();
        let m = matrix_with("m", &rows);
        assert_eq!(aggregate_pass_at_k(&m, "m", 1).unwrap(), 0.6);
        let m = matrix_with("m", &[(10, 3)]);
        assert!(close(aggregate_pass_at_k(&m, "m", 5).unwrap(), 11.0 / 12.0));
    }

    #[test]
    fn aggregate_rejects_short_tasks() {
        let m = matrix_with("m", &[(5, 1), (2, 1)]);
        match aggregate_pass_at_k(&m, "m", 3) {
            Err(MetricsError::TooFewSamples { task_id, .. }) => assert_eq!(task_id, "t01"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            aggregate_pass_at_k(&m, "nope", 1),
            Err(MetricsError::UnknownModel(_))
        ));
    }

    fn outcome(m: &str, t: &str, i: u32, status: OutcomeStatus) -> ExecutionOutcome {
        ExecutionOutcome {
            model_id: String::from(m),
            task_id: String::from(t),
            sample_index: i,
            status,
            duration_ms: 1,
            stdout_tail: String::new(),
            stderr_tail: String::new(),
        }
    }

    fn plan(m: &str, t: &str, n: u32) -> WorkPlan {
        WorkPlan {
            items: (0..n).map(|i| SampleKey::new(m, t, i)).collect(),
        }
    }

    #[test]
    fn matrix_counts() {
        let m = build_matrix(&plan("m", "t", 1), &[outcome("m", "t", 0, OutcomeStatus::Passed)]).unwrap();
        assert_eq!(m.get("m", "t"), Some(Counts { n: 1, c: 1 }));
        let outcomes = vec![
            outcome("m", "t", 0, OutcomeStatus::Passed),
            outcome("m", "t", 1, OutcomeStatus::Failed),
            outcome("m", "t", 2, OutcomeStatus::Timeout),
        ];
        let m = build_matrix(&plan("m", "t", 3), &outcomes).unwrap();
        assert_eq!(m.get("m", "t"), Some(Counts { n: 3, c: 1 }));
    }

    #[test]
    fn matrix_requires_complete_outcomes() {
        match build_matrix(&plan("m", "t", 2), &[]) {
            Err(MetricsError::IncompleteRun { missing }) => assert_eq!(missing.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            build_matrix(&plan("m", "t", 1), &[outcome("x", "t", 0, OutcomeStatus::Passed)]),
            Err(MetricsError::UnplannedOutcome(_))
        ));
    }
}
