use alloc::vec::Vec;

use crate::model::{RunConfig, SampleKey};
use crate::validate::{validate_run_config, Violation};

/// One unit of work: generate and evaluate one sample.
pub type WorkItem = SampleKey;

/// Every (model, task, sample) of a run, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkPlan {
    pub items: Vec<WorkItem>,
}

impl WorkPlan {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub fn plan_run(config: &RunConfig) -> Result<WorkPlan, Vec<Violation>> {
    let violations = validate_run_config(config);
    if !violations.is_empty() {
        return Err(violations);
    }
    let mut items = Vec::with_capacity(config.models.len() * config.tasks.len() * config.n_samples as usize);
    for model in &config.models {
        for task in &config.tasks {
            for i in 0..config.n_samples {
                items.push(SampleKey::new(model.model_id.clone(), task.task_id.clone(), i));
            }
        }
    }
    items.sort();
    Ok(WorkPlan { items })
}
