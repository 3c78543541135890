//! Pure core of the polyeval harness.
//!
//! Data model, validation, work planning, request digests, the retry
//! schedule, code extraction and the pass@k scoring engine. Nothing here
//! touches the filesystem, the network or a clock; the `polyeval` crate
//! supplies those.

#![no_std]

extern crate alloc;

pub mod digest;
pub mod extract;
pub mod metrics;
pub mod model;
pub mod plan;
pub mod retry;
pub mod run_id;
pub mod validate;

pub use digest::{compute_idempotency_key, idempotency_preimage, sha256_hex};
pub use extract::{extract_code, ExtractionResult, LanguagePatterns, PatternFile};
pub use metrics::{
    aggregate_pass_at_k, build_matrix, pass_at_k, score_models, stars, Counts, MetricsError,
    ModelScore, RunResults, TaskResultMatrix,
};
pub use model::*;
pub use plan::{plan_run, WorkItem, WorkPlan};
pub use retry::{classify_provider_error, ErrorClass, RetryPolicy, WireStatus};
pub use run_id::make_run_id;
pub use validate::{validate_run_config, validate_tasks, Violation, ViolationCode};
