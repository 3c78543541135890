//! Evaluation harness runtime: provider gateway, sandboxed execution,
//! resumable run orchestration and leaderboard reporting.

pub mod cli;
pub mod clock;
pub mod codec;
pub mod config;
pub mod gateway;
pub mod orchestrator;
pub mod report;
pub mod sandbox;
pub mod secrets;
pub mod sync;
