//! Benchmark harness: task manifests, execution backends, judging,
//! strategy runs and report aggregation.

use std::path::PathBuf;

use thiserror::Error;

pub mod exec;
pub mod frames;
pub mod judge;
pub mod report;
pub mod stats;
pub mod strategy;
pub mod tasks;

pub use exec::{Artifact, Backend, ExecutionOutcome, LiveBackend, SimulatedBackend};
pub use frames::{sample, sample_frames};
pub use judge::{judge_resolve, JudgeOptions, JudgeVerdict};
pub use report::{aggregate, BenchReport, Cell, ReportRow};
pub use stats::{agreement_stats, Agreement, Correlation, StatsError};
pub use strategy::{run_strategy, BenchConfig, BenchEnv, RunLog, RunRow, Strategy};
pub use tasks::{load_tasks, Asset, Category, Modality, Task};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("task manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("task {task}: asset {filename:?} is missing")]
    MissingAsset { task: String, filename: String },
    #[error("run log {path} line {line}: {message}")]
    RunLog { path: PathBuf, line: usize, message: String },
    #[error("rows from the {found} backend cannot be mixed with rows from the {expected} backend")]
    MixedBackends { expected: String, found: String },
}
