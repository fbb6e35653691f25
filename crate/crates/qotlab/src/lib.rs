//! Experiment harness for the `qotlab-core` simulator: scenario presets,
//! parallel Monte Carlo runs with Wilson intervals, JSON/CSV reports and the
//! acceptance checks.

pub mod report;
pub mod runner;
pub mod scenario;
pub mod verify;

pub use qotlab_core as core;
pub use report::{emit_report, render_report, Format};
pub use runner::{run_scenario, worker_count, RunSummary};
pub use scenario::{Scenario, ScenarioKind};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown scenario {0}")]
    UnknownScenario(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Core(#[from] qotlab_core::Error),

    #[error("{scenario}: session {index} failed: {source}")]
    Session {
        scenario: String,
        index: u64,
        #[source]
        source: qotlab_core::Error,
    },

    #[error("nothing to report")]
    EmptyReport,

    #[error("cannot write report to {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("worker pool: {0}")]
    Pool(String),
}
