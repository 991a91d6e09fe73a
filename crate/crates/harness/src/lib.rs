//! Experiment runner: runs policies over the horizon under one sweep axis
//! and several seeds, records every slot to CSV and summarizes long-term
//! averages.
//!
//! An output directory holds `runs/<policy>__[<axis>-<value>__]seed<n>.csv`
//! per run (columns in [`metrics`]), `summary.csv` (columns in [`summary`])
//! and a `<policy>_curve.csv` learning curve for every learned policy that
//! was trained first.

pub mod config;
mod error;
pub mod metrics;
pub mod run;
pub mod spec;
pub mod summary;

pub use config::Settings;
pub use error::HarnessError;
pub use metrics::MetricsRow;
pub use run::{run_experiment, run_one, LearnedModel};
pub use spec::{ExperimentSpec, LearnedSource, RunId, SweepAxis, TrainPlan};
pub use summary::{aggregate, summarize, PolicySummary, RunSummary};
