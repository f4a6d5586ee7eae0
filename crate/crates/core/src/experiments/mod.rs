//! Seeded experiments: Monte Carlo estimates of the probabilistic
//! corollaries, batch sweeps of the deterministic certificates, and report
//! persistence.
//!
//! Trial `i` of a configuration draws from the stream `seed.derive(i)`
//! only, so any record can be replayed alone with [`replay_trial`]. Trials
//! run in parallel and are collected in index order.

pub mod config;
pub mod instances;
pub mod montecarlo;
pub mod report;
pub mod sweeps;

pub use config::{Scenario, TrialConfig};
pub use montecarlo::{run_interp_corollary, run_svm_generalization};
pub use report::{emit_report, read_report, Aggregate, AggregateReport, FailingSeed, ReportFormat, TrialRecord, Verdict};
pub use sweeps::run_bound_sweeps;

use crate::error::Result;

/// Runs the scenario named in `cfg`.
pub fn run(cfg: &TrialConfig) -> Result<AggregateReport> {
    match cfg.scenario {
        Scenario::InterpCorollary => run_interp_corollary(cfg),
        Scenario::SvmGeneralization => run_svm_generalization(cfg),
        _ => run_bound_sweeps(cfg),
    }
}

/// Recomputes the record of trial `index` of `cfg`.
pub fn replay_trial(cfg: &TrialConfig, index: usize) -> Result<TrialRecord> {
    cfg.validate()?;
    Ok(match cfg.scenario {
        Scenario::InterpCorollary => {
            let t = montecarlo::teacher(cfg)?;
            montecarlo::interp_corollary_trial(cfg, &t, index)?
        }
        Scenario::SvmGeneralization => {
            let t = montecarlo::teacher(cfg)?;
            montecarlo::svm_generalization_trial(cfg, &t, index)?
        }
        Scenario::InterpBoundsSweep => sweeps::interp_sweep_trial(cfg, index),
        Scenario::SvmBoundsSweep => sweeps::svm_sweep_trial(cfg, index),
        Scenario::ParametricSweep => sweeps::parametric_sweep_trial(cfg, index),
    })
}
