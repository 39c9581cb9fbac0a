//! Experiments: excess-loss sweeps, sensitivity probes and the
//! averaged-iterate counterexample.

mod counterexample;
mod experiment;
mod registry;
mod sensitivity;
mod sweep;

pub use counterexample::{
    counterexample_empirical, counterexample_exact, counterexample_exact_with, default_k_grid, normal_cdf,
    CounterexampleProcess, CounterexampleReport, EmpiricalAccuracy,
};
pub use experiment::{execute, ExperimentConfig, ExperimentOutcome, Manifest};
pub use registry::{AlgorithmKind, GridPoint, Overrides, ProblemSpec, Trial, PHASED_SGD_CONSTANT};
pub use sensitivity::{coupled_distance, sensitivity_probe, SensitivityReport};
pub use sweep::{excess_loss_sweep, mean_and_std_err, run_seeds, sweep_point, write_sweep_csv, RunSeeds, SweepResult};

use std::io::Write;

use crate::error::Result;

pub fn write_counterexample_csv<W: Write>(writer: W, reports: &[CounterexampleReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(CounterexampleReport::CSV_HEADER)?;
    for r in reports {
        out.write_record(r.csv_record())?;
    }
    out.flush()?;
    Ok(())
}
