//! Excess-loss sweeps over `(n, d, ρ)` grids.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::registry::{loss_label, AlgorithmKind, GridPoint, Overrides, ProblemSpec};
use crate::error::{Error, Result};
use crate::noise::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub algorithm: AlgorithmKind,
    pub loss: String,
    pub trials: usize,
    pub mean: f64,
    pub std_err: f64,
    pub bound: f64,
    /// `mean / bound`.
    pub ratio: f64,
}

impl SweepResult {
    pub const CSV_HEADER: [&'static str; 9] = ["n", "d", "rho", "algorithm", "trials", "mean", "std_err", "bound", "ratio"];

    pub fn csv_record(&self) -> [String; 9] {
        [
            self.n.to_string(),
            self.d.to_string(),
            self.rho.to_string(),
            self.algorithm.to_string(),
            self.trials.to_string(),
            self.mean.to_string(),
            self.std_err.to_string(),
            self.bound.to_string(),
            self.ratio.to_string(),
        ]
    }
}

/// Seeds of one run: `(data_seed, noise_seed)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub grid_index: usize,
    pub trial: usize,
    pub data_seed: u64,
    pub noise_seed: u64,
}

pub fn run_seeds(seed: u64, grid_index: usize, trial: usize) -> RunSeeds {
    let base = mix_seed(&[seed, grid_index as u64, trial as u64]);
    RunSeeds {
        grid_index,
        trial,
        data_seed: mix_seed(&[base, 0]),
        noise_seed: mix_seed(&[base, 1]),
    }
}

/// Mean and standard error of the mean (sample standard deviation over `√m`).
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (m - 1.0)).sqrt() / m.sqrt())
}

/// Runs `trials` independent runs at one grid point. Trials run in
/// parallel; the result does not depend on the thread count.
pub fn sweep_point(
    problem: &ProblemSpec,
    algorithm: AlgorithmKind,
    overrides: &Overrides,
    point: GridPoint,
    grid_index: usize,
    trials: usize,
    seed: u64,
) -> Result<SweepResult> {
    if trials < 2 {
        return Err(Error::InvalidArgument(format!("sweeps need at least 2 trials, got {trials}")));
    }
    let dist = problem.build(point.d)?;
    algorithm.validate(&dist, point, overrides)?;
    let w0 = problem.start(point.d);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let s = run_seeds(seed, grid_index, trial);
            algorithm.run(&dist, &w0, point, overrides, s.data_seed, s.noise_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let used = outcomes[0].samples_used;
    let excess: Vec<f64> = outcomes.iter().map(|t| t.excess).collect();
    let (mean, std_err) = mean_and_std_err(&excess);
    let bound = algorithm.theory_bound(&dist, point, used)?;
    Ok(SweepResult {
        n: point.n,
        d: point.d,
        rho: point.rho,
        algorithm,
        loss: loss_label(&dist).to_string(),
        trials,
        mean,
        std_err,
        bound,
        ratio: mean / bound,
    })
}

/// One [`SweepResult`] per grid point, in grid order.
pub fn excess_loss_sweep(
    problem: &ProblemSpec,
    algorithm: AlgorithmKind,
    overrides: &Overrides,
    grid: &[GridPoint],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepResult>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    grid.iter()
        .enumerate()
        .map(|(i, &point)| sweep_point(problem, algorithm, overrides, point, i, trials, seed))
        .collect()
}

pub fn write_sweep_csv<W: Write>(writer: W, results: &[SweepResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(SweepResult::CSV_HEADER)?;
    for r in results {
        out.write_record(r.csv_record())?;
    }
    out.flush()?;
    Ok(())
}
