//! Projected (noisy) stochastic gradient descent and Snowball-SGD.

use serde::{Deserialize, Serialize};

use super::record::{Guarantee, RunRecord};
use crate::accountant::pai_rho;
use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexDomain;
use crate::losses::{Example, LossFamily};
use crate::noise::NoiseStream;
use crate::schedules::{snowball_jnn_schedule, snowball_sz_schedule, Schedule};
use crate::vector;

/// Relative slack allowed when comparing a step size against `2/β`.
const STEP_TOLERANCE: f64 = 1e-12;

pub(crate) fn check_data(data: &[Example], dim: usize) -> Result<()> {
    for ex in data {
        check_dim(dim, ex.features.len())?;
    }
    Ok(())
}

/// Projects `w0` onto the domain, recording a warning if it moved.
pub(crate) fn start_point(domain: &ConvexDomain, w0: &[f64], warnings: &mut Vec<String>) -> Result<Vec<f64>> {
    let w = domain.project(w0)?;
    if !domain.contains(w0) {
        warnings.push("initial point outside the domain was projected onto it".into());
    }
    Ok(w)
}

pub(crate) fn require_smooth(loss: &LossFamily, algorithm: &'static str) -> Result<f64> {
    loss.beta().ok_or(Error::NonSmoothLoss(algorithm))
}

/// Refuses steps above `2/β`, where gradient steps stop being contractions.
pub(crate) fn check_step(beta: f64, eta: f64) -> Result<()> {
    let limit = 2.0 / beta;
    if eta > limit * (1.0 + STEP_TOLERANCE) {
        return Err(Error::StepTooLarge { eta, limit });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Averaging {
    None,
    /// Uniform average of `w_1..w_T`.
    Uniform,
    /// Weights `(1 − ηλ)^{−t}`, given `ηλ ∈ (0, 1)`.
    Geometric { eta_lambda: f64 },
}

pub(crate) struct Trajectory {
    pub final_iterate: Vec<f64>,
    pub average: Option<Vec<f64>>,
}

/// `w_{t+1} = Π(w_t − η_{t+1}(∇F_{t+1}(w_t) + ξ_{t+1}))` over consecutive
/// batches. With `noise = None` no noise is drawn at all.
pub(crate) fn run_sgd(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    start: Vec<f64>,
    schedule: &Schedule,
    mut noise: Option<&mut NoiseStream>,
    averaging: Averaging,
) -> Trajectory {
    let dim = start.len();
    let mut w = start;
    let mut grad = vec![0.0; dim];
    let mut average = match averaging {
        Averaging::None => None,
        _ => Some(vec![0.0; dim]),
    };
    let mut offset = 0;
    for (t, ((&b, &eta), &sigma)) in schedule
        .batch_sizes()
        .iter()
        .zip(schedule.step_sizes())
        .zip(schedule.noise_scales())
        .enumerate()
    {
        loss.batch_grad_into(&w, &data[offset..offset + b], &mut grad);
        offset += b;
        if let Some(stream) = noise.as_deref_mut() {
            for g in grad.iter_mut() {
                *g += sigma * stream.next_standard();
            }
        }
        vector::axpy(-eta, &grad, &mut w);
        domain.project_in_place(&mut w);
        if let Some(avg) = average.as_mut() {
            let step = (t + 1) as f64;
            let weight = match averaging {
                Averaging::Uniform => 1.0 / step,
                // γ_t / Σ_{s≤t} γ_s = (1 − q) / (1 − q^t) with q = 1 − ηλ
                Averaging::Geometric { eta_lambda } => -eta_lambda / (step * (-eta_lambda).ln_1p()).exp_m1(),
                Averaging::None => unreachable!(),
            };
            for (a, wi) in avg.iter_mut().zip(&w) {
                *a += weight * (wi - *a);
            }
        }
    }
    Trajectory {
        final_iterate: w,
        average,
    }
}

/// Projected noisy SGD with per-step batches, steps and noise scales.
///
/// Data are consumed in order: batch `t` is the next `B_t` examples. The
/// declared budget is the amplification-by-iteration bound for the final
/// iterate.
pub fn pnsgd(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    schedule: &Schedule,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    let beta = require_smooth(loss, "pnsgd")?;
    if data.len() != schedule.total_samples() {
        return Err(Error::SampleCountMismatch {
            expected: schedule.total_samples(),
            actual: data.len(),
        });
    }
    check_step(beta, schedule.max_step())?;
    check_data(data, domain.dimension())?;
    let mut warnings = Vec::new();
    let start = start_point(domain, w0, &mut warnings)?;
    let seed = noise.seed();
    let run = run_sgd(data, loss, domain, start, schedule, Some(noise), Averaging::None);
    Ok(RunRecord {
        final_iterate: run.final_iterate,
        weighted_average: None,
        gradient_evaluations: data.len() as u64,
        phase_log: Vec::new(),
        rng_seed: seed,
        declared_budget: Guarantee::rdp(pai_rho(schedule, loss.lipschitz)?),
        warnings,
    })
}

/// Noiseless one-example-per-step projected SGD. Returns the last iterate
/// and the uniform average of `w_1..w_T`.
pub fn psgd(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    step_sizes: &[f64],
) -> Result<RunRecord> {
    if data.len() != step_sizes.len() {
        return Err(Error::SampleCountMismatch {
            expected: step_sizes.len(),
            actual: data.len(),
        });
    }
    let schedule = Schedule::new(vec![1; data.len()], step_sizes.to_vec(), vec![0.0; data.len()])?;
    if let Some(beta) = loss.beta() {
        check_step(beta, schedule.max_step())?;
    }
    check_data(data, domain.dimension())?;
    let mut warnings = Vec::new();
    let start = start_point(domain, w0, &mut warnings)?;
    let run = run_sgd(data, loss, domain, start, &schedule, None, Averaging::Uniform);
    Ok(RunRecord {
        final_iterate: run.final_iterate,
        weighted_average: run.average,
        gradient_evaluations: data.len() as u64,
        phase_log: Vec::new(),
        rng_seed: 0,
        declared_budget: Guarantee::NonPrivate,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnowballVariant {
    /// Constant step `D/(L√(2T))`.
    Sz,
    /// Halving bands with `c = D/(√2 L)`.
    Jnn,
}

impl SnowballVariant {
    pub fn schedule(self, steps: usize, d: usize, rho: f64, diameter: f64, lipschitz: f64) -> Result<Schedule> {
        match self {
            SnowballVariant::Sz => snowball_sz_schedule(steps, d, rho, diameter, lipschitz),
            SnowballVariant::Jnn => snowball_jnn_schedule(steps, d, rho, diameter, lipschitz),
        }
    }

    pub fn multiplier(self) -> f64 {
        match self {
            SnowballVariant::Sz => crate::schedules::SZ_BATCH_MULTIPLIER,
            SnowballVariant::Jnn => crate::schedules::JNN_BATCH_MULTIPLIER,
        }
    }
}

/// Snowball-SGD with `T` steps at privacy level `ρ`; `data` must hold
/// exactly the `Σ B_t` examples the schedule consumes.
#[allow(clippy::too_many_arguments)]
pub fn snowball_sgd(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    variant: SnowballVariant,
    steps: usize,
    rho: f64,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    let schedule = variant.schedule(steps, domain.dimension(), rho, domain.diameter(), loss.lipschitz)?;
    pnsgd(data, loss, domain, w0, &schedule, noise)
}
