//! Batch-size, step-size, noise and averaging-weight schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Batch multiplier for the fixed-step (Shamir-Zhang) snowball schedule.
pub const SZ_BATCH_MULTIPLIER: f64 = 2.0;

/// Batch multiplier for the halving-step (Jain-Nagaraj-Netrapalli) snowball schedule, `4√3`.
pub const JNN_BATCH_MULTIPLIER: f64 = 6.928_203_230_275_509;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawSchedule {
    #[serde(rename = "B")]
    batch_sizes: Vec<usize>,
    #[serde(rename = "eta")]
    step_sizes: Vec<f64>,
    #[serde(rename = "sigma")]
    noise_scales: Vec<f64>,
}

/// Per-step batch sizes `B_t`, step sizes `η_t` and noise scales `σ_t`.
///
/// Step sizes may be zero (a frozen step); everything else must be positive
/// or, for noise, nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct Schedule {
    batch_sizes: Vec<usize>,
    step_sizes: Vec<f64>,
    noise_scales: Vec<f64>,
}

impl TryFrom<RawSchedule> for Schedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        Schedule::new(raw.batch_sizes, raw.step_sizes, raw.noise_scales)
    }
}

impl From<Schedule> for RawSchedule {
    fn from(s: Schedule) -> Self {
        RawSchedule {
            batch_sizes: s.batch_sizes,
            step_sizes: s.step_sizes,
            noise_scales: s.noise_scales,
        }
    }
}

impl Schedule {
    pub fn new(batch_sizes: Vec<usize>, step_sizes: Vec<f64>, noise_scales: Vec<f64>) -> Result<Self> {
        let t = batch_sizes.len();
        if t == 0 {
            return Err(Error::InvalidSchedule("schedule must have at least one step".into()));
        }
        if step_sizes.len() != t || noise_scales.len() != t {
            return Err(Error::InvalidSchedule(format!(
                "length mismatch: {} batches, {} steps, {} noise scales",
                t,
                step_sizes.len(),
                noise_scales.len()
            )));
        }
        if let Some(i) = batch_sizes.iter().position(|&b| b == 0) {
            return Err(Error::InvalidSchedule(format!("batch size at step {} is zero", i + 1)));
        }
        if let Some(i) = step_sizes.iter().position(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::InvalidSchedule(format!(
                "step size at step {} is {}",
                i + 1,
                step_sizes[i]
            )));
        }
        if let Some(i) = noise_scales.iter().position(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidSchedule(format!(
                "noise scale at step {} is {}",
                i + 1,
                noise_scales[i]
            )));
        }
        Ok(Self {
            batch_sizes,
            step_sizes,
            noise_scales,
        })
    }

    /// Constant step size and noise scale.
    pub fn constant(batch_sizes: Vec<usize>, eta: f64, sigma: f64) -> Result<Self> {
        let t = batch_sizes.len();
        Self::new(batch_sizes, vec![eta; t], vec![sigma; t])
    }

    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.batch_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn batch_sizes(&self) -> &[usize] {
        &self.batch_sizes
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }

    pub fn noise_scales(&self) -> &[f64] {
        &self.noise_scales
    }

    /// `Σ B_t`, the number of examples one pass consumes.
    pub fn total_samples(&self) -> usize {
        self.batch_sizes.iter().sum()
    }

    pub fn max_step(&self) -> f64 {
        self.step_sizes.iter().copied().fold(0.0, f64::max)
    }

    /// Same batches and steps with every `σ_t` replaced.
    pub fn with_noise(&self, sigma: f64) -> Result<Self> {
        Self::constant(self.batch_sizes.clone(), 0.0, sigma).map(|s| Self {
            step_sizes: self.step_sizes.clone(),
            ..s
        })
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSchedule(format!("{name} must be positive, got {v}")))
    }
}

fn check_count(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidSchedule(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// `B_t = ⌈multiplier · √(d/(T−t+1)) / ρ⌉` for `t = 1..T`.
pub fn snowball_batches(steps: usize, d: usize, rho: f64, multiplier: f64) -> Result<Vec<usize>> {
    check_count("T", steps)?;
    check_count("d", d)?;
    check_positive("rho", rho)?;
    check_positive("multiplier", multiplier)?;
    Ok((1..=steps)
        .map(|t| snowball_batch(steps - t + 1, d, rho, multiplier))
        .collect())
}

/// Batch size for a step with `remaining` steps left, counting itself.
fn snowball_batch(remaining: usize, d: usize, rho: f64, multiplier: f64) -> usize {
    let b = (multiplier * (d as f64 / remaining as f64).sqrt() / rho).ceil();
    (b as usize).max(1)
}

/// The largest horizon `T` whose snowball schedule fits in `n` examples,
/// or `None` when even `T = 1` needs more than `n`.
pub fn snowball_horizon(n: usize, d: usize, rho: f64, multiplier: f64) -> Result<Option<usize>> {
    check_count("d", d)?;
    check_positive("rho", rho)?;
    check_positive("multiplier", multiplier)?;
    // Σ_{t≤T} B_t(T) = Σ_{s=1}^{T} ⌈m√(d/s)/ρ⌉ grows by one term per extra step.
    let (mut used, mut horizon) = (0usize, 0usize);
    loop {
        let next = snowball_batch(horizon + 1, d, rho, multiplier);
        if used + next > n {
            break;
        }
        used += next;
        horizon += 1;
    }
    Ok((horizon > 0).then_some(horizon))
}

/// `η_t = D / (L_G √T)` for every step.
pub fn constant_step(steps: usize, diameter: f64, oracle_lipschitz: f64) -> Result<Vec<f64>> {
    check_count("T", steps)?;
    check_positive("D", diameter)?;
    check_positive("L_G", oracle_lipschitz)?;
    Ok(vec![diameter / (oracle_lipschitz * (steps as f64).sqrt()); steps])
}

/// `⌈log₂ x⌉` for `x ≥ 1`.
pub(crate) fn ceil_log2(x: usize) -> u32 {
    debug_assert!(x >= 1);
    usize::BITS - (x - 1).leading_zeros()
}

/// Step sizes halving on bands that each cover half the remaining steps:
/// `η_t = c · 2^{−i} / √T` for `T_i < t ≤ T_{i+1}` with `T_i = T − ⌈T 2^{−i}⌉`.
pub fn jnn_steps(steps: usize, c: f64) -> Result<Vec<f64>> {
    check_count("T", steps)?;
    check_positive("c", c)?;
    let ell = ceil_log2(steps);
    let root = (steps as f64).sqrt();
    let boundary = |i: u32| -> usize {
        if i > ell {
            steps
        } else {
            steps - steps.div_ceil(1usize << i)
        }
    };
    let mut out = Vec::with_capacity(steps);
    for i in 0..=ell {
        let eta = c * 0.5f64.powi(i as i32) / root;
        for _ in boundary(i)..boundary(i + 1) {
            out.push(eta);
        }
    }
    debug_assert_eq!(out.len(), steps);
    Ok(out)
}

/// Weights `γ_t = (1 − ηλ)^{−t}` and their sum `Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingWeights {
    pub weights: Vec<f64>,
    pub total: f64,
}

pub fn sc_weights(steps: usize, eta: f64, lambda: f64) -> Result<AveragingWeights> {
    check_count("T", steps)?;
    check_positive("eta", eta)?;
    check_positive("lambda", lambda)?;
    let q = 1.0 - eta * lambda;
    if q <= 0.0 {
        return Err(Error::InvalidSchedule(format!(
            "eta * lambda = {} must be below 1",
            eta * lambda
        )));
    }
    let weights: Vec<f64> = (1..=steps).map(|t| q.powi(-(t as i32))).collect();
    let total = weights.iter().sum();
    Ok(AveragingWeights { weights, total })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// `n_i = ⌊n/2^i⌋`, `η_i = 4^{−i} η`, `k = ⌈log₂ n⌉`.
    Geometric,
    /// `n_i = ⌊n/k⌋`, `η_i = 2^{−2^i} η`, `k = max(1, ⌈ln ln n⌉)`.
    DoublyExponential,
}

impl PhaseMode {
    /// `η_{i+1} / η_i` for phase `i` (one-based).
    pub fn step_ratio(self, i: usize) -> f64 {
        match self {
            PhaseMode::Geometric => 0.25,
            PhaseMode::DoublyExponential => 0.5f64.powi(1 << i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub samples: usize,
    pub step_size: f64,
}

/// Phase lengths and step sizes for the localization algorithms. Phases
/// that would receive no samples are dropped.
pub fn phase_plan(n: usize, eta0: f64, mode: PhaseMode, k_override: Option<usize>) -> Result<Vec<Phase>> {
    if n < 2 {
        return Err(Error::InvalidSchedule(format!("need at least 2 samples, got {n}")));
    }
    check_positive("eta0", eta0)?;
    let k = match (k_override, mode) {
        (Some(0), _) => return Err(Error::InvalidSchedule("phase count must be at least 1".into())),
        (Some(k), _) => k,
        (None, PhaseMode::Geometric) => ceil_log2(n) as usize,
        (None, PhaseMode::DoublyExponential) => ((n as f64).ln().ln().ceil() as usize).max(1),
    };
    let mut plan = Vec::with_capacity(k);
    for i in 1..=k {
        let (samples, step_size) = match mode {
            PhaseMode::Geometric => (
                n.checked_shr(i as u32).unwrap_or(0),
                eta0 * 0.25f64.powi(i as i32),
            ),
            PhaseMode::DoublyExponential => (n / k, eta0 * 2f64.powf(-(2f64.powi(i as i32)))),
        };
        if samples == 0 || step_size == 0.0 {
            break;
        }
        plan.push(Phase { samples, step_size });
    }
    if plan.is_empty() {
        return Err(Error::InvalidSchedule(format!("no phase receives a sample with n = {n} and k = {k}")));
    }
    Ok(plan)
}

/// Fixed-step snowball schedule: `B_t` with multiplier 2, `η = D/(L√(2T))`, `σ = L/√d`.
pub fn snowball_sz_schedule(steps: usize, d: usize, rho: f64, diameter: f64, lipschitz: f64) -> Result<Schedule> {
    let batches = snowball_batches(steps, d, rho, SZ_BATCH_MULTIPLIER)?;
    let eta = constant_step(steps, diameter, std::f64::consts::SQRT_2 * lipschitz)?;
    Schedule::new(batches, eta, vec![lipschitz / (d as f64).sqrt(); steps])
}

/// Halving-step snowball schedule: `B_t` with multiplier `4√3`, band steps
/// with `c = D/(√2 L)`, `σ = L/√d`.
pub fn snowball_jnn_schedule(steps: usize, d: usize, rho: f64, diameter: f64, lipschitz: f64) -> Result<Schedule> {
    check_positive("L", lipschitz)?;
    let batches = snowball_batches(steps, d, rho, JNN_BATCH_MULTIPLIER)?;
    let eta = jnn_steps(steps, diameter / (std::f64::consts::SQRT_2 * lipschitz))?;
    Schedule::new(batches, eta, vec![lipschitz / (d as f64).sqrt(); steps])
}

/// Strongly convex snowball schedule: `B_t` with multiplier 2,
/// `η = 2 ln T / (λT)`, `σ = L/√d`.
pub fn sc_snowball_schedule(steps: usize, d: usize, rho: f64, lambda: f64, lipschitz: f64) -> Result<Schedule> {
    check_positive("lambda", lambda)?;
    check_positive("L", lipschitz)?;
    let batches = snowball_batches(steps, d, rho, SZ_BATCH_MULTIPLIER)?;
    let t = steps as f64;
    let eta = 2.0 * t.ln() / (lambda * t);
    Schedule::constant(batches, eta, lipschitz / (d as f64).sqrt())
}
