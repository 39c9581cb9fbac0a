//! The averaged-iterate counterexample.
//!
//! The process is `X_t = X_{t−1} + Z_t` for `t ≤ k` and `X_t = Z_t` for
//! `t > k`, with `Z_t ~ N(0, σ²)`. The last iterate forgets `X_0` as soon as
//! `k < T`, but the average `(1/T) Σ_t X_t` keeps a `(k/T) X_0` shift while
//! its variance only grows like `k³/T²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::mix_seed;

/// Which process the counterexample runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterexampleProcess {
    /// Random walk on `X_0` for `k` steps, then pure noise.
    #[default]
    Averaging,
    /// Unconstrained noisy gradient descent from `w_0 = 0` with `η = 1/√T`
    /// on `ℓ_1 = (w − b)²`, zero losses up to step `k` and `w²` afterwards.
    /// Gradient noise has scale `σ`; `b` plays the role of `X_0`.
    OnlineQuadratic,
}

/// One step of an affine scalar recurrence
/// `X_t = mult·X_{t−1} + signal·θ + noise·Z_t`.
#[derive(Debug, Clone, Copy)]
struct Step {
    mult: f64,
    signal: f64,
    noise: f64,
}

impl CounterexampleProcess {
    /// Coefficient of `θ` in `X_0`.
    fn initial(self) -> f64 {
        match self {
            CounterexampleProcess::Averaging => 1.0,
            CounterexampleProcess::OnlineQuadratic => 0.0,
        }
    }

    /// Step `t ∈ 1..=T`.
    fn step(self, t: usize, horizon: usize, k: usize, sigma: f64) -> Step {
        match self {
            CounterexampleProcess::Averaging => Step {
                mult: if t <= k { 1.0 } else { 0.0 },
                signal: 0.0,
                noise: sigma,
            },
            CounterexampleProcess::OnlineQuadratic => {
                let eta = 1.0 / (horizon as f64).sqrt();
                let (mult, signal) = match t {
                    1 => (1.0 - 2.0 * eta, 2.0 * eta),
                    t if t <= k => (1.0, 0.0),
                    _ => (1.0 - 2.0 * eta, 0.0),
                };
                Step {
                    mult,
                    signal,
                    noise: eta * sigma,
                }
            }
        }
    }
}

/// Mean shift per unit of `θ` and variance, for the average and the last iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    average_shift: f64,
    average_variance: f64,
    last_shift: f64,
    last_variance: f64,
}

/// Exact moments of any affine recurrence. The signal coefficient runs
/// forward; the noise coefficients use the backward sums
/// `R_i = 1 + m_{i+1} R_{i+1}` (weight of `Z_i` in `Σ_t X_t`) and
/// `P_i = m_{i+1} P_{i+1}` (weight of `Z_i` in `X_T`).
fn recurrence_moments(process: CounterexampleProcess, horizon: usize, k: usize, sigma: f64) -> Moments {
    let steps: Vec<Step> = (1..=horizon).map(|t| process.step(t, horizon, k, sigma)).collect();
    let mut coef = process.initial();
    let mut coef_sum = 0.0;
    for s in &steps {
        coef = s.mult * coef + s.signal;
        coef_sum += coef;
    }
    let (mut r, mut p) = (1.0, 1.0);
    let (mut var_sum, mut var_last) = (0.0, 0.0);
    for i in (0..horizon).rev() {
        if i + 1 < horizon {
            let next = steps[i + 1].mult;
            r = 1.0 + next * r;
            p *= next;
        }
        let n2 = steps[i].noise * steps[i].noise;
        var_sum += n2 * r * r;
        var_last += n2 * p * p;
    }
    let tf = horizon as f64;
    Moments {
        average_shift: coef_sum / tf,
        average_variance: var_sum / (tf * tf),
        last_shift: coef,
        last_variance: var_last,
    }
}

/// Closed form for [`CounterexampleProcess::Averaging`]:
/// `Var = σ² (k(k+1)(2k+1)/6 + T − k) / T²`.
fn averaging_moments(horizon: usize, k: usize, sigma: f64) -> Moments {
    let (tf, kf) = (horizon as f64, k as f64);
    let s2 = sigma * sigma;
    let squares = kf * (kf + 1.0) * (2.0 * kf + 1.0) / 6.0;
    let (last_shift, last_variance) = if k == horizon { (1.0, tf * s2) } else { (0.0, s2) };
    Moments {
        average_shift: kf / tf,
        average_variance: s2 * (squares + tf - kf) / (tf * tf),
        last_shift,
        last_variance,
    }
}

fn moments(process: CounterexampleProcess, horizon: usize, k: usize, sigma: f64) -> Moments {
    match process {
        CounterexampleProcess::Averaging => averaging_moments(horizon, k, sigma),
        CounterexampleProcess::OnlineQuadratic => recurrence_moments(process, horizon, k, sigma),
    }
}

fn check_range(horizon: usize, k: usize) -> Result<()> {
    if k == 0 || k > horizon {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={horizon}, got {k}")));
    }
    Ok(())
}

/// Both neighbouring outputs are Gaussians with equal variance, so their
/// Rényi divergences are `α · shift² / (2 · variance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub process: CounterexampleProcess,
    pub horizon: usize,
    pub k: usize,
    pub sigma: f64,
    pub x0: f64,
    /// Mean of the average iterate, `(k/T) x0` for the averaging process.
    pub shift: f64,
    pub variance: f64,
    pub last_shift: f64,
    pub last_variance: f64,
    /// Empirical distinguishing accuracy, when simulated.
    pub accuracy: Option<f64>,
}

impl CounterexampleReport {
    pub fn rdp_average(&self, alpha: f64) -> f64 {
        alpha * self.shift * self.shift / (2.0 * self.variance)
    }

    /// Zero whenever the last iterate does not depend on `X_0`.
    pub fn rdp_last(&self, alpha: f64) -> f64 {
        if self.last_shift == 0.0 {
            return 0.0;
        }
        alpha * self.last_shift * self.last_shift / (2.0 * self.last_variance)
    }

    pub const CSV_HEADER: [&'static str; 8] =
        ["T", "k", "sigma", "shift", "variance", "rdp_avg_alpha2", "rdp_last_alpha2", "accuracy"];

    pub fn csv_record(&self) -> [String; 8] {
        [
            self.horizon.to_string(),
            self.k.to_string(),
            self.sigma.to_string(),
            self.shift.to_string(),
            self.variance.to_string(),
            self.rdp_average(2.0).to_string(),
            self.rdp_last(2.0).to_string(),
            self.accuracy.map(|a| a.to_string()).unwrap_or_default(),
        ]
    }
}

/// Exact report for the averaging process.
pub fn counterexample_exact(horizon: usize, k: usize, sigma: f64, x0: f64) -> Result<CounterexampleReport> {
    counterexample_exact_with(CounterexampleProcess::Averaging, horizon, k, sigma, x0)
}

pub fn counterexample_exact_with(
    process: CounterexampleProcess,
    horizon: usize,
    k: usize,
    sigma: f64,
    x0: f64,
) -> Result<CounterexampleReport> {
    check_range(horizon, k)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidArgument(format!("x0 must be finite, got {x0}")));
    }
    let m = moments(process, horizon, k, sigma);
    Ok(CounterexampleReport {
        process,
        horizon,
        k,
        sigma,
        x0,
        shift: m.average_shift * x0,
        variance: m.average_variance,
        last_shift: m.last_shift * x0,
        last_variance: m.last_variance,
        accuracy: None,
    })
}

/// `Φ(z)`, the standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalAccuracy {
    pub trials: usize,
    /// Fraction of trials where the sign of the average recovered the sign of `x0`.
    pub accuracy: f64,
    /// `Φ(|shift| / √variance)`.
    pub predicted: f64,
    /// `3/√trials`.
    pub tolerance: f64,
}

impl EmpiricalAccuracy {
    pub fn within_tolerance(&self) -> bool {
        (self.accuracy - self.predicted).abs() <= self.tolerance
    }
}

/// Simulates the process with `X_0 = ±|x0|` (alternating over trials) and
/// guesses the sign from the sign of the average iterate, which is the
/// likelihood-ratio test for two equal-variance Gaussians.
pub fn counterexample_empirical(
    process: CounterexampleProcess,
    horizon: usize,
    k: usize,
    sigma: f64,
    x0: f64,
    trials: usize,
    seed: u64,
) -> Result<EmpiricalAccuracy> {
    check_range(horizon, k)?;
    if trials < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 trials, got {trials}")));
    }
    if !(sigma >= 0.0) || !x0.is_finite() || x0 == 0.0 {
        return Err(Error::InvalidArgument("sigma must be nonnegative and x0 nonzero".into()));
    }
    let steps: Vec<Step> = (1..=horizon).map(|t| process.step(t, horizon, k, sigma)).collect();
    let magnitude = x0.abs();
    let correct: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let theta = if trial % 2 == 0 { magnitude } else { -magnitude };
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, horizon as u64, k as u64, trial as u64]));
            let mut x = process.initial() * theta;
            let mut sum = 0.0;
            for s in &steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = s.mult * x + s.signal * theta + s.noise * z;
                sum += x;
            }
            usize::from(sum * theta > 0.0)
        })
        .sum();
    let m = moments(process, horizon, k, sigma);
    let z = m.average_shift.abs() * magnitude / m.average_variance.sqrt();
    Ok(EmpiricalAccuracy {
        trials,
        accuracy: correct as f64 / trials as f64,
        predicted: if z.is_nan() { 0.5 } else { normal_cdf(z) },
        tolerance: 3.0 / (trials as f64).sqrt(),
    })
}

/// Smallest integer `r` with `r^den ≥ T^num`.
fn ceil_power(horizon: usize, num: u32, den: u32) -> usize {
    let target = (horizon as u128).pow(num);
    let mut r = ((horizon as f64).powf(num as f64 / den as f64).ceil() as u128).max(1);
    while r > 1 && (r - 1).pow(den) >= target {
        r -= 1;
    }
    while r.pow(den) < target {
        r += 1;
    }
    r as usize
}

/// `{1, ⌈T^{1/3}⌉, ⌈T^{1/2}⌉, ⌈T^{2/3}⌉, T}` without duplicates.
pub fn default_k_grid(horizon: usize) -> Vec<usize> {
    let mut ks = vec![
        1,
        ceil_power(horizon, 1, 3),
        ceil_power(horizon, 1, 2),
        ceil_power(horizon, 2, 3),
        horizon,
    ];
    ks.dedup();
    ks
}
