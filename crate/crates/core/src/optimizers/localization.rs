//! Iterative localization: phased output-perturbed SGD and phased
//! regularized ERM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pnsgd::{check_data, check_step, require_smooth, run_sgd, start_point, Averaging};
use super::record::{Guarantee, PhaseEntry, RunRecord};
use crate::accountant::PrivacyBudget;
use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;
use crate::losses::{Example, LossFamily, LossKind};
use crate::noise::{mix_seed, NoiseStream};
use crate::schedules::{phase_plan, Phase, PhaseMode, Schedule};
use crate::vector;

/// `η = (D/L) · min(4/√n, ρ/√d)`.
pub fn phased_sgd_step(diameter: f64, lipschitz: f64, n: usize, d: usize, rho: f64) -> f64 {
    diameter / lipschitz * (4.0 / (n as f64).sqrt()).min(rho / (d as f64).sqrt())
}

/// `η = (D/L) · min(4/√n, ε/√(d ln(1/δ)))`.
pub fn phased_erm_step(diameter: f64, lipschitz: f64, n: usize, d: usize, epsilon: f64, delta: f64) -> f64 {
    let log_inv = (1.0 / delta).ln();
    diameter / lipschitz * (4.0 / (n as f64).sqrt()).min(epsilon / (d as f64 * log_inv).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasedSgdConfig {
    pub eta: f64,
    pub rho: f64,
    /// Scales every phase's noise; `0` disables noise (and privacy).
    #[serde(default = "one")]
    pub noise_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl PhasedSgdConfig {
    pub fn new(eta: f64, rho: f64) -> Self {
        Self {
            eta,
            rho,
            noise_multiplier: 1.0,
        }
    }
}

/// Phased-SGD: phase `i` runs one-pass SGD with step `η_i` on its own block
/// of `n_i` examples from the previous output, averages the iterates, and
/// adds `N(0, σ_i² I)` with `σ_i = 4Lη_i/ρ`. The returned iterate is the last
/// phase output projected onto the domain.
pub fn phased_sgd(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    config: PhasedSgdConfig,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    localized_sgd(data, loss, domain, w0, config, PhaseMode::Geometric, None, noise)
}

/// Phase count for [`phased_sgd_sc`]: `max(1, ⌈ln ln n⌉)`.
pub fn doubly_exponential_phases(n: usize) -> usize {
    ((n as f64).ln().ln().ceil() as usize).max(1)
}

/// `η = 4ck ln n / (λn)` with `k = max(1, ⌈ln ln n⌉)`.
pub fn phased_sgd_sc_step(n: usize, lambda: f64, c: f64) -> f64 {
    let k = doubly_exponential_phases(n) as f64;
    let nf = n as f64;
    4.0 * c * k * nf.ln() / (lambda * nf)
}

/// Default constant `c` in [`phased_sgd_sc_step`].
pub const PHASED_SC_CONSTANT: f64 = 2.0;

/// Strongly convex Phased-SGD: `k = ⌈ln ln n⌉` phases of `n/k` examples with
/// steps `2^{−2^i} η`.
pub fn phased_sgd_sc(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    config: PhasedSgdConfig,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    if !(loss.strong_convexity > 0.0) {
        return Err(Error::InvalidLoss("phased_sgd_sc needs a strongly convex loss".into()));
    }
    localized_sgd(data, loss, domain, w0, config, PhaseMode::DoublyExponential, None, noise)
}

#[allow(clippy::too_many_arguments)]
fn localized_sgd(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    config: PhasedSgdConfig,
    mode: PhaseMode,
    k_override: Option<usize>,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    let beta = require_smooth(loss, "phased_sgd")?;
    check_step(beta, config.eta)?;
    if !(config.rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {}", config.rho)));
    }
    if !(config.noise_multiplier >= 0.0 && config.noise_multiplier.is_finite()) {
        return Err(Error::InvalidArgument("noise_multiplier must be nonnegative".into()));
    }
    check_data(data, domain.dimension())?;
    let plan = phase_plan(data.len(), config.eta, mode, k_override)?;
    let mut warnings = Vec::new();
    let mut w = start_point(domain, w0, &mut warnings)?;
    let seed = noise.seed();
    let mut offset = 0;
    let mut phase_log = Vec::with_capacity(plan.len());
    for (i, Phase { samples, step_size }) in plan.iter().copied().enumerate() {
        let block = &data[offset..offset + samples];
        offset += samples;
        let start = domain.project(&w)?;
        let schedule = Schedule::constant(vec![1; samples], step_size, 0.0)?;
        let run = run_sgd(block, loss, domain, start, &schedule, None, Averaging::Uniform);
        let sigma = config.noise_multiplier * 4.0 * loss.lipschitz * step_size / config.rho;
        w = run.average.expect("uniform averaging requested");
        let xi = noise.gaussian_vector(w.len(), sigma);
        vector::axpy(1.0, &xi, &mut w);
        phase_log.push(PhaseEntry {
            phase: i + 1,
            samples,
            noise_scale: sigma,
            iterate: w.clone(),
            certified: None,
            inner_evaluations: samples as u64,
        });
    }
    let final_iterate = domain.project(&w)?;
    // Each phase is a Gaussian mechanism with sensitivity 2Lη_i on its own
    // block, i.e. ρ_i = ρ / (2 · multiplier).
    let declared = if config.noise_multiplier > 0.0 {
        let per_phase = config.rho / (2.0 * config.noise_multiplier);
        PrivacyBudget::from_rho(config.rho.max(per_phase))?
    } else {
        PrivacyBudget::Infinite
    };
    Ok(RunRecord {
        final_iterate,
        weighted_average: None,
        gradient_evaluations: offset as u64,
        phase_log,
        rng_seed: seed,
        declared_budget: Guarantee::rdp(declared),
        warnings,
    })
}

/// How each regularized ERM phase is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerSolver {
    /// Multi-pass SGD with step `1/(λ_i s)`, restarted until a duality-gap
    /// certificate meets the target or `cap_constant · n_i² · ln(1/δ)`
    /// gradient evaluations are spent.
    Sgd { cap_constant: f64 },
    /// Closed-form or combinatorial minimizer. Available for the quadratic
    /// loss and for one-dimensional absolute deviation.
    Exact,
}

/// Default evaluation-cap constant for [`InnerSolver::Sgd`].
pub const INNER_CAP_CONSTANT: f64 = 4.0;

impl Default for InnerSolver {
    fn default() -> Self {
        InnerSolver::Sgd {
            cap_constant: INNER_CAP_CONSTANT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasedErmConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub solver: InnerSolver,
    #[serde(default = "one")]
    pub noise_multiplier: f64,
}

impl PhasedErmConfig {
    pub fn new(eta: f64, epsilon: f64, delta: f64) -> Self {
        Self {
            eta,
            epsilon,
            delta,
            solver: InnerSolver::default(),
            noise_multiplier: 1.0,
        }
    }
}

/// `F(w) = mean_j f(w, x_j) + (λ/2)‖w − center‖²` over a block.
struct Regularized<'a> {
    loss: &'a LossFamily,
    data: &'a [Example],
    center: &'a [f64],
    lambda: f64,
}

impl Regularized<'_> {
    fn value(&self, w: &[f64]) -> f64 {
        let n = self.data.len() as f64;
        let mean: f64 = self.data.iter().map(|ex| self.loss.value_unchecked(w, ex)).sum::<f64>() / n;
        let gap = vector::distance(w, self.center);
        mean + 0.5 * self.lambda * gap * gap
    }

    /// Lower bound on `min_K F` from the linear minorant `F(w) ≥ c + ⟨g, w⟩ + (λ/2)‖w − center‖²`.
    fn minorant_minimum(&self, domain: &ConvexDomain, constant: f64, slope: &[f64]) -> f64 {
        let mut u = self.center.to_vec();
        vector::axpy(-1.0 / self.lambda, slope, &mut u);
        domain.project_in_place(&mut u);
        let gap = vector::distance(&u, self.center);
        constant + vector::dot(slope, &u) + 0.5 * self.lambda * gap * gap
    }
}

struct InnerOutcome {
    point: Vec<f64>,
    certified: bool,
    evaluations: u64,
    attempts: usize,
}

/// Restarted SGD on a regularized phase objective. Every attempt keeps a
/// table of per-example linearizations; their average plus the regularizer
/// minorizes `F`, which certifies suboptimality without knowing `min F`.
fn sgd_inner_solve(
    objective: &Regularized,
    domain: &ConvexDomain,
    target: f64,
    cap: u64,
    seed: u64,
) -> InnerOutcome {
    let data = objective.data;
    let n = data.len();
    let dim = objective.center.len();
    let overhead = 2 * n as u64;
    let steps = (n as u64 * n as u64).min(cap.saturating_sub(overhead)).max(1);
    let attempt_cost = steps + overhead;
    let start = domain.project(objective.center).expect("center has the domain dimension");

    let mut spent = 0u64;
    let mut attempts = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        attempts += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, attempts as u64]));
        // Linearization table: f_j(w) ≥ offset_j + ⟨slope_j, w⟩.
        let mut slopes = vec![0.0; n * dim];
        let mut offsets = vec![0.0; n];
        let mut slope_mean = vec![0.0; dim];
        let mut offset_mean = 0.0;
        let inv_n = 1.0 / n as f64;
        for (j, ex) in data.iter().enumerate() {
            let g = &mut slopes[j * dim..(j + 1) * dim];
            objective.loss.add_grad(&start, ex, 1.0, g);
            offsets[j] = objective.loss.value_unchecked(&start, ex) - vector::dot(g, &start);
            vector::axpy(inv_n, g, &mut slope_mean);
            offset_mean += inv_n * offsets[j];
        }

        let mut w = start.clone();
        let mut average = start.clone();
        let mut total_weight = 0.0;
        let mut g = vec![0.0; dim];
        for s in 1..=steps {
            let j = rng.random_range(0..n);
            let ex = &data[j];
            g.iter_mut().for_each(|v| *v = 0.0);
            objective.loss.add_grad(&w, ex, 1.0, &mut g);
            let offset = objective.loss.value_unchecked(&w, ex) - vector::dot(&g, &w);
            let row = &mut slopes[j * dim..(j + 1) * dim];
            for ((m, r), gi) in slope_mean.iter_mut().zip(row.iter_mut()).zip(&g) {
                *m += inv_n * (gi - *r);
                *r = *gi;
            }
            offset_mean += inv_n * (offset - offsets[j]);
            offsets[j] = offset;

            for ((gi, wi), ci) in g.iter_mut().zip(&w).zip(objective.center) {
                *gi += objective.lambda * (wi - ci);
            }
            vector::axpy(-1.0 / (objective.lambda * s as f64), &g, &mut w);
            domain.project_in_place(&mut w);
            // Weights proportional to s.
            let weight = s as f64;
            total_weight += weight;
            let r = weight / total_weight;
            for (a, wi) in average.iter_mut().zip(&w) {
                *a += r * (wi - *a);
            }
        }

        let table_bound = objective.minorant_minimum(domain, offset_mean, &slope_mean);
        // Linearize every example at the candidate: the same minorant, tight at the candidate.
        let mut full_slope = vec![0.0; dim];
        let mut full_offset = 0.0;
        for ex in data {
            g.iter_mut().for_each(|v| *v = 0.0);
            objective.loss.add_grad(&average, ex, 1.0, &mut g);
            full_offset += inv_n * (objective.loss.value_unchecked(&average, ex) - vector::dot(&g, &average));
            vector::axpy(inv_n, &g, &mut full_slope);
        }
        let candidate_bound = objective.minorant_minimum(domain, full_offset, &full_slope);
        let value = objective.value(&average);
        let gap = value - table_bound.max(candidate_bound);
        spent += attempt_cost;

        if best.as_ref().map_or(true, |(b, _)| gap < *b) {
            best = Some((gap, average));
        }
        if gap <= target || spent + attempt_cost > cap {
            let (gap, point) = best.expect("at least one attempt ran");
            return InnerOutcome {
                point,
                certified: gap <= target,
                evaluations: spent,
                attempts,
            };
        }
    }
}

/// Exact minimizer of the regularized objective, when one is available.
fn exact_inner_solve(objective: &Regularized, domain: &ConvexDomain) -> Result<Vec<f64>> {
    let lambda = objective.lambda;
    let center = objective.center;
    match objective.loss.kind {
        LossKind::Quadratic { scale } => {
            // (s/2)‖w − x̄‖² + (λ/2)‖w − c‖² is isotropic around (s x̄ + λc)/(s + λ).
            let mut m = vec![0.0; center.len()];
            let inv_n = 1.0 / objective.data.len() as f64;
            for ex in objective.data {
                vector::axpy(scale * inv_n, &ex.features, &mut m);
            }
            vector::axpy(lambda, center, &mut m);
            vector::scale(1.0 / (scale + lambda), &mut m);
            domain.project(&m)
        }
        LossKind::AbsoluteDeviation if center.len() == 1 => {
            // mean_j |a_j| · |w − b_j/a_j| + (λ/2)(w − c)²: a convex piecewise
            // quadratic whose derivative is nondecreasing, so scan the kinks.
            let inv_n = 1.0 / objective.data.len() as f64;
            let mut kinks: Vec<(f64, f64)> = objective
                .data
                .iter()
                .filter(|ex| ex.features[0] != 0.0)
                .map(|ex| (ex.label / ex.features[0], ex.features[0].abs() * inv_n))
                .collect();
            kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut merged: Vec<(f64, f64)> = Vec::with_capacity(kinks.len());
            for (p, q) in kinks {
                match merged.last_mut() {
                    Some(last) if last.0 == p => last.1 += q,
                    _ => merged.push((p, q)),
                }
            }
            let total: f64 = merged.iter().map(|k| k.1).sum();
            let c = center[0];
            let mut left = 0.0;
            let mut root = None;
            for k in 0..=merged.len() {
                // Between kink k-1 and kink k the slope term is left − (total − left).
                let lo = if k == 0 { f64::NEG_INFINITY } else { merged[k - 1].0 };
                let hi = if k == merged.len() { f64::INFINITY } else { merged[k].0 };
                let candidate = c - (2.0 * left - total) / lambda;
                if candidate >= lo && candidate <= hi {
                    root = Some(candidate);
                    break;
                }
                if k < merged.len() {
                    let (p, q) = merged[k];
                    let low = lambda * (p - c) + 2.0 * left - total;
                    let high = low + 2.0 * q;
                    if low <= 0.0 && 0.0 <= high {
                        root = Some(p);
                        break;
                    }
                    left += q;
                }
            }
            let root = root.expect("a strongly convex objective has a stationary point");
            domain.project(&[root])
        }
        _ => Err(Error::Unsupported(format!(
            "no exact phase solver for {:?} in dimension {}",
            objective.loss.kind,
            center.len()
        ))),
    }
}

/// Phased-ERM: phase `i` approximately minimizes
/// `mean f(w, x) + (1/(η_i n_i)) ‖w − w_{i−1}‖²` over its own block to within
/// `L² η_i / n_i`, then adds `N(0, σ_i² I)` with `σ_i = 4L (η_i/ε) √ln(1/δ)`.
/// Each phase, and so the whole run, is `(ε, 2δ)`-DP. Works for non-smooth losses.
pub fn phased_erm(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    config: PhasedErmConfig,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", config.delta)));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", config.epsilon)));
    }
    if !(config.noise_multiplier >= 0.0 && config.noise_multiplier.is_finite()) {
        return Err(Error::InvalidArgument("noise_multiplier must be nonnegative".into()));
    }
    check_data(data, domain.dimension())?;
    let plan = phase_plan(data.len(), config.eta, PhaseMode::Geometric, None)?;
    let log_inv = (1.0 / config.delta).ln();
    let lipschitz = loss.lipschitz;
    let mut warnings = Vec::new();
    let mut w = start_point(domain, w0, &mut warnings)?;
    let seed = noise.seed();
    let mut offset = 0;
    let mut evaluations = 0u64;
    let mut phase_log = Vec::with_capacity(plan.len());
    for (i, Phase { samples, step_size }) in plan.iter().copied().enumerate() {
        let block = &data[offset..offset + samples];
        offset += samples;
        let objective = Regularized {
            loss,
            data: block,
            center: &w,
            lambda: 2.0 / (step_size * samples as f64),
        };
        let (point, certified, inner) = match config.solver {
            InnerSolver::Exact => (exact_inner_solve(&objective, domain)?, true, samples as u64),
            InnerSolver::Sgd { cap_constant } => {
                let n2 = (samples * samples) as f64;
                let cap = (cap_constant * n2 * log_inv).floor() as u64;
                let target = lipschitz * lipschitz * step_size / samples as f64;
                let out = sgd_inner_solve(&objective, domain, target, cap, mix_seed(&[seed, 0x1e2f, i as u64]));
                if !out.certified {
                    warnings.push(format!(
                        "phase {}: inner solve not certified after {} attempts",
                        i + 1,
                        out.attempts
                    ));
                }
                (out.point, out.certified, out.evaluations)
            }
        };
        evaluations += inner;
        let sigma = config.noise_multiplier * 4.0 * lipschitz * (step_size / config.epsilon) * log_inv.sqrt();
        w = point;
        let xi = noise.gaussian_vector(w.len(), sigma);
        vector::axpy(1.0, &xi, &mut w);
        phase_log.push(PhaseEntry {
            phase: i + 1,
            samples,
            noise_scale: sigma,
            iterate: w.clone(),
            certified: Some(certified),
            inner_evaluations: inner,
        });
    }
    let declared = if config.noise_multiplier >= 1.0 {
        Guarantee::ApproximateDp {
            epsilon: config.epsilon,
            delta: 2.0 * config.delta,
        }
    } else {
        Guarantee::NonPrivate
    };
    Ok(RunRecord {
        final_iterate: domain.project(&w)?,
        weighted_average: None,
        gradient_evaluations: evaluations,
        phase_log,
        rng_seed: seed,
        declared_budget: declared,
        warnings,
    })
}
