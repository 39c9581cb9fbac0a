//! Algorithms for λ-strongly convex losses.

use super::pnsgd::{check_data, check_step, pnsgd, require_smooth, run_sgd, start_point, Averaging};
use super::record::{Guarantee, PhaseEntry, RunRecord};
use crate::accountant::pai_rho;
use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;
use crate::losses::{Example, LossFamily};
use crate::noise::NoiseStream;
use crate::schedules::{sc_snowball_schedule, Schedule};

/// A private convex optimizer usable as the inner routine of [`sc_reduction`].
pub trait DpScoAlgorithm {
    fn run(&self, data: &[Example], w0: &[f64], noise: &mut NoiseStream) -> Result<RunRecord>;
}

impl<F> DpScoAlgorithm for F
where
    F: Fn(&[Example], &[f64], &mut NoiseStream) -> Result<RunRecord>,
{
    fn run(&self, data: &[Example], w0: &[f64], noise: &mut NoiseStream) -> Result<RunRecord> {
        self(data, w0, noise)
    }
}

/// Block sizes `⌊2^{i−2} n / log₂ n⌋` for `i = 1..⌈log₂ log₂ n⌉`.
/// Zero-sized blocks are dropped.
pub fn reduction_blocks(n: usize) -> Result<Vec<usize>> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("reduction needs at least 3 samples, got {n}")));
    }
    let log_n = (n as f64).log2();
    let k = (log_n.log2().ceil() as usize).max(1);
    let blocks: Vec<usize> = (1..=k)
        .map(|i| (2f64.powi(i as i32 - 2) * n as f64 / log_n).floor() as usize)
        .filter(|&b| b > 0)
        .collect();
    if blocks.is_empty() {
        return Err(Error::InvalidArgument(format!("no reduction block is nonempty for n = {n}")));
    }
    Ok(blocks)
}

/// Runs a convex private optimizer on disjoint, doubling blocks of data,
/// each run warm-started at the previous output. The guarantee is the
/// worst of the inner guarantees since the blocks are disjoint.
pub fn sc_reduction(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    inner: &dyn DpScoAlgorithm,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    if !(loss.strong_convexity > 0.0) {
        return Err(Error::InvalidLoss("the reduction needs a strongly convex loss".into()));
    }
    check_data(data, domain.dimension())?;
    let log_n = (data.len().max(2) as f64).log2();
    let blocks = reduction_blocks(data.len())?;
    let mut warnings = Vec::new();
    let expected_phases = (log_n.log2().ceil() as usize).max(1);
    if blocks.len() < expected_phases {
        warnings.push(format!(
            "{} of {expected_phases} reduction phases were empty and skipped",
            expected_phases - blocks.len()
        ));
    }
    let mut w = start_point(domain, w0, &mut warnings)?;
    let seed = noise.seed();
    let mut offset = 0;
    let mut evaluations = 0;
    let mut guarantees = Vec::with_capacity(blocks.len());
    let mut phase_log = Vec::with_capacity(blocks.len());
    for (i, &size) in blocks.iter().enumerate() {
        let block = &data[offset..offset + size];
        offset += size;
        let record = inner.run(block, &w, &mut noise.fork(i as u64 + 1))?;
        evaluations += record.gradient_evaluations;
        guarantees.push(record.declared_budget);
        warnings.extend(record.warnings.iter().map(|m| format!("phase {}: {m}", i + 1)));
        w = record.final_iterate;
        phase_log.push(PhaseEntry {
            phase: i + 1,
            samples: size,
            noise_scale: 0.0,
            iterate: w.clone(),
            certified: None,
            inner_evaluations: record.gradient_evaluations,
        });
    }
    Ok(RunRecord {
        final_iterate: w,
        weighted_average: None,
        gradient_evaluations: evaluations,
        phase_log,
        rng_seed: seed,
        declared_budget: Guarantee::parallel(&guarantees),
        warnings,
    })
}

/// `η = 2 ln T / (λT)`.
pub fn sc_step(steps: usize, lambda: f64) -> f64 {
    let t = steps as f64;
    2.0 * t.ln() / (lambda * t)
}

/// Fixed-step noisy projected SGD with one example per step, returning the
/// last iterate and the average weighted by `(1 − ηλ)^{−t}`.
///
/// The declared budget covers the last iterate only; the weighted average
/// is not protected by amplification by iteration.
pub fn sc_weighted_sgd(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    sigma: f64,
    eta: Option<f64>,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    let lambda = loss.strong_convexity;
    if !(lambda > 0.0) {
        return Err(Error::InvalidLoss("weighted SGD needs a strongly convex loss".into()));
    }
    let beta = require_smooth(loss, "sc_weighted_sgd")?;
    let steps = data.len();
    if steps == 0 {
        return Err(Error::EmptyBatch);
    }
    let eta = eta.unwrap_or_else(|| sc_step(steps, lambda));
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    let half_inverse = 1.0 / (2.0 * lambda);
    if eta > half_inverse * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { eta, limit: half_inverse });
    }
    check_step(beta, eta)?;
    check_data(data, domain.dimension())?;
    let schedule = Schedule::constant(vec![1; steps], eta, sigma)?;
    let mut warnings = Vec::new();
    let start = start_point(domain, w0, &mut warnings)?;
    let seed = noise.seed();
    let run = run_sgd(
        data,
        loss,
        domain,
        start,
        &schedule,
        Some(noise),
        Averaging::Geometric { eta_lambda: eta * lambda },
    );
    warnings.push("the declared budget covers the final iterate, not the weighted average".into());
    Ok(RunRecord {
        final_iterate: run.final_iterate,
        weighted_average: run.average,
        gradient_evaluations: steps as u64,
        phase_log: Vec::new(),
        rng_seed: seed,
        declared_budget: Guarantee::rdp(pai_rho(&schedule, loss.lipschitz)?),
        warnings,
    })
}

/// Snowball-SGD for strongly convex losses: snowball batches at level `ρ`,
/// `η = 2 ln T/(λT)`, `σ = L/√d`. Returns the last iterate.
pub fn sc_snowball(
    data: &[Example],
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    steps: usize,
    rho: f64,
    noise: &mut NoiseStream,
) -> Result<RunRecord> {
    let schedule = sc_snowball_schedule(steps, domain.dimension(), rho, loss.strong_convexity, loss.lipschitz)?;
    let record = pnsgd(data, loss, domain, w0, &schedule, noise)?;
    match record.declared_budget.rho() {
        Some(r) if r <= rho * (1.0 + 1e-9) => Ok(record),
        other => Err(Error::PrivacyViolation(format!(
            "schedule yields rho {other:?}, above the requested {rho}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{sample_dataset, LossKind, Sampler, Smoothness, SyntheticDistribution};
    use crate::optimizers::localization::{phased_sgd, PhasedSgdConfig};
    use crate::schedules::snowball_batches;

    fn sc_quadratic(d: usize, lambda: f64) -> SyntheticDistribution {
        SyntheticDistribution::quadratic(
            ConvexDomain::centered_ball(d, 1.0).unwrap(),
            Sampler::UniformSphere {
                center: vec![0.25; d],
                radius: 0.25,
            },
            lambda,
        )
        .unwrap()
    }

    #[test]
    fn reduction_block_examples() {
        assert_eq!(reduction_blocks(256).unwrap(), vec![16, 32, 64]);
        for n in 64..=65_536usize {
            let b = reduction_blocks(n).unwrap();
            assert!(b.iter().sum::<usize>() <= n, "n = {n}");
        }
        assert!(reduction_blocks(2).is_err());
    }

    #[test]
    fn identity_inner_returns_start() {
        let dist = sc_quadratic(2, 1.0);
        let data = sample_dataset(&dist, 256, 0).unwrap();
        let identity = |block: &[Example], w0: &[f64], _: &mut NoiseStream| -> Result<RunRecord> {
            Ok(RunRecord {
                final_iterate: w0.to_vec(),
                weighted_average: None,
                gradient_evaluations: block.len() as u64,
                phase_log: vec![],
                rng_seed: 0,
                declared_budget: Guarantee::rdp(crate::accountant::PrivacyBudget::Finite { rho: 0.0 }),
                warnings: vec![],
            })
        };
        let w0 = [0.3, -0.2];
        let r = sc_reduction(&data, &dist.loss, &dist.domain, &w0, &identity, &mut NoiseStream::new(0)).unwrap();
        assert_eq!(r.final_iterate, w0.to_vec());
        assert_eq!(r.phase_log.len(), 3);
        assert_eq!(r.gradient_evaluations, 112);
    }

    #[test]
    fn reduction_inherits_the_inner_budget() {
        let dist = sc_quadratic(2, 1.0);
        let data = sample_dataset(&dist, 4096, 1).unwrap();
        let loss = dist.loss.clone();
        let domain = dist.domain.clone();
        let inner = move |block: &[Example], w0: &[f64], noise: &mut NoiseStream| {
            phased_sgd(block, &loss, &domain, w0, PhasedSgdConfig::new(0.05, 0.7), noise)
        };
        let r = sc_reduction(&data, &dist.loss, &dist.domain, &[0.0, 0.0], &inner, &mut NoiseStream::new(4)).unwrap();
        assert_eq!(r.declared_budget.rho(), Some(0.7));
        assert!(dist.domain.contains(&r.final_iterate));
    }

    #[test]
    fn nearly_uniform_weights_give_nearly_uniform_average() {
        let loss = LossFamily::new(LossKind::Quadratic { scale: 1.0 }, 4.0, Smoothness::Smooth(1.0), 1.0).unwrap();
        let domain = ConvexDomain::centered_ball(1, 2.0).unwrap();
        let data: Vec<Example> = (0..50).map(|i| Example::point(vec![(i as f64).cos()])).collect();
        let eta = 1e-9;
        let r = sc_weighted_sgd(&data, &loss, &domain, &[0.5], 0.0, Some(eta), &mut NoiseStream::new(0)).unwrap();
        let uniform = crate::optimizers::psgd(&data, &loss, &domain, &[0.5], &vec![eta; 50]).unwrap();
        let (a, b) = (r.weighted_average.unwrap()[0], uniform.weighted_average.unwrap()[0]);
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn weighted_average_matches_explicit_weights() {
        let loss = LossFamily::new(LossKind::Quadratic { scale: 1.0 }, 4.0, Smoothness::Smooth(1.0), 1.0).unwrap();
        let domain = ConvexDomain::centered_ball(1, 2.0).unwrap();
        let data: Vec<Example> = (0..40).map(|i| Example::point(vec![(i as f64 * 0.7).sin()])).collect();
        let eta = 0.1;
        let r = sc_weighted_sgd(&data, &loss, &domain, &[1.5], 0.0, Some(eta), &mut NoiseStream::new(0)).unwrap();
        let w = crate::schedules::sc_weights(40, eta, 1.0).unwrap();
        let mut x = 1.5;
        let mut acc = 0.0;
        for (ex, g) in data.iter().zip(&w.weights) {
            x -= eta * (x - ex.features[0]);
            acc += g * x;
        }
        assert!((r.weighted_average.unwrap()[0] - acc / w.total).abs() < 1e-12);
        assert!((r.final_iterate[0] - x).abs() < 1e-15);
    }

    #[test]
    fn noiseless_iterates_contract_by_half() {
        let lambda = 2.0;
        let c = 0.3;
        let loss = LossFamily::new(LossKind::Quadratic { scale: lambda }, 10.0, Smoothness::Smooth(lambda), lambda).unwrap();
        let domain = ConvexDomain::centered_ball(1, 5.0).unwrap();
        let data = vec![Example::point(vec![c]); 10];
        let eta = 1.0 / (2.0 * lambda);
        for t in 1..=10 {
            let r = sc_weighted_sgd(&data[..t], &loss, &domain, &[4.3], 0.0, Some(eta), &mut NoiseStream::new(0)).unwrap();
            let expected = c + (4.3 - c) * 0.5f64.powi(t as i32);
            assert!((r.final_iterate[0] - expected).abs() < 1e-14);
        }
        assert!(matches!(
            sc_weighted_sgd(&data, &loss, &domain, &[0.0], 0.0, Some(0.3), &mut NoiseStream::new(0)),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn sc_snowball_declares_pai_rho() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let t = rng.random_range(1..200);
            let d = rng.random_range(1..20);
            let rho = rng.random_range(0.2..5.0);
            let dist = sc_quadratic(d, 1.0);
            let schedule = sc_snowball_schedule(t, d, rho, 1.0, dist.loss.lipschitz).unwrap();
            let data = sample_dataset(&dist, schedule.total_samples(), 2).unwrap();
            let r = sc_snowball(&data, &dist.loss, &dist.domain, &vec![0.0; d], t, rho, &mut NoiseStream::new(3)).unwrap();
            let expected = pai_rho(&schedule, dist.loss.lipschitz).unwrap().rho().unwrap();
            assert!((r.declared_budget.rho().unwrap() - expected).abs() <= 1e-12 * expected);
            assert_eq!(r.gradient_evaluations as usize, data.len());
        }
    }

    #[test]
    fn single_step_snowball() {
        let d = 9;
        let dist = sc_quadratic(d, 1.0);
        let b = snowball_batches(1, d, 0.5, 2.0).unwrap();
        assert_eq!(b, vec![12]);
        let data = sample_dataset(&dist, 12, 0).unwrap();
        let r = sc_snowball(&data, &dist.loss, &dist.domain, &vec![0.1; d], 1, 0.5, &mut NoiseStream::new(0)).unwrap();
        // ln 1 = 0, so the single step is frozen.
        assert_eq!(r.final_iterate, vec![0.1; d]);
    }

    #[test]
    fn noiseless_snowball_converges_geometrically() {
        let d = 2;
        let c = vec![0.2, -0.1];
        let dist = SyntheticDistribution::quadratic(
            ConvexDomain::centered_ball(d, 1.0).unwrap(),
            Sampler::PointMass { point: c.clone() },
            1.0,
        )
        .unwrap();
        let t = 200;
        let schedule = sc_snowball_schedule(t, d, 1.0, 1.0, dist.loss.lipschitz).unwrap().with_noise(0.0).unwrap();
        let data = sample_dataset(&dist, schedule.total_samples(), 0).unwrap();
        let r = pnsgd(&data, &dist.loss, &dist.domain, &[-0.7, 0.7], &schedule, &mut NoiseStream::new(0)).unwrap();
        let eta = sc_step(t, 1.0);
        let bound = 2.0 * dist.loss.lipschitz * (1.0 - eta).powi(t as i32);
        assert!(crate::vector::distance(&r.final_iterate, &c) <= bound);
    }
}
