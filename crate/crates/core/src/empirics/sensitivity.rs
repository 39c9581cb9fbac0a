//! Coupled neighbouring-dataset runs of noiseless one-pass SGD.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;
use crate::losses::{sample_dataset, Example, LossFamily, SyntheticDistribution};
use crate::noise::mix_seed;
use crate::optimizers::psgd;
use crate::vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub pairs: usize,
    /// Largest final-iterate distance over all pairs.
    pub max_observed: f64,
    /// Largest uniform-average distance over all pairs.
    pub max_average: f64,
    /// `2Lη`.
    pub bound: f64,
}

/// Final and averaged iterate distances of constant-step noiseless SGD run
/// on `a` and `b` from the same start.
pub fn coupled_distance(
    loss: &LossFamily,
    domain: &ConvexDomain,
    w0: &[f64],
    eta: f64,
    a: &[Example],
    b: &[Example],
) -> Result<(f64, f64)> {
    let steps = vec![eta; a.len()];
    let ra = psgd(a, loss, domain, w0, &steps)?;
    let rb = psgd(b, loss, domain, w0, &steps)?;
    let avg = match (&ra.weighted_average, &rb.weighted_average) {
        (Some(x), Some(y)) => vector::distance(x, y),
        _ => 0.0,
    };
    Ok((vector::distance(&ra.final_iterate, &rb.final_iterate), avg))
}

/// Draws `num_pairs` datasets of size `n` with a uniformly random start in
/// the domain, replaces one uniformly chosen example by a fresh draw, and
/// runs one-pass SGD with step `eta` on both.
pub fn sensitivity_probe(
    dist: &SyntheticDistribution,
    eta: f64,
    n: usize,
    num_pairs: usize,
    seed: u64,
) -> Result<SensitivityReport> {
    let beta = dist.loss.beta().ok_or(Error::NonSmoothLoss("sensitivity_probe"))?;
    let limit = 2.0 / beta;
    if !(eta > 0.0) || eta > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { eta, limit });
    }
    if n == 0 || num_pairs == 0 {
        return Err(Error::InvalidArgument("need at least one example and one pair".into()));
    }
    let distances = (0..num_pairs)
        .into_par_iter()
        .map(|pair| {
            let pair_seed = mix_seed(&[seed, pair as u64]);
            let data = sample_dataset(dist, n, pair_seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[pair_seed, 1]));
            let mut neighbour = data.clone();
            let j = rng.random_range(0..n);
            neighbour[j] = dist.sample(&mut rng);
            let w0 = dist.domain.sample_uniform(&mut rng);
            coupled_distance(&dist.loss, &dist.domain, &w0, eta, &data, &neighbour)
        })
        .collect::<Result<Vec<_>>>()?;
    let (max_observed, max_average) = distances
        .iter()
        .fold((0.0f64, 0.0f64), |(f, a), &(df, da)| (f.max(df), a.max(da)));
    Ok(SensitivityReport {
        pairs: num_pairs,
        max_observed,
        max_average,
        bound: 2.0 * dist.loss.lipschitz * eta,
    })
}
