//! Named problems and algorithms for sweeps, each algorithm paired with the
//! explicit-constant bound it is expected to meet.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;
use crate::losses::{sample_dataset, Example, LossKind, Sampler, SyntheticDistribution};
use crate::noise::NoiseStream;
use crate::optimizers::{
    phased_sgd, phased_sgd_step, psgd, sc_reduction, sc_snowball, sc_weighted_sgd, snowball_sgd, PhasedSgdConfig,
    RunRecord, SnowballVariant,
};
use crate::schedules::{constant_step, snowball_horizon, SZ_BATCH_MULTIPLIER};

/// One `(n, d, ρ)` grid point. `n` is the sample budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
}

/// A family of synthetic distributions indexed by dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `scale/2 ‖w − x‖²` on the centered ball of radius `domain_radius`, with
    /// `x` uniform on the sphere of radius `data_radius` around `center_offset · e₁`.
    QuadraticBall {
        domain_radius: f64,
        center_offset: f64,
        data_radius: f64,
        scale: f64,
    },
    /// Squared loss with labels `⟨a, weight_norm · e₁⟩ + U[−noise, noise]`.
    LinearRegression {
        domain_radius: f64,
        feature_radius: f64,
        weight_norm: f64,
        label_noise: f64,
    },
    /// One-dimensional `|a w − y|` with `y = a · median + U[−noise, noise]`.
    AbsoluteDeviation {
        domain_radius: f64,
        feature_radius: f64,
        median: f64,
        label_noise: f64,
    },
}

fn axis(d: usize, value: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[0] = value;
    v
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::QuadraticBall { .. } => "quadratic",
            ProblemSpec::LinearRegression { .. } => "linear_regression",
            ProblemSpec::AbsoluteDeviation { .. } => "absolute_deviation",
        }
    }

    pub fn build(&self, d: usize) -> Result<SyntheticDistribution> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        match *self {
            ProblemSpec::QuadraticBall {
                domain_radius,
                center_offset,
                data_radius,
                scale,
            } => SyntheticDistribution::quadratic(
                ConvexDomain::centered_ball(d, domain_radius)?,
                Sampler::UniformSphere {
                    center: axis(d, center_offset),
                    radius: data_radius,
                },
                scale,
            ),
            ProblemSpec::LinearRegression {
                domain_radius,
                feature_radius,
                weight_norm,
                label_noise,
            } => SyntheticDistribution::linear_regression(
                ConvexDomain::centered_ball(d, domain_radius)?,
                feature_radius,
                axis(d, weight_norm),
                label_noise,
            ),
            ProblemSpec::AbsoluteDeviation {
                domain_radius,
                feature_radius,
                median,
                label_noise,
            } => {
                if d != 1 {
                    return Err(Error::InvalidArgument(format!("absolute deviation needs d = 1, got {d}")));
                }
                SyntheticDistribution::absolute_deviation(
                    ConvexDomain::centered_ball(1, domain_radius)?,
                    feature_radius,
                    vec![median],
                    label_noise,
                )
            }
        }
    }

    /// `−R e₁`, a boundary point of the domain.
    pub fn start(&self, d: usize) -> Vec<f64> {
        let r = match *self {
            ProblemSpec::QuadraticBall { domain_radius, .. }
            | ProblemSpec::LinearRegression { domain_radius, .. }
            | ProblemSpec::AbsoluteDeviation { domain_radius, .. } => domain_radius,
        };
        axis(d, -r)
    }
}

/// Knobs that replace an algorithm's default parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub eta: Option<f64>,
    pub noise_multiplier: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    SnowballSz,
    SnowballJnn,
    PhasedSgd,
    Psgd,
    ScSnowball,
    ScWeightedSgd,
    ScReduction,
}

/// Evaluated output of one run.
#[derive(Debug, Clone)]
pub struct Trial {
    pub excess: f64,
    pub samples_used: usize,
    pub record: RunRecord,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 7] = [
        AlgorithmKind::SnowballSz,
        AlgorithmKind::SnowballJnn,
        AlgorithmKind::PhasedSgd,
        AlgorithmKind::Psgd,
        AlgorithmKind::ScSnowball,
        AlgorithmKind::ScWeightedSgd,
        AlgorithmKind::ScReduction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::SnowballSz => "snowball-sz",
            AlgorithmKind::SnowballJnn => "snowball-jnn",
            AlgorithmKind::PhasedSgd => "phased-sgd",
            AlgorithmKind::Psgd => "psgd",
            AlgorithmKind::ScSnowball => "sc-snowball",
            AlgorithmKind::ScWeightedSgd => "sc-weighted-sgd",
            AlgorithmKind::ScReduction => "sc-reduction",
        }
    }

    fn needs_strong_convexity(self) -> bool {
        matches!(
            self,
            AlgorithmKind::ScSnowball | AlgorithmKind::ScWeightedSgd | AlgorithmKind::ScReduction
        )
    }

    /// Checks that the overrides mean something for this algorithm.
    pub fn check_overrides(self, overrides: &Overrides) -> Result<()> {
        let takes_eta = matches!(
            self,
            AlgorithmKind::PhasedSgd | AlgorithmKind::Psgd | AlgorithmKind::ScWeightedSgd
        );
        let takes_noise = matches!(self, AlgorithmKind::PhasedSgd | AlgorithmKind::ScReduction);
        if overrides.eta.is_some() && !takes_eta {
            return Err(Error::InvalidArgument(format!("{} does not take an eta override", self.name())));
        }
        if overrides.noise_multiplier.is_some() && !takes_noise {
            return Err(Error::InvalidArgument(format!(
                "{} does not take a noise_multiplier override",
                self.name()
            )));
        }
        if let Some(eta) = overrides.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidArgument(format!("eta override must be positive, got {eta}")));
            }
        }
        if let Some(m) = overrides.noise_multiplier {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise_multiplier must be nonnegative, got {m}")));
            }
        }
        Ok(())
    }

    fn horizon(self, point: GridPoint) -> Result<usize> {
        let m = match self {
            AlgorithmKind::SnowballSz | AlgorithmKind::ScSnowball => SZ_BATCH_MULTIPLIER,
            AlgorithmKind::SnowballJnn => SnowballVariant::Jnn.multiplier(),
            _ => return Ok(point.n),
        };
        snowball_horizon(point.n, point.d, point.rho, m)?.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{} cannot take a single step with n = {}, d = {}, rho = {}",
                self.name(),
                point.n,
                point.d,
                point.rho
            ))
        })
    }

    /// Examples one run consumes; at most `point.n`.
    pub fn samples_required(self, dist: &SyntheticDistribution, point: GridPoint) -> Result<usize> {
        let steps = self.horizon(point)?;
        Ok(match self {
            AlgorithmKind::SnowballSz | AlgorithmKind::SnowballJnn => {
                let variant = self.variant();
                variant
                    .schedule(steps, point.d, point.rho, dist.diameter(), dist.loss.lipschitz)?
                    .total_samples()
            }
            AlgorithmKind::ScSnowball => {
                crate::schedules::snowball_batches(steps, point.d, point.rho, SZ_BATCH_MULTIPLIER)?
                    .iter()
                    .sum()
            }
            _ => point.n,
        })
    }

    fn variant(self) -> SnowballVariant {
        match self {
            AlgorithmKind::SnowballJnn => SnowballVariant::Jnn,
            _ => SnowballVariant::Sz,
        }
    }

    /// Checks that the algorithm applies to `dist` at `point` and returns
    /// the bound its run will be compared with.
    pub fn validate(self, dist: &SyntheticDistribution, point: GridPoint, overrides: &Overrides) -> Result<f64> {
        self.check_overrides(overrides)?;
        if dist.optimum.is_none() {
            return Err(Error::NoClosedForm("the population optimum"));
        }
        if !(point.rho > 0.0) || point.n == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid point needs n ≥ 1 and rho > 0, got n = {}, rho = {}",
                point.n, point.rho
            )));
        }
        if point.d != dist.dimension() {
            return Err(Error::DimensionMismatch {
                expected: point.d,
                actual: dist.dimension(),
            });
        }
        if self.needs_strong_convexity() && !(dist.loss.strong_convexity > 0.0) {
            return Err(Error::InvalidLoss(format!("{} needs a strongly convex loss", self.name())));
        }
        if dist.loss.beta().is_none() {
            return Err(Error::NonSmoothLoss(self.name()));
        }
        let used = self.samples_required(dist, point)?;
        self.theory_bound(dist, point, used)
    }

    /// The matching guarantee with its explicit constant. `used` is the
    /// number of examples the run consumes.
    pub fn theory_bound(self, dist: &SyntheticDistribution, point: GridPoint, used: usize) -> Result<f64> {
        let d_diam = dist.diameter();
        let l = dist.loss.lipschitz;
        let lambda = dist.loss.strong_convexity;
        let n = used as f64;
        let d = point.d as f64;
        let rho = point.rho;
        let bound = match self {
            AlgorithmKind::SnowballSz => {
                32f64.sqrt() * d_diam * l * (10.0 * n).ln() * (1.0 / n.sqrt() + 2.0 * d.sqrt() / (rho * n))
            }
            AlgorithmKind::SnowballJnn => {
                30.0 * 2f64.sqrt() * d_diam * l * (1.0 / n.sqrt() + 4.0 * (3.0 * d).sqrt() / (rho * n))
            }
            AlgorithmKind::PhasedSgd => 10.0 * l * d_diam * (1.0 / n.sqrt() + d.sqrt() / (rho * n)),
            AlgorithmKind::Psgd => d_diam * l * (2.0 + n.ln()) / n.sqrt(),
            AlgorithmKind::ScSnowball => {
                40.0 * l * l * n.ln().powi(2) / lambda * (1.0 / n + 16.0 * d / (rho * rho * n * n))
            }
            AlgorithmKind::ScWeightedSgd => {
                if used < 2 {
                    return Err(Error::InvalidArgument("weighted SGD needs T > 1".into()));
                }
                5.0 * l * l * n.ln() / (lambda * n)
            }
            AlgorithmKind::ScReduction => {
                let c = PHASED_SGD_CONSTANT;
                8.0 * c * c * l * l / lambda * (1.0 / n + d / (rho * rho * n * n))
            }
        };
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{} has no positive bound at n = {used}",
                self.name()
            )));
        }
        Ok(bound)
    }

    /// Draws the data, runs the algorithm from `w0`, and evaluates the
    /// excess population loss of the iterate its guarantee is about.
    pub fn run(
        self,
        dist: &SyntheticDistribution,
        w0: &[f64],
        point: GridPoint,
        overrides: &Overrides,
        data_seed: u64,
        noise_seed: u64,
    ) -> Result<Trial> {
        let used = self.samples_required(dist, point)?;
        let data = sample_dataset(dist, used, data_seed)?;
        let mut noise = NoiseStream::new(noise_seed);
        let record = self.execute(dist, w0, point, overrides, &data, &mut noise)?;
        let evaluated = match self {
            AlgorithmKind::ScWeightedSgd => record.weighted_average.as_deref(),
            _ => Some(record.final_iterate.as_slice()),
        }
        .ok_or_else(|| Error::InvalidArgument("run returned no iterate to evaluate".into()))?;
        let excess = dist
            .excess_loss(evaluated)
            .ok_or(Error::NoClosedForm("the population optimum"))?;
        Ok(Trial {
            excess,
            samples_used: used,
            record,
        })
    }

    fn execute(
        self,
        dist: &SyntheticDistribution,
        w0: &[f64],
        point: GridPoint,
        overrides: &Overrides,
        data: &[Example],
        noise: &mut NoiseStream,
    ) -> Result<RunRecord> {
        let (loss, domain) = (&dist.loss, &dist.domain);
        let (diam, l) = (dist.diameter(), loss.lipschitz);
        match self {
            AlgorithmKind::SnowballSz | AlgorithmKind::SnowballJnn => {
                let steps = self.horizon(point)?;
                snowball_sgd(data, loss, domain, w0, self.variant(), steps, point.rho, noise)
            }
            AlgorithmKind::PhasedSgd => {
                let eta = overrides
                    .eta
                    .unwrap_or_else(|| phased_sgd_step(diam, l, data.len(), point.d, point.rho));
                let mut config = PhasedSgdConfig::new(eta, point.rho);
                config.noise_multiplier = overrides.noise_multiplier.unwrap_or(1.0);
                phased_sgd(data, loss, domain, w0, config, noise)
            }
            AlgorithmKind::Psgd => {
                let steps = match overrides.eta {
                    Some(eta) => vec![eta; data.len()],
                    None => constant_step(data.len(), diam, l)?,
                };
                psgd(data, loss, domain, w0, &steps)
            }
            AlgorithmKind::ScSnowball => {
                let steps = self.horizon(point)?;
                sc_snowball(data, loss, domain, w0, steps, point.rho, noise)
            }
            AlgorithmKind::ScWeightedSgd => sc_weighted_sgd(data, loss, domain, w0, 0.0, overrides.eta, noise),
            AlgorithmKind::ScReduction => {
                let multiplier = overrides.noise_multiplier.unwrap_or(1.0);
                let inner = |block: &[Example], start: &[f64], stream: &mut NoiseStream| {
                    let eta = phased_sgd_step(diam, l, block.len(), point.d, point.rho);
                    let mut config = PhasedSgdConfig::new(eta, point.rho);
                    config.noise_multiplier = multiplier;
                    phased_sgd(block, loss, domain, start, config, stream)
                };
                sc_reduction(data, loss, domain, w0, &inner, noise)
            }
        }
    }
}

/// Constant in the Phased-SGD guarantee `c · LD (1/√n + √d/(ρn))`.
pub const PHASED_SGD_CONSTANT: f64 = 10.0;

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = AlgorithmKind::ALL.iter().map(|a| a.name()).collect();
                Error::InvalidArgument(format!("unknown algorithm {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Loss-family label used in sweep results.
pub(crate) fn loss_label(dist: &SyntheticDistribution) -> &'static str {
    match dist.loss.kind {
        LossKind::Quadratic { .. } => "quadratic",
        LossKind::LinearRegression => "linear_regression",
        LossKind::Logistic => "logistic",
        LossKind::AbsoluteDeviation => "absolute_deviation",
    }
}
