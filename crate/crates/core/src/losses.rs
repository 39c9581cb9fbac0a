//! Per-example convex losses with declared constants, and synthetic data
//! distributions whose population minimizers are known.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{unit_vector, ConvexDomain};
use crate::vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    /// Unused by the quadratic family.
    #[serde(default)]
    pub label: f64,
}

impl Example {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self { features, label }
    }

    pub fn point(features: Vec<f64>) -> Self {
        Self { features, label: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `scale/2 · ‖w − x‖²`
    Quadratic { scale: f64 },
    /// `½ (⟨a, w⟩ − b)²`
    LinearRegression,
    /// `ln(1 + exp(−b ⟨a, w⟩))` with `b ∈ {−1, +1}`
    Logistic,
    /// `|⟨a, w⟩ − b|`
    AbsoluteDeviation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Smooth(f64),
    NonSmooth,
}

impl Smoothness {
    pub fn beta(self) -> Option<f64> {
        match self {
            Smoothness::Smooth(b) => Some(b),
            Smoothness::NonSmooth => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFamily {
    pub kind: LossKind,
    pub lipschitz: f64,
    pub smoothness: Smoothness,
    pub strong_convexity: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{-x})` without overflow.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LossFamily {
    pub fn new(kind: LossKind, lipschitz: f64, smoothness: Smoothness, strong_convexity: f64) -> Result<Self> {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidLoss(format!("lipschitz constant {lipschitz} is invalid")));
        }
        if !(strong_convexity >= 0.0) {
            return Err(Error::InvalidLoss("strong convexity must be nonnegative".into()));
        }
        match (kind, smoothness) {
            (LossKind::AbsoluteDeviation, Smoothness::Smooth(_)) => {
                return Err(Error::InvalidLoss("absolute deviation is not smooth".into()))
            }
            (LossKind::Quadratic { scale }, _) if !(scale > 0.0) => {
                return Err(Error::InvalidLoss("quadratic scale must be positive".into()))
            }
            (_, Smoothness::Smooth(beta)) if !(beta >= strong_convexity) => {
                return Err(Error::InvalidLoss(format!(
                    "strong convexity {strong_convexity} exceeds smoothness {beta}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            lipschitz,
            smoothness,
            strong_convexity,
        })
    }

    pub fn beta(&self) -> Option<f64> {
        self.smoothness.beta()
    }

    pub fn value(&self, w: &[f64], ex: &Example) -> Result<f64> {
        check_dim(w.len(), ex.features.len())?;
        Ok(self.value_unchecked(w, ex))
    }

    pub(crate) fn value_unchecked(&self, w: &[f64], ex: &Example) -> f64 {
        let x = &ex.features;
        match self.kind {
            LossKind::Quadratic { scale } => {
                let d = vector::distance(w, x);
                0.5 * scale * d * d
            }
            LossKind::LinearRegression => {
                let r = vector::dot(w, x) - ex.label;
                0.5 * r * r
            }
            LossKind::Logistic => softplus(-ex.label * vector::dot(w, x)),
            LossKind::AbsoluteDeviation => (vector::dot(w, x) - ex.label).abs(),
        }
    }

    /// Gradient (a subgradient with `sign(0) = 0` for absolute deviation).
    pub fn grad(&self, w: &[f64], ex: &Example) -> Result<Vec<f64>> {
        check_dim(w.len(), ex.features.len())?;
        let mut out = vec![0.0; w.len()];
        self.add_grad(w, ex, 1.0, &mut out);
        Ok(out)
    }

    /// `out += weight · ∇f(w, ex)` without dimension checks.
    pub(crate) fn add_grad(&self, w: &[f64], ex: &Example, weight: f64, out: &mut [f64]) {
        let x = &ex.features;
        match self.kind {
            LossKind::Quadratic { scale } => {
                for ((o, wi), xi) in out.iter_mut().zip(w).zip(x) {
                    *o += weight * scale * (wi - xi);
                }
            }
            LossKind::LinearRegression => {
                let r = vector::dot(w, x) - ex.label;
                vector::axpy(weight * r, x, out);
            }
            LossKind::Logistic => {
                let m = ex.label * vector::dot(w, x);
                vector::axpy(-weight * ex.label * sigmoid(-m), x, out);
            }
            LossKind::AbsoluteDeviation => {
                let s = sign(vector::dot(w, x) - ex.label);
                vector::axpy(weight * s, x, out);
            }
        }
    }

    /// Mean gradient over a nonempty batch.
    pub fn batch_grad(&self, w: &[f64], batch: &[Example]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for ex in batch {
            check_dim(w.len(), ex.features.len())?;
        }
        let mut out = vec![0.0; w.len()];
        self.batch_grad_into(w, batch, &mut out);
        Ok(out)
    }

    /// Overwrites `out` with the mean gradient; `batch` must be nonempty and well-shaped.
    pub(crate) fn batch_grad_into(&self, w: &[f64], batch: &[Example], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let weight = 1.0 / batch.len() as f64;
        for ex in batch {
            self.add_grad(w, ex, weight, out);
        }
    }

    pub fn empirical_loss(&self, w: &[f64], data: &[Example]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut total = 0.0;
        for ex in data {
            total += self.value(w, ex)?;
        }
        Ok(total / data.len() as f64)
    }
}

/// How examples are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    PointMass { point: Vec<f64> },
    /// Isotropic Gaussian `N(mean, std_dev² I)`.
    Gaussian { mean: Vec<f64>, std_dev: f64 },
    /// Uniform on the sphere `‖x − center‖ = radius`.
    UniformSphere { center: Vec<f64>, radius: f64 },
    /// Features uniform on the sphere of radius `feature_radius`,
    /// label `⟨weights, a⟩ + U[−label_noise, label_noise]`.
    LinearModel {
        feature_radius: f64,
        weights: Vec<f64>,
        label_noise: f64,
    },
    /// Features uniform on the sphere of radius `feature_radius`,
    /// label `+1` with probability `sigmoid(⟨weights, a⟩)`, else `−1`.
    LogisticModel { feature_radius: f64, weights: Vec<f64> },
}

impl Sampler {
    pub fn dimension(&self) -> usize {
        match self {
            Sampler::PointMass { point } => point.len(),
            Sampler::Gaussian { mean, .. } => mean.len(),
            Sampler::UniformSphere { center, .. } => center.len(),
            Sampler::LinearModel { weights, .. } | Sampler::LogisticModel { weights, .. } => weights.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Example {
        match self {
            Sampler::PointMass { point } => Example::point(point.clone()),
            Sampler::Gaussian { mean, std_dev } => Example::point(
                mean.iter()
                    .map(|m| m + std_dev * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
            Sampler::UniformSphere { center, radius } => {
                let u = unit_vector(center.len(), rng);
                Example::point(center.iter().zip(u).map(|(c, x)| c + radius * x).collect())
            }
            Sampler::LinearModel {
                feature_radius,
                weights,
                label_noise,
            } => {
                let mut a = unit_vector(weights.len(), rng);
                vector::scale(*feature_radius, &mut a);
                let noise = label_noise * (2.0 * rng.random::<f64>() - 1.0);
                let b = vector::dot(&a, weights) + noise;
                Example::new(a, b)
            }
            Sampler::LogisticModel {
                feature_radius,
                weights,
            } => {
                let mut a = unit_vector(weights.len(), rng);
                vector::scale(*feature_radius, &mut a);
                let p = sigmoid(vector::dot(&a, weights));
                let b = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
                Example::new(a, b)
            }
        }
    }
}

/// A loss family, a feasible set and a data sampler, together with the
/// population minimizer and optimum when they are available in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDistribution {
    pub loss: LossFamily,
    pub domain: ConvexDomain,
    pub sampler: Sampler,
    /// `None` means the minimizer is only available numerically.
    pub minimizer: Option<Vec<f64>>,
    /// `None` means `F*` is only available numerically.
    pub optimum: Option<f64>,
}

/// Standard deviations beyond which a Gaussian sample is treated as an outlier
/// when declaring the Lipschitz constant of a quadratic with Gaussian data.
const GAUSSIAN_TAIL: f64 = 6.0;

impl SyntheticDistribution {
    /// `scale/2 · ‖w − x‖²` over `domain`. The declared Lipschitz constant is
    /// `scale · (max_{w∈K} ‖w − c‖ + r)` where the data lie within `r` of `c`.
    /// For Gaussian data `r` is a high-probability radius.
    pub fn quadratic(domain: ConvexDomain, sampler: Sampler, scale: f64) -> Result<Self> {
        check_dim(domain.dimension(), sampler.dimension())?;
        let d = domain.dimension() as f64;
        let (center, radius, trace) = match &sampler {
            Sampler::PointMass { point } => (point.clone(), 0.0, 0.0),
            Sampler::Gaussian { mean, std_dev } => {
                (mean.clone(), std_dev * (d.sqrt() + GAUSSIAN_TAIL), d * std_dev * std_dev)
            }
            Sampler::UniformSphere { center, radius } => (center.clone(), *radius, radius * radius),
            _ => {
                return Err(Error::InvalidLoss(
                    "quadratic loss needs a point-mass, Gaussian or sphere sampler".into(),
                ))
            }
        };
        let lipschitz = scale * (domain.max_distance_from(&center)? + radius);
        let loss = LossFamily::new(
            LossKind::Quadratic { scale },
            lipschitz,
            Smoothness::Smooth(scale),
            scale,
        )?;
        let w_star = domain.project(&center)?;
        let gap = vector::distance(&w_star, &center);
        let optimum = 0.5 * scale * (gap * gap + trace);
        Ok(Self {
            loss,
            domain,
            sampler,
            minimizer: Some(w_star),
            optimum: Some(optimum),
        })
    }

    pub fn linear_regression(
        domain: ConvexDomain,
        feature_radius: f64,
        weights: Vec<f64>,
        label_noise: f64,
    ) -> Result<Self> {
        check_dim(domain.dimension(), weights.len())?;
        positive("feature_radius", feature_radius)?;
        nonnegative("label_noise", label_noise)?;
        let a = feature_radius;
        let w_max = domain.max_distance_from(&vec![0.0; weights.len()])?;
        let lipschitz = a * (a * w_max + a * vector::norm(&weights) + label_noise);
        let loss = LossFamily::new(LossKind::LinearRegression, lipschitz, Smoothness::Smooth(a * a), 0.0)?;
        let w_star = domain.project(&weights)?;
        let mut dist = Self {
            loss,
            domain,
            sampler: Sampler::LinearModel {
                feature_radius,
                weights,
                label_noise,
            },
            minimizer: Some(w_star.clone()),
            optimum: None,
        };
        dist.optimum = dist.population_value(&w_star);
        Ok(dist)
    }

    pub fn logistic(domain: ConvexDomain, feature_radius: f64, weights: Vec<f64>) -> Result<Self> {
        check_dim(domain.dimension(), weights.len())?;
        positive("feature_radius", feature_radius)?;
        let a = feature_radius;
        let loss = LossFamily::new(LossKind::Logistic, a, Smoothness::Smooth(a * a / 4.0), 0.0)?;
        // A well-specified logistic model is minimized at its generating weights.
        let minimizer = domain.contains(&weights).then(|| weights.clone());
        Ok(Self {
            loss,
            domain,
            sampler: Sampler::LogisticModel {
                feature_radius,
                weights,
            },
            minimizer,
            optimum: None,
        })
    }

    /// `|⟨a, w⟩ − b|` with the linear-model sampler. The population loss is
    /// closed-form in one dimension only.
    pub fn absolute_deviation(
        domain: ConvexDomain,
        feature_radius: f64,
        weights: Vec<f64>,
        label_noise: f64,
    ) -> Result<Self> {
        check_dim(domain.dimension(), weights.len())?;
        positive("feature_radius", feature_radius)?;
        positive("label_noise", label_noise)?;
        let loss = LossFamily::new(LossKind::AbsoluteDeviation, feature_radius, Smoothness::NonSmooth, 0.0)?;
        let one_dim = weights.len() == 1;
        let w_star = domain.project(&weights)?;
        let mut dist = Self {
            loss,
            domain,
            sampler: Sampler::LinearModel {
                feature_radius,
                weights,
                label_noise,
            },
            minimizer: one_dim.then(|| w_star.clone()),
            optimum: None,
        };
        if one_dim {
            dist.optimum = dist.population_value(&w_star);
        }
        Ok(dist)
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn diameter(&self) -> f64 {
        self.domain.diameter()
    }

    /// Exact population loss `F(w)` when it has a closed form.
    pub fn population_value(&self, w: &[f64]) -> Option<f64> {
        if w.len() != self.dimension() {
            return None;
        }
        match (&self.loss.kind, &self.sampler) {
            (LossKind::Quadratic { scale }, sampler) => {
                let (center, trace) = match sampler {
                    Sampler::PointMass { point } => (point, 0.0),
                    Sampler::Gaussian { mean, std_dev } => (mean, w.len() as f64 * std_dev * std_dev),
                    Sampler::UniformSphere { center, radius } => (center, radius * radius),
                    _ => return None,
                };
                let gap = vector::distance(w, center);
                Some(0.5 * scale * (gap * gap + trace))
            }
            (
                LossKind::LinearRegression,
                Sampler::LinearModel {
                    feature_radius,
                    weights,
                    label_noise,
                },
            ) => {
                let gap = vector::distance(w, weights);
                let a2 = feature_radius * feature_radius;
                Some(0.5 * (a2 / w.len() as f64 * gap * gap + label_noise * label_noise / 3.0))
            }
            (
                LossKind::AbsoluteDeviation,
                Sampler::LinearModel {
                    feature_radius,
                    weights,
                    label_noise,
                },
            ) if w.len() == 1 => {
                // E|x − u| for u ~ U[−h, h].
                let x = (feature_radius * (w[0] - weights[0])).abs();
                let h = *label_noise;
                Some(if x <= h { (x * x + h * h) / (2.0 * h) } else { x })
            }
            _ => None,
        }
    }

    /// `F(w) − F*` when both are closed-form.
    pub fn excess_loss(&self, w: &[f64]) -> Option<f64> {
        Some(self.population_value(w)? - self.optimum?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Example {
        self.sampler.sample(rng)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")))
    }
}

/// `n` i.i.d. examples, deterministic in `rng_seed`.
pub fn sample_dataset(dist: &SyntheticDistribution, n: usize, rng_seed: u64) -> Result<Vec<Example>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// `F(w)`: exact when closed-form (with `std_err = 0`), otherwise a
/// Monte-Carlo average over `num_mc` fresh examples.
pub fn population_loss_estimate(
    dist: &SyntheticDistribution,
    w: &[f64],
    num_mc: usize,
    rng_seed: u64,
) -> Result<LossEstimate> {
    if num_mc < 2 {
        return Err(Error::InvalidArgument("num_mc must be at least 2".into()));
    }
    check_dim(dist.dimension(), w.len())?;
    if let Some(mean) = dist.population_value(w) {
        return Ok(LossEstimate { mean, std_err: 0.0 });
    }
    monte_carlo_loss(dist, w, num_mc, rng_seed)
}

/// Plain Monte-Carlo estimate of `F(w)`, ignoring any closed form.
pub fn monte_carlo_loss(dist: &SyntheticDistribution, w: &[f64], num_mc: usize, rng_seed: u64) -> Result<LossEstimate> {
    if num_mc < 2 {
        return Err(Error::InvalidArgument("num_mc must be at least 2".into()));
    }
    check_dim(dist.dimension(), w.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..num_mc {
        let v = dist.loss.value_unchecked(w, &dist.sample(&mut rng));
        sum += v;
        sum_sq += v * v;
    }
    let n = num_mc as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(LossEstimate {
        mean,
        std_err: (var / n).sqrt(),
    })
}

/// Writes examples as CSV with columns `x0..x{d-1},label`.
pub fn write_dataset<W: Write>(writer: W, data: &[Example]) -> Result<()> {
    let d = data.first().map_or(0, |e| e.features.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for ex in data {
        check_dim(d, ex.features.len())?;
        let mut row: Vec<String> = ex.features.iter().map(|v| v.to_string()).collect();
        row.push(ex.label.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<Example>> {
    let mut r = csv::Reader::from_reader(reader);
    let d = r.headers()?.len().saturating_sub(1);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let values = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad dataset value: {e}")))?;
        check_dim(d + 1, values.len())?;
        let label = values[d];
        out.push(Example::new(values[..d].to_vec(), label));
    }
    Ok(out)
}
