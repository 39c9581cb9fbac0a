//! Convex feasible sets, exact Euclidean projections, and contraction checks.
//!
//! Only Euclidean balls and axis-aligned boxes are supported. Both have
//! closed-form projections, and both projections are 1-Lipschitz, which is
//! what makes projected noisy SGD a contractive noisy iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector;

/// Absolute membership tolerance (per coordinate for boxes, relative in norm for balls).
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-12;

/// Tolerance used by ratio tests such as [`check_contraction`].
pub const RATIO_TOLERANCE: f64 = 1e-9;

/// Pairs closer than this are skipped by [`check_contraction`].
pub const MIN_PAIR_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

/// A closed convex set `K ⊆ R^d` with an exact projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Shape", into = "Shape")]
pub struct ConvexDomain {
    shape: Shape,
}

impl TryFrom<Shape> for ConvexDomain {
    type Error = Error;

    fn try_from(shape: Shape) -> Result<Self> {
        match shape {
            Shape::Ball { center, radius } => ConvexDomain::ball(center, radius),
            Shape::Box { lower, upper } => ConvexDomain::boxed(lower, upper),
        }
    }
}

impl From<ConvexDomain> for Shape {
    fn from(domain: ConvexDomain) -> Shape {
        domain.shape
    }
}

impl ConvexDomain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDomain("ball center must be finite".into()));
        }
        Ok(Self {
            shape: Shape::Ball { center, radius },
        })
    }

    /// Ball of the given radius centred at the origin of `R^dim`.
    pub fn centered_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(vec![0.0; dim], radius)
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        check_dim(lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidDomain("box bounds must be finite".into()));
            }
            if lo > hi {
                return Err(Error::InvalidDomain(format!(
                    "lower[{i}] = {lo} exceeds upper[{i}] = {hi}"
                )));
            }
        }
        Ok(Self {
            shape: Shape::Box { lower, upper },
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dimension(&self) -> usize {
        match &self.shape {
            Shape::Ball { center, .. } => center.len(),
            Shape::Box { lower, .. } => lower.len(),
        }
    }

    /// Euclidean diameter `D`.
    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Box { lower, upper } => vector::distance(lower, upper),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Ball { center, .. } => center.clone(),
            Shape::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect(),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, point: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dimension(), point.len())?;
        let mut out = point.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Projection without the dimension check; callers guarantee `point.len() == d`.
    pub(crate) fn project_in_place(&self, point: &mut [f64]) {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let dist = vector::distance(point, center);
                if dist > *radius {
                    let ratio = radius / dist;
                    for (p, c) in point.iter_mut().zip(center) {
                        *p = c + (*p - c) * ratio;
                    }
                }
            }
            Shape::Box { lower, upper } => {
                for ((p, lo), hi) in point.iter_mut().zip(lower).zip(upper) {
                    *p = p.clamp(*lo, *hi);
                }
            }
        }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        if point.len() != self.dimension() {
            return false;
        }
        match &self.shape {
            Shape::Ball { center, radius } => {
                vector::distance(point, center) <= radius * (1.0 + MEMBERSHIP_TOLERANCE)
            }
            Shape::Box { lower, upper } => point
                .iter()
                .zip(lower)
                .zip(upper)
                .all(|((p, lo), hi)| {
                    *p >= lo - MEMBERSHIP_TOLERANCE && *p <= hi + MEMBERSHIP_TOLERANCE
                }),
        }
    }

    /// `max_{w ∈ K} ‖w − point‖`.
    pub fn max_distance_from(&self, point: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), point.len())?;
        Ok(match &self.shape {
            Shape::Ball { center, radius } => vector::distance(center, point) + radius,
            Shape::Box { lower, upper } => point
                .iter()
                .zip(lower)
                .zip(upper)
                .map(|((p, lo), hi)| {
                    let far = (p - lo).abs().max((p - hi).abs());
                    far * far
                })
                .sum::<f64>()
                .sqrt(),
        })
    }

    /// Uniform sample from the set (balls) or the box itself.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let d = center.len();
                let direction = unit_vector(d, rng);
                let u: f64 = rng.random();
                let r = radius * u.powf(1.0 / d as f64);
                center
                    .iter()
                    .zip(direction)
                    .map(|(c, x)| c + r * x)
                    .collect()
            }
            Shape::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
        }
    }
}

/// Uniformly distributed point on the unit sphere of `R^d`.
pub(crate) fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = vector::norm(&v);
        if n > 1e-300 {
            vector::scale(1.0 / n, &mut v);
            return v;
        }
    }
}

type MapFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A composable map `R^d → R^d`.
pub struct PointMap {
    f: Box<MapFn>,
}

impl PointMap {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { f: Box::new(f) }
    }

    pub fn identity() -> Self {
        Self::new(|w| w.to_vec())
    }

    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        (self.f)(w)
    }

    /// `w ↦ next(self(w))`
    pub fn then(self, next: PointMap) -> PointMap {
        PointMap::new(move |w| next.apply(&self.apply(w)))
    }
}

impl std::fmt::Debug for PointMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PointMap")
    }
}

/// The gradient step `w ↦ w − η ∇F(w)`.
///
/// Contractivity is not enforced here; it holds for convex β-smooth `F` when
/// `η ≤ 2/β` and can be falsified with [`check_contraction`].
pub fn gradient_step_map<G>(gradient: G, eta: f64) -> Result<PointMap>
where
    G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
{
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step size must be nonnegative, got {eta}"
        )));
    }
    Ok(PointMap::new(move |w| {
        let g = gradient(w);
        let mut out = w.to_vec();
        vector::axpy(-eta, &g, &mut out);
        out
    }))
}

/// The per-step map of projected noisy SGD viewed as a contractive noisy
/// iteration: `w ↦ Π(w) − η ∇F(Π(w))`.
pub fn projected_gradient_step_map<G>(domain: ConvexDomain, gradient: G, eta: f64) -> Result<PointMap>
where
    G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
{
    let step = gradient_step_map(gradient, eta)?;
    let projection = PointMap::new(move |w| {
        let mut p = w.to_vec();
        domain.project_in_place(&mut p);
        p
    });
    Ok(projection.then(step))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub max_ratio: f64,
    pub witness_pair: (Vec<f64>, Vec<f64>),
    pub pairs_checked: usize,
}

impl ContractionReport {
    pub fn is_contractive(&self) -> bool {
        self.max_ratio <= 1.0 + RATIO_TOLERANCE
    }
}

/// Sampling-based falsifier for the 1-Lipschitz property of `map` over the
/// domain's bounding region.
pub fn check_contraction(
    map: &PointMap,
    domain: &ConvexDomain,
    num_pairs: usize,
    rng_seed: u64,
) -> Result<ContractionReport> {
    if num_pairs == 0 {
        return Err(Error::InvalidArgument("num_pairs must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut checked = 0;
    for _ in 0..num_pairs {
        let x = domain.sample_uniform(&mut rng);
        let y = domain.sample_uniform(&mut rng);
        let gap = vector::distance(&x, &y);
        if gap <= MIN_PAIR_DISTANCE {
            continue;
        }
        checked += 1;
        let ratio = vector::distance(&map.apply(&x), &map.apply(&y)) / gap;
        if best.as_ref().map_or(true, |(r, _, _)| ratio > *r) {
            best = Some((ratio, x, y));
        }
    }
    let (max_ratio, x, y) = best.unwrap_or((0.0, Vec::new(), Vec::new()));
    Ok(ContractionReport {
        max_ratio,
        witness_pair: (x, y),
        pairs_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_ball_2d() -> ConvexDomain {
        ConvexDomain::centered_ball(2, 1.0).unwrap()
    }

    #[test]
    fn interior_point_is_fixed() {
        assert_eq!(unit_ball_2d().project(&[0.5, 0.0]).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn exterior_point_is_rescaled_radially() {
        let p = unit_ball_2d().project(&[3.0, 4.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        // KKT: the residual (x - p) is a nonnegative multiple of the outward normal p.
        let residual = [3.0 - p[0], 4.0 - p[1]];
        let cross = residual[0] * p[1] - residual[1] * p[0];
        assert!(cross.abs() < 1e-12);
        assert!(vector::dot(&residual, &p) > 0.0);
    }

    #[test]
    fn box_projection_clamps() {
        let b = ConvexDomain::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(b.project(&[2.0, -1.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(
            unit_ball_2d().project(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn constructors_enforce_invariants() {
        assert!(ConvexDomain::ball(vec![0.0], 0.0).is_err());
        assert!(ConvexDomain::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(ConvexDomain::boxed(vec![0.0], vec![0.0, 1.0]).is_err());
        let b = ConvexDomain::boxed(vec![0.0, 0.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(b.diameter(), 5.0);
        assert_eq!(unit_ball_2d().diameter(), 2.0);
    }

    #[test]
    fn serde_validates_shapes() {
        let ok: ConvexDomain =
            serde_json::from_str(r#"{"kind":"ball","center":[0,0],"radius":2}"#).unwrap();
        assert_eq!(ok.diameter(), 4.0);
        let bad = serde_json::from_str::<ConvexDomain>(r#"{"kind":"ball","center":[0],"radius":-1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn gradient_step_examples() {
        let unit = gradient_step_map(|w| w.to_vec(), 1.0).unwrap();
        assert_eq!(unit.apply(&[3.0, -2.0]), vec![0.0, 0.0]);
        let zero = gradient_step_map(|w| w.to_vec(), 0.0).unwrap();
        assert_eq!(zero.apply(&[3.0, -2.0]), vec![3.0, -2.0]);
        let c = [1.0, -3.0];
        let half = gradient_step_map(move |w| vector::sub(w, &c), 0.5).unwrap();
        let out = half.apply(&[5.0, 1.0]);
        assert_eq!(out, vec![3.0, -1.0]);
    }

    #[test]
    fn contraction_examples() {
        let d = unit_ball_2d();
        let id = check_contraction(&PointMap::identity(), &d, 100, 1).unwrap();
        assert_eq!(id.max_ratio, 1.0);
        let halve = PointMap::new(|w| w.iter().map(|x| x / 2.0).collect());
        let r = check_contraction(&halve, &d, 100, 2).unwrap();
        assert!((r.max_ratio - 0.5).abs() < 1e-12);
        let overshoot = gradient_step_map(|w| w.to_vec(), 3.0).unwrap();
        let r = check_contraction(&overshoot, &d, 100, 3).unwrap();
        assert!((r.max_ratio - 2.0).abs() < 1e-9);
        assert!(!r.is_contractive());
        assert!(check_contraction(&halve, &d, 0, 0).is_err());
    }

    #[test]
    fn quadratic_steps_below_threshold_contract() {
        let d = ConvexDomain::centered_ball(3, 2.0).unwrap();
        // F(w) = ½ wᵀ diag(4, 1, 0.25) w, β = 4.
        let h = [4.0, 1.0, 0.25];
        for eta in [0.1, 0.25, 0.5] {
            let map = gradient_step_map(
                move |w| w.iter().zip(h).map(|(x, c)| c * x).collect(),
                eta,
            )
            .unwrap();
            assert!(check_contraction(&map, &d, 500, 9).unwrap().is_contractive());
        }
    }

    fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0..5.0f64, d)
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_contractive(
            x in point(3), y in point(3), r in 0.1..3.0f64, use_box in any::<bool>()
        ) {
            let d = if use_box {
                ConvexDomain::boxed(vec![-r, -1.0, 0.0], vec![r, 1.0, 2.0 * r]).unwrap()
            } else {
                ConvexDomain::ball(vec![0.5, -0.5, 0.0], r).unwrap()
            };
            let px = d.project(&x).unwrap();
            let py = d.project(&y).unwrap();
            prop_assert!(d.contains(&px));
            let ppx = d.project(&px).unwrap();
            prop_assert!(vector::distance(&px, &ppx) <= 1e-12);
            prop_assert!(vector::distance(&px, &py) <= vector::distance(&x, &y) + 1e-12);
        }
    }
}
