//! Rényi-DP accounting for Gaussian noise.
//!
//! Every mechanism here has an RDP curve of the form `α ↦ α ρ²/2`, so a
//! budget is the single scalar `ρ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedules::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrivacyBudget {
    /// `(α, α ρ²/2)`-RDP for every `α ≥ 1`.
    Finite { rho: f64 },
    /// No finite guarantee (some step releases an un-noised quantity).
    Infinite,
}

impl PrivacyBudget {
    pub fn from_rho(rho: f64) -> Result<Self> {
        if rho >= 0.0 && rho.is_finite() {
            Ok(PrivacyBudget::Finite { rho })
        } else if rho == f64::INFINITY {
            Ok(PrivacyBudget::Infinite)
        } else {
            Err(Error::InvalidArgument(format!("rho must be nonnegative, got {rho}")))
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match self {
            PrivacyBudget::Finite { rho } => Some(*rho),
            PrivacyBudget::Infinite => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, PrivacyBudget::Finite { .. })
    }

    /// RDP order-`α` level `α ρ²/2`.
    pub fn rdp_epsilon(&self, alpha: f64) -> f64 {
        match self {
            PrivacyBudget::Finite { rho } => alpha * rho * rho / 2.0,
            PrivacyBudget::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn value(self) -> f64 {
        match self {
            Divergence::Finite(v) => v,
            Divergence::Infinite => f64::INFINITY,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("Renyi order must be at least 1, got {alpha}")))
    }
}

/// Rényi divergence of order `α` between `N(a, σ²I)` and `N(0, σ²I)`
/// maximized over shifts of norm `a`: `α a² / (2σ²)`.
pub fn gaussian_renyi(shift: f64, sigma: f64, alpha: f64) -> Result<Divergence> {
    check_alpha(alpha)?;
    if !(shift >= 0.0 && sigma >= 0.0) {
        return Err(Error::InvalidArgument("shift and sigma must be nonnegative".into()));
    }
    if shift == 0.0 {
        return Ok(Divergence::Finite(0.0));
    }
    if sigma == 0.0 {
        return Ok(Divergence::Infinite);
    }
    Ok(Divergence::Finite(alpha * shift * shift / (2.0 * sigma * sigma)))
}

/// Privacy of noisy projected SGD by amplification through iteration:
/// `ρ = 2L · max_t η_t / (B_t √(Σ_{s≥t} η_s² σ_s²))`.
///
/// Steps with `η_t = 0` never touch their batch and contribute nothing. A
/// step with `η_t > 0` and no noise at or after it yields an infinite budget.
pub fn pai_rho(schedule: &Schedule, lipschitz: f64) -> Result<PrivacyBudget> {
    if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidArgument(format!("lipschitz must be nonnegative, got {lipschitz}")));
    }
    let eta = schedule.step_sizes();
    let sigma = schedule.noise_scales();
    let batch = schedule.batch_sizes();
    let mut suffix = 0.0;
    let mut worst: f64 = 0.0;
    for t in (0..schedule.len()).rev() {
        suffix += eta[t] * eta[t] * sigma[t] * sigma[t];
        if eta[t] == 0.0 || lipschitz == 0.0 {
            continue;
        }
        if suffix == 0.0 {
            return Ok(PrivacyBudget::Infinite);
        }
        worst = worst.max(eta[t] / (batch[t] as f64 * suffix.sqrt()));
    }
    PrivacyBudget::from_rho(2.0 * lipschitz * worst)
}

/// Per-step map divergences `s_t` and a shift allocation `a_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSequence {
    pub shifts: Vec<f64>,
    pub allocation: Vec<f64>,
}

impl ShiftSequence {
    pub fn new(shifts: Vec<f64>, allocation: Vec<f64>) -> Result<Self> {
        if shifts.len() != allocation.len() {
            return Err(Error::InvalidArgument(format!(
                "{} shifts but {} allocations",
                shifts.len(),
                allocation.len()
            )));
        }
        if shifts.iter().chain(&allocation).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("shifts and allocations must be nonnegative".into()));
        }
        Ok(Self { shifts, allocation })
    }

    /// Running slack `z_t = Σ_{i≤t} s_i − Σ_{i≤t} a_i`.
    pub fn slack(&self) -> Vec<f64> {
        let mut z = 0.0;
        self.shifts
            .iter()
            .zip(&self.allocation)
            .map(|(s, a)| {
                z += s - a;
                z
            })
            .collect()
    }
}

/// `Σ_t α a_t² / (2σ_t²)`, valid when the allocation never overspends the shifts.
pub fn pai_divergence_general(shifts: &ShiftSequence, noise_sigmas: &[f64], alpha: f64) -> Result<Divergence> {
    check_alpha(alpha)?;
    if noise_sigmas.len() != shifts.shifts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} noise scales for {} steps",
            noise_sigmas.len(),
            shifts.shifts.len()
        )));
    }
    let scale: f64 = 1.0 + shifts.shifts.iter().sum::<f64>();
    for (index, z) in shifts.slack().into_iter().enumerate() {
        if z < -1e-12 * scale {
            return Err(Error::InvalidAllocation { index: index + 1, slack: z });
        }
    }
    let mut total = 0.0;
    for (a, sigma) in shifts.allocation.iter().zip(noise_sigmas) {
        match gaussian_renyi(*a, *sigma, alpha)? {
            Divergence::Finite(v) => total += v,
            Divergence::Infinite => return Ok(Divergence::Infinite),
        }
    }
    Ok(Divergence::Finite(total))
}

/// A single shift `s` at step `t` (one-based) spread over steps `t..T` in
/// proportion to `σ_i²`.
pub fn optimal_single_shift_allocation(s: f64, t: usize, sigmas: &[f64]) -> Result<ShiftSequence> {
    if t == 0 || t > sigmas.len() {
        return Err(Error::InvalidArgument(format!("step {t} outside 1..={}", sigmas.len())));
    }
    let mut shifts = vec![0.0; sigmas.len()];
    shifts[t - 1] = s;
    let mut allocation = vec![0.0; sigmas.len()];
    if s > 0.0 {
        let total: f64 = sigmas[t - 1..].iter().map(|v| v * v).sum();
        if total == 0.0 {
            return Err(Error::InvalidArgument(format!("no noise at or after step {t}")));
        }
        for i in t - 1..sigmas.len() {
            allocation[i] = s * sigmas[i] * sigmas[i] / total;
        }
    }
    ShiftSequence::new(shifts, allocation)
}

/// Gaussian mechanism with L2 sensitivity `γ` and noise `σ`: `ρ = γ/σ`.
pub fn gaussian_mechanism_budget(sensitivity: f64, sigma: f64) -> Result<PrivacyBudget> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if !(sensitivity >= 0.0) {
        return Err(Error::InvalidArgument("sensitivity must be nonnegative".into()));
    }
    PrivacyBudget::from_rho(sensitivity / sigma)
}

/// Adaptive composition: `ρ = √(Σ ρ_i²)`.
pub fn compose(budgets: &[PrivacyBudget]) -> PrivacyBudget {
    let mut sum = 0.0;
    for b in budgets {
        match b {
            PrivacyBudget::Finite { rho } => sum += rho * rho,
            PrivacyBudget::Infinite => return PrivacyBudget::Infinite,
        }
    }
    PrivacyBudget::Finite { rho: sum.sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpConversion {
    pub epsilon: f64,
    pub delta: f64,
    /// `ρ ≤ √ln(1/δ)`, the regime in which the closed form is tight.
    pub within_regime: bool,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")))
    }
}

/// `ε = ρ²/2 + ρ √(2 ln(1/δ))`.
pub fn rdp_to_dp(budget: PrivacyBudget, delta: f64) -> Result<DpConversion> {
    check_delta(delta)?;
    let log_inv = (1.0 / delta).ln();
    Ok(match budget {
        PrivacyBudget::Finite { rho } => DpConversion {
            epsilon: rho * rho / 2.0 + rho * (2.0 * log_inv).sqrt(),
            delta,
            within_regime: rho <= log_inv.sqrt(),
        },
        PrivacyBudget::Infinite => DpConversion {
            epsilon: f64::INFINITY,
            delta,
            within_regime: false,
        },
    })
}

/// `min_{α>1} α ρ²/2 + ln(1/δ)/(α − 1)`, found numerically.
pub fn rdp_to_dp_optimized(budget: PrivacyBudget, delta: f64) -> Result<f64> {
    match budget {
        PrivacyBudget::Infinite => {
            check_delta(delta)?;
            Ok(f64::INFINITY)
        }
        PrivacyBudget::Finite { rho: 0.0 } => {
            check_delta(delta)?;
            Ok(0.0)
        }
        PrivacyBudget::Finite { .. } => epsilon_from_rdp_curve(|a| budget.rdp_epsilon(a), delta),
    }
}

/// `min_{α>1} ε(α) + ln(1/δ)/(α − 1)` for an RDP curve `ε(α)` whose
/// objective is unimodal in `ln(α − 1)`. Golden-section search.
pub fn epsilon_from_rdp_curve<F: Fn(f64) -> f64>(curve: F, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let log_inv = (1.0 / delta).ln();
    let objective = |u: f64| {
        let m = u.exp();
        curve(1.0 + m) + log_inv / m
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        }
    }
    Ok(f1.min(f2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(T²) evaluation of the amplification-by-iteration maximum.
    fn brute_force_rho(b: &[usize], eta: &[f64], sigma: &[f64], l: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..b.len() {
            let s: f64 = (t..b.len()).map(|u| (eta[u] * sigma[u]).powi(2)).sum();
            worst = worst.max(eta[t] / (b[t] as f64 * s.sqrt()));
        }
        2.0 * l * worst
    }

    /// `(1/(α−1)) ln ∫ p^α q^{1−α}` for `p = N(a, σ²)`, `q = N(0, σ²)` by Simpson's rule.
    fn renyi_by_quadrature(a: f64, sigma: f64, alpha: f64) -> f64 {
        let log_density = |z: f64, mean: f64| {
            -0.5 * ((z - mean) / sigma).powi(2) - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
        };
        let g = |z: f64| alpha * log_density(z, a) + (1.0 - alpha) * log_density(z, 0.0);
        let center = alpha * a;
        let (lo, hi, n) = (center - 40.0 * sigma, center + 40.0 * sigma, 20_000);
        let h = (hi - lo) / n as f64;
        let peak = g(center);
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * (g(lo + i as f64 * h) - peak).exp();
        }
        ((acc * h / 3.0).ln() + peak) / (alpha - 1.0)
    }

    #[test]
    fn gaussian_renyi_examples() {
        assert_eq!(gaussian_renyi(0.0, 0.7, 3.0).unwrap(), Divergence::Finite(0.0));
        assert_eq!(gaussian_renyi(0.5, 0.5, 2.0).unwrap(), Divergence::Finite(1.0));
        assert_eq!(gaussian_renyi(1.0, 1.0, 4.0).unwrap(), Divergence::Finite(2.0));
        assert!((renyi_by_quadrature(1.0, 1.0, 4.0) - 2.0).abs() < 1e-6);
        assert_eq!(gaussian_renyi(1.0, 0.0, 2.0).unwrap(), Divergence::Infinite);
        assert!(gaussian_renyi(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn renyi_matches_quadrature() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let a = rng.random_range(0.0..3.0);
            let sigma = rng.random_range(0.3..3.0);
            let alpha = rng.random_range(1.05..16.0);
            let closed = gaussian_renyi(a, sigma, alpha).unwrap().value();
            assert!((closed - renyi_by_quadrature(a, sigma, alpha)).abs() <= 1e-6);
        }
    }

    #[test]
    fn pai_rho_examples() {
        let (eta, sigma, l) = (0.3, 0.8, 1.7);
        let s = Schedule::constant(vec![1; 10], eta, sigma).unwrap();
        assert!((pai_rho(&s, l).unwrap().rho().unwrap() - 2.0 * l / sigma).abs() < 1e-12);
        let s = Schedule::constant(vec![5; 10], eta, sigma).unwrap();
        assert!((pai_rho(&s, l).unwrap().rho().unwrap() - 2.0 * l / (5.0 * sigma)).abs() < 1e-12);
        let s = Schedule::constant(vec![1; 3], eta, 0.0).unwrap();
        assert_eq!(pai_rho(&s, l).unwrap(), PrivacyBudget::Infinite);
        // Frozen steps never read their batch.
        let s = Schedule::constant(vec![1; 3], 0.0, 0.0).unwrap();
        assert_eq!(pai_rho(&s, l).unwrap(), PrivacyBudget::Finite { rho: 0.0 });
    }

    #[test]
    fn snowball_meets_target() {
        for d in [1, 16, 256] {
            for rho0 in [0.1, 1.0, 10.0] {
                for t in [1usize, 2, 7, 100, 1000] {
                    let s = crate::schedules::snowball_sz_schedule(t, d, rho0, 1.0, 1.0).unwrap();
                    let rho = pai_rho(&s, 1.0).unwrap().rho().unwrap();
                    assert!(rho <= rho0 * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn allocation_examples() {
        let z = optimal_single_shift_allocation(0.0, 2, &[1.0, 1.0, 1.0]).unwrap();
        assert!(z.allocation.iter().all(|a| *a == 0.0));
        let u = optimal_single_shift_allocation(1.0, 1, &[1.0; 4]).unwrap();
        assert_eq!(u.allocation, vec![0.25; 4]);
        let v = optimal_single_shift_allocation(5.0, 1, &[1.0, 2.0]).unwrap();
        assert_eq!(v.allocation, vec![1.0, 4.0]);
        let slack = v.slack();
        assert!(slack.iter().all(|z| *z >= 0.0) && slack[1].abs() < 1e-15);
        let zero = ShiftSequence::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(pai_divergence_general(&zero, &[1.0; 3], 2.0).unwrap(), Divergence::Finite(0.0));
        let over = ShiftSequence::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            pai_divergence_general(&over, &[1.0, 1.0], 2.0),
            Err(Error::InvalidAllocation { index: 1, .. })
        ));
    }

    #[test]
    fn later_shifts_have_less_noise_to_hide_in() {
        let (t_max, alpha, s, sigma) = (10usize, 3.0, 2.0, 0.7);
        let result = |t: usize| {
            let seq = optimal_single_shift_allocation(s, t, &vec![sigma; t_max]).unwrap();
            pai_divergence_general(&seq, &vec![sigma; t_max], alpha).unwrap().value()
        };
        for t in 1..t_max {
            let closed = alpha * s * s / (2.0 * (t_max - t + 1) as f64 * sigma * sigma);
            assert!((result(t) - closed).abs() <= 1e-12 * closed);
            let ratio = result(t) / result(t + 1);
            let expected = (t_max - t) as f64 / (t_max - t + 1) as f64;
            assert!((ratio - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mechanism_and_composition_examples() {
        assert_eq!(gaussian_mechanism_budget(0.0, 1.0).unwrap().rho(), Some(0.0));
        assert_eq!(gaussian_mechanism_budget(2.0, 4.0).unwrap().rho(), Some(0.5));
        let rho0 = 0.37;
        let g = 1.9;
        let b = gaussian_mechanism_budget(g, g / rho0).unwrap().rho().unwrap();
        assert!((b - rho0).abs() < 1e-15);
        let three = PrivacyBudget::Finite { rho: 3.0 };
        assert_eq!(compose(&[three]), three);
        assert_eq!(compose(&[three, PrivacyBudget::Finite { rho: 4.0 }]).rho(), Some(5.0));
        let k = compose(&[PrivacyBudget::Finite { rho: 0.5 }; 16]).rho().unwrap();
        assert!((k - 2.0).abs() < 1e-15);
        assert_eq!(compose(&[three, PrivacyBudget::Infinite]), PrivacyBudget::Infinite);
    }

    #[test]
    fn conversion_examples() {
        let zero = rdp_to_dp(PrivacyBudget::Finite { rho: 0.0 }, 1e-5).unwrap();
        assert_eq!(zero.epsilon, 0.0);
        let one = PrivacyBudget::Finite { rho: 1.0 };
        let delta = (-2.0f64).exp();
        let c = rdp_to_dp(one, delta).unwrap();
        assert!((c.epsilon - 2.5).abs() < 1e-12);
        assert!(c.within_regime);
        let opt = rdp_to_dp_optimized(one, delta).unwrap();
        assert!((opt - 2.5).abs() < 1e-9);
        // The closed-form minimizer α* = 1 + √(2 ln(1/δ))/ρ = 3.
        let at_star = one.rdp_epsilon(3.0) + 2.0 / 2.0;
        assert!((at_star - 2.5).abs() < 1e-15);
        assert!(rdp_to_dp(one, 1.0).is_err());
        assert!(!rdp_to_dp(PrivacyBudget::Finite { rho: 10.0 }, 0.5).unwrap().within_regime);
    }

    fn schedule_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|t| {
            (
                prop::collection::vec(1usize..20, t),
                prop::collection::vec(0.01..2.0f64, t),
                prop::collection::vec(0.01..3.0f64, t),
            )
        })
    }

    proptest! {
        #[test]
        fn pai_rho_matches_brute_force((b, eta, sigma) in schedule_strategy(), l in 0.1..5.0f64) {
            let s = Schedule::new(b.clone(), eta.clone(), sigma.clone()).unwrap();
            let fast = pai_rho(&s, l).unwrap().rho().unwrap();
            let slow = brute_force_rho(&b, &eta, &sigma, l);
            prop_assert!((fast - slow).abs() <= 1e-12 * slow);
        }

        #[test]
        fn pai_rho_is_monotone((b, eta, sigma) in schedule_strategy(), pick in any::<prop::sample::Index>(), bump in 1usize..5, grow in 1.0..3.0f64) {
            let base = pai_rho(&Schedule::new(b.clone(), eta.clone(), sigma.clone()).unwrap(), 1.0).unwrap().rho().unwrap();
            let i = pick.index(b.len());
            let mut b2 = b.clone();
            b2[i] += bump;
            let more_batch = pai_rho(&Schedule::new(b2, eta.clone(), sigma.clone()).unwrap(), 1.0).unwrap().rho().unwrap();
            let mut s2 = sigma.clone();
            s2[i] *= grow;
            let more_noise = pai_rho(&Schedule::new(b, eta, s2).unwrap(), 1.0).unwrap().rho().unwrap();
            prop_assert!(more_batch <= base * (1.0 + 1e-12));
            prop_assert!(more_noise <= base * (1.0 + 1e-12));
        }

        #[test]
        fn single_shift_allocation_is_exact(sigmas in prop::collection::vec(0.05..3.0f64, 1..30), s in 0.0..5.0f64, pick in any::<prop::sample::Index>(), alpha in 1.0..20.0f64) {
            let t = pick.index(sigmas.len()) + 1;
            let seq = optimal_single_shift_allocation(s, t, &sigmas).unwrap();
            let z = seq.slack();
            prop_assert!(z.iter().all(|v| *v >= -1e-12));
            prop_assert!(z.last().unwrap().abs() <= 1e-12 * (1.0 + s));
            let got = pai_divergence_general(&seq, &sigmas, alpha).unwrap().value();
            let tail: f64 = sigmas[t - 1..].iter().map(|v| v * v).sum();
            let expected = alpha * s * s / (2.0 * tail);
            prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1e-300));
        }

        #[test]
        fn simple_conversion_never_beats_optimized(rho in 0.0..20.0f64, log_delta in -30.0..-0.01f64) {
            let delta = log_delta.exp();
            let b = PrivacyBudget::Finite { rho };
            let simple = rdp_to_dp(b, delta).unwrap().epsilon;
            let opt = rdp_to_dp_optimized(b, delta).unwrap();
            prop_assert!(simple >= opt - 1e-12);
            prop_assert!((simple - opt).abs() <= 1e-9 * (1.0 + simple));
        }

        #[test]
        fn composition_is_commutative_and_associative(r in prop::collection::vec(0.0..10.0f64, 3)) {
            let b: Vec<PrivacyBudget> = r.iter().map(|&rho| PrivacyBudget::Finite { rho }).collect();
            let left = compose(&[compose(&[b[0], b[1]]), b[2]]).rho().unwrap();
            let right = compose(&[b[0], compose(&[b[1], b[2]])]).rho().unwrap();
            let swapped = compose(&[b[2], b[0], b[1]]).rho().unwrap();
            prop_assert!((left - right).abs() <= 1e-12 * (1.0 + left));
            prop_assert!((left - swapped).abs() <= 1e-12 * (1.0 + left));
        }
    }
}
