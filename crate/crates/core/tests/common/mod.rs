//! Independent oracles for integration tests. None of these call the code
//! they check.

#![allow(dead_code)]

/// `max_t 2Lη_t / (B_t √Σ_{s≥t} η_s²σ_s²)` with the suffix sum recomputed
/// from scratch for every `t`. `None` means infinite.
pub fn brute_force_rho(batches: &[usize], etas: &[f64], sigmas: &[f64], lipschitz: f64) -> Option<f64> {
    let mut best: f64 = 0.0;
    for t in 0..batches.len() {
        if etas[t] == 0.0 || lipschitz == 0.0 {
            continue;
        }
        let mut suffix = 0.0;
        for s in t..batches.len() {
            suffix += etas[s] * etas[s] * sigmas[s] * sigmas[s];
        }
        if suffix == 0.0 {
            return None;
        }
        best = best.max(2.0 * lipschitz * etas[t] / (batches[t] as f64 * suffix.sqrt()));
    }
    Some(best)
}

/// `D_α(N(a, σ²) ‖ N(0, σ²))` by composite Simpson's rule on
/// `(α − 1)^{−1} ln ∫ p^α q^{1−α}`, integrated in log space around the
/// integrand's peak.
pub fn renyi_by_quadrature(a: f64, sigma: f64, alpha: f64) -> f64 {
    let log_p = |x: f64| -((x - a) * (x - a)) / (2.0 * sigma * sigma);
    let log_q = |x: f64| -(x * x) / (2.0 * sigma * sigma);
    let g = |x: f64| alpha * log_p(x) + (1.0 - alpha) * log_q(x);
    let (lo, hi) = (alpha * a - 40.0 * sigma, alpha * a + 40.0 * sigma);
    let intervals = 20_000;
    let h = (hi - lo) / intervals as f64;
    let peak = (0..=intervals).map(|i| g(lo + i as f64 * h)).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for i in 0..=intervals {
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * (g(lo + i as f64 * h) - peak).exp();
    }
    let integral_log = (sum * h / 3.0).ln() + peak;
    // Both densities share the normalizer 1/(σ√(2π)).
    let normalizer = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    (integral_log + normalizer) / (alpha - 1.0)
}

/// `Φ(z)` by Simpson's rule on the standard normal density.
pub fn normal_cdf(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - normal_cdf(-z);
    }
    if z > 12.0 {
        return 1.0;
    }
    let intervals = 20_000;
    let h = z / intervals as f64;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = phi(0.0) + phi(z);
    for i in 1..intervals {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(i as f64 * h);
    }
    0.5 + sum * h / 3.0
}

/// Mean coefficient of `X_0` and variance of the average of
/// `X_t = X_{t−1} + Z_t (t ≤ k)`, `X_t = Z_t (t > k)`, by expanding every
/// iterate into its noise coefficients. O(T²).
pub fn averaging_moments_by_expansion(horizon: usize, k: usize, sigma: f64) -> (f64, f64) {
    let mut coef = vec![0.0; horizon];
    let mut total = vec![0.0; horizon];
    let mut start = 1.0;
    let mut start_total = 0.0;
    for t in 0..horizon {
        if t < k {
            coef[t] = 1.0;
        } else {
            coef.iter_mut().for_each(|c| *c = 0.0);
            coef[t] = 1.0;
            start = 0.0;
        }
        for (s, c) in total.iter_mut().zip(&coef) {
            *s += c;
        }
        start_total += start;
    }
    let tf = horizon as f64;
    let var = total.iter().map(|c| c * c).sum::<f64>() * sigma * sigma / (tf * tf);
    (start_total / tf, var)
}

/// Least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
