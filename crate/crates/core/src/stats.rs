//! Monte-Carlo estimates and the small amount of statistics the experiments need.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A Monte-Carlo estimate with its 95% interval.
///
/// For Bernoulli estimates the interval is Wilson's; for means of bounded or
/// unbounded samples it is the normal interval `p_hat ± 1.96 σ̂/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub n: u64,
    pub p_hat: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl MCEstimate {
    pub fn from_bernoulli(successes: u64, n: u64, seed: u64) -> Self {
        assert!(n > 0, "empty estimate");
        let p = successes as f64 / n as f64;
        let (lo, hi) = wilson(successes, n, Z95);
        MCEstimate {
            n,
            p_hat: p,
            std_err: (p * (1.0 - p) / n as f64).sqrt(),
            ci_low: lo.min(p),
            ci_high: hi.max(p),
            seed,
        }
    }

    pub fn from_moments(m: Moments, seed: u64) -> Self {
        let n = m.n;
        assert!(n > 0, "empty estimate");
        let mean = m.mean();
        let se = (m.variance() / n as f64).sqrt();
        MCEstimate {
            n,
            p_hat: mean,
            std_err: se,
            ci_low: mean - Z95 * se,
            ci_high: mean + Z95 * se,
            seed,
        }
    }

    /// Exact value with no sampling error.
    pub fn exact(value: f64, seed: u64) -> Self {
        MCEstimate {
            n: 0,
            p_hat: value,
            std_err: 0.0,
            ci_low: value,
            ci_high: value,
            seed,
        }
    }

    /// Multiplies the estimate and its interval by `c > 0`.
    pub fn scaled(mut self, c: f64) -> Self {
        self.p_hat *= c;
        self.std_err *= c.abs();
        self.ci_low *= c;
        self.ci_high *= c;
        if self.ci_low > self.ci_high {
            std::mem::swap(&mut self.ci_low, &mut self.ci_high);
        }
        self
    }

    /// |p_hat − target| in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_err == 0.0 {
            if self.p_hat == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.p_hat - target).abs() / self.std_err
        }
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Running sums for mean and variance; merging is order-sensitive only in
/// floating point, so callers merge in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }
    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }
    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let m = self.mean();
        ((self.sum_sq - self.n as f64 * m * m) / (self.n - 1) as f64).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = slope·x + intercept`.  `None` when the `x`
/// values have zero spread.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx <= 1e-300 * (1.0 + mx * mx) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - slope * a - intercept;
            e * e
        })
        .sum();
    let slope_se = if n > 2 {
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept,
        slope_se,
        r2,
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Excess kurtosis (0 for a Gaussian).
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = mean(x);
    let m2 = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|a| (a - m).powi(4)).sum::<f64>() / n;
    if m2 == 0.0 {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

/// Lag-1 autocorrelation.
pub fn lag1_correlation(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let m = mean(x);
    let den: f64 = x.iter().map(|a| (a - m) * (a - m)).sum();
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_point() {
        for (k, n) in [(0, 10), (10, 10), (3, 7), (5000, 10000)] {
            let e = MCEstimate::from_bernoulli(k, n, 0);
            assert!(e.ci_low <= e.p_hat && e.p_hat <= e.ci_high);
        }
    }

    #[test]
    fn wilson_shrinks_like_inverse_sqrt_n() {
        let w1 = {
            let e = MCEstimate::from_bernoulli(500, 1000, 0);
            e.ci_high - e.ci_low
        };
        let w4 = {
            let e = MCEstimate::from_bernoulli(2000, 4000, 0);
            e.ci_high - e.ci_low
        };
        assert!((w1 / w4 - 2.0).abs() < 0.01);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 50.0).collect();
        assert!(ks_two_sample(&a, &b).1 < 1e-3);
    }
}
