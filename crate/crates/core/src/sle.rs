//! SLE_κ driving functions and traces, κ estimation, and ε-filling sequences.

use num_complex::Complex64 as C;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exploration::Curve;
use crate::loewner::{forward_solve, LoewnerChain, LoewnerError, TIP_OFFSET};
use crate::rng::{par_map, stream};
use crate::stats::{excess_kurtosis, Z95};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SleError {
    #[error("need at least {need} increments, have {have}")]
    TooFewIncrements { have: usize, need: usize },
    #[error("invalid driving path: {0}")]
    Invalid(String),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
}

/// Minimum number of increments accepted by [`estimate_kappa`].
pub const MIN_INCREMENTS: usize = 100;

/// A driving function sampled on a uniform grid starting at `t = 0`, `u = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingPath {
    pub t_grid: Vec<f64>,
    pub u: Vec<f64>,
    pub kappa: Option<f64>,
}

impl DrivingPath {
    pub fn new(t_grid: Vec<f64>, u: Vec<f64>, kappa: Option<f64>) -> Result<Self, SleError> {
        if t_grid.len() != u.len() || t_grid.len() < 2 {
            return Err(SleError::Invalid("need matching t and u with at least two samples".into()));
        }
        if t_grid[0] != 0.0 || u[0] != 0.0 {
            return Err(SleError::Invalid("path must start at t = 0, u = 0".into()));
        }
        if u.iter().chain(&t_grid).any(|x| !x.is_finite()) {
            return Err(SleError::Invalid("non-finite sample".into()));
        }
        let dt = t_grid[1];
        if !(dt > 0.0) || t_grid.iter().enumerate().any(|(k, &t)| (t - k as f64 * dt).abs() > 1e-9 * dt.max(t)) {
            return Err(SleError::Invalid("time grid is not uniform".into()));
        }
        Ok(DrivingPath { t_grid, u, kappa })
    }

    /// The chain's (right-continuous, piecewise-constant) driving function on
    /// `n + 1` uniform times in `[0, t_max]`.
    pub fn from_chain(chain: &LoewnerChain, t_max: f64, n: usize) -> Self {
        let t_grid: Vec<f64> = (0..=n).map(|k| t_max * k as f64 / n as f64).collect();
        let u = t_grid.iter().map(|&t| chain.driving_at(t)).collect();
        DrivingPath { t_grid, u, kappa: None }
    }

    pub fn dt(&self) -> f64 {
        self.t_grid[1]
    }

    pub fn horizon(&self) -> f64 {
        *self.t_grid.last().unwrap()
    }

    pub fn increments(&self) -> usize {
        self.u.len() - 1
    }

    pub fn reflected(&self) -> Self {
        DrivingPath {
            u: self.u.iter().map(|x| -x).collect(),
            ..self.clone()
        }
    }

    pub fn chain(&self) -> Result<LoewnerChain, SleError> {
        Ok(forward_solve(&self.t_grid, &self.u, self.dt() * (1.0 + 1e-9))?)
    }
}

fn steps(t_max: f64, dt: f64) -> usize {
    assert!(t_max > 0.0 && dt > 0.0, "need T > 0 and dt > 0");
    ((t_max / dt).round() as usize).max(1)
}

fn driving_from_stream(kappa: f64, t_max: f64, dt: f64, seed: u64, index: u64) -> DrivingPath {
    assert!(kappa >= 0.0, "κ must be non-negative");
    let n = steps(t_max, dt);
    let mut rng = stream(seed, index);
    let sd = (kappa * dt).sqrt();
    let mut u = Vec::with_capacity(n + 1);
    u.push(0.0);
    let mut x = 0.0;
    for _ in 0..n {
        let g: f64 = StandardNormal.sample(&mut rng);
        x += sd * g;
        u.push(x);
    }
    DrivingPath {
        t_grid: (0..=n).map(|k| k as f64 * dt).collect(),
        u,
        kappa: Some(kappa),
    }
}

/// `u_t = √κ W_t` on `[0, T]` with step `dt` (rounded to a whole number of steps).
pub fn sample_driving(kappa: f64, t_max: f64, dt: f64, seed: u64) -> DrivingPath {
    driving_from_stream(kappa, t_max, dt, seed, 0)
}

/// `n_paths` independent drivings; path `i` uses stream `i` of `seed`, so
/// path 0 equals [`sample_driving`] with the same seed.
pub fn sample_driving_ensemble(kappa: f64, t_max: f64, dt: f64, n_paths: usize, seed: u64, workers: usize) -> Vec<DrivingPath> {
    let idx: Vec<u64> = (0..n_paths as u64).collect();
    par_map(&idx, workers, |_, &i| driving_from_stream(kappa, t_max, dt, seed, i))
}

/// Trace of a driving path at its grid times.
pub fn trace_of(path: &DrivingPath) -> Result<Curve, SleError> {
    Ok(Curve::new(path.chain()?.trace()))
}

/// SLE_κ trace on `[0, T]`: forward solve of a sampled driving, evaluated at
/// the grid times.
pub fn sample_trace(kappa: f64, t_max: f64, dt: f64, seed: u64) -> Result<Curve, SleError> {
    trace_of(&sample_driving(kappa, t_max, dt, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaOptions {
    /// Smallest lag, in grid steps.
    pub min_lag: usize,
    /// Largest lag as a fraction of the shortest path.
    pub max_lag_fraction: f64,
}

impl Default for KappaOptions {
    fn default() -> Self {
        KappaOptions {
            min_lag: 1,
            max_lag_fraction: 1.0 / 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Drift `μ̂` of `u_t = μt + √κ W_t`.
    pub drift: f64,
    pub drift_std_err: f64,
    /// Excess kurtosis of the smallest-lag increments (0 for Brownian).
    pub excess_kurtosis: f64,
    pub lags: Vec<f64>,
    pub variances: Vec<f64>,
    pub n_paths: usize,
    pub n_increments: usize,
}

/// Per-unit sums for one lag: `Σ Δ²`, `Σ Δ`, count.
#[derive(Clone, Copy, Default)]
struct LagSums {
    sq: f64,
    lin: f64,
    n: f64,
}

fn weighted_slope(h: &[f64], v: &[f64]) -> f64 {
    // weights 1/h²: every dyadic lag counts equally in relative terms
    let w: Vec<f64> = h.iter().map(|x| 1.0 / (x * x)).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(h).map(|(a, b)| a * (b - mx) * (b - mx)).sum();
    let sxy: f64 = w.iter().zip(h).zip(v).map(|((a, b), c)| a * (b - mx) * (c - my)).sum();
    sxy / sxx
}

/// κ̂ as the slope of the empirical increment variance `Var(u_{t+h} − u_t)`
/// against `h` over dyadic lags, pooled over paths, by weighted least squares
/// with an intercept (which absorbs short-scale discretization bias).  The
/// interval is a jackknife over paths, or over 16 time blocks for a single
/// path.
pub fn estimate_kappa(paths: &[DrivingPath], opts: KappaOptions) -> Result<KappaEstimate, SleError> {
    let total: usize = paths.iter().map(|p| p.increments()).sum();
    if paths.is_empty() || total < MIN_INCREMENTS {
        return Err(SleError::TooFewIncrements {
            have: total,
            need: MIN_INCREMENTS,
        });
    }
    let dt = paths[0].dt();
    if paths.iter().any(|p| (p.dt() - dt).abs() > 1e-9 * dt) {
        return Err(SleError::Invalid("paths have different time steps".into()));
    }
    let shortest = paths.iter().map(|p| p.increments()).min().unwrap();
    let max_lag = ((shortest as f64 * opts.max_lag_fraction).floor() as usize).max(1);
    let mut lag_steps = Vec::new();
    let mut h = opts.min_lag.max(1);
    while h <= max_lag {
        lag_steps.push(h);
        h *= 2;
    }
    if lag_steps.len() < 2 {
        return Err(SleError::TooFewIncrements {
            have: shortest,
            need: 2 * opts.min_lag.max(1) * (1.0 / opts.max_lag_fraction).ceil() as usize,
        });
    }

    // jackknife units: paths, or time blocks of a single path
    let blocks = 16;
    let unit_of = |p: usize, k: usize| if paths.len() > 1 { p } else { k * blocks / paths[0].increments() };
    let n_units = if paths.len() > 1 { paths.len() } else { blocks };
    let mut sums = vec![vec![LagSums::default(); lag_steps.len()]; n_units];
    let mut end_u = vec![0.0; n_units];
    let mut end_t = vec![0.0; n_units];
    for (p, path) in paths.iter().enumerate() {
        let u = &path.u;
        for (j, &h) in lag_steps.iter().enumerate() {
            for k in 0..u.len().saturating_sub(h) {
                let d = u[k + h] - u[k];
                let s = &mut sums[unit_of(p, k)][j];
                s.sq += d * d;
                s.lin += d;
                s.n += 1.0;
            }
        }
        for k in 0..path.increments() {
            end_u[unit_of(p, k)] += u[k + 1] - u[k];
            end_t[unit_of(p, k)] += dt;
        }
    }
    let hs: Vec<f64> = lag_steps.iter().map(|&h| h as f64 * dt).collect();
    let fit = |skip: Option<usize>| -> (f64, f64, Vec<f64>) {
        let keep = |i: &usize| Some(*i) != skip;
        let mu = (0..n_units).filter(keep).map(|i| end_u[i]).sum::<f64>() / (0..n_units).filter(keep).map(|i| end_t[i]).sum::<f64>();
        let v: Vec<f64> = (0..lag_steps.len())
            .map(|j| {
                let mut t = LagSums::default();
                for i in (0..n_units).filter(keep) {
                    t.sq += sums[i][j].sq;
                    t.lin += sums[i][j].lin;
                    t.n += sums[i][j].n;
                }
                let m = mu * hs[j];
                ((t.sq - 2.0 * m * t.lin + t.n * m * m) / t.n).max(0.0)
            })
            .collect();
        (weighted_slope(&hs, &v), mu, v)
    };
    let (kappa, drift, variances) = fit(None);
    let jack: Vec<(f64, f64)> = (0..n_units).map(|i| fit(Some(i))).map(|(k, m, _)| (k, m)).collect();
    let nu = n_units as f64;
    let jk_se = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let m = jack.iter().map(f).sum::<f64>() / nu;
        ((nu - 1.0) / nu * jack.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>()).sqrt()
    };
    let std_err = jk_se(&|x| x.0);
    let drift_std_err = jk_se(&|x| x.1);

    // kurtosis of non-overlapping smallest-lag increments
    let h0 = lag_steps[0];
    let inc: Vec<f64> = paths
        .iter()
        .flat_map(|p| {
            (0..p.increments() / h0).map(move |k| p.u[(k + 1) * h0] - p.u[k * h0] - drift * h0 as f64 * dt)
        })
        .collect();

    Ok(KappaEstimate {
        kappa,
        std_err,
        ci_low: kappa - Z95 * std_err,
        ci_high: kappa + Z95 * std_err,
        drift,
        drift_std_err,
        excess_kurtosis: excess_kurtosis(&inc),
        lags: hs,
        variances,
        n_paths: paths.len(),
        n_increments: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillingIncrement {
    pub tau: f64,
    pub dtau: f64,
    /// `ḡ_{τ_{j−1}} γ(τ_j)`, projected radially onto the ε-circle unless
    /// truncated (the discrete trace jumps at step boundaries, so the first
    /// point found outside the ball can overshoot by `O(√dt)`).
    pub exit: [f64; 2],
    /// Argument of the exit point, in `[0, π]`.
    pub angle: f64,
    /// The curve ended before leaving the ε-ball.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillingSequence {
    pub epsilon: f64,
    /// `τ_0 = 0, τ_1, …`.
    pub taus: Vec<f64>,
    pub increments: Vec<FillingIncrement>,
}

/// Bisection iterations used to locate an exit inside a slit step.
const EXIT_BISECTIONS: usize = 30;

/// The ε-filling stopping times of a chain's trace: `τ_j` is the first time
/// after `τ_{j−1}` at which `ḡ_{τ_{j−1}} γ` leaves the ε-ball about 0, where
/// `ḡ_t = g_t − u_t`.  Exits are detected at step ends and located inside the
/// step by bisection.
pub fn epsilon_filling(chain: &LoewnerChain, epsilon: f64) -> FillingSequence {
    assert!(epsilon > 0.0, "ε must be positive");
    let (t, u, st) = (chain.t_grid(), chain.u_grid(), chain.steps());
    let n = chain.len();
    let mut seq = FillingSequence {
        epsilon,
        taus: vec![0.0],
        increments: Vec::new(),
    };
    if n == 0 {
        return seq;
    }
    // τ = t[m] + extra, extra ∈ [0, dt_m) where step m spans (t[m], t[m+1]]
    let (mut m, mut extra) = (0usize, 0.0f64);
    // ḡ_τ γ(s) for s in step i ≥ m, s > τ
    let point = |m: usize, extra: f64, i: usize, s: f64| -> C {
        let tau = t[m] + extra;
        let u_tau = if extra > 0.0 { u[m + 1] } else { u[m] };
        if i == m {
            return C::new(u[m + 1] - u_tau, 2.0 * (s - tau).max(0.0).sqrt());
        }
        let mut z = C::new(u[i + 1], 2.0 * (s - t[i]).max(0.0).sqrt() + TIP_OFFSET);
        for j in (m + 1..i).rev() {
            z = crate::loewner::slit_map_inverse(z, u[j + 1], st[j].dt);
        }
        z = crate::loewner::slit_map_inverse(z, u[m + 1], st[m].dt - extra);
        z - u_tau
    };
    loop {
        let tau = t[m] + extra;
        let mut found = None;
        for i in m..n {
            let p = point(m, extra, i, t[i + 1]);
            if p.norm() >= epsilon {
                let (mut lo, mut hi) = (t[i].max(tau), t[i + 1]);
                for _ in 0..EXIT_BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    if point(m, extra, i, mid).norm() >= epsilon {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                found = Some((i, hi, point(m, extra, i, hi)));
                break;
            }
        }
        match found {
            Some((i, s, p)) => {
                let p = p * (epsilon / p.norm());
                seq.taus.push(s);
                seq.increments.push(FillingIncrement {
                    tau: s,
                    dtau: s - tau,
                    exit: [p.re, p.im],
                    angle: p.im.max(0.0).atan2(p.re),
                    truncated: false,
                });
                if s >= t[i + 1] {
                    m = i + 1;
                    extra = 0.0;
                } else {
                    m = i;
                    extra = s - t[i];
                }
                if m >= n {
                    return seq;
                }
            }
            None => {
                let s = t[n];
                let p = point(m, extra, n - 1, s);
                seq.taus.push(s);
                seq.increments.push(FillingIncrement {
                    tau: s,
                    dtau: s - tau,
                    exit: [p.re, p.im],
                    angle: p.im.max(0.0).atan2(p.re),
                    truncated: true,
                });
                return seq;
            }
        }
    }
}

/// Lag-1 correlation of consecutive non-truncated exit angles, pooled over
/// sequences (pairs never straddle two sequences).
pub fn exit_angle_lag1(seqs: &[FillingSequence]) -> (f64, usize) {
    let angles: Vec<Vec<f64>> = seqs
        .iter()
        .map(|s| s.increments.iter().filter(|i| !i.truncated).map(|i| i.angle).collect())
        .collect();
    let all: Vec<f64> = angles.iter().flatten().copied().collect();
    if all.len() < 3 {
        return (0.0, all.len());
    }
    let m = all.iter().sum::<f64>() / all.len() as f64;
    let den: f64 = all.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / all.len() as f64;
    let (mut num, mut pairs) = (0.0, 0usize);
    for a in &angles {
        for w in a.windows(2) {
            num += (w[0] - m) * (w[1] - m);
            pairs += 1;
        }
    }
    if den == 0.0 || pairs == 0 {
        return (0.0, all.len());
    }
    (num / pairs as f64 / den, all.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, mean, variance};

    #[test]
    fn zero_kappa_is_flat_and_vertical() {
        let d = sample_driving(0.0, 1.0, 1e-3, 3);
        assert!(d.u.iter().all(|&x| x == 0.0));
        let tr = sample_trace(0.0, 1.0, 1e-3, 3).unwrap();
        for (k, z) in tr.points.iter().enumerate() {
            let t = k as f64 * 1e-3;
            assert!((z - C::new(0.0, 2.0 * t.sqrt())).norm() < 1e-6);
        }
        let e = estimate_kappa(&[d], KappaOptions::default()).unwrap();
        assert_eq!(e.kappa, 0.0);
    }

    #[test]
    fn ensemble_moments() {
        let ens = sample_driving_ensemble(6.0, 1.0, 1e-3, 10_000, 11, 1);
        let ends: Vec<f64> = ens.iter().map(|p| *p.u.last().unwrap()).collect();
        let (m, v) = (mean(&ends), variance(&ends));
        assert!(m.abs() <= 3.0 * (6.0f64 / 1e4).sqrt(), "{m}");
        assert!((v / 6.0 - 1.0).abs() <= 0.05, "{v}");
        // same seed, any worker count
        let again = sample_driving_ensemble(6.0, 1.0, 1e-3, 8, 11, 3);
        assert_eq!(&ens[..8], &again[..]);
        assert_eq!(ens[0], sample_driving(6.0, 1.0, 1e-3, 11));
    }

    #[test]
    fn trace_starts_at_origin_in_closed_half_plane_and_reflects() {
        let d = sample_driving(4.0, 0.5, 1e-3, 5);
        let a = trace_of(&d).unwrap();
        let b = trace_of(&d.reflected()).unwrap();
        assert_eq!(a.points[0], C::new(0.0, 0.0));
        assert!(a.points.iter().all(|z| z.im >= 0.0));
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((p.re + q.re).abs() < 1e-9 && (p.im - q.im).abs() < 1e-9);
        }
    }

    #[test]
    fn brownian_scaling_in_distribution() {
        // family-wise level 1% over the ten seeds (Bonferroni)
        let c = 4.0;
        for seed in 0..10 {
            let a: Vec<f64> = sample_driving_ensemble(6.0, 0.25, 1e-3, 2000, 100 + seed, 1).iter().map(|p| *p.u.last().unwrap()).collect();
            let b: Vec<f64> = sample_driving_ensemble(6.0, 0.25 * c, 1e-3, 2000, 200 + seed, 1)
                .iter()
                .map(|p| *p.u.last().unwrap() / c.sqrt())
                .collect();
            let (_, p) = ks_two_sample(&a, &b);
            assert!(p > 0.01 / 10.0, "seed {seed}: p = {p}");
        }
    }

    #[test]
    fn kappa_from_pure_drift_and_errors() {
        let t: Vec<f64> = (0..=1000).map(|k| k as f64 * 1e-3).collect();
        let p = DrivingPath::new(t.clone(), t.clone(), None).unwrap();
        let e = estimate_kappa(&[p], KappaOptions::default()).unwrap();
        assert!((e.drift - 1.0).abs() < 1e-12 && e.kappa.abs() < 1e-10, "{e:?}");
        let short = DrivingPath::new(t[..50].to_vec(), vec![0.0; 50], None).unwrap();
        assert!(matches!(estimate_kappa(&[short], KappaOptions::default()), Err(SleError::TooFewIncrements { .. })));
        assert!(DrivingPath::new(vec![0.0, 0.1, 0.3], vec![0.0; 3], None).is_err());
    }

    #[test]
    fn kappa_calibration_matrix() {
        // 95% intervals: over 20 replicas per κ, fewer than 15 covering has
        // probability < 10⁻³ for a calibrated estimator.
        for (i, kappa) in [2.0, 8.0 / 3.0, 4.0, 6.0, 8.0].into_iter().enumerate() {
            let mut covered = 0;
            for r in 0..20u64 {
                let ens = sample_driving_ensemble(kappa, 1.0, 1e-4, 200, 1000 * i as u64 + r, 1);
                let e = estimate_kappa(&ens, KappaOptions::default()).unwrap();
                covered += (e.ci_low <= kappa && kappa <= e.ci_high) as usize;
                assert!((e.kappa / kappa - 1.0).abs() <= 0.1, "{kappa}: {e:?}");
                assert!(e.drift.abs() <= 4.0 * e.drift_std_err);
                assert!(e.excess_kurtosis.abs() < 0.1);
            }
            assert!(covered >= 15, "{kappa}: {covered}/20");
        }
    }

    #[test]
    fn single_path_estimate_has_interval() {
        let d = sample_driving(6.0, 1.0, 1e-4, 9);
        let e = estimate_kappa(&[d], KappaOptions::default()).unwrap();
        assert!(e.std_err > 0.0 && e.ci_low <= 6.0 && 6.0 <= e.ci_high, "{e:?}");
    }

    #[test]
    fn filling_of_vertical_segment() {
        let chain = forward_solve(&[0.0, 1.0], &[0.0, 0.0], 1e-3).unwrap();
        let big = epsilon_filling(&chain, 10.0);
        assert_eq!(big.increments.len(), 1);
        assert!(big.increments[0].truncated && (big.taus[1] - 1.0).abs() < 1e-12);
        // exits straight up at height ε: τ = ε²/4 each time
        let f = epsilon_filling(&chain, 0.2);
        for inc in f.increments.iter().filter(|i| !i.truncated) {
            assert!((inc.dtau - 0.01).abs() < 1e-6, "{inc:?}");
            assert!((inc.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
        }
    }

    #[test]
    fn filling_bounds_and_independence_for_sle6() {
        let eps = 0.2;
        let seqs: Vec<FillingSequence> = sample_driving_ensemble(6.0, 1.0, 1e-4, 80, 77, 1)
            .iter()
            .map(|p| epsilon_filling(&p.chain().unwrap(), eps))
            .collect();
        for s in &seqs {
            assert_eq!(s.taus[0], 0.0);
            for w in s.taus.windows(2) {
                assert!(w[1] > w[0] && w[1] - w[0] <= eps * eps / 2.0 + 1e-12);
            }
            assert!(*s.taus.last().unwrap() <= 1.0 + 1e-12);
            for inc in s.increments.iter().filter(|i| !i.truncated) {
                assert!((inc.exit[0].hypot(inc.exit[1]) - eps).abs() < 1e-12);
                assert!((0.0..=std::f64::consts::PI).contains(&inc.angle));
            }
        }
        let (rho, n) = exit_angle_lag1(&seqs);
        assert!(n >= 10_000, "{n}");
        assert!(rho.abs() < 0.05, "{rho}");
    }
}
