//! Chordal Loewner chains built from exact vertical-slit maps.
//!
//! Step `k` (1-based) removes the vertical slit `[u_k, u_k + 2i√dt_k]` from
//! the current half-plane with `φ_k(z) = u_k + √((z − u_k)² + 4 dt_k)`, so
//! `g_{t_k} = φ_k ∘ … ∘ φ_1` and each step adds `2 dt_k` of half-plane
//! capacity.  Time is capacity / 2, `t_k = Σ_{j≤k} dt_j`.

use std::f64::consts::PI;

use num_complex::Complex64 as C;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{run_chunks, Parallelism};
use crate::stats::{MCEstimate, Moments};

/// Imaginary offset applied to the driving point before inverse composition.
pub const TIP_OFFSET: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoewnerError {
    #[error("point {0} lies on the removed slit")]
    Swallowed(C),
    #[error("bad time grid: {0}")]
    BadGrid(String),
    #[error("zipper stalled at vertex {index} (t = {time}): curve keeps returning to its filling")]
    Stall { index: usize, time: f64 },
    #[error("curve must start at 0 (starts at {0})")]
    NotFromOrigin(C),
    #[error("curve has fewer than two points")]
    TooShort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitStep {
    /// Driving increment from the previous step's slit foot.
    pub du: f64,
    /// Capacity-time increment (`hcap` grows by `2 dt`).
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoewnerChain {
    steps: Vec<SlitStep>,
    /// `t_grid[0] = 0`, `t_grid[k] = t_k`.
    t_grid: Vec<f64>,
    /// `u_grid[0] = 0`, `u_grid[k]` = foot of slit `k`.
    u_grid: Vec<f64>,
}

/// `u + √((z − u)² + 4dt)` on the branch with non-negative imaginary part
/// (real points keep the sign of `z − u`).
#[inline]
fn slit_forward(z: C, u: f64, dt: f64) -> C {
    let d = z - u;
    let mut r = (d * d + 4.0 * dt).sqrt();
    if r.im < 0.0 || (r.im == 0.0 && d.re < 0.0 && r.re > 0.0) {
        r = -r;
    }
    C::new(u, 0.0) + r
}

#[inline]
fn slit_backward(w: C, u: f64, dt: f64) -> C {
    let d = w - u;
    let mut r = (d * d - 4.0 * dt).sqrt();
    if r.im < 0.0 || (r.im == 0.0 && d.re < 0.0 && r.re > 0.0) {
        r = -r;
    }
    C::new(u, 0.0) + r
}

/// The elementary slit map.  Points strictly inside the slit are an error.
pub fn slit_map(z: C, u: f64, dt: f64) -> Result<C, LoewnerError> {
    assert!(dt > 0.0, "slit step needs dt > 0");
    let h = 2.0 * dt.sqrt();
    if (z.re - u).abs() == 0.0 && z.im > 0.0 && z.im < h {
        return Err(LoewnerError::Swallowed(z));
    }
    Ok(slit_forward(z, u, dt))
}

/// Inverse of [`slit_map`]; real points with `|w − u| < 2√dt` land on the slit.
pub fn slit_map_inverse(w: C, u: f64, dt: f64) -> C {
    slit_backward(w, u, dt)
}

impl LoewnerChain {
    pub fn new() -> Self {
        LoewnerChain {
            steps: Vec::new(),
            t_grid: vec![0.0],
            u_grid: vec![0.0],
        }
    }

    pub fn from_steps(steps: impl IntoIterator<Item = SlitStep>) -> Self {
        let mut c = Self::new();
        for s in steps {
            c.push(s);
        }
        c
    }

    pub fn push(&mut self, s: SlitStep) {
        assert!(s.dt > 0.0, "slit step needs dt > 0");
        self.t_grid.push(self.t_grid.last().unwrap() + s.dt);
        self.u_grid.push(self.u_grid.last().unwrap() + s.du);
        self.steps.push(s);
    }

    pub fn steps(&self) -> &[SlitStep] {
        &self.steps
    }
    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }
    pub fn u_grid(&self) -> &[f64] {
        &self.u_grid
    }
    pub fn len(&self) -> usize {
        self.steps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
    pub fn total_time(&self) -> f64 {
        *self.t_grid.last().unwrap()
    }

    /// Half-plane capacity `Σ 2 dt`.
    pub fn hcap(&self) -> f64 {
        self.steps.iter().map(|s| 2.0 * s.dt).sum()
    }

    /// `self` followed by `other`, whose driving continues from the last foot.
    pub fn concat(&self, other: &LoewnerChain) -> LoewnerChain {
        let mut c = self.clone();
        for &s in &other.steps {
            c.push(s);
        }
        c
    }

    /// All slit feet shifted by `c` (the hull translated by `c`).
    pub fn translated(&self, c: f64) -> LoewnerChain {
        let mut steps = self.steps.clone();
        if let Some(s) = steps.first_mut() {
            s.du += c;
        }
        Self::from_steps(steps)
    }

    /// `g_{t_k}(z)`: the first `k` steps applied in order.
    pub fn map_upto(&self, k: usize, z: C) -> Result<C, LoewnerError> {
        let mut w = z;
        for j in 0..k.min(self.len()) {
            w = slit_map(w, self.u_grid[j + 1], self.steps[j].dt)?;
        }
        Ok(w)
    }

    /// `g_T(z)`.
    pub fn map(&self, z: C) -> Result<C, LoewnerError> {
        self.map_upto(self.len(), z)
    }

    /// `g_{t_k}^{-1}(w)`.
    pub fn inverse_upto(&self, k: usize, w: C) -> C {
        let mut z = w;
        for j in (0..k.min(self.len())).rev() {
            z = slit_backward(z, self.u_grid[j + 1], self.steps[j].dt);
        }
        z
    }

    /// Driving value `u_t` (slit foot of the step containing `t`).
    pub fn driving_at(&self, t: f64) -> f64 {
        if t <= 0.0 || self.is_empty() {
            return 0.0;
        }
        let k = self.step_index(t);
        self.u_grid[k + 1]
    }

    /// 0-based step whose interval `(t_{k}, t_{k+1}]` contains `t`.
    fn step_index(&self, t: f64) -> usize {
        let i = self.t_grid.partition_point(|&s| s < t);
        i.clamp(1, self.len()) - 1
    }

    /// `γ(t) = g_{t_{k−1}}^{-1}(u_k + 2i√(t − t_{k−1}))` for `t` in step `k`.
    pub fn trace_point(&self, t: f64) -> C {
        if t <= 0.0 || self.is_empty() {
            return C::new(0.0, 0.0);
        }
        let t = t.min(self.total_time());
        let k = self.step_index(t);
        let h = 2.0 * (t - self.t_grid[k]).max(0.0).sqrt();
        let w = C::new(self.u_grid[k + 1], h + TIP_OFFSET);
        let mut z = self.inverse_upto(k, w);
        z.im = z.im.max(0.0);
        z
    }

    /// Trace at every grid time, `γ(t_0) = 0, …, γ(t_n)`.
    pub fn trace(&self) -> Vec<C> {
        self.t_grid.iter().map(|&t| self.trace_point(t)).collect()
    }

    /// `(t, u)` rows.
    pub fn driving_table(&self) -> Vec<(f64, f64)> {
        self.t_grid.iter().copied().zip(self.u_grid.iter().copied()).collect()
    }
}

/// Half-plane capacity of a chain.
pub fn hcap_chain(chain: &LoewnerChain) -> f64 {
    chain.hcap()
}

/// Chain driven by the piecewise-linear interpolation of `(t, u)` samples,
/// with steps no longer than `dt_max`; each step's slit foot is the driving
/// value at the step's right end.
pub fn forward_solve(t: &[f64], u: &[f64], dt_max: f64) -> Result<LoewnerChain, LoewnerError> {
    if t.len() != u.len() || t.len() < 2 {
        return Err(LoewnerError::BadGrid("need at least two (t, u) samples".into()));
    }
    if t[0] != 0.0 || u[0] != 0.0 {
        return Err(LoewnerError::BadGrid("grid must start at t = 0 with u = 0".into()));
    }
    if !(dt_max > 0.0) {
        return Err(LoewnerError::BadGrid(format!("dt_max = {dt_max}")));
    }
    if let Some(w) = t.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(LoewnerError::BadGrid(format!("time grid not increasing at {} → {}", w[0], w[1])));
    }
    let mut chain = LoewnerChain::new();
    let mut last_u = 0.0;
    for i in 1..t.len() {
        let span = t[i] - t[i - 1];
        let m = (span / dt_max).ceil().max(1.0) as usize;
        let dt = span / m as f64;
        for j in 1..=m {
            let a = j as f64 / m as f64;
            let foot = u[i - 1] + a * (u[i] - u[i - 1]);
            chain.push(SlitStep { du: foot - last_u, dt });
            last_u = foot;
        }
    }
    Ok(chain)
}

/// Points spaced equally in arc length along the polyline, `n + 1` of them
/// including both ends.
pub fn resample_arclength(curve: &[C], n: usize) -> Vec<C> {
    if curve.len() < 2 || n == 0 {
        return curve.to_vec();
    }
    let mut cum = vec![0.0];
    for w in curve.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n + 1);
    let mut seg = 0;
    for i in 0..=n {
        let s = total * i as f64 / n as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let l = cum[seg + 1] - cum[seg];
        let a = if l > 0.0 { ((s - cum[seg]) / l).clamp(0.0, 1.0) } else { 0.0 };
        out.push(curve[seg] + (curve[seg + 1] - curve[seg]) * a);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zipped {
    pub chain: LoewnerChain,
    /// Vertices (or their images) found numerically below the real line and
    /// projected onto it.
    pub projected: usize,
    /// Vertices on the real line (boundary touches); they produce no step.
    pub boundary: usize,
    /// Off-axis vertices whose image fell onto the real line; no step.
    pub skipped: usize,
}

/// Consecutive skipped off-axis vertices that count as a stall.
pub const STALL_RUN: usize = 64;

/// Driving function of a curve from 0 by the vertical-slit zipper: each
/// vertex is pushed through the current chain and its image `w` becomes the
/// tip of the next slit, `u = Re w`, `dt = (Im w)² / 4`.  With `n_steps > 0`
/// the curve is first resampled to `n_steps` equal arc-length pieces.
pub fn zipper(curve: &[C], n_steps: usize) -> Result<Zipped, LoewnerError> {
    zipper_until(curve, n_steps, f64::INFINITY)
}

/// [`zipper`] stopped at the first step reaching capacity time `t_stop`.
pub fn zipper_until(curve: &[C], n_steps: usize, t_stop: f64) -> Result<Zipped, LoewnerError> {
    if curve.len() < 2 {
        return Err(LoewnerError::TooShort);
    }
    let scale = curve.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    if curve[0].norm() > 1e-9 * scale {
        return Err(LoewnerError::NotFromOrigin(curve[0]));
    }
    let pts = resample_arclength(curve, n_steps);
    let mut chain = LoewnerChain::new();
    let (mut projected, mut boundary, mut skipped, mut run) = (0, 0, 0, 0);
    // feet and dts mirrored into flat vectors for the hot loop
    let mut feet: Vec<f64> = Vec::with_capacity(pts.len());
    let mut dts: Vec<f64> = Vec::with_capacity(pts.len());
    for (idx, &p) in pts.iter().enumerate().skip(1) {
        if p.im <= 0.0 {
            projected += (p.im < 0.0) as usize;
            boundary += 1;
            continue;
        }
        let mut w = p;
        for (&u, &dt) in feet.iter().zip(&dts) {
            w = slit_forward(w, u, dt);
        }
        if !w.is_finite() {
            return Err(LoewnerError::Stall {
                index: idx,
                time: chain.total_time(),
            });
        }
        if w.im < 0.0 {
            projected += 1;
            w.im = 0.0;
        }
        let dt = 0.25 * w.im * w.im;
        if !(dt > 1e-300) {
            skipped += 1;
            run += 1;
            if run >= STALL_RUN {
                return Err(LoewnerError::Stall {
                    index: idx,
                    time: chain.total_time(),
                });
            }
            continue;
        }
        run = 0;
        let last = *chain.u_grid().last().unwrap();
        chain.push(SlitStep { du: w.re - last, dt });
        feet.push(w.re);
        dts.push(dt);
        if chain.total_time() >= t_stop {
            break;
        }
    }
    Ok(Zipped {
        chain,
        projected,
        boundary,
        skipped,
    })
}

/// A compact hull in the closed upper half-plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hull {
    Empty,
    /// Closed half-disc of the given radius centred at 0.
    HalfDisc { radius: f64 },
    /// Filling of a polyline (typically a curve from the real line).
    Polyline { points: Vec<[f64; 2]> },
}

impl Hull {
    pub fn polyline(points: &[C]) -> Hull {
        Hull::Polyline {
            points: points.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    /// `max |z|` over the hull.
    pub fn rad(&self) -> f64 {
        match self {
            Hull::Empty => 0.0,
            Hull::HalfDisc { radius } => *radius,
            Hull::Polyline { points } => points.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max),
        }
    }

    fn dist(&self, z: C) -> f64 {
        match self {
            Hull::Empty => f64::INFINITY,
            Hull::HalfDisc { radius } => (z.norm() - radius).max(0.0),
            Hull::Polyline { points } => {
                if points.len() == 1 {
                    return (z - C::new(points[0][0], points[0][1])).norm();
                }
                points
                    .windows(2)
                    .map(|w| {
                        let (a, b) = (C::new(w[0][0], w[0][1]), C::new(w[1][0], w[1][1]));
                        let d = b - a;
                        let l2 = d.norm_sqr();
                        let s = if l2 > 0.0 { (((z - a) * d.conj()).re / l2).clamp(0.0, 1.0) } else { 0.0 };
                        (z - a - d * s).norm()
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn scaled(&self, r: f64) -> Hull {
        match self {
            Hull::Empty => Hull::Empty,
            Hull::HalfDisc { radius } => Hull::HalfDisc { radius: r * radius },
            Hull::Polyline { points } => Hull::Polyline {
                points: points.iter().map(|p| [r * p[0], r * p[1]]).collect(),
            },
        }
    }
}

/// Brownian estimate of `hcap A = lim_{y→∞} y E_{iy}[Im W_τ]`.
///
/// Walks start at `iy`, `y = 10³ rad`.  Passage to the semicircle of radius
/// `ρ = 2 rad` is sampled exactly: `z ↦ z + ρ²/z` opens `H ∖ ρD` onto `H`
/// and the semicircle onto `[−2ρ, 2ρ]`, where the hitting law from any point
/// is Cauchy.  Inside the semicircle the walk proceeds by walk-on-spheres
/// until it is within `10⁻⁷ rad` of the hull or the real line.  Each sample is
/// `y · P(reach semicircle) · Im W_τ`.
pub fn hcap_estimate_bm(hull: &Hull, n_walks: usize, seed: u64, par: Parallelism) -> MCEstimate {
    let rad = hull.rad();
    if rad == 0.0 || n_walks == 0 {
        return MCEstimate::exact(0.0, seed);
    }
    let y = 1e3 * rad;
    let rho = 2.0 * rad;
    let eps = 1e-7 * rad;
    let big_y = y - rho * rho / y;
    let weight = y * (2.0 / PI) * (2.0 * rho / big_y).atan();

    // Cauchy hit on [−2ρ, 2ρ] from w ∈ H, pulled back to the semicircle.
    let land = |w: C, rng: &mut crate::rng::Rng| -> Option<C> {
        let lo = ((-2.0 * rho - w.re) / w.im).atan();
        let hi = ((2.0 * rho - w.re) / w.im).atan();
        if rng.gen::<f64>() * PI >= hi - lo {
            return None;
        }
        let phi = lo + (hi - lo) * rng.gen::<f64>();
        let x = (w.re + w.im * phi.tan()).clamp(-2.0 * rho, 2.0 * rho);
        Some(C::from_polar(rho, (x / (2.0 * rho)).acos()))
    };

    let parts = run_chunks(n_walks, seed, par, || (), |_, rng, range| {
        let mut m = Moments::default();
        for _ in range {
            // first landing, conditioned on reaching the semicircle
            let lo = (-2.0 * rho / big_y).atan();
            let phi = lo + (-2.0 * lo) * rng.gen::<f64>();
            let x = (big_y * phi.tan()).clamp(-2.0 * rho, 2.0 * rho);
            let mut z = C::from_polar(rho, (x / (2.0 * rho)).acos());
            let value = loop {
                let dh = hull.dist(z);
                if dh < eps {
                    break z.im;
                }
                if z.im < eps {
                    break 0.0;
                }
                let r = dh.min(z.im);
                let next = z + C::from_polar(r, 2.0 * PI * rng.gen::<f64>());
                if next.norm() > rho {
                    match land(next + rho * rho / next, rng) {
                        Some(p) => z = p,
                        None => break 0.0,
                    }
                } else {
                    z = next;
                }
            };
            m.push(weight * value);
        }
        m
    });
    let mut m = Moments::default();
    for p in &parts {
        m.merge(p);
    }
    MCEstimate::from_moments(m, seed)
}

/// Largest distance from points of `a` to the polyline `b`.
pub fn directed_distance(a: &[C], b: &[C]) -> f64 {
    let hull = Hull::polyline(b);
    a.iter().map(|&z| hull.dist(z)).fold(0.0, f64::max)
}
