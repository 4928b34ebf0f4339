//! Cardy's formula in Carleson's form, closed-form conformal maps of the
//! canonical domains onto the upper half-plane, and Poisson-kernel /
//! random-walk solvers for the Dirichlet problem.
//!
//! Continuum coordinates: the disc is the unit disc; `Rectangle { aspect: ρ }`
//! is `[0, ρ] × [0, 1]`; the equilateral triangle has vertices `0`, `1`,
//! `e^{iπ/3}`.  Boundary points of every shape are sent to the extended real
//! line, which is handled in homogeneous coordinates `(x, y) ~ x / y`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64 as C;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Shape, SQRT3};
use crate::quadrature::{integrate, integrate_with, QuadratureError, Tolerance};
use crate::rng::{run_chunks, Parallelism};
use crate::stats::{MCEstimate, Moments};

/// `ζ = e^{2πi/3}`.
pub const ZETA: C = C::new(-0.5, 0.5 * SQRT3);

const QUAD_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("marks are not in counterclockwise order")]
    Order,
    #[error("expected {need} marks, got {have}")]
    MarkCount { have: usize, need: usize },
    #[error("mark {index} is not on the boundary (distance {distance:e})")]
    NotOnBoundary { index: usize, distance: f64 },
    #[error("point {0:?} is not in the open domain")]
    Domain([f64; 2]),
    #[error("aspect ratio must be positive and finite, got {0}")]
    BadAspect(f64),
    #[error("random walks need a bounded domain")]
    Unbounded,
    #[error(transparent)]
    Numeric(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContinuumShape {
    HalfPlane,
    Disc,
    Rectangle { aspect: f64 },
    EquilateralTriangle,
}

/// A boundary point: a plane point, or (half-plane only) a real number,
/// possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mark {
    Point([f64; 2]),
    Real(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedDomainSpec {
    pub shape: ContinuumShape,
    pub marks: Vec<Mark>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleCoordinate {
    pub x: f64,
}

/// Homogeneous coordinates on the extended real line; `(1, 0)` is `∞`.
pub type Proj = (f64, f64);

fn bracket(p: Proj, q: Proj) -> f64 {
    p.0 * q.1 - p.1 * q.0
}

/// Position of `p` on the extended line as a sortable key (`∞` is largest).
fn line_key(p: Proj) -> f64 {
    if p.1 == 0.0 {
        f64::INFINITY
    } else {
        p.0 / p.1
    }
}

/// Image of `p` under the real Möbius map sending `zero → 0`, `one → 1`,
/// `inf → ∞`.
pub fn normalize_three(p: Proj, zero: Proj, one: Proj, inf: Proj) -> Proj {
    (
        bracket(p, zero) * bracket(one, inf),
        bracket(p, inf) * bracket(one, zero),
    )
}

fn proj_value(p: Proj) -> f64 {
    p.0 / p.1
}

// ---------------------------------------------------------------- elliptic

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let m = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = m;
    }
    a
}

/// Complete elliptic integral of the first kind, `K(k) = π / (2 agm(1, k'))`.
pub fn ellip_k(kp: f64) -> f64 {
    PI / (2.0 * agm(1.0, kp))
}

/// Real Jacobi functions `(sn, cn, dn)(u | m)` by the descending AGM.
pub fn jacobi_real(u: f64, m: f64) -> (f64, f64, f64) {
    jacobi_real_c(u, m, 1.0 - m)
}

/// As [`jacobi_real`] with the complementary parameter `m₁ = 1 − m` given
/// exactly.  `dn` comes from `dn² = m₁ + m cn²`, which has no cancellation.
fn jacobi_real_c(u: f64, m: f64, m1: f64) -> (f64, f64, f64) {
    if m < 1e-300 {
        return (u.sin(), u.cos(), 1.0);
    }
    if m1 <= 0.0 {
        let s = 1.0 / u.cosh();
        return (u.tanh(), s, s);
    }
    let mut a = [0.0f64; 20];
    let mut c = [0.0f64; 20];
    a[0] = 1.0;
    let mut b = m1.sqrt();
    c[0] = m.sqrt();
    let mut n = 0;
    while c[n].abs() > 1e-16 && n < 19 {
        a[n + 1] = 0.5 * (a[n] + b);
        c[n + 1] = 0.5 * (a[n] - b);
        b = (a[n] * b).sqrt();
        n += 1;
    }
    let mut phi = 2f64.powi(n as i32) * a[n] * u;
    for j in (1..=n).rev() {
        phi = 0.5 * (phi + (c[j] / a[j] * phi.sin()).asin());
    }
    let (s, cn) = phi.sin_cos();
    (s, cn, (m1 + m * cn * cn).sqrt())
}

/// Modulus data of the rectangle `[−K, K] × [0, K']` with `K'/K = 2/ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticModulus {
    pub k: f64,
    pub kp: f64,
    pub big_k: f64,
    pub big_kp: f64,
}

impl EllipticModulus {
    /// From the nome `q = e^{−π K'/K}` through theta constants.
    pub fn for_aspect(aspect: f64) -> Result<Self, ConformalError> {
        if !(aspect > 0.0 && aspect.is_finite()) {
            return Err(ConformalError::BadAspect(aspect));
        }
        let q = (-2.0 * PI / aspect).exp();
        let (mut t2, mut t3, mut t4) = (0.0, 1.0, 1.0);
        for n in 0..400 {
            let nf = n as f64;
            let a = q.powf((nf + 0.5) * (nf + 0.5));
            t2 += 2.0 * a;
            if n > 0 {
                let b = q.powf(nf * nf);
                t3 += 2.0 * b;
                t4 += 2.0 * if n % 2 == 1 { -b } else { b };
            }
            if a < 1e-18 {
                break;
            }
        }
        let k = (t2 / t3).powi(2);
        let kp = (t4 / t3).powi(2);
        Ok(EllipticModulus {
            k,
            kp,
            big_k: ellip_k(kp),
            big_kp: ellip_k(k),
        })
    }

    /// `sn(z | k)` as numerator and real denominator, plus `cn·dn`.
    fn sn_parts(&self, z: C) -> (C, f64, C) {
        let (m, m1) = (self.k * self.k, self.kp * self.kp);
        let (s, c, d) = jacobi_real_c(z.re, m, m1);
        let (s1, c1, d1) = jacobi_real_c(z.im, m1, m);
        let den = c1 * c1 + self.k * self.k * s * s * s1 * s1;
        let num = C::new(s * d1, c * d * s1 * c1);
        let cn = C::new(c * c1, -s * d * s1 * d1);
        let dn = C::new(d * c1 * d1, -self.k * self.k * s * c * s1);
        (num, den, cn * dn / (den * den))
    }

    pub fn sn(&self, z: C) -> C {
        if z.im > 0.5 * self.big_kp {
            // sn(u + iK') = 1 / (k sn u) keeps the pole at iK' well conditioned
            let w = self.sn(z - C::new(0.0, self.big_kp));
            return 1.0 / (self.k * w);
        }
        let (num, den, _) = self.sn_parts(z);
        num / den
    }

    /// `sn` of a boundary point of the rectangle, in homogeneous coordinates.
    fn sn_boundary(&self, z: C) -> Proj {
        if z.im > 0.5 * self.big_kp {
            let (num, den, _) = self.sn_parts(z - C::new(0.0, self.big_kp));
            (den, self.k * num.re)
        } else {
            let (num, den, _) = self.sn_parts(z);
            (num.re, den)
        }
    }

    /// Inverse of `sn` on the closed upper half-plane, with values in the
    /// rectangle `[−K, K] × [0, K']`.
    pub fn sn_inverse(&self, w: C) -> C {
        if !w.is_finite() {
            return C::new(0.0, self.big_kp);
        }
        let one = C::new(1.0, 0.0);
        let mut z = w * carlson_rf(one - w * w, one - self.k * self.k * w * w, one);
        for _ in 0..3 {
            let (num, den, deriv) = self.sn_parts(z);
            if deriv.norm() < 1e-6 || den == 0.0 {
                break;
            }
            let dz = (num / den - w) / deriv;
            if !(dz.norm() < 1e-3) {
                break;
            }
            z -= dz;
        }
        C::new(z.re.clamp(-self.big_k, self.big_k), z.im.clamp(0.0, self.big_kp))
    }
}

/// Carlson's symmetric integral `R_F(x, y, z)` for complex arguments off
/// the negative real axis, by duplication.
pub fn carlson_rf(mut x: C, mut y: C, mut z: C) -> C {
    for _ in 0..200 {
        let a = (x + y + z) / 3.0;
        let (dx, dy) = (1.0 - x / a, 1.0 - y / a);
        let dz = -(dx + dy);
        if dx.norm().max(dy.norm()).max(dz.norm()) < 1e-3 {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / a.sqrt();
        }
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let l = sx * sy + sx * sz + sy * sz;
        x = (x + l) * 0.25;
        y = (y + l) * 0.25;
        z = (z + l) * 0.25;
    }
    C::new(f64::NAN, f64::NAN)
}

// ------------------------------------------------------ Schwarz–Christoffel

/// `F(s) = ∫₀^s w^{-2/3}(1−w)^{-2/3} dw` for `s ∈ [0, 1]`.
///
/// With `w = v³` the integrand becomes `3(1 − v³)^{-2/3}`, smooth on
/// `[0, 2^{-1/3}]`; the upper half uses `F(s) = F(1) − F(1 − s)`.
pub fn sc_integral(s: f64) -> Result<f64, QuadratureError> {
    let s = s.clamp(0.0, 1.0);
    if s <= 0.5 {
        let v = s.cbrt();
        integrate(|u| 3.0 * (1.0 - u * u * u).powf(-2.0 / 3.0), 0.0, v, QUAD_TOL)
    } else {
        Ok(sc_total() - sc_integral(1.0 - s)?)
    }
}

/// `F(1) = B(1/3, 1/3) = Γ(1/3)² / Γ(2/3)`.
pub fn sc_total() -> f64 {
    static F1: OnceLock<f64> = OnceLock::new();
    *F1.get_or_init(|| {
        2.0 * integrate(
            |u| 3.0 * (1.0 - u * u * u).powf(-2.0 / 3.0),
            0.0,
            0.5f64.cbrt(),
            QUAD_TOL,
        )
        .expect("F(1/2) quadrature")
    })
}

/// `s ∈ [0, 1]` with `F(s) / F(1) = t`.
pub fn sc_inverse_real(t: f64) -> Result<f64, QuadratureError> {
    let t = t.clamp(0.0, 1.0);
    if t > 0.5 {
        return Ok(1.0 - sc_inverse_real(1.0 - t)?);
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    // Newton in v = s^{1/3}: G(v) = 3∫₀^v (1−u³)^{-2/3} du, G' = 3(1−v³)^{-2/3}.
    let target = t * sc_total();
    let vmax = 0.5f64.cbrt();
    let mut v = (target / 3.0).min(vmax);
    for _ in 0..60 {
        let g = integrate(|u| 3.0 * (1.0 - u * u * u).powf(-2.0 / 3.0), 0.0, v, QUAD_TOL)?;
        let dg = 3.0 * (1.0 - v * v * v).powf(-2.0 / 3.0);
        let step = (g - target) / dg;
        v = (v - step).clamp(0.0, vmax);
        if step.abs() < 1e-15 {
            break;
        }
    }
    Ok(v * v * v)
}

fn triangle_vertices() -> [C; 3] {
    [C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.5, 0.5 * SQRT3)]
}

fn triangle_centroid() -> C {
    C::new(0.5, SQRT3 / 6.0)
}

/// Rotation by `120°·k` about the triangle's centroid.
fn rotate_triangle(p: C, k: i32) -> C {
    let c = triangle_centroid();
    c + ZETA.powi(k.rem_euclid(3)) * (p - c)
}

/// `μ(s) = 1/(1 − s)` applied `k` times; `T(μ(s))` is `T(s)` rotated by 120°.
fn mu_pow(s: C, k: i32) -> C {
    let one = C::new(1.0, 0.0);
    match k.rem_euclid(3) {
        0 => s,
        1 => one / (one - s),
        _ => {
            if s.norm() == 0.0 {
                C::new(f64::INFINITY, 0.0)
            } else {
                (s - one) / s
            }
        }
    }
}

/// `∫₀^1 (1 − s v³)^{-2/3} dv` (complex), for `s` near vertex 0.
fn sc_kernel(s: C) -> Result<C, QuadratureError> {
    let f = |v: f64| (C::new(1.0, 0.0) - s * (v * v * v)).powf(-2.0 / 3.0);
    let re = integrate(|v| f(v).re, 0.0, 1.0, QUAD_TOL)?;
    let im = integrate(|v| f(v).im, 0.0, 1.0, QUAD_TOL)?;
    Ok(C::new(re, im))
}

/// `T(s) = F(s)/F(1)`: the Schwarz–Christoffel map of the closed upper
/// half-plane onto the triangle `(0, 1, e^{iπ/3})`, with `0 ↦ 0`, `1 ↦ 1`,
/// `∞ ↦ e^{iπ/3}`.
pub fn sc_triangle(s: C) -> Result<C, QuadratureError> {
    if !s.is_finite() {
        return Ok(triangle_vertices()[2]);
    }
    // Pull back into the Voronoi cell of vertex 0, {Re s ≤ 1/2, |s| ≤ 1}.
    let in_cell = |w: C| w.re <= 0.5 + 1e-12 && w.norm() <= 1.0 + 1e-12;
    let k = (0..3).find(|&k| in_cell(mu_pow(s, -k))).unwrap_or(0);
    let s0 = mu_pow(s, -k);
    let v = s0.cbrt();
    let p = 3.0 * v * sc_kernel(s0)? / sc_total();
    Ok(rotate_triangle(p, k))
}

/// Inverse of [`sc_triangle`] by Newton in `v = s^{1/3}` near the nearest vertex.
pub fn sc_triangle_inverse(p: C) -> Result<C, QuadratureError> {
    let verts = triangle_vertices();
    let k = (0..3)
        .min_by(|&a, &b| (p - verts[a]).norm().total_cmp(&(p - verts[b]).norm()))
        .unwrap() as i32;
    let target = rotate_triangle(p, -k);
    if target.norm() == 0.0 {
        return Ok(mu_pow(C::new(0.0, 0.0), k));
    }
    let f1 = sc_total();
    let mut v = target * f1 / 3.0;
    for _ in 0..60 {
        let s = v * v * v;
        let g = 3.0 * v * sc_kernel(s)? / f1;
        let dg = 3.0 * (C::new(1.0, 0.0) - s).powf(-2.0 / 3.0) / f1;
        let mut step = (g - target) / dg;
        // keep arg v in [0, π/3] (the sector that maps into the triangle)
        let lim = 0.25 * v.norm().max(1e-3);
        if step.norm() > lim {
            step *= lim / step.norm();
        }
        v -= step;
        if step.norm() < 1e-15 * v.norm().max(1e-300) {
            break;
        }
    }
    let s = v * v * v;
    Ok(mu_pow(C::new(s.re, s.im.max(0.0)), k))
}

// ---------------------------------------------------------- shape maps

impl ContinuumShape {
    /// Polygonal shapes as lattice shapes in the same coordinates.
    pub fn polygon(&self) -> Option<Shape> {
        match *self {
            ContinuumShape::Rectangle { aspect } => Some(Shape::rectangle(aspect)),
            ContinuumShape::EquilateralTriangle => Some(Shape::EquilateralTriangle { side: 1.0 }),
            _ => None,
        }
    }

    /// The continuum shape of a lattice shape and the length unit mapping
    /// lattice coordinates to continuum coordinates (`p_continuum = p / unit`).
    pub fn from_lattice(shape: Shape) -> (ContinuumShape, f64) {
        match shape {
            Shape::Square { side } => (ContinuumShape::Rectangle { aspect: 1.0 }, side),
            Shape::Rectangle { width, height } => (
                ContinuumShape::Rectangle {
                    aspect: width / height,
                },
                height,
            ),
            Shape::EquilateralTriangle { side } => (ContinuumShape::EquilateralTriangle, side),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, ContinuumShape::HalfPlane)
    }

    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        match self {
            ContinuumShape::HalfPlane => p[1].abs(),
            ContinuumShape::Disc => (1.0 - p[0].hypot(p[1])).abs(),
            _ => self.polygon().unwrap().distance_to_boundary(p),
        }
    }

    /// Membership of the open domain.
    pub fn contains_open(&self, p: [f64; 2]) -> bool {
        match self {
            ContinuumShape::HalfPlane => p[1] > 0.0,
            ContinuumShape::Disc => p[0].hypot(p[1]) < 1.0,
            _ => {
                let poly = self.polygon().unwrap();
                poly.contains(p) && poly.distance_to_boundary(p) > 0.0
            }
        }
    }

    /// First boundary point on the segment `a → b`, `a` inside.
    fn exit_point(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let d = [b[0] - a[0], b[1] - a[1]];
        let t = match self {
            ContinuumShape::HalfPlane => a[1] / (a[1] - b[1]),
            ContinuumShape::Disc => {
                // |a + t d| = 1, larger root
                let (aa, bb, cc) = (
                    d[0] * d[0] + d[1] * d[1],
                    2.0 * (a[0] * d[0] + a[1] * d[1]),
                    a[0] * a[0] + a[1] * a[1] - 1.0,
                );
                (-bb + (bb * bb - 4.0 * aa * cc).max(0.0).sqrt()) / (2.0 * aa)
            }
            _ => {
                let c = self.polygon().unwrap().corners();
                let n = c.len();
                let mut best = 1.0f64;
                for i in 0..n {
                    let (p, q) = (c[i], c[(i + 1) % n]);
                    let e = [q[0] - p[0], q[1] - p[1]];
                    let den = d[0] * e[1] - d[1] * e[0];
                    if den.abs() < 1e-300 {
                        continue;
                    }
                    let w = [p[0] - a[0], p[1] - a[1]];
                    let t = (w[0] * e[1] - w[1] * e[0]) / den;
                    let s = (w[0] * d[1] - w[1] * d[0]) / den;
                    if (0.0..=1.0).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&s) {
                        best = best.min(t);
                    }
                }
                best
            }
        };
        let t = t.clamp(0.0, 1.0);
        [a[0] + t * d[0], a[1] + t * d[1]]
    }

    /// Conformal map onto the upper half-plane (not normalized at marks).
    pub fn to_halfplane(&self, z: C) -> Result<C, ConformalError> {
        Ok(match *self {
            ContinuumShape::HalfPlane => z,
            ContinuumShape::Disc => {
                let one = C::new(1.0, 0.0);
                C::i() * (one + z) / (one - z)
            }
            ContinuumShape::Rectangle { aspect } => {
                let m = EllipticModulus::for_aspect(aspect)?;
                m.sn((z - aspect / 2.0) * (2.0 * m.big_k / aspect))
            }
            ContinuumShape::EquilateralTriangle => sc_triangle_inverse(z)?,
        })
    }

    /// Inverse of [`ContinuumShape::to_halfplane`].
    pub fn from_halfplane(&self, w: C) -> Result<C, ConformalError> {
        Ok(match *self {
            ContinuumShape::HalfPlane => w,
            ContinuumShape::Disc => {
                if !w.is_finite() {
                    C::new(1.0, 0.0)
                } else {
                    (w - C::i()) / (w + C::i())
                }
            }
            ContinuumShape::Rectangle { aspect } => {
                let m = EllipticModulus::for_aspect(aspect)?;
                aspect / 2.0 + m.sn_inverse(w) * (aspect / (2.0 * m.big_k))
            }
            ContinuumShape::EquilateralTriangle => sc_triangle(w)?,
        })
    }

    /// Boundary point to the extended real line.
    pub fn boundary_image(&self, mark: Mark, index: usize) -> Result<Proj, ConformalError> {
        let p = match (self, mark) {
            (ContinuumShape::HalfPlane, Mark::Real(t)) => {
                return Ok(if t.is_infinite() { (1.0, 0.0) } else { (t, 1.0) });
            }
            (_, Mark::Real(t)) => {
                return Err(ConformalError::NotOnBoundary {
                    index,
                    distance: t.abs(),
                })
            }
            (_, Mark::Point(p)) => p,
        };
        let off = self.distance_to_boundary(p);
        if off > 1e-8 {
            return Err(ConformalError::NotOnBoundary { index, distance: off });
        }
        Ok(match *self {
            ContinuumShape::HalfPlane => (p[0], 1.0),
            ContinuumShape::Disc => {
                let th = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
                let (s, c) = (0.5 * th).sin_cos();
                (-c, s)
            }
            ContinuumShape::Rectangle { aspect } => {
                let m = EllipticModulus::for_aspect(aspect)?;
                let z = (C::new(p[0], p[1]) - aspect / 2.0) * (2.0 * m.big_k / aspect);
                m.sn_boundary(z)
            }
            ContinuumShape::EquilateralTriangle => {
                let v = triangle_vertices();
                let z = C::new(p[0], p[1]);
                let (k, t) = (0..3)
                    .map(|k| {
                        let (a, b) = (v[k], v[(k + 1) % 3]);
                        let t = ((z - a) * (b - a).conj()).re.clamp(0.0, 1.0);
                        (k, t, (a + (b - a) * t - z).norm())
                    })
                    .min_by(|x, y| x.2.total_cmp(&y.2))
                    .map(|(k, t, _)| (k, t))
                    .unwrap();
                let s = sc_inverse_real(t)?;
                let mut h = (s, 1.0);
                for _ in 0..k {
                    h = (h.1, h.1 - h.0);
                }
                h
            }
        })
    }
}

impl MarkedDomainSpec {
    /// Marks at arc-length fractions of a lattice shape, in continuum units.
    pub fn from_lattice(shape: Shape, fractions: &[f64]) -> Self {
        let (cs, unit) = ContinuumShape::from_lattice(shape);
        MarkedDomainSpec {
            shape: cs,
            marks: fractions
                .iter()
                .map(|&f| {
                    let p = shape.point_at_fraction(f);
                    Mark::Point([p[0] / unit, p[1] / unit])
                })
                .collect(),
        }
    }

    /// The same domain with marks relabelled `P_{j+1} → P_j`.
    pub fn rotated(&self) -> Self {
        let mut marks = self.marks.clone();
        marks.rotate_left(1);
        MarkedDomainSpec {
            shape: self.shape,
            marks,
        }
    }

    /// Images of the marks on the extended real line, checked to be in
    /// counterclockwise (increasing cyclic) order.
    pub fn line_images(&self) -> Result<Vec<Proj>, ConformalError> {
        let h: Vec<Proj> = self
            .marks
            .iter()
            .enumerate()
            .map(|(i, &m)| self.shape.boundary_image(m, i))
            .collect::<Result<_, _>>()?;
        let keys: Vec<f64> = h.iter().map(|&p| line_key(p)).collect();
        let n = keys.len();
        let descents = (0..n).filter(|&i| keys[(i + 1) % n] < keys[i]).count();
        let distinct = (0..n).all(|i| (0..i).all(|j| keys[i] != keys[j]));
        if n > 1 && (descents != 1 || !distinct) {
            return Err(ConformalError::Order);
        }
        Ok(h)
    }
}

/// The coordinate `x` of `f(P_4)` on the side of the triangle joining
/// `f(P_3)` (`x = 0`) to `f(P_1)` (`x = 1`), where `f` maps `(D; P_1, P_2, P_3)`
/// onto the equilateral triangle.  Computed as `F(s_4)/F(1)` after the Möbius
/// normalization `P_3 ↦ 0`, `P_1 ↦ 1`, `P_2 ↦ ∞`.
pub fn carleson_x(spec: &MarkedDomainSpec) -> Result<TriangleCoordinate, ConformalError> {
    if spec.marks.len() != 4 {
        return Err(ConformalError::MarkCount {
            have: spec.marks.len(),
            need: 4,
        });
    }
    let h = spec.line_images()?;
    let s4 = proj_value(normalize_three(h[3], h[2], h[0], h[1]));
    let x = sc_integral(s4)? / sc_total();
    Ok(TriangleCoordinate {
        x: x.clamp(0.0, 1.0),
    })
}

/// Scaling-limit probability of a crossing from `A_1` to `A_3`.
pub fn crossing_prob_exact(spec: &MarkedDomainSpec) -> Result<f64, ConformalError> {
    Ok(carleson_x(spec)?.x)
}

/// Four corner marks of `Rectangle { aspect }` ordered so that `A_1` is the
/// left side and `A_3` the right side (horizontal crossing).
pub fn rectangle_horizontal(aspect: f64) -> MarkedDomainSpec {
    MarkedDomainSpec {
        shape: ContinuumShape::Rectangle { aspect },
        marks: vec![
            Mark::Point([0.0, 1.0]),
            Mark::Point([0.0, 0.0]),
            Mark::Point([aspect, 0.0]),
            Mark::Point([aspect, 1.0]),
        ],
    }
}

/// Lattice arc-length fractions of the same four corners.
pub fn rectangle_horizontal_fractions(aspect: f64) -> [f64; 4] {
    let per = 2.0 * (aspect + 1.0);
    [(2.0 * aspect + 1.0) / per, 0.0, aspect / per, (aspect + 1.0) / per]
}

// ------------------------------------------------------------- Dirichlet

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonShape {
    Disc,
    HalfPlane,
}

/// Poisson integral of the boundary function at interior `z`.
///
/// Disc data is a function of the angle `θ ∈ [0, 2π)`, half-plane data a
/// function of `x ∈ ℝ`.  `breaks` are parameter values where `f` may jump.
/// The kernel is integrated exactly by the change of variables that turns
/// it into the uniform measure (harmonic measure seen from `z`).
pub fn poisson_solve(
    shape: PoissonShape,
    f: &dyn Fn(f64) -> f64,
    breaks: &[f64],
    z: [f64; 2],
) -> Result<f64, ConformalError> {
    let tol = Tolerance {
        abs: 1e-11,
        rel: 1e-11,
        max_intervals: 4000,
    };
    match shape {
        PoissonShape::HalfPlane => {
            let (x0, y) = (z[0], z[1]);
            if !(y > 0.0) {
                return Err(ConformalError::Domain(z));
            }
            // x = x0 + y tan φ has density Q_y(x − x0)/π dx = dφ/π
            let br: Vec<f64> = breaks.iter().map(|&b| ((b - x0) / y).atan()).collect();
            let v = integrate_with(|phi| f(x0 + y * phi.tan()), -0.5 * PI, 0.5 * PI, &br, tol)?;
            Ok(v / PI)
        }
        PoissonShape::Disc => {
            let zc = C::new(z[0], z[1]);
            if !(zc.norm() < 1.0) {
                return Err(ConformalError::Domain(z));
            }
            // e^{iθ} = (e^{iα} + z)/(1 + z̄ e^{iα}) pushes dα/2π to P_r dθ/2π
            let theta = |a: f64| {
                let e = C::from_polar(1.0, a);
                ((e + zc) / (1.0 + zc.conj() * e)).arg().rem_euclid(2.0 * PI)
            };
            let alpha = |t: f64| {
                let e = C::from_polar(1.0, t);
                ((e - zc) / (1.0 - zc.conj() * e)).arg()
            };
            let mut br: Vec<f64> = breaks.iter().map(|&b| alpha(b)).collect();
            br.push(alpha(0.0));
            let v = integrate_with(|a| f(theta(a)), -PI, PI, &br, tol)?;
            Ok(v / (2.0 * PI))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Largest step.
    pub h_max: f64,
    /// Smallest step; steps of this size may cross the boundary.
    pub h_min: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            h_max: 1e-2,
            h_min: 1e-5,
        }
    }
}

const HEX_STEPS: [[f64; 2]; 6] = [
    [1.0, 0.0],
    [0.5, 0.5 * SQRT3],
    [-0.5, 0.5 * SQRT3],
    [-1.0, 0.0],
    [-0.5, -0.5 * SQRT3],
    [0.5, -0.5 * SQRT3],
];

/// Exit point of one hexagonal-step walk from `z`: step length
/// `clamp(dist/10, h_min, h_max)`, stopped at the first boundary crossing.
pub fn walk_exit(shape: ContinuumShape, z: [f64; 2], params: WalkParams, rng: &mut crate::rng::Rng) -> [f64; 2] {
    let mut p = z;
    loop {
        let d = shape.distance_to_boundary(p);
        let h = (0.1 * d).clamp(params.h_min, params.h_max);
        let s = HEX_STEPS[rng.gen_range(0..6)];
        let q = [p[0] + h * s[0], p[1] + h * s[1]];
        if !shape.contains_open(q) {
            return shape.exit_point(p, q);
        }
        p = q;
    }
}

/// Monte-Carlo solution `E_z f(W_τ)` of the Dirichlet problem.
pub fn walk_dirichlet(
    shape: ContinuumShape,
    f: &(dyn Fn([f64; 2]) -> f64 + Sync),
    z: [f64; 2],
    n_walks: usize,
    seed: u64,
    params: WalkParams,
    par: Parallelism,
) -> Result<MCEstimate, ConformalError> {
    if !shape.is_bounded() {
        return Err(ConformalError::Unbounded);
    }
    if !shape.contains_open(z) {
        return Err(ConformalError::Domain(z));
    }
    let parts = run_chunks(n_walks, seed, par, || (), |_, rng, range| {
        let mut m = Moments::default();
        for _ in range {
            m.push(f(walk_exit(shape, z, params, rng)));
        }
        m
    });
    let mut m = Moments::default();
    for p in &parts {
        m.merge(p);
    }
    Ok(MCEstimate::from_moments(m, seed))
}

/// Random walk on the cells of a discrete domain, started at the cell nearest
/// to `z`, stopped on stepping outside; `f` is evaluated at the midpoint of
/// the boundary edge crossed.
pub fn walk_dirichlet_discrete(
    d: &crate::lattice::DiscreteDomain,
    f: &(dyn Fn([f64; 2]) -> f64 + Sync),
    z: [f64; 2],
    n_walks: usize,
    seed: u64,
    par: Parallelism,
) -> Result<MCEstimate, ConformalError> {
    let start = (0..d.len())
        .min_by(|&a, &b| {
            let (pa, pb) = (d.center(d.cells()[a]), d.center(d.cells()[b]));
            crate::lattice::dist(pa, z).total_cmp(&crate::lattice::dist(pb, z))
        })
        .ok_or(ConformalError::Domain(z))?;
    let nbr = d.neighbor_table();
    let parts = run_chunks(n_walks, seed, par, || (), |_, rng, range| {
        let mut m = Moments::default();
        for _ in range {
            let mut i = start;
            loop {
                let k = rng.gen_range(0..6);
                let j = nbr[i][k];
                if j == crate::lattice::NONE {
                    let a = d.center(d.cells()[i]);
                    let b = d.to_plane(d.cells()[i].neighbor(k).unit_center());
                    m.push(f([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]));
                    break;
                }
                i = j as usize;
            }
        }
        m
    });
    let mut m = Moments::default();
    for p in &parts {
        m.merge(p);
    }
    Ok(MCEstimate::from_moments(m, seed))
}
