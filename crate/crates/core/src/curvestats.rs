//! Regularity statistics of planar curves: box counts, tortuosity partitions,
//! dimension fits and annulus traversal counts.
//!
//! `N_r` is the number of sets of diameter `r` needed to cover a curve and
//! `M_r` the minimal number of consecutive pieces of diameter `≤ r` it splits
//! into.  Every piece of a partition is itself such a set, so `N_r ≤ M_r`.

use std::collections::HashSet;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exploration::Curve;
use crate::stats::linear_fit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveStatsError {
    #[error("radius grid needs at least 4 strictly decreasing positive radii")]
    BadGrid,
    #[error("degenerate log-log fit")]
    DegenerateFit,
    #[error("curve has no vertices")]
    EmptyCurve,
}

/// Number of cells of the axis-aligned grid of side `r` (anchored at the
/// origin) that meet the polyline.
pub fn box_count(curve: &Curve, r: f64) -> usize {
    grid_cells(&curve.points, r).len()
}

fn cell_of(p: C, s: f64) -> (i64, i64) {
    ((p.re / s).floor() as i64, (p.im / s).floor() as i64)
}

/// Grid cells of side `s` met by the polyline (exact segment traversal).
fn grid_cells(pts: &[C], s: f64) -> HashSet<(i64, i64)> {
    let mut cells = HashSet::new();
    if let Some(&p) = pts.first() {
        cells.insert(cell_of(p, s));
    }
    for w in pts.windows(2) {
        let (a, b) = (w[0] / s, w[1] / s);
        let (mut i, mut j) = (a.re.floor() as i64, a.im.floor() as i64);
        let end = (b.re.floor() as i64, b.im.floor() as i64);
        cells.insert((i, j));
        let d = b - a;
        let step_x: i64 = if d.re > 0.0 { 1 } else { -1 };
        let step_y: i64 = if d.im > 0.0 { 1 } else { -1 };
        // parameter at which the segment crosses the next vertical/horizontal line
        let next = |x: f64, i: i64, dx: f64, st: i64| {
            if dx == 0.0 {
                f64::INFINITY
            } else {
                let line = if st > 0 { (i + 1) as f64 } else { i as f64 };
                (line - x) / dx
            }
        };
        let (mut tx, mut ty) = (next(a.re, i, d.re, step_x), next(a.im, j, d.im, step_y));
        let (dtx, dty) = ((1.0 / d.re).abs(), (1.0 / d.im).abs());
        let max_moves = (end.0 - i).abs() + (end.1 - j).abs();
        for _ in 0..max_moves {
            if (i, j) == end {
                break;
            }
            if tx < ty {
                i += step_x;
                tx += dtx;
            } else {
                j += step_y;
                ty += dty;
            }
            cells.insert((i, j));
        }
        cells.insert(end);
    }
    cells
}

/// Greedy tortuosity partition: the number of consecutive pieces of
/// diameter `≤ r`, each extended as far along the curve as possible (cuts
/// may fall inside edges).  Greedy is minimal: the diameter of a subarc only
/// grows with the subarc, so by induction the `k`-th greedy cut lies at or
/// beyond the `k`-th cut of any admissible partition.
pub fn tortuosity_count(curve: &Curve, r: f64) -> usize {
    let pts = &curve.points;
    if pts.is_empty() {
        return 0;
    }
    let r2 = r * r;
    let mut count = 1;
    let mut piece: Vec<C> = vec![pts[0]];
    // cheap enclosing circle of the piece: its first point and max distance to it
    let mut rho = 0.0f64;
    let mut k = 1;
    let mut from = pts[0];
    while k < pts.len() {
        let v = pts[k];
        let c = piece[0];
        let fits = (v - c).norm() + rho <= r || piece.iter().all(|s| (v - s).norm_sqr() <= r2);
        if fits {
            rho = rho.max((v - c).norm());
            piece.push(v);
            from = v;
            k += 1;
            continue;
        }
        // furthest point from + t·(v − from) still within r of the whole piece
        let d = v - from;
        let dd = d.norm_sqr();
        let mut t_max = 1.0f64;
        for s in &piece {
            let e = from - s;
            // |e + t d|² ≤ r²: upper root of dd t² + 2 (e·d) t + |e|² − r²
            let b = e.re * d.re + e.im * d.im;
            let disc = b * b - dd * (e.norm_sqr() - r2);
            let t = (-b + disc.max(0.0).sqrt()) / dd;
            t_max = t_max.min(t);
        }
        let cut = from + d * t_max.max(0.0);
        count += 1;
        piece.clear();
        piece.push(cut);
        rho = 0.0;
        from = cut;
    }
    count
}

/// Cover count by sets of diameter `r`: the better of the grid cover with
/// cells of diameter `r` and the greedy tortuosity partition.
pub fn cover_count(curve: &Curve, r: f64) -> usize {
    grid_cells(&curve.points, r / std::f64::consts::SQRT_2)
        .len()
        .min(tortuosity_count(curve, r))
}

/// `k` log-spaced radii from `r_max` down to `r_min`.
pub fn log_radii(r_max: f64, r_min: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| r_max * (r_min / r_max).powf(i as f64 / (k - 1).max(1) as f64))
        .collect()
}

fn check_grid(r_grid: &[f64]) -> Result<(), CurveStatsError> {
    if r_grid.len() < 4 || r_grid.iter().any(|&r| !(r > 0.0)) || r_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CurveStatsError::BadGrid);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    /// Decreasing radii.
    pub r_grid: Vec<f64>,
    pub n_r: Vec<usize>,
    pub m_r: Vec<usize>,
    /// Log-log slope of `N_r` against `1/r`.
    pub dim_box: f64,
    /// Reciprocal of the log-log slope of `M_r` against `1/r`.
    pub holder_exponent_est: f64,
}

impl CurveStats {
    pub fn compute(curve: &Curve, r_grid: &[f64]) -> Result<CurveStats, CurveStatsError> {
        check_grid(r_grid)?;
        if curve.is_empty() {
            return Err(CurveStatsError::EmptyCurve);
        }
        let n_r: Vec<usize> = r_grid.iter().map(|&r| cover_count(curve, r)).collect();
        let m_r: Vec<usize> = r_grid.iter().map(|&r| tortuosity_count(curve, r)).collect();
        let (dim_box, tau) = (log_slope(r_grid, &n_r)?, log_slope(r_grid, &m_r)?);
        Ok(CurveStats {
            r_grid: r_grid.to_vec(),
            n_r,
            m_r,
            dim_box,
            holder_exponent_est: 1.0 / tau,
        })
    }
}

fn log_slope(r: &[f64], n: &[usize]) -> Result<f64, CurveStatsError> {
    let x: Vec<f64> = r.iter().map(|r| -r.ln()).collect();
    let y: Vec<f64> = n.iter().map(|&n| (n as f64).ln()).collect();
    let fit = linear_fit(&x, &y).ok_or(CurveStatsError::DegenerateFit)?;
    if !(fit.slope > 0.0) {
        return Err(CurveStatsError::DegenerateFit);
    }
    Ok(fit.slope)
}

/// `(dim_box, holder_est)`: the log-log slope of `N_r` and the reciprocal of
/// that of `M_r`.
pub fn dimension_fit(curve: &Curve, r_grid: &[f64]) -> Result<(f64, f64), CurveStatsError> {
    let s = CurveStats::compute(curve, r_grid)?;
    Ok((s.dim_box, s.holder_exponent_est))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub center: [f64; 2],
    pub r: f64,
    pub big_r: f64,
}

/// Parameters in `[0, 1]` where the segment `a + t (b − a)` crosses the
/// circle `|z − c| = rad`, sorted.
fn circle_hits(a: C, b: C, c: C, rad: f64) -> Vec<f64> {
    let d = b - a;
    let e = a - c;
    let dd = d.norm_sqr();
    if dd == 0.0 {
        return vec![];
    }
    let h = (e.re * d.re + e.im * d.im) / dd;
    let disc = h * h - (e.norm_sqr() - rad * rad) / dd;
    if disc < 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    [-h - s, -h + s].into_iter().filter(|t| (0.0..=1.0).contains(t)).collect()
}

/// Number of traversals of each annulus: maximal subarcs running between the
/// inner and the outer circle.
pub fn crossing_profile(curve: &Curve, annuli: &[Annulus]) -> Vec<usize> {
    annuli.iter().map(|an| traversals(&curve.points, an)).collect()
}

fn traversals(pts: &[C], an: &Annulus) -> usize {
    let c = C::new(an.center[0], an.center[1]);
    // side: -1 inside the inner disc, +1 outside the outer one, 0 between
    let side = |p: C| {
        let d = (p - c).norm();
        if d <= an.r {
            -1
        } else if d >= an.big_r {
            1
        } else {
            0
        }
    };
    let mut last = 0i32;
    let mut count = 0;
    let mut visit = |s: i32| {
        if s != 0 {
            if last != 0 && s != last {
                count += 1;
            }
            last = s;
        }
    };
    if let Some(&p) = pts.first() {
        visit(side(p));
    }
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut ts: Vec<(f64, i32)> = Vec::new();
        for (rad, s) in [(an.r, -1), (an.big_r, 1)] {
            for t in circle_hits(a, b, c, rad) {
                ts.push((t, s));
            }
        }
        ts.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (_, s) in ts {
            visit(s);
        }
        visit(side(b));
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Rng};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn poly(p: &[[f64; 2]]) -> Curve {
        Curve::new(p.iter().map(|q| C::new(q[0], q[1])).collect())
    }

    fn random_polyline(rng: &mut Rng, n: usize, step: f64) -> Curve {
        let mut z = C::new(rng.gen::<f64>(), rng.gen::<f64>());
        let mut pts = vec![z];
        for _ in 1..n {
            z += C::from_polar(step * rng.gen::<f64>(), std::f64::consts::TAU * rng.gen::<f64>());
            pts.push(z);
        }
        Curve::new(pts)
    }

    #[test]
    fn segment_box_counts() {
        let mut rng: Rng = stream(21, 0);
        for _ in 0..200 {
            let l = 0.1 + 3.0 * rng.gen::<f64>();
            let r = 0.05 + 0.5 * rng.gen::<f64>();
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            let n = box_count(&poly(&[[x, y], [x + l, y]]), r);
            let lo = (l / r).ceil() as usize;
            assert!(n >= lo && n <= lo + 2, "{n} {lo}");
        }
        assert_eq!(box_count(&poly(&[[0.3, 0.3]]), 0.1), 1);
    }

    #[test]
    fn grid_traversal_matches_dense_sampling() {
        let mut rng: Rng = stream(22, 0);
        for _ in 0..50 {
            let c = random_polyline(&mut rng, 8, 0.7);
            let s = 0.05 + 0.2 * rng.gen::<f64>();
            let exact = grid_cells(&c.points, s);
            let mut sampled = HashSet::new();
            for w in c.points.windows(2) {
                for k in 0..=20000 {
                    sampled.insert(cell_of(w[0] + (w[1] - w[0]) * (k as f64 / 20000.0), s));
                }
            }
            // dense sampling can only miss cells clipped at a corner
            assert!(sampled.is_subset(&exact));
            assert!(exact.len() - sampled.len() <= 2 * c.len());
        }
    }

    // Independent cover: discs of diameter r placed greedily along a dense
    // resampling of the curve.
    fn greedy_disc_cover(c: &Curve, r: f64) -> usize {
        let mut pts = Vec::new();
        for w in c.points.windows(2) {
            let n = ((w[1] - w[0]).norm() / (r * 0.01)).ceil().max(1.0) as usize;
            for k in 0..n {
                pts.push(w[0] + (w[1] - w[0]) * (k as f64 / n as f64));
            }
        }
        pts.push(*c.points.last().unwrap());
        let mut centers: Vec<C> = Vec::new();
        for p in pts {
            if !centers.iter().any(|q| (p - q).norm() <= 0.5 * r) {
                centers.push(p);
            }
        }
        centers.len()
    }

    #[test]
    fn box_count_agrees_with_disc_cover() {
        let mut rng: Rng = stream(23, 0);
        for _ in 0..10 {
            let c = random_polyline(&mut rng, 40, 0.2);
            for r in [0.05, 0.1, 0.2] {
                let (b, g) = (box_count(&c, r) as f64, greedy_disc_cover(&c, r) as f64);
                assert!(b / g <= 3.0 && g / b <= 3.0, "{b} {g}");
            }
        }
    }

    #[test]
    fn segment_tortuosity() {
        let mut rng: Rng = stream(24, 0);
        for _ in 0..200 {
            let l = 0.1 + 3.0 * rng.gen::<f64>();
            let r = 0.05 + 0.5 * rng.gen::<f64>();
            let th = std::f64::consts::TAU * rng.gen::<f64>();
            let e = C::from_polar(l, th);
            let c = Curve::new(vec![C::new(0.2, 0.1), C::new(0.2, 0.1) + e]);
            assert_eq!(tortuosity_count(&c, r), (l / r).ceil() as usize, "{l} {r}");
        }
        let blob = poly(&[[0.0, 0.0], [0.3, 0.1], [0.1, 0.4], [0.2, 0.2]]);
        assert_eq!(tortuosity_count(&blob, 0.6), 1);
    }

    // Brute force: cuts restricted to a grid of spacing h in the edge
    // parameter, minimum by dynamic programming, diameters by vertex pairs.
    fn dp_partition(c: &Curve, r: f64, sub: usize) -> usize {
        let mut pts = Vec::new();
        for w in c.points.windows(2) {
            for k in 0..sub {
                pts.push(w[0] + (w[1] - w[0]) * (k as f64 / sub as f64));
            }
        }
        pts.push(*c.points.last().unwrap());
        let n = pts.len();
        let mut best = vec![usize::MAX; n];
        best[0] = 0;
        for i in 0..n - 1 {
            if best[i] == usize::MAX {
                continue;
            }
            // piece from pts[i] to pts[j]; sub-grid points are on the segments
            let mut diam: f64 = 0.0;
            for j in i + 1..n {
                for k in i..j {
                    diam = diam.max((pts[j] - pts[k]).norm());
                }
                if diam > r {
                    break;
                }
                best[j] = best[j].min(best[i] + 1);
            }
        }
        best[n - 1]
    }

    #[test]
    fn greedy_partition_is_minimal() {
        let mut rng: Rng = stream(25, 0);
        let sub = 64;
        for _ in 0..60 {
            let n = 2 + (rng.gen::<f64>() * 11.0) as usize;
            let c = random_polyline(&mut rng, n, 0.5);
            let r = 0.1 + 0.6 * rng.gen::<f64>();
            let g = tortuosity_count(&c, r);
            let h = c.points.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max) / sub as f64;
            assert!(dp_partition(&c, r, sub) >= g);
            // snapping each cut to the grid changes diameters by at most 2h
            assert!(tortuosity_count(&c, r - 2.0 * h) >= dp_partition(&c, r, sub), "{g}");
        }
    }

    #[test]
    fn annulus_traversals() {
        let an = Annulus { center: [0.0, 0.0], r: 0.5, big_r: 1.0 };
        assert_eq!(crossing_profile(&poly(&[[-2.0, 0.0], [2.0, 0.0]]), &[an]), vec![2]);
        assert_eq!(crossing_profile(&poly(&[[3.0, 0.0], [3.0, 2.0]]), &[an]), vec![0]);
        // grazing the inner disc without crossing the annulus
        assert_eq!(crossing_profile(&poly(&[[0.0, 0.0], [0.7, 0.0], [0.0, 0.1]]), &[an]), vec![0]);
        // out, in, out, in
        let zig = poly(&[[2.0, 0.0], [0.0, 0.1], [0.0, 2.0], [0.1, 0.0]]);
        assert_eq!(crossing_profile(&zig, &[an]), vec![3]);
    }

    #[test]
    fn straight_and_scaled_dimensions() {
        let seg = Curve::new((0..=1000).map(|k| C::new(k as f64 / 1000.0, 0.3 * k as f64 / 1000.0)).collect());
        let radii = log_radii(0.1, 0.001, 8);
        let (d, h) = dimension_fit(&seg, &radii).unwrap();
        assert!((d - 1.0).abs() < 0.05 && (h - 1.0).abs() < 0.05, "{d} {h}");
        let mut rng: Rng = stream(26, 0);
        let c = random_polyline(&mut rng, 3000, 0.01);
        let (d1, _) = dimension_fit(&c, &radii).unwrap();
        let big: Vec<f64> = radii.iter().map(|r| 2.0 * r).collect();
        let (d2, _) = dimension_fit(&c.scaled(2.0), &big).unwrap();
        // only the grid anchoring differs
        assert!((d1 - d2).abs() < 0.05, "{d1} {d2}");
        assert_eq!(dimension_fit(&seg, &radii[..3]), Err(CurveStatsError::BadGrid));
    }

    #[test]
    fn circle_arc_refinements_approach_one() {
        let arc = |n: usize| {
            Curve::new((0..=n).map(|k| C::from_polar(1.0, std::f64::consts::PI * k as f64 / n as f64)).collect())
        };
        let radii = log_radii(0.3, 0.01, 6);
        let errs: Vec<f64> = [8, 64, 512].iter().map(|&n| (dimension_fit(&arc(n), &radii).unwrap().0 - 1.0).abs()).collect();
        assert!(errs[2] < 0.05 && errs[2] <= errs[0], "{errs:?}");
    }

    proptest! {
        #[test]
        fn cover_never_exceeds_partition(seed in 0u64..1000, r in 0.01f64..0.5) {
            let mut rng: Rng = stream(seed, 0);
            let c = random_polyline(&mut rng, 60, 0.1);
            prop_assert!(cover_count(&c, r) <= tortuosity_count(&c, r));
            // monotone under refinement of r
            prop_assert!(tortuosity_count(&c, 0.5 * r) >= tortuosity_count(&c, r));
            prop_assert!(cover_count(&c, 0.5 * r) >= cover_count(&c, r) / 4);
        }

        #[test]
        fn tortuosity_ignores_reparametrization(seed in 0u64..1000, r in 0.02f64..0.5) {
            let mut rng: Rng = stream(seed, 1);
            let c = random_polyline(&mut rng, 30, 0.1);
            // insert midpoints: same curve, more vertices
            let mut fine = vec![c.points[0]];
            for w in c.points.windows(2) {
                fine.push(0.5 * (w[0] + w[1]));
                fine.push(w[1]);
            }
            prop_assert_eq!(tortuosity_count(&c, r), tortuosity_count(&Curve::new(fine), r));
        }
    }
}
