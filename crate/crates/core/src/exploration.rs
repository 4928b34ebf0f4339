//! Exploration paths, their fillings, and transport to the half-plane.
//!
//! In a 2-marked domain `(D; a, b)` the arc `A_1` running counterclockwise
//! from `a` to `b` is colored yellow and `A_2` (from `b` back to `a`) blue.
//! Walking from `a` into `D`, the counterclockwise boundary direction is on
//! the walker's right, so the exploration path keeps yellow on its right and
//! blue on its left.  Under the chordal map to `(H; 0, ∞)`, `A_1` goes to the
//! positive and `A_2` to the negative real axis.

use std::collections::HashSet;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{ConformalError, ContinuumShape, Mark, Proj};
use crate::lattice::{build_canonical_domain, DiscreteDomain, LatticeError, Shape, Vertex};
use crate::loewner::{zipper_until, LoewnerError};
use crate::percolation::{trace_interface_into, Color, Configuration, InterfaceWalk};
use crate::rng::{par_map, stream};
use crate::sle::DrivingPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplorationError {
    #[error("exploration needs a 2-marked domain (has {0} marks)")]
    MarkCount(usize),
    #[error("domain has no canonical shape to map from")]
    NoShape,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
}

/// A polyline in the plane with optional provenance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curve {
    pub points: Vec<C>,
    /// Lattice mesh the curve was extracted at.
    pub mesh: Option<f64>,
    pub domain: Option<String>,
}

impl Curve {
    pub fn new(points: Vec<C>) -> Self {
        Curve {
            points,
            mesh: None,
            domain: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scaled(&self, r: f64) -> Curve {
        Curve {
            points: self.points.iter().map(|z| z * r).collect(),
            mesh: self.mesh.map(|m| m * r),
            domain: self.domain.clone(),
        }
    }

    /// Mirror image across the imaginary axis.
    pub fn reflected(&self) -> Curve {
        Curve {
            points: self.points.iter().map(|z| C::new(-z.re, z.im)).collect(),
            ..self.clone()
        }
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// An exploration path: the interface walk and its polyline.
#[derive(Debug, Clone)]
pub struct Exploration {
    /// Entry 0 is the edge between the two external hexagons at `a`; entry
    /// `k ≥ 1` is the `k`-th step inside the domain.
    pub walk: InterfaceWalk,
    pub curve: Curve,
}

impl Exploration {
    /// Number of steps inside the domain.
    pub fn steps(&self) -> usize {
        self.walk.vertices.len() - 1
    }
}

fn check_two_marks(d: &DiscreteDomain) -> Result<(), ExplorationError> {
    if d.num_arcs() != 2 {
        return Err(ExplorationError::MarkCount(d.num_arcs()));
    }
    Ok(())
}

/// Traces the exploration path of `c` into `out`, with the boundary colors
/// fixed to `A_1` yellow and `A_2` blue (the configuration's own boundary
/// colors are not consulted).
pub fn extract_walk_into(c: &Configuration, out: &mut InterfaceWalk) -> Result<(), ExplorationError> {
    let d = c.domain();
    check_two_marks(d)?;
    trace_interface_into(d, &|i| c.is_blue(i), 0, 1, &|arc| arc == 1, out);
    Ok(())
}

pub fn walk_curve(d: &DiscreteDomain, walk: &InterfaceWalk) -> Curve {
    Curve {
        points: walk
            .vertices
            .iter()
            .map(|&v| {
                let p = d.vertex_position(v);
                C::new(p[0], p[1])
            })
            .collect(),
        mesh: Some(d.mesh()),
        domain: d.shape().map(|s| format!("{s:?}")),
    }
}

/// The exploration path from `a` (mark 0) to `b` (mark 1).
pub fn extract_path(c: &Configuration) -> Result<Exploration, ExplorationError> {
    let mut walk = InterfaceWalk::default();
    extract_walk_into(c, &mut walk)?;
    let curve = walk_curve(c.domain(), &walk);
    Ok(Exploration { walk, curve })
}

/// The discrete filling of a walk prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct FilledHull {
    /// Per cell: in the hull.
    pub cells: Vec<bool>,
    /// Per cell: adjacent to a traversed edge.
    pub explored: Vec<bool>,
    /// Current tip of the walk.
    pub tip: [f64; 2],
}

impl FilledHull {
    pub fn len(&self) -> usize {
        self.cells.iter().filter(|&&x| x).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hull cells that were never adjacent to the walk (sealed-off pockets).
    pub fn sealed(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells.len()).filter(|&i| self.cells[i] && !self.explored[i])
    }
}

/// Filling after the first `steps` steps of `walk`: the explored hexagons
/// together with every cell cut off from `b`.  A cell stays outside the
/// filling while one of its corners is joined to `b` by edges of the domain
/// through vertices the walk has not yet visited; the remaining walk runs
/// through exactly such vertices.  The complete path fills the whole domain.
pub fn fill_hull(d: &DiscreteDomain, walk: &InterfaceWalk, steps: usize) -> FilledHull {
    let n = d.len();
    let steps = steps.min(walk.vertices.len().saturating_sub(1));
    let mut explored = vec![false; n];
    for k in 1..=steps {
        for c in [walk.left[k], walk.right[k]] {
            if let Some(i) = d.index_of(c) {
                explored[i] = true;
            }
        }
    }
    let tip = d.vertex_position(walk.vertices[steps]);
    if steps == 0 {
        return FilledHull {
            cells: vec![false; n],
            explored,
            tip,
        };
    }
    let visited: HashSet<Vertex> = walk.vertices[..=steps].iter().copied().collect();
    let b = d.marks()[1];
    let mut reach: HashSet<Vertex> = HashSet::new();
    let mut stack = Vec::new();
    if !visited.contains(&b) {
        reach.insert(b);
        stack.push(b);
    }
    while let Some(v) = stack.pop() {
        let hv = v.hexes();
        for u in v.neighbors() {
            if visited.contains(&u) || reach.contains(&u) {
                continue;
            }
            // an edge of the domain has a domain hexagon on one side
            if u.hexes().iter().any(|h| hv.contains(h) && d.contains(*h)) {
                reach.insert(u);
                stack.push(u);
            }
        }
    }
    let cells = d
        .cells()
        .iter()
        .enumerate()
        .map(|(i, &c)| explored[i] || !(0..6).any(|j| reach.contains(&Vertex::from_corner(c, j))))
        .collect();
    FilledHull { cells, explored, tip }
}

/// Conformal map of a canonical 2-marked domain onto `(H; 0, ∞)`, scaled so
/// that the boundary point halfway (in arc length) along `A_1` goes to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChordalMap {
    shape: Shape,
    continuum: ContinuumShape,
    unit: f64,
    a: [f64; 2],
    b: [f64; 2],
    ha: Proj,
    hb: Proj,
    c: f64,
}

impl ChordalMap {
    /// `a` and `b` at counterclockwise arc-length fractions of the shape.
    pub fn new(shape: Shape, a_frac: f64, b_frac: f64) -> Result<Self, ExplorationError> {
        let (continuum, unit) = ContinuumShape::from_lattice(shape);
        let a = shape.point_at_fraction(a_frac);
        let b = shape.point_at_fraction(b_frac);
        let mid = shape.point_at_fraction(a_frac + 0.5 * (b_frac - a_frac).rem_euclid(1.0));
        let img = |p: [f64; 2], i: usize| continuum.boundary_image(Mark::Point([p[0] / unit, p[1] / unit]), i);
        let (ha, hb, hm) = (img(a, 0)?, img(b, 1)?, img(mid, 2)?);
        let mut m = ChordalMap {
            shape,
            continuum,
            unit,
            a,
            b,
            ha,
            hb,
            c: 1.0,
        };
        let v = m.mobius_proj(hm);
        m.c = 1.0 / v.re;
        Ok(m)
    }

    /// The map for a lattice domain, with `a`, `b` at the boundary points of
    /// the shape nearest to the domain's two marks.
    pub fn for_domain(d: &DiscreteDomain) -> Result<Self, ExplorationError> {
        check_two_marks(d)?;
        let shape = d.shape().ok_or(ExplorationError::NoShape)?;
        let f = |j: usize| shape.fraction_of(d.vertex_position(d.marks()[j]));
        Self::new(shape, f(0), f(1))
    }

    pub fn marks(&self) -> ([f64; 2], [f64; 2]) {
        (self.a, self.b)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    fn mobius_proj(&self, h: Proj) -> C {
        let (a, b) = (self.ha, self.hb);
        C::new(self.c * (a.1 * h.0 - a.0 * h.1) / (b.1 * h.0 - b.0 * h.1), 0.0)
    }

    fn mobius(&self, w: C) -> C {
        let (a, b) = (self.ha, self.hb);
        (w * a.1 - a.0) * self.c / (w * b.1 - b.0)
    }

    /// Image of a plane point.  Points outside the shape (or on its boundary)
    /// are projected onto the boundary and land on the real line; the flag
    /// reports a projection of a point strictly outside.
    pub fn map(&self, p: [f64; 2]) -> Result<(C, bool), ExplorationError> {
        let inside = self.shape.contains(p);
        if !inside || self.shape.distance_to_boundary(p) < 1e-12 * self.unit {
            let q = self.shape.project_to_boundary(p);
            let h = self.continuum.boundary_image(Mark::Point([q[0] / self.unit, q[1] / self.unit]), 0)?;
            let w = if h.1 == 0.0 {
                C::new(self.c * self.ha.1 / self.hb.1, 0.0)
            } else {
                let x = self.mobius_proj(h);
                C::new(x.re, 0.0)
            };
            return Ok((w, !inside));
        }
        let w = self.continuum.to_halfplane(C::new(p[0] / self.unit, p[1] / self.unit))?;
        let z = self.mobius(w);
        Ok((C::new(z.re, z.im.max(0.0)), false))
    }

    /// Inverse image of a point of the closed upper half-plane.
    pub fn inverse(&self, z: C) -> Result<[f64; 2], ExplorationError> {
        let (a, b) = (self.ha, self.hb);
        let w = (z * b.0 - self.c * a.0) / (z * b.1 - self.c * a.1);
        let q = self.continuum.from_halfplane(w)?;
        Ok([q.re * self.unit, q.im * self.unit])
    }

    /// Images of a curve's vertices, the first (at `a`) sent exactly to 0.
    /// Returns the mapped curve and the number of projected vertices.
    pub fn map_curve(&self, curve: &Curve) -> Result<(Curve, usize), ExplorationError> {
        let mut projected = 0;
        let mut pts = Vec::with_capacity(curve.len());
        for (k, z) in curve.points.iter().enumerate() {
            if k == 0 {
                pts.push(C::new(0.0, 0.0));
                continue;
            }
            let (w, proj) = self.map([z.re, z.im])?;
            projected += proj as usize;
            pts.push(w);
        }
        Ok((
            Curve {
                points: pts,
                mesh: curve.mesh,
                domain: curve.domain.clone(),
            },
            projected,
        ))
    }
}

/// A canonical shape with exploration endpoints at arc-length fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSetup {
    pub shape: Shape,
    pub mesh: f64,
    pub a: f64,
    pub b: f64,
}

impl ExplorationSetup {
    /// Unit square explored from the midpoint of the bottom side to the
    /// midpoint of the top side.
    pub fn square(mesh: f64) -> Self {
        ExplorationSetup {
            shape: Shape::Square { side: 1.0 },
            mesh,
            a: 0.125,
            b: 0.625,
        }
    }

    pub fn domain(&self) -> Result<DiscreteDomain, ExplorationError> {
        Ok(build_canonical_domain(self.shape, self.mesh, &[self.a, self.b])?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingOptions {
    /// Capacity-time horizon of every returned driving path.
    pub t_max: f64,
    /// Uniform grid steps on `[0, t_max]`.
    pub n_grid: usize,
    /// Vertices are used up to the first one mapped beyond this radius.
    pub r_cut: f64,
}

impl Default for DrivingOptions {
    fn default() -> Self {
        DrivingOptions {
            t_max: 1.0,
            n_grid: 1024,
            r_cut: 1e3,
        }
    }
}

/// Zipped driving functions of an exploration-path ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationDriving {
    pub paths: Vec<DrivingPath>,
    pub attempted: usize,
    /// Paths dropped because the zipper stalled.
    pub stalled: usize,
    /// Paths dropped because they did not reach `t_max` before `r_cut`.
    pub too_short: usize,
    /// Vertices outside the continuum shape, projected onto its boundary.
    pub projected: usize,
    /// Zipper vertices on the real line (boundary touches).
    pub boundary: usize,
    /// Zipper vertices whose image underflowed onto the real line.
    pub skipped: usize,
    /// Mean number of slit steps to reach `t_max`.
    pub mean_steps: f64,
}

impl ExplorationDriving {
    pub fn stall_rate(&self) -> f64 {
        self.stalled as f64 / self.attempted.max(1) as f64
    }
}

enum PathOutcome {
    Ok(DrivingPath, [usize; 3], usize),
    Stall,
    Short,
}

/// Exploration path → half-plane → zipper → driving on a uniform grid, for
/// `n_paths` independent critical configurations (path `i` colored from
/// stream `i` of `seed`).
pub fn driving_of_exploration(
    setup: &ExplorationSetup,
    n_paths: usize,
    seed: u64,
    opts: DrivingOptions,
    workers: usize,
) -> Result<ExplorationDriving, ExplorationError> {
    let d = setup.domain()?;
    let map = ChordalMap::for_domain(&d)?;
    let idx: Vec<u64> = (0..n_paths as u64).collect();
    let outcomes = par_map(&idx, workers, |_, &i| -> Result<PathOutcome, ExplorationError> {
        let mut c = Configuration::uniform(&d, Color::Yellow);
        c.resample(&mut stream(seed, i), 0.5);
        let ex = extract_path(&c)?;
        let (h, projected) = map.map_curve(&ex.curve)?;
        let cut = h.points.iter().position(|z| !(z.norm() <= opts.r_cut)).unwrap_or(h.len());
        match zipper_until(&h.points[..cut], 0, opts.t_max) {
            Err(LoewnerError::Stall { .. }) => Ok(PathOutcome::Stall),
            Err(e) => Err(e.into()),
            Ok(z) if z.chain.total_time() < opts.t_max => Ok(PathOutcome::Short),
            Ok(z) => Ok(PathOutcome::Ok(
                DrivingPath::from_chain(&z.chain, opts.t_max, opts.n_grid),
                [projected, z.boundary, z.skipped],
                z.chain.len(),
            )),
        }
    });
    let mut out = ExplorationDriving {
        paths: Vec::new(),
        attempted: n_paths,
        stalled: 0,
        too_short: 0,
        projected: 0,
        boundary: 0,
        skipped: 0,
        mean_steps: 0.0,
    };
    let mut steps = 0usize;
    for o in outcomes {
        match o? {
            PathOutcome::Ok(p, [pr, bd, sk], n) => {
                out.paths.push(p);
                out.projected += pr;
                out.boundary += bd;
                out.skipped += sk;
                steps += n;
            }
            PathOutcome::Stall => out.stalled += 1,
            PathOutcome::Short => out.too_short += 1,
        }
    }
    out.mean_steps = steps as f64 / out.paths.len().max(1) as f64;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{hex_ball, Cell};
    use crate::percolation::Workspace;
    use crate::rng::Rng;
    use rand::Rng as _;

    fn marked(cells: Vec<Cell>, fracs: &[f64]) -> DiscreteDomain {
        DiscreteDomain::from_cells(1.0, cells, &[])
            .unwrap()
            .with_marks_at_cycle_fractions(fracs)
            .unwrap()
    }

    fn micro_domains() -> Vec<DiscreteDomain> {
        let mut odd = hex_ball(Cell::new(0, 0), 1);
        odd.extend([Cell::new(2, -1), Cell::new(2, 0), Cell::new(1, 1), Cell::new(-1, 2), Cell::new(-2, 1)]);
        let strip: Vec<Cell> = (0..5).flat_map(|q| [Cell::new(q, 0), Cell::new(q, 1)]).collect();
        vec![
            marked(hex_ball(Cell::new(0, 0), 1), &[0.0, 0.5]),
            marked(hex_ball(Cell::new(0, 0), 1), &[0.1, 0.4]),
            marked(odd.clone(), &[0.0, 0.5]),
            marked(odd, &[0.3, 0.9]),
            marked(strip.clone(), &[0.05, 0.55]),
            marked(strip, &[0.2, 0.4]),
        ]
    }

    fn ext_blue(d: &DiscreteDomain, left: Cell, right: Cell, c: Cell) -> Option<bool> {
        // color of the external hexagon `c` on the edge between `left` and `right`
        let (inner, outer) = if c == left { (right, left) } else { (left, right) };
        let i = d.index_of(inner)?;
        d.arc_of_edge(i, inner.direction_to(outer).unwrap()).map(|arc| arc == 1)
    }

    #[test]
    fn monochrome_interiors_hug_the_arcs() {
        let d = marked(hex_ball(Cell::new(0, 0), 2), &[0.0, 0.45]);
        assert!(d.len() >= 19);
        let blue = extract_path(&Configuration::uniform(&d, Color::Blue)).unwrap();
        let arc0 = d.arc_edges(0);
        assert_eq!(blue.steps(), arc0.len());
        for (k, e) in arc0.iter().enumerate() {
            assert_eq!((blue.walk.left[k + 1], blue.walk.right[k + 1]), (e.cell, e.outer()));
            assert_eq!(blue.walk.vertices[k + 1], e.end());
        }
        let yellow = extract_path(&Configuration::uniform(&d, Color::Yellow)).unwrap();
        let arc1 = d.arc_edges(1);
        assert_eq!(yellow.steps(), arc1.len());
        for (k, e) in arc1.iter().rev().enumerate() {
            assert_eq!((yellow.walk.left[k + 1], yellow.walk.right[k + 1]), (e.outer(), e.cell));
            assert_eq!(yellow.walk.vertices[k + 1], e.start());
        }
    }

    #[test]
    fn exhaustive_micro_domain_paths() {
        for d in micro_domains() {
            assert!(d.len() <= 12);
            let (a, b) = (d.marks()[0], d.marks()[1]);
            let mut walk = InterfaceWalk::default();
            for mask in 0..1u64 << d.len() {
                let c = Configuration::from_mask(&d, mask);
                extract_walk_into(&c, &mut walk).unwrap();
                assert_eq!((walk.vertices[0], *walk.vertices.last().unwrap()), (a, b));
                let mut seen = HashSet::new();
                for k in 1..walk.vertices.len() {
                    let (u, v) = (walk.vertices[k - 1], walk.vertices[k]);
                    assert!(u.neighbors().contains(&v));
                    assert!(seen.insert(if u < v { (u, v) } else { (v, u) }), "edge twice");
                    // blue on the left, yellow on the right
                    let (l, r) = (walk.left[k], walk.right[k]);
                    let lb = d.index_of(l).map(|i| c.is_blue(i)).or_else(|| ext_blue(&d, l, r, l)).unwrap();
                    let rb = d.index_of(r).map(|i| c.is_blue(i)).or_else(|| ext_blue(&d, l, r, r)).unwrap();
                    assert!(lb && !rb);
                }
                // pure function of the configuration
                let again = extract_path(&c).unwrap();
                assert_eq!(again.walk.vertices, walk.vertices);
            }
        }
    }

    #[test]
    fn fillings_grow_and_are_never_entered() {
        let mut pockets = 0;
        for d in micro_domains() {
            let mut walk = InterfaceWalk::default();
            for mask in 0..1u64 << d.len() {
                let c = Configuration::from_mask(&d, mask);
                extract_walk_into(&c, &mut walk).unwrap();
                let n = walk.vertices.len() - 1;
                assert!(fill_hull(&d, &walk, 0).is_empty());
                assert_eq!(fill_hull(&d, &walk, n).len(), d.len());
                let mut prev = fill_hull(&d, &walk, 0);
                for k in 1..n {
                    let h = fill_hull(&d, &walk, k);
                    pockets += h.sealed().next().is_some() as usize;
                    assert!(prev.cells.iter().zip(&h.cells).all(|(p, q)| !p || *q), "not monotone");
                    // the next step only examines cells outside the sealed part
                    for c in [walk.left[k + 1], walk.right[k + 1]] {
                        if let Some(i) = d.index_of(c) {
                            assert!(!h.cells[i] || h.explored[i], "walk entered its filling");
                        }
                    }
                    prev = h;
                }
            }
        }
        assert!(pockets > 0, "no configuration seals a pocket");
    }

    #[test]
    fn exploration_decides_crossings() {
        // From P_3 to P_1 with A_3, A_0 yellow and A_1, A_2 blue: a blue A_0–A_2
        // crossing exists iff the walk meets A_0 before A_1.
        for fr in [[0.0, 0.25, 0.5, 0.75], [0.1, 0.3, 0.55, 0.8]] {
            let d = marked(hex_ball(Cell::new(0, 0), 2), &fr);
            let mut ws = Workspace::default();
            let mut walk = InterfaceWalk::default();
            let mut hits = 0;
            for mask in 0..1u64 << d.len() {
                let c = Configuration::from_mask(&d, mask);
                trace_interface_into(&d, &|i| c.is_blue(i), 3, 1, &|arc| arc == 1 || arc == 2, &mut walk);
                let arc_of = |inner: Cell, outer: Cell| {
                    d.index_of(inner).and_then(|i| d.arc_of_edge(i, inner.direction_to(outer).unwrap()))
                };
                let first = (1..walk.vertices.len()).find_map(|k| {
                    let (l, r) = (walk.left[k], walk.right[k]);
                    if !d.contains(r) && arc_of(l, r) == Some(0) {
                        Some(true)
                    } else if !d.contains(l) && arc_of(r, l) == Some(1) {
                        Some(false)
                    } else {
                        None
                    }
                });
                let crossing = ws.blue_crossing(&c, 0, 2);
                assert_eq!(first, Some(crossing), "mask {mask:b}");
                hits += crossing as usize;
            }
            assert!(hits > 0 && hits < 1 << d.len());
        }
    }

    fn sample_boundary(shape: Shape, n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|k| shape.point_at_fraction((k as f64 + 0.37) / n as f64)).collect()
    }

    #[test]
    fn chordal_maps_normalize_and_invert() {
        let mut rng: Rng = stream(8, 0);
        for (shape, a, b) in [
            (Shape::Square { side: 1.0 }, 0.125, 0.625),
            (Shape::rectangle(2.0), 0.1, 0.6),
            (Shape::EquilateralTriangle { side: 1.0 }, 0.0, 0.5),
        ] {
            let m = ChordalMap::new(shape, a, b).unwrap();
            let (pa, pb) = m.marks();
            assert_eq!(m.map(pa).unwrap().0, C::new(0.0, 0.0));
            let near_b = [pb[0] + 1e-7 * (shape.centroid()[0] - pb[0]), pb[1] + 1e-7 * (shape.centroid()[1] - pb[1])];
            assert!(m.map(near_b).unwrap().0.norm() > 1e2);
            // the arc a → b goes to the positive axis, b → a to the negative one
            for p in sample_boundary(shape, 50) {
                let f = shape.fraction_of(p);
                let (w, _) = m.map(p).unwrap();
                assert!(w.im.abs() <= 1e-6);
                let on_a1 = (f - a).rem_euclid(1.0) < (b - a).rem_euclid(1.0);
                assert_eq!(w.re > 0.0, on_a1, "{p:?} {w}");
            }
            // interior points round trip
            let mut n = 0;
            while n < 100 {
                let c = shape.corners();
                let p = [rng.gen::<f64>() * 2.0 - 0.5, rng.gen::<f64>() * 2.0 - 0.5];
                let (lo, hi) = c.iter().fold(([9.0f64, 9.0f64], [-9.0f64, -9.0f64]), |(lo, hi), q| {
                    ([lo[0].min(q[0]), lo[1].min(q[1])], [hi[0].max(q[0]), hi[1].max(q[1])])
                });
                if !(shape.contains(p) && shape.distance_to_boundary(p) > 1e-3 && p[0] >= lo[0] && p[1] <= hi[1]) {
                    continue;
                }
                n += 1;
                let (w, proj) = m.map(p).unwrap();
                assert!(!proj && w.im > 0.0);
                let q = m.inverse(w).unwrap();
                assert!((q[0] - p[0]).hypot(q[1] - p[1]) < 1e-8, "{p:?} {q:?}");
            }
        }
    }

    #[test]
    fn square_map_is_symmetric() {
        let m = ChordalMap::new(Shape::Square { side: 1.0 }, 0.125, 0.625).unwrap();
        let (r, _) = m.map([1.0, 0.5]).unwrap();
        let (l, _) = m.map([0.0, 0.5]).unwrap();
        assert!((r.re - 1.0).abs() < 1e-12 && (l.re + 1.0).abs() < 1e-10);
        let (w1, _) = m.map([0.3, 0.4]).unwrap();
        let (w2, _) = m.map([0.7, 0.4]).unwrap();
        assert!((w1.re + w2.re).abs() < 1e-10 && (w1.im - w2.im).abs() < 1e-10);
    }

    #[test]
    fn driving_pipeline_is_deterministic() {
        let setup = ExplorationSetup::square(1.0 / 20.0);
        let opts = DrivingOptions {
            t_max: 0.5,
            n_grid: 128,
            r_cut: 1e3,
        };
        let a = driving_of_exploration(&setup, 6, 3, opts, 1).unwrap();
        let b = driving_of_exploration(&setup, 6, 3, opts, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.paths.len() + a.stalled + a.too_short, 6);
        assert!(a.paths.len() >= 5);
        for p in &a.paths {
            assert_eq!(p.u.len(), 129);
        }
    }

    #[test]
    fn two_marks_required() {
        let d = marked(hex_ball(Cell::new(0, 0), 1), &[0.0, 0.3, 0.6]);
        let c = Configuration::uniform(&d, Color::Blue);
        assert_eq!(extract_path(&c).unwrap_err(), ExplorationError::MarkCount(3));
    }
}
