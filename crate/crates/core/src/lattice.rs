//! Hexagonal faces of the mesh-`δ` honeycomb (equivalently sites of the
//! triangular lattice) and marked discrete domains built from them.
//!
//! Cells use axial coordinates `(q, r)` with pointy-top hexagons of
//! circumradius `δ`: `center(q, r) = δ (√3 (q + r/2), 3r/2)`.  Corner `j` of a
//! hexagon sits at angle `-30° + 60° j`; edge `k` joins corners `k` and `k + 1`
//! and is shared with the neighbour in direction `k` (angle `60° k`).

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Axial offsets of the six neighbours, counterclockwise from `+q`.
pub const DIRS: [(i32, i32); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

/// Sentinel for "no cell" in index tables.
pub const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("mesh must be positive, got {0}")]
    NonPositiveMesh(f64),
    #[error("shape dimension {dim} is below one hexagon diameter 2δ = {min}")]
    ShapeTooSmall { dim: f64, min: f64 },
    #[error("cell set is empty")]
    Empty,
    #[error("cell set is not connected ({components} components)")]
    Disconnected { components: usize },
    #[error("cell set is not simply connected ({cycles} boundary cycles)")]
    NotSimplyConnected { cycles: usize },
    #[error("mark {index} is not a vertex of the boundary cycle")]
    MarkNotOnBoundary { index: usize },
    #[error("mark {index} is incident to {count} hexagons of the domain, expected exactly 1")]
    MarkNotUniqueHexagon { index: usize, count: usize },
    #[error("marks are not in counterclockwise order along the boundary")]
    MarksOutOfOrder,
    #[error("mark position {0} outside [0, 1)")]
    BadMarkFraction(f64),
    #[error(
        "only {distinct} of {needed} marks survive snapping at mesh {mesh}; \
         minimum feasible mesh is {feasible:?}"
    )]
    TooCoarse {
        needed: usize,
        distinct: usize,
        mesh: f64,
        feasible: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub q: i32,
    pub r: i32,
}

impl Cell {
    pub const fn new(q: i32, r: i32) -> Self {
        Cell { q, r }
    }

    #[inline]
    pub fn neighbor(self, dir: usize) -> Cell {
        let (dq, dr) = DIRS[dir % 6];
        Cell::new(self.q + dq, self.r + dr)
    }

    /// The six neighbours in counterclockwise order starting from `+q`.
    pub fn neighbors(self) -> [Cell; 6] {
        std::array::from_fn(|k| self.neighbor(k))
    }

    /// Direction `k` with `self.neighbor(k) == other`, if adjacent.
    pub fn direction_to(self, other: Cell) -> Option<usize> {
        let d = (other.q - self.q, other.r - self.r);
        DIRS.iter().position(|&x| x == d)
    }

    /// Center relative to the lattice origin, unit circumradius.
    #[inline]
    pub fn unit_center(self) -> [f64; 2] {
        [
            SQRT3 * (self.q as f64 + 0.5 * self.r as f64),
            1.5 * self.r as f64,
        ]
    }

    #[inline]
    pub fn corner_unit_offset(j: usize) -> [f64; 2] {
        let a = (-30.0 + 60.0 * (j % 6) as f64).to_radians();
        [a.cos(), a.sin()]
    }
}

/// Public free-function form of [`Cell::neighbors`].
pub fn neighbors(c: Cell) -> [Cell; 6] {
    c.neighbors()
}

/// Cells within hex distance `radius` of `center` (`3r² + 3r + 1` cells).
pub fn hex_ball(center: Cell, radius: i32) -> Vec<Cell> {
    let mut v = Vec::new();
    for dq in -radius..=radius {
        for dr in -radius..=radius {
            if (dq + dr).abs() <= radius {
                v.push(Cell::new(center.q + dq, center.r + dr));
            }
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VertexKind {
    /// Top corner (corner 2) of the owning cell.
    Top,
    /// Bottom corner (corner 5) of the owning cell.
    Bottom,
}

/// A vertex of the honeycomb, stored canonically as the top or bottom corner
/// of one hexagon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub cell: Cell,
    pub kind: VertexKind,
}

impl Vertex {
    /// Canonical vertex for corner `j` of `cell`.
    pub fn from_corner(cell: Cell, j: usize) -> Vertex {
        let Cell { q, r } = cell;
        let (c, kind) = match j % 6 {
            0 => (Cell::new(q + 1, r - 1), VertexKind::Top),
            1 => (Cell::new(q, r + 1), VertexKind::Bottom),
            2 => (cell, VertexKind::Top),
            3 => (Cell::new(q - 1, r + 1), VertexKind::Bottom),
            4 => (Cell::new(q, r - 1), VertexKind::Top),
            _ => (cell, VertexKind::Bottom),
        };
        Vertex { cell: c, kind }
    }

    /// The three hexagons meeting at this vertex, counterclockwise.
    pub fn hexes(self) -> [Cell; 3] {
        let Cell { q, r } = self.cell;
        match self.kind {
            VertexKind::Top => [self.cell, Cell::new(q, r + 1), Cell::new(q - 1, r + 1)],
            VertexKind::Bottom => [self.cell, Cell::new(q, r - 1), Cell::new(q + 1, r - 1)],
        }
    }

    /// The three neighbouring vertices, counterclockwise.
    pub fn neighbors(self) -> [Vertex; 3] {
        let c = self.cell;
        match self.kind {
            // lower right, straight up, lower left
            VertexKind::Top => [
                Vertex::from_corner(c, 1),
                Vertex::from_corner(Cell::new(c.q, c.r + 1), 3),
                Vertex::from_corner(c, 3),
            ],
            VertexKind::Bottom => [
                Vertex::from_corner(c, 0),
                Vertex::from_corner(c, 4),
                Vertex::from_corner(Cell::new(c.q, c.r - 1), 0),
            ],
        }
    }

    /// Position relative to the lattice origin, unit circumradius.
    pub fn unit_position(self) -> [f64; 2] {
        let [x, y] = self.cell.unit_center();
        match self.kind {
            VertexKind::Top => [x, y + 1.0],
            VertexKind::Bottom => [x, y - 1.0],
        }
    }
}

/// A hexagon edge, stored as `(cell, dir)`: the edge of `cell` shared with
/// `cell.neighbor(dir)`, oriented so that `cell` lies on its left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub cell: Cell,
    pub dir: u8,
}

impl Edge {
    pub fn start(self) -> Vertex {
        Vertex::from_corner(self.cell, self.dir as usize)
    }
    pub fn end(self) -> Vertex {
        Vertex::from_corner(self.cell, self.dir as usize + 1)
    }
    pub fn outer(self) -> Cell {
        self.cell.neighbor(self.dir as usize)
    }
}

/// Canonical continuum shapes with their counterclockwise corner list.
/// The origin corner (arc-length fraction 0) is the first corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Square { side: f64 },
    Rectangle { width: f64, height: f64 },
    EquilateralTriangle { side: f64 },
}

impl Shape {
    /// Rectangle of the given aspect (width / height) and unit height.
    pub fn rectangle(aspect: f64) -> Shape {
        Shape::Rectangle {
            width: aspect,
            height: 1.0,
        }
    }

    pub fn corners(&self) -> Vec<[f64; 2]> {
        match *self {
            Shape::Square { side } => vec![[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]],
            Shape::Rectangle { width, height } => {
                vec![[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]]
            }
            Shape::EquilateralTriangle { side } => {
                vec![[0.0, 0.0], [side, 0.0], [0.5 * side, 0.5 * SQRT3 * side]]
            }
        }
    }

    /// Smallest linear dimension.
    pub fn min_dimension(&self) -> f64 {
        match *self {
            Shape::Square { side } => side,
            Shape::Rectangle { width, height } => width.min(height),
            Shape::EquilateralTriangle { side } => 0.5 * SQRT3 * side,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Square { side } => side * side,
            Shape::Rectangle { width, height } => width * height,
            Shape::EquilateralTriangle { side } => 0.25 * SQRT3 * side * side,
        }
    }

    pub fn centroid(&self) -> [f64; 2] {
        let c = self.corners();
        let n = c.len() as f64;
        [
            c.iter().map(|p| p[0]).sum::<f64>() / n,
            c.iter().map(|p| p[1]).sum::<f64>() / n,
        ]
    }

    pub fn perimeter(&self) -> f64 {
        let c = self.corners();
        (0..c.len()).map(|i| dist(c[i], c[(i + 1) % c.len()])).sum()
    }

    /// Arc-length fractions of the corners, counterclockwise from the origin.
    pub fn corner_fractions(&self) -> Vec<f64> {
        let c = self.corners();
        let per = self.perimeter();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(c.len());
        for i in 0..c.len() {
            out.push(acc / per);
            acc += dist(c[i], c[(i + 1) % c.len()]);
        }
        out
    }

    /// Boundary point at arc-length fraction `f` counterclockwise from the origin corner.
    pub fn point_at_fraction(&self, f: f64) -> [f64; 2] {
        let c = self.corners();
        let per = self.perimeter();
        let mut s = f.rem_euclid(1.0) * per;
        for i in 0..c.len() {
            let a = c[i];
            let b = c[(i + 1) % c.len()];
            let l = dist(a, b);
            if s <= l {
                let t = s / l;
                return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            }
            s -= l;
        }
        c[0]
    }

    /// Arc-length fraction of the boundary point nearest to `p`.
    pub fn fraction_of(&self, p: [f64; 2]) -> f64 {
        let c = self.corners();
        let per = self.perimeter();
        let mut best = (f64::INFINITY, 0.0);
        let mut acc = 0.0;
        for i in 0..c.len() {
            let a = c[i];
            let b = c[(i + 1) % c.len()];
            let l = dist(a, b);
            let t = seg_param(p, a, b);
            let q = lerp(a, b, t);
            let d = dist(p, q);
            if d < best.0 {
                best = (d, (acc + t * l) / per);
            }
            acc += l;
        }
        best.1.rem_euclid(1.0)
    }

    /// Closed-set membership.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let c = self.corners();
        let n = c.len();
        (0..n).all(|i| {
            let a = c[i];
            let b = c[(i + 1) % n];
            cross(sub(b, a), sub(p, a)) >= -1e-12
        })
    }

    /// Nearest point of the boundary.
    pub fn project_to_boundary(&self, p: [f64; 2]) -> [f64; 2] {
        self.point_at_fraction(self.fraction_of(p))
    }

    /// Unsigned distance to the boundary.
    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        let c = self.corners();
        let n = c.len();
        (0..n)
            .map(|i| {
                let a = c[i];
                let b = c[(i + 1) % n];
                dist(p, lerp(a, b, seg_param(p, a, b)))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}
fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}
fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}
fn seg_param(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    if l2 == 0.0 {
        return 0.0;
    }
    (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0)
}

/// Separating-axis test for two convex polygons: true iff the interiors overlap.
fn convex_interiors_overlap(a: &[[f64; 2]], b: &[[f64; 2]]) -> bool {
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let e = sub(poly[(i + 1) % n], poly[i]);
            let axis = [-e[1], e[0]];
            let proj = |pts: &[[f64; 2]]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let d = p[0] * axis[0] + p[1] * axis[1];
                    (lo.min(d), hi.max(d))
                })
            };
            let (alo, ahi) = proj(a);
            let (blo, bhi) = proj(b);
            let scale = axis[0].hypot(axis[1]);
            if ahi.min(bhi) - alo.max(blo) <= 1e-12 * scale {
                return false;
            }
        }
    }
    true
}

/// Dense `(q, r) → index` lookup over the bounding box of a cell set.
#[derive(Debug, Clone)]
struct CellIndex {
    qmin: i32,
    rmin: i32,
    w: i32,
    h: i32,
    table: Vec<u32>,
}

impl CellIndex {
    fn new(cells: &[Cell]) -> Self {
        let qmin = cells.iter().map(|c| c.q).min().unwrap_or(0) - 1;
        let qmax = cells.iter().map(|c| c.q).max().unwrap_or(0) + 1;
        let rmin = cells.iter().map(|c| c.r).min().unwrap_or(0) - 1;
        let rmax = cells.iter().map(|c| c.r).max().unwrap_or(0) + 1;
        let w = qmax - qmin + 1;
        let h = rmax - rmin + 1;
        let mut table = vec![NONE; (w * h) as usize];
        for (i, c) in cells.iter().enumerate() {
            table[((c.r - rmin) * w + (c.q - qmin)) as usize] = i as u32;
        }
        CellIndex {
            qmin,
            rmin,
            w,
            h,
            table,
        }
    }

    #[inline]
    fn get(&self, c: Cell) -> u32 {
        let x = c.q - self.qmin;
        let y = c.r - self.rmin;
        if x < 0 || y < 0 || x >= self.w || y >= self.h {
            return NONE;
        }
        self.table[(y * self.w + x) as usize]
    }
}

/// A finite, connected, simply connected union of hexagons with `k` marked
/// boundary vertices and the induced counterclockwise arcs `A_1..A_k`.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct DiscreteDomain {
    mesh: f64,
    offset: [f64; 2],
    shape: Option<Shape>,
    cells: Vec<Cell>,
    index: CellIndex,
    nbr: Vec<[u32; 6]>,
    /// Boundary cycle, counterclockwise, starting at `P_1` (or at a canonical
    /// edge when unmarked).
    boundary: Vec<Edge>,
    /// `marks[j]` and the boundary position where arc `j` starts.
    marks: Vec<Vertex>,
    mark_pos: Vec<usize>,
    arc_of_edge: Vec<u8>,
    /// Boundary position of edge `(cell, dir)`, or `NONE`.
    edge_pos: Vec<[u32; 6]>,
    /// Bit `j` set iff the cell owns a boundary edge on arc `j`.
    arc_mask: Vec<u16>,
}

impl DiscreteDomain {
    /// Validates `cells` and `marks` and builds the domain.  Marks must be
    /// boundary vertices incident to exactly one hexagon of the domain, given
    /// in counterclockwise order.
    pub fn from_cells(
        mesh: f64,
        cells: impl IntoIterator<Item = Cell>,
        marks: &[Vertex],
    ) -> Result<Self, LatticeError> {
        Self::build(mesh, [0.0, 0.0], None, cells.into_iter().collect(), marks)
    }

    fn build(
        mesh: f64,
        offset: [f64; 2],
        shape: Option<Shape>,
        mut cells: Vec<Cell>,
        marks: &[Vertex],
    ) -> Result<Self, LatticeError> {
        if !(mesh > 0.0) {
            return Err(LatticeError::NonPositiveMesh(mesh));
        }
        cells.sort_by_key(|c| (c.r, c.q));
        cells.dedup();
        if cells.is_empty() {
            return Err(LatticeError::Empty);
        }
        let index = CellIndex::new(&cells);
        let nbr: Vec<[u32; 6]> = cells
            .iter()
            .map(|&c| std::array::from_fn(|k| index.get(c.neighbor(k))))
            .collect();

        let components = count_components(&nbr);
        if components != 1 {
            return Err(LatticeError::Disconnected { components });
        }

        // Trace every boundary cycle.
        let mut is_boundary: HashSet<Edge> = HashSet::new();
        for (i, &c) in cells.iter().enumerate() {
            for k in 0..6 {
                if nbr[i][k] == NONE {
                    is_boundary.insert(Edge { cell: c, dir: k as u8 });
                }
            }
        }
        let mut seen: HashSet<Edge> = HashSet::new();
        let mut cycles: Vec<Vec<Edge>> = Vec::new();
        // Deterministic order of cycle starts.
        let mut starts: Vec<Edge> = is_boundary.iter().copied().collect();
        starts.sort_by_key(|e| (e.cell.r, e.cell.q, e.dir));
        for s in starts {
            if seen.contains(&s) {
                continue;
            }
            let mut cyc = Vec::new();
            let mut e = s;
            loop {
                seen.insert(e);
                cyc.push(e);
                e = next_boundary_edge(e, |c| index.get(c) != NONE);
                if e == s {
                    break;
                }
            }
            cycles.push(cyc);
        }
        if cycles.len() != 1 {
            return Err(LatticeError::NotSimplyConnected {
                cycles: cycles.len(),
            });
        }
        let mut boundary = cycles.pop().unwrap();

        // Locate and validate marks.
        let pos_of: HashMap<Vertex, usize> = boundary
            .iter()
            .enumerate()
            .map(|(i, e)| (e.start(), i))
            .collect();
        let mut mark_pos = Vec::with_capacity(marks.len());
        for (j, &m) in marks.iter().enumerate() {
            let p = *pos_of
                .get(&m)
                .ok_or(LatticeError::MarkNotOnBoundary { index: j })?;
            let count = m.hexes().iter().filter(|&&h| index.get(h) != NONE).count();
            if count != 1 {
                return Err(LatticeError::MarkNotUniqueHexagon { index: j, count });
            }
            mark_pos.push(p);
        }
        if !marks.is_empty() {
            let first = mark_pos[0];
            boundary.rotate_left(first);
            let len = boundary.len();
            for p in mark_pos.iter_mut() {
                *p = (*p + len - first) % len;
            }
            if mark_pos.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LatticeError::MarksOutOfOrder);
            }
        }

        let len = boundary.len();
        let mut arc_of_edge = vec![0u8; len];
        if !marks.is_empty() {
            for j in 0..marks.len() {
                let a = mark_pos[j];
                let b = if j + 1 < marks.len() { mark_pos[j + 1] } else { len };
                for x in &mut arc_of_edge[a..b] {
                    *x = j as u8;
                }
            }
        }
        let mut edge_pos = vec![[NONE; 6]; cells.len()];
        let mut arc_mask = vec![0u16; cells.len()];
        for (p, e) in boundary.iter().enumerate() {
            let i = index.get(e.cell) as usize;
            edge_pos[i][e.dir as usize] = p as u32;
            if !marks.is_empty() {
                arc_mask[i] |= 1 << arc_of_edge[p];
            }
        }

        Ok(DiscreteDomain {
            mesh,
            offset,
            shape,
            cells,
            index,
            nbr,
            boundary,
            marks: marks.to_vec(),
            mark_pos,
            arc_of_edge,
            edge_pos,
            arc_mask,
        })
    }

    /// Same cells, different marks.
    pub fn with_marks(&self, marks: &[Vertex]) -> Result<Self, LatticeError> {
        Self::build(self.mesh, self.offset, self.shape, self.cells.clone(), marks)
    }

    /// Same cells, marked at the eligible boundary vertices nearest to the
    /// given fractions (increasing, in `[0, 1)`) of the current boundary cycle.
    pub fn with_marks_at_cycle_fractions(&self, fracs: &[f64]) -> Result<Self, LatticeError> {
        let len = self.boundary.len();
        let eligible: Vec<usize> = (0..len)
            .filter(|&p| {
                let v = self.boundary[p].start();
                v.hexes().iter().filter(|&&h| self.contains(h)).count() == 1
            })
            .collect();
        let mut marks = Vec::with_capacity(fracs.len());
        let mut taken: Vec<usize> = Vec::new();
        for &f in fracs {
            if !(0.0..1.0).contains(&f) {
                return Err(LatticeError::BadMarkFraction(f));
            }
            let target = f * len as f64;
            let best = eligible
                .iter()
                .copied()
                .filter(|p| !taken.contains(p))
                .min_by(|&a, &b| {
                    let da = (a as f64 - target).abs().min(len as f64 - (a as f64 - target).abs());
                    let db = (b as f64 - target).abs().min(len as f64 - (b as f64 - target).abs());
                    da.total_cmp(&db)
                })
                .ok_or(LatticeError::MarksOutOfOrder)?;
            taken.push(best);
            marks.push(self.boundary[best].start());
        }
        self.with_marks(&marks)
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }
    pub fn shape(&self) -> Option<Shape> {
        self.shape
    }
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }
    pub fn marks(&self) -> &[Vertex] {
        &self.marks
    }
    pub fn num_arcs(&self) -> usize {
        self.marks.len()
    }

    #[inline]
    pub fn index_of(&self, c: Cell) -> Option<usize> {
        match self.index.get(c) {
            NONE => None,
            i => Some(i as usize),
        }
    }
    #[inline]
    pub fn contains(&self, c: Cell) -> bool {
        self.index.get(c) != NONE
    }

    /// Neighbour indices of cell `i` (or [`NONE`]), in direction order.
    #[inline]
    pub fn neighbor_table(&self) -> &[[u32; 6]] {
        &self.nbr
    }

    /// Per-cell bitmask of arcs the cell owns a boundary edge on.
    #[inline]
    pub fn arc_masks(&self) -> &[u16] {
        &self.arc_mask
    }

    /// Counterclockwise boundary cycle of directed edges (domain on the left).
    pub fn boundary_cycle(&self) -> &[Edge] {
        &self.boundary
    }

    /// Arc index of each boundary edge, aligned with [`Self::boundary_cycle`].
    pub fn boundary_arcs(&self) -> &[u8] {
        &self.arc_of_edge
    }

    /// Cycle position at which arc `j` (from `P_j` to `P_{j+1}`) starts.
    pub fn arc_start(&self, j: usize) -> usize {
        self.mark_pos[j]
    }

    /// Edges of arc `j`.
    pub fn arc_edges(&self, j: usize) -> &[Edge] {
        let a = self.mark_pos[j];
        let b = if j + 1 < self.mark_pos.len() {
            self.mark_pos[j + 1]
        } else {
            self.boundary.len()
        };
        &self.boundary[a..b]
    }

    /// Cycle position of the boundary edge `(cell index, dir)`.
    #[inline]
    pub fn edge_position(&self, cell: usize, dir: usize) -> Option<usize> {
        match self.edge_pos[cell][dir] {
            NONE => None,
            p => Some(p as usize),
        }
    }

    /// Arc of the boundary edge `(cell index, dir)`.
    #[inline]
    pub fn arc_of_edge(&self, cell: usize, dir: usize) -> Option<usize> {
        self.edge_position(cell, dir)
            .map(|p| self.arc_of_edge[p] as usize)
    }

    /// True iff the cell owns a boundary edge on arc `j` (edge incidence).
    #[inline]
    pub fn touches_arc(&self, cell: usize, j: usize) -> bool {
        self.arc_mask[cell] & (1 << j) != 0
    }

    pub fn to_plane(&self, unit: [f64; 2]) -> [f64; 2] {
        [
            self.offset[0] + self.mesh * unit[0],
            self.offset[1] + self.mesh * unit[1],
        ]
    }

    pub fn center(&self, c: Cell) -> [f64; 2] {
        self.to_plane(c.unit_center())
    }

    pub fn vertex_position(&self, v: Vertex) -> [f64; 2] {
        self.to_plane(v.unit_position())
    }

    pub fn hexagon_corners(&self, c: Cell) -> [[f64; 2]; 6] {
        let [x, y] = self.center(c);
        std::array::from_fn(|j| {
            let [dx, dy] = Cell::corner_unit_offset(j);
            [x + self.mesh * dx, y + self.mesh * dy]
        })
    }

    /// True iff some hexagon incident to `v` belongs to the domain.
    pub fn vertex_in_closure(&self, v: Vertex) -> bool {
        v.hexes().iter().any(|&h| self.contains(h))
    }

    /// Nearest cell to a plane point (by center distance), if inside the
    /// bounding box neighbourhood of the domain.
    pub fn nearest_vertex(&self, p: [f64; 2]) -> Vertex {
        let u = [
            (p[0] - self.offset[0]) / self.mesh,
            (p[1] - self.offset[1]) / self.mesh,
        ];
        let r = (u[1] / 1.5).round() as i32;
        let q = (u[0] / SQRT3 - 0.5 * r as f64).round() as i32;
        let mut best = (f64::INFINITY, Vertex::from_corner(Cell::new(q, r), 0));
        for dr in -2..=2 {
            for dq in -2..=2 {
                let c = Cell::new(q + dq, r + dr);
                for j in 0..6 {
                    let v = Vertex::from_corner(c, j);
                    let d = dist(v.unit_position(), u);
                    if d < best.0 {
                        best = (d, v);
                    }
                }
            }
        }
        best.1
    }
}

/// Successor of boundary edge `e` in the counterclockwise cycle.
fn next_boundary_edge(e: Edge, inside: impl Fn(Cell) -> bool) -> Edge {
    let k = e.dir as usize;
    let f = e.cell.neighbor(k + 1);
    if inside(f) {
        Edge {
            cell: f,
            dir: ((k + 5) % 6) as u8,
        }
    } else {
        Edge {
            cell: e.cell,
            dir: ((k + 1) % 6) as u8,
        }
    }
}

fn count_components(nbr: &[[u32; 6]]) -> usize {
    let n = nbr.len();
    let mut seen = vec![false; n];
    let mut comps = 0;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        comps += 1;
        seen[s] = true;
        queue.push_back(s);
        while let Some(i) = queue.pop_front() {
            for &j in &nbr[i] {
                if j != NONE && !seen[j as usize] {
                    seen[j as usize] = true;
                    queue.push_back(j as usize);
                }
            }
        }
    }
    comps
}

/// Cells of mesh `δ` whose hexagon overlaps the interior of `shape`, with the
/// lattice placed so that a hexagon center sits on the shape centroid.
fn covering_cells(shape: &Shape, mesh: f64, offset: [f64; 2]) -> Vec<Cell> {
    let poly = shape.corners();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in &poly {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let rlo = ((ymin - offset[1]) / (1.5 * mesh)).floor() as i32 - 2;
    let rhi = ((ymax - offset[1]) / (1.5 * mesh)).ceil() as i32 + 2;
    let mut out = Vec::new();
    for r in rlo..=rhi {
        let shift = 0.5 * r as f64;
        let qlo = ((xmin - offset[0]) / (SQRT3 * mesh) - shift).floor() as i32 - 2;
        let qhi = ((xmax - offset[0]) / (SQRT3 * mesh) - shift).ceil() as i32 + 2;
        for q in qlo..=qhi {
            let c = Cell::new(q, r);
            let [cx, cy] = c.unit_center();
            let hex: Vec<[f64; 2]> = (0..6)
                .map(|j| {
                    let [dx, dy] = Cell::corner_unit_offset(j);
                    [
                        offset[0] + mesh * (cx + dx),
                        offset[1] + mesh * (cy + dy),
                    ]
                })
                .collect();
            if convex_interiors_overlap(&hex, &poly) {
                out.push(c);
            }
        }
    }
    out
}

/// Discretizes a canonical shape at mesh `δ` and snaps the marks (arc-length
/// fractions in `[0, 1)`, counterclockwise from the origin corner, given in
/// cyclic counterclockwise order) to boundary vertices incident to a unique
/// hexagon.  The cell union covers the shape and lies within one hexagon
/// diameter of it.
pub fn build_canonical_domain(
    shape: Shape,
    mesh: f64,
    marks: &[f64],
) -> Result<DiscreteDomain, LatticeError> {
    if !(mesh > 0.0) {
        return Err(LatticeError::NonPositiveMesh(mesh));
    }
    if shape.min_dimension() < 2.0 * mesh {
        return Err(LatticeError::ShapeTooSmall {
            dim: shape.min_dimension(),
            min: 2.0 * mesh,
        });
    }
    for &f in marks {
        if !(0.0..1.0).contains(&f) {
            return Err(LatticeError::BadMarkFraction(f));
        }
    }
    match try_build(shape, mesh, marks) {
        Err(LatticeError::TooCoarse {
            needed, distinct, ..
        }) => {
            let mut feasible = None;
            let mut m = mesh;
            for _ in 0..6 {
                m *= 0.5;
                if shape.min_dimension() < 2.0 * m {
                    continue;
                }
                if try_build(shape, m, marks).is_ok() {
                    feasible = Some(m);
                    break;
                }
            }
            Err(LatticeError::TooCoarse {
                needed,
                distinct,
                mesh,
                feasible,
            })
        }
        other => other,
    }
}

fn try_build(shape: Shape, mesh: f64, marks: &[f64]) -> Result<DiscreteDomain, LatticeError> {
    let offset = shape.centroid();
    let cells = covering_cells(&shape, mesh, offset);
    let unmarked = DiscreteDomain::build(mesh, offset, Some(shape), cells, &[])?;
    if marks.is_empty() {
        return Ok(unmarked);
    }
    let cycle = unmarked.boundary_cycle();
    // Eligible snap targets: boundary vertices with exactly one inside hexagon.
    let eligible: Vec<(usize, Vertex, [f64; 2])> = cycle
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let v = e.start();
            let n = v.hexes().iter().filter(|&&h| unmarked.contains(h)).count();
            (n == 1).then(|| (i, v, unmarked.vertex_position(v)))
        })
        .collect();
    let mut snapped: Vec<(usize, Vertex)> = Vec::with_capacity(marks.len());
    for &f in marks {
        let target = shape.point_at_fraction(f);
        // Ties (common at corners) go to the vertex furthest counterclockwise
        // of the target as seen from the centroid, so the choice commutes
        // with the shape's rotations.
        let mut best: Option<(f64, f64, usize, Vertex)> = None;
        for &(i, v, p) in &eligible {
            let d = dist(p, target);
            let (a, b) = (
                [target[0] - offset[0], target[1] - offset[1]],
                [p[0] - offset[0], p[1] - offset[1]],
            );
            let ahead = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
            let better = best.map_or(true, |(bd, ba, _, _)| {
                d < bd - 1e-9 * mesh || (d <= bd + 1e-9 * mesh && ahead > ba)
            });
            if better {
                best = Some((d, ahead, i, v));
            }
        }
        let (_, _, i, v) = best.ok_or(LatticeError::TooCoarse {
            needed: marks.len(),
            distinct: 0,
            mesh,
            feasible: None,
        })?;
        snapped.push((i, v));
    }
    let distinct = snapped.iter().map(|s| s.1).collect::<HashSet<_>>().len();
    // Cyclic order must match the input order.
    let len = cycle.len();
    let base = snapped[0].0;
    let rel: Vec<usize> = snapped.iter().map(|s| (s.0 + len - base) % len).collect();
    let ordered = rel.windows(2).all(|w| w[0] < w[1]);
    if distinct < marks.len() || !ordered {
        return Err(LatticeError::TooCoarse {
            needed: marks.len(),
            distinct: if ordered { distinct } else { distinct.min(marks.len() - 1) },
            mesh,
            feasible: None,
        });
    }
    let verts: Vec<Vertex> = snapped.iter().map(|s| s.1).collect();
    unmarked.with_marks(&verts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbors_of_origin() {
        let n = neighbors(Cell::new(0, 0));
        let want = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
        for (c, w) in n.iter().zip(want) {
            assert_eq!((c.q, c.r), w);
        }
    }

    #[test]
    fn neighbor_relation_is_symmetric() {
        for q in -5..5 {
            for r in -5..5 {
                let a = Cell::new(q, r);
                for b in a.neighbors() {
                    assert!(b.neighbors().contains(&a));
                }
            }
        }
    }

    #[test]
    fn neighbor_centers_are_at_distance_sqrt3() {
        for b in Cell::new(2, -3).neighbors() {
            let d = dist(b.unit_center(), Cell::new(2, -3).unit_center());
            assert!((d - SQRT3).abs() < 1e-12);
        }
    }

    #[test]
    fn vertex_canonicalization_is_consistent() {
        // Every corner of every hexagon round-trips to the same position, and
        // each vertex lists the hexagon it came from.
        for q in -3..3 {
            for r in -3..3 {
                let c = Cell::new(q, r);
                let [cx, cy] = c.unit_center();
                for j in 0..6 {
                    let v = Vertex::from_corner(c, j);
                    let [dx, dy] = Cell::corner_unit_offset(j);
                    let p = v.unit_position();
                    assert!((p[0] - cx - dx).abs() < 1e-12 && (p[1] - cy - dy).abs() < 1e-12);
                    assert!(v.hexes().contains(&c));
                }
            }
        }
    }

    #[test]
    fn vertex_neighbors_are_at_unit_distance() {
        for kind in [VertexKind::Top, VertexKind::Bottom] {
            let v = Vertex {
                cell: Cell::new(1, 2),
                kind,
            };
            for w in v.neighbors() {
                assert!((dist(v.unit_position(), w.unit_position()) - 1.0).abs() < 1e-12);
                assert!(w.neighbors().contains(&v));
            }
        }
    }

    #[test]
    fn single_hexagon_boundary() {
        let d = DiscreteDomain::from_cells(1.0, [Cell::new(0, 0)], &[]).unwrap();
        let cyc = d.boundary_cycle();
        assert_eq!(cyc.len(), 6);
        for w in cyc.windows(2) {
            assert_eq!(w[0].end(), w[1].start());
            assert_eq!((w[0].dir + 1) % 6, w[1].dir);
        }
    }

    #[test]
    fn two_hexagons_have_ten_boundary_edges() {
        let d = DiscreteDomain::from_cells(1.0, [Cell::new(0, 0), Cell::new(1, 0)], &[]).unwrap();
        assert_eq!(d.boundary_cycle().len(), 10);
    }

    #[test]
    fn ring_is_rejected() {
        let ring = Cell::new(0, 0).neighbors();
        let err = DiscreteDomain::from_cells(1.0, ring, &[]).unwrap_err();
        assert_eq!(err, LatticeError::NotSimplyConnected { cycles: 2 });
    }

    #[test]
    fn disconnected_is_rejected() {
        let err =
            DiscreteDomain::from_cells(1.0, [Cell::new(0, 0), Cell::new(5, 0)], &[]).unwrap_err();
        assert!(matches!(err, LatticeError::Disconnected { components: 2 }));
    }

    #[test]
    fn marks_must_be_unique_hexagon_vertices() {
        let cells = [Cell::new(0, 0), Cell::new(1, 0)];
        // corner 0 of (0,0) is shared with (1,0): two inside hexagons
        let shared = Vertex::from_corner(Cell::new(0, 0), 0);
        let err = DiscreteDomain::from_cells(1.0, cells, &[shared]).unwrap_err();
        assert!(matches!(err, LatticeError::MarkNotUniqueHexagon { count: 2, .. }));
    }

    #[test]
    fn marks_out_of_order_rejected() {
        let c = Cell::new(0, 0);
        let m: Vec<Vertex> = [0, 2, 1].iter().map(|&j| Vertex::from_corner(c, j)).collect();
        assert_eq!(
            DiscreteDomain::from_cells(1.0, [c], &m).unwrap_err(),
            LatticeError::MarksOutOfOrder
        );
    }

    #[test]
    fn coarse_square_has_four_marks() {
        let sq = Shape::Square { side: 1.0 };
        let d = build_canonical_domain(sq, 0.5, &sq.corner_fractions()).unwrap();
        assert!(d.len() >= 4);
        let set: HashSet<_> = d.marks().iter().collect();
        assert_eq!(set.len(), 4);
    }

    #[test]
    fn too_coarse_names_feasible_mesh() {
        let sq = Shape::Square { side: 1.0 };
        let err = build_canonical_domain(sq, 0.3, &[0.0, 0.01, 0.02, 0.5]).unwrap_err();
        match err {
            LatticeError::TooCoarse { feasible, .. } => {
                let m = feasible.expect("some finer mesh works");
                assert!(m < 0.3);
                assert!(build_canonical_domain(sq, m, &[0.0, 0.01, 0.02, 0.5]).is_ok());
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn arcs_partition_the_boundary() {
        let sq = Shape::Square { side: 1.0 };
        let d = build_canonical_domain(sq, 0.05, &sq.corner_fractions()).unwrap();
        let total: usize = (0..4).map(|j| d.arc_edges(j).len()).sum();
        assert_eq!(total, d.boundary_cycle().len());
        for j in 0..4 {
            assert_eq!(d.arc_edges(j)[0].start(), d.marks()[j]);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let t = Shape::EquilateralTriangle { side: 1.0 };
        let a = build_canonical_domain(t, 0.04, &t.corner_fractions()).unwrap();
        let b = build_canonical_domain(t, 0.04, &t.corner_fractions()).unwrap();
        assert_eq!(a.cells(), b.cells());
        assert_eq!(a.marks(), b.marks());
    }

    #[test]
    fn shape_fraction_round_trip() {
        let r = Shape::rectangle(2.0);
        for f in [0.0, 0.1, 0.33, 0.5, 0.9] {
            let p = r.point_at_fraction(f);
            assert!((r.fraction_of(p) - f).abs() < 1e-12);
        }
    }

    #[test]
    fn square_cell_count_matches_area() {
        let d = build_canonical_domain(Shape::Square { side: 1.0 }, 0.01, &[]).unwrap();
        let expected = 2.0 / (3.0 * SQRT3) * 1e4;
        assert!((expected - 3849.0).abs() < 0.5);
        let n = d.len() as f64;
        assert!((n - expected).abs() <= 0.05 * expected, "{n}");
        // enumeration oracle: hexagons with center in the square, plus a
        // boundary layer no thicker than one hexagon diameter
        let off = Shape::Square { side: 1.0 }.centroid();
        let mut inside = 0;
        for r in -80..=80 {
            for q in -120..=120 {
                let [x, y] = Cell::new(q, r).unit_center();
                let (x, y) = (off[0] + 0.01 * x, off[1] + 0.01 * y);
                if (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
                    inside += 1;
                }
            }
        }
        assert!((inside as f64 - expected).abs() <= 0.02 * expected);
        assert!(d.len() >= inside && d.len() as f64 <= inside as f64 + 4.0 / (0.01 * SQRT3) * 1.2);
    }

    #[test]
    fn triangle_arcs_balanced() {
        let t = Shape::EquilateralTriangle { side: 1.0 };
        let d = build_canonical_domain(t, 0.02, &t.corner_fractions()).unwrap();
        let n: Vec<usize> = (0..3).map(|j| d.arc_edges(j).len()).collect();
        let (lo, hi) = (n.iter().min().unwrap(), n.iter().max().unwrap());
        assert!(hi - lo <= 2, "{n:?}");
    }

    #[test]
    fn cycle_length_matches_edge_scan() {
        let d = build_canonical_domain(Shape::Square { side: 1.0 }, 0.1, &[]).unwrap();
        let mut scan = 0;
        for &c in d.cells() {
            for k in 0..6 {
                if !d.contains(c.neighbor(k)) {
                    scan += 1;
                }
            }
        }
        assert_eq!(scan, d.boundary_cycle().len());
        // consecutive edges chain head to tail
        let cyc = d.boundary_cycle();
        for i in 0..cyc.len() {
            assert_eq!(cyc[i].end(), cyc[(i + 1) % cyc.len()].start());
        }
    }

    proptest::proptest! {
        #[test]
        fn rectangles_build_with_ordered_marks(aspect in 0.5f64..3.0, inv in 10u32..40, shift in 0.0f64..0.2) {
            let shape = Shape::rectangle(aspect);
            let fr = [shift, 0.25 + shift, 0.5 + shift, 0.75 + shift];
            let d = build_canonical_domain(shape, 1.0 / inv as f64, &fr).unwrap();
            proptest::prop_assert_eq!(d.num_arcs(), 4);
            let total: usize = (0..4).map(|j| d.arc_edges(j).len()).sum();
            proptest::prop_assert_eq!(total, d.boundary_cycle().len());
            for j in 0..4 {
                proptest::prop_assert!(!d.arc_edges(j).is_empty());
            }
        }
    }
}
