//! Uniform tensor grids on cubes, boundary partitions and compact sets.
//!
//! Node `(i, j)` of a [`Grid`] with `m` cells per axis has index
//! `j * (m + 1) + i` and sits at `lower + (i h, j h)`. Every set that
//! this module marks is a coordinate predicate, so membership of a node
//! survives uniform refinement.

use crate::error::{Error, Result};
use crate::Point;

const COORD_TOL: f64 = 1e-9;

/// Closed or open cube `Q_r(x0) = { |x_i - x0_i| < r }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cube {
    pub center: Point,
    pub halfwidth: f64,
}

impl Cube {
    pub fn new(center: Point, halfwidth: f64) -> Result<Self> {
        if !(halfwidth > 0.0 && halfwidth.is_finite()) {
            return Err(Error::param(format!("cube halfwidth must be positive, got {halfwidth}")));
        }
        Ok(Cube { center, halfwidth })
    }

    /// The unit square `(0, 1)^2`.
    pub fn unit_square() -> Self {
        Cube { center: [0.5, 0.5], halfwidth: 0.5 }
    }

    pub fn side(&self) -> f64 {
        2.0 * self.halfwidth
    }

    pub fn volume(&self) -> f64 {
        self.side() * self.side()
    }

    pub fn lower(&self) -> Point {
        [self.center[0] - self.halfwidth, self.center[1] - self.halfwidth]
    }

    pub fn upper(&self) -> Point {
        [self.center[0] + self.halfwidth, self.center[1] + self.halfwidth]
    }

    /// Concentric cube with halfwidth scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Cube {
        Cube { center: self.center, halfwidth: self.halfwidth * factor }
    }

    /// Membership in the closure, with an absolute slack.
    pub fn contains_closed(&self, x: Point, slack: f64) -> bool {
        (x[0] - self.center[0]).abs() <= self.halfwidth + slack
            && (x[1] - self.center[1]).abs() <= self.halfwidth + slack
    }

    pub fn contains_cube(&self, other: &Cube, slack: f64) -> bool {
        let (lo, hi) = (other.lower(), other.upper());
        self.contains_closed(lo, slack) && self.contains_closed(hi, slack)
    }

    /// Euclidean distance from `x` to the closed cube.
    pub fn distance(&self, x: Point) -> f64 {
        let dx = ((x[0] - self.center[0]).abs() - self.halfwidth).max(0.0);
        let dy = ((x[1] - self.center[1]).abs() - self.halfwidth).max(0.0);
        dx.hypot(dy)
    }
}

/// Uniform grid with `cells` cells per axis on a cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    cube: Cube,
    cells: usize,
}

impl Grid {
    pub fn new(cube: Cube, cells: usize) -> Result<Self> {
        if cells < 1 {
            return Err(Error::InvalidResolution(cells, 1));
        }
        if !(cube.halfwidth > 0.0) {
            return Err(Error::param("grid cube must have positive halfwidth"));
        }
        Ok(Grid { cube, cells })
    }

    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        self.cube.side() / self.cells as f64
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.cells + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis() * self.nodes_per_axis()
    }

    pub fn cell_count(&self) -> usize {
        self.cells * self.cells
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.cells + 1) + i
    }

    #[inline]
    pub fn node_ij(&self, idx: usize) -> (usize, usize) {
        (idx % (self.cells + 1), idx / (self.cells + 1))
    }

    #[inline]
    pub fn node_coords(&self, idx: usize) -> Point {
        let (i, j) = self.node_ij(idx);
        self.coords_ij(i, j)
    }

    #[inline]
    pub fn coords_ij(&self, i: usize, j: usize) -> Point {
        let lo = self.cube.lower();
        let h = self.h();
        [lo[0] + i as f64 * h, lo[1] + j as f64 * h]
    }

    /// Node indices of cell `(ci, cj)` in the local order
    /// `(0,0), (1,0), (0,1), (1,1)`.
    #[inline]
    pub fn cell_nodes(&self, ci: usize, cj: usize) -> [usize; 4] {
        let n0 = self.node_index(ci, cj);
        let stride = self.cells + 1;
        [n0, n0 + 1, n0 + stride, n0 + stride + 1]
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j) = self.node_ij(idx);
        i == 0 || j == 0 || i == self.cells || j == self.cells
    }

    pub fn boundary_nodes(&self) -> NodeSet {
        NodeSet::from_indices((0..self.node_count()).filter(|&k| self.is_boundary(k)).collect())
    }

    /// Index of the node at `x` if `x` coincides with a node up to
    /// `COORD_TOL * h`.
    pub fn node_at(&self, x: Point) -> Option<usize> {
        let lo = self.cube.lower();
        let h = self.h();
        let fi = (x[0] - lo[0]) / h;
        let fj = (x[1] - lo[1]) / h;
        let (ri, rj) = (fi.round(), fj.round());
        if (fi - ri).abs() > COORD_TOL || (fj - rj).abs() > COORD_TOL {
            return None;
        }
        if ri < 0.0 || rj < 0.0 || ri > self.cells as f64 || rj > self.cells as f64 {
            return None;
        }
        Some(self.node_index(ri as usize, rj as usize))
    }

    /// Uniform refinement by a factor of two; coarse nodes stay nodes.
    pub fn refine(&self) -> Grid {
        Grid { cube: self.cube, cells: 2 * self.cells }
    }
}

/// Free-function alias of [`Grid::new`] that also enforces `m >= 2`.
pub fn build_grid(cube: Cube, m: usize) -> Result<Grid> {
    if m < 2 {
        return Err(Error::InvalidResolution(m, 2));
    }
    Grid::new(cube, m)
}

/// Sorted, duplicate-free list of node indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn from_indices(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        NodeSet(idx)
    }

    pub fn empty() -> Self {
        NodeSet(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.0.binary_search(&idx).is_ok()
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        NodeSet::from_indices(v)
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.iter().all(|&k| other.contains(k))
    }

    /// Boolean mask of length `grid.node_count()`.
    pub fn mask(&self, grid: &Grid) -> Vec<bool> {
        let mut m = vec![false; grid.node_count()];
        for &k in &self.0 {
            m[k] = true;
        }
        m
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match self.0.last() {
            Some(&k) if k >= grid.node_count() => {
                Err(Error::param(format!("node index {k} out of range for grid")))
            }
            _ => Ok(()),
        }
    }

    /// Re-index onto another grid whose node lattice contains these nodes.
    pub fn transfer(&self, from: &Grid, to: &Grid) -> Result<NodeSet> {
        self.0
            .iter()
            .map(|&k| to.node_at(from.node_coords(k)).ok_or(Error::OutOfDomain))
            .collect::<Result<Vec<_>>>()
            .map(NodeSet::from_indices)
    }

    /// Rows `(index, x1, x2)` for CSV export.
    pub fn rows(&self, grid: &Grid) -> Vec<(usize, f64, f64)> {
        self.0
            .iter()
            .map(|&k| {
                let x = grid.node_coords(k);
                (k, x[0], x[1])
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left];

    /// The straight segment carrying this edge of `cube`.
    pub fn segment(&self, cube: &Cube) -> AxisSegment {
        let (lo, hi) = (cube.lower(), cube.upper());
        match self {
            Edge::Bottom => AxisSegment::horizontal(lo[1], lo[0], hi[0]),
            Edge::Top => AxisSegment::horizontal(hi[1], lo[0], hi[0]),
            Edge::Left => AxisSegment::vertical(lo[0], lo[1], hi[1]),
            Edge::Right => AxisSegment::vertical(hi[0], lo[1], hi[1]),
        }
    }

    fn holds(&self, grid: &Grid, idx: usize) -> bool {
        let (i, j) = grid.node_ij(idx);
        match self {
            Edge::Left => i == 0,
            Edge::Right => i == grid.cells(),
            Edge::Bottom => j == 0,
            Edge::Top => j == grid.cells(),
        }
    }
}

/// Axis-parallel segment `{ x_fixed = offset, start <= x_along <= end }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSegment {
    /// 0 for a horizontal segment (runs along x1), 1 for vertical.
    pub along: usize,
    pub offset: f64,
    pub start: f64,
    pub end: f64,
}

impl AxisSegment {
    pub fn horizontal(x2: f64, start: f64, end: f64) -> Self {
        AxisSegment { along: 0, offset: x2, start, end }
    }

    pub fn vertical(x1: f64, start: f64, end: f64) -> Self {
        AxisSegment { along: 1, offset: x1, start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn point_at(&self, s: f64) -> Point {
        if self.along == 0 {
            [s, self.offset]
        } else {
            [self.offset, s]
        }
    }

    /// Along-coordinate of `x` and its distance from the carrying line.
    fn project(&self, x: Point) -> (f64, f64) {
        let fixed = 1 - self.along;
        (x[self.along], (x[fixed] - self.offset).abs())
    }

    /// Map the reference interval `[-1/2, 1/2]` onto the segment.
    pub fn from_reference(&self, t: f64) -> f64 {
        self.start + (t + 0.5) * self.length()
    }
}

/// Generalized `(1 - 2λ)`-middle Cantor set and its level-`k` prefigure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CantorSet {
    pub lambda: f64,
    pub level: usize,
}

impl CantorSet {
    pub fn new(lambda: f64, level: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 0.5) {
            return Err(Error::InvalidLambda(lambda));
        }
        Ok(CantorSet { lambda, level })
    }

    pub fn hausdorff_dim(&self) -> f64 {
        2f64.ln() / (1.0 / self.lambda).ln()
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        // lambda validated in `new`
        cantor_intervals(self.lambda, self.level).unwrap_or_default()
    }

    /// Total length `(2λ)^k` of the prefigure.
    pub fn total_length(&self) -> f64 {
        (2.0 * self.lambda).powi(self.level as i32)
    }
}

/// Level-`k` intervals of the Cantor construction on `[-1/2, 1/2]`,
/// ordered left to right.
pub fn cantor_intervals(lambda: f64, k: usize) -> Result<Vec<(f64, f64)>> {
    if !(lambda > 0.0 && lambda < 0.5) {
        return Err(Error::InvalidLambda(lambda));
    }
    let mut out = vec![(-0.5, 0.5)];
    for _ in 0..k {
        out = out
            .iter()
            .flat_map(|&(a, b)| {
                let len = lambda * (b - a);
                [(a, a + len), (b - len, b)]
            })
            .collect();
    }
    Ok(out)
}

/// Geometric description of a (Dirichlet) set that can be marked on any grid.
#[derive(Debug, Clone, PartialEq)]
pub enum SetGeometry {
    /// Cantor prefigure mapped from `[-1/2, 1/2]` onto a segment.
    Cantor { set: CantorSet, segment: AxisSegment },
    Segment(AxisSegment),
    Points(Vec<Point>),
}

impl SetGeometry {
    /// Nodes of `grid` lying in the set and in the closed `window`.
    pub fn mark(&self, grid: &Grid, window: Option<&Cube>) -> NodeSet {
        let h = grid.h();
        let in_window = |x: Point| window.map_or(true, |w| w.contains_closed(x, COORD_TOL * h));
        let nodes = (0..grid.node_count()).filter(|&k| {
            let x = grid.node_coords(k);
            in_window(x) && self.contains_node(x, h)
        });
        NodeSet::from_indices(nodes.collect())
    }

    fn contains_node(&self, x: Point, h: f64) -> bool {
        let tol = COORD_TOL * h;
        match self {
            SetGeometry::Cantor { set, segment } => {
                let (s, d) = segment.project(x);
                d <= tol
                    && set.intervals().iter().any(|&(a, b)| {
                        let (a, b) = (segment.from_reference(a), segment.from_reference(b));
                        s >= a - tol && s <= b + tol
                    })
            }
            SetGeometry::Segment(seg) => {
                let (s, d) = seg.project(x);
                d <= tol && s >= seg.start - tol && s <= seg.end + tol
            }
            SetGeometry::Points(pts) => pts
                .iter()
                .any(|p| (p[0] - x[0]).hypot(p[1] - x[1]) <= 0.5 * h + tol),
        }
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: Point) -> f64 {
        let seg_dist = |seg: &AxisSegment, a: f64, b: f64| {
            let (s, d) = seg.project(x);
            let ds = if s < a { a - s } else if s > b { s - b } else { 0.0 };
            ds.hypot(d)
        };
        match self {
            SetGeometry::Cantor { set, segment } => set
                .intervals()
                .iter()
                .map(|&(a, b)| {
                    seg_dist(segment, segment.from_reference(a), segment.from_reference(b))
                })
                .fold(f64::INFINITY, f64::min),
            SetGeometry::Segment(seg) => seg_dist(seg, seg.start, seg.end),
            SetGeometry::Points(pts) => pts
                .iter()
                .map(|p| (p[0] - x[0]).hypot(p[1] - x[1]))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Boundary specification for the Dirichlet part `D`.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    FullBoundary,
    Edges(Vec<Edge>),
    /// Alternating runs of length `period / 2` along each listed edge,
    /// starting with a Dirichlet run at the low end of the edge.
    Checkerboard { period: f64, edges: Vec<Edge> },
    Cantor { lambda: f64, level: usize, edge: Edge },
    Explicit(NodeSet),
}

/// Dirichlet node set `D` and its Neumann complement on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPartition {
    grid: Grid,
    dirichlet: NodeSet,
}

impl BoundaryPartition {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dirichlet(&self) -> &NodeSet {
        &self.dirichlet
    }

    /// Boundary nodes not in `D`.
    pub fn neumann(&self) -> NodeSet {
        let all = self.grid.boundary_nodes();
        NodeSet::from_indices(
            all.indices().iter().copied().filter(|&k| !self.dirichlet.contains(k)).collect(),
        )
    }

    /// Set when `D` is empty: legal for capacity classification but not
    /// for solving.
    pub fn is_empty_flagged(&self) -> bool {
        self.dirichlet.is_empty()
    }
}

pub fn mark_dirichlet(grid: &Grid, spec: &BoundarySpec) -> Result<BoundaryPartition> {
    let bnd = grid.boundary_nodes();
    let cube = *grid.cube();
    let on_edges = |edges: &[Edge], k: usize| edges.iter().any(|e| e.holds(grid, k));
    let picked: Vec<usize> = match spec {
        BoundarySpec::FullBoundary => bnd.indices().to_vec(),
        BoundarySpec::Edges(edges) => {
            bnd.indices().iter().copied().filter(|&k| on_edges(edges, k)).collect()
        }
        BoundarySpec::Checkerboard { period, edges } => {
            if !(*period > 0.0) {
                return Err(Error::param("checkerboard period must be positive"));
            }
            let half = 0.5 * period;
            bnd.indices()
                .iter()
                .copied()
                .filter(|&k| {
                    edges.iter().any(|e| {
                        if !e.holds(grid, k) {
                            return false;
                        }
                        let seg = e.segment(&cube);
                        let s = grid.node_coords(k)[seg.along] - seg.start;
                        let run = (s / half + COORD_TOL).floor() as i64;
                        run % 2 == 0
                    })
                })
                .collect()
        }
        BoundarySpec::Cantor { lambda, level, edge } => {
            let set = CantorSet::new(*lambda, *level)?;
            let geom = SetGeometry::Cantor { set, segment: edge.segment(&cube) };
            geom.mark(grid, None)
                .indices()
                .iter()
                .copied()
                .filter(|&k| edge.holds(grid, k))
                .collect()
        }
        BoundarySpec::Explicit(set) => {
            set.validate(grid)?;
            if let Some(&k) = set.indices().iter().find(|&&k| !grid.is_boundary(k)) {
                return Err(Error::param(format!("explicit Dirichlet node {k} is not a boundary node")));
            }
            set.indices().to_vec()
        }
    };
    Ok(BoundaryPartition { grid: *grid, dirichlet: NodeSet::from_indices(picked) })
}

/// Shapes from which compact sets `K` are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum InteriorShape {
    SubCube(Cube),
    Points(Vec<Point>),
    Segment(Point, Point),
}

impl InteriorShape {
    /// The shape dilated by `r` about the origin.
    pub fn scaled(&self, r: f64) -> InteriorShape {
        let s = |p: &[f64; 2]| [p[0] * r, p[1] * r];
        match self {
            InteriorShape::SubCube(c) => InteriorShape::SubCube(Cube { center: s(&c.center), halfwidth: c.halfwidth * r }),
            InteriorShape::Points(pts) => InteriorShape::Points(pts.iter().map(s).collect()),
            InteriorShape::Segment(a, b) => InteriorShape::Segment(s(a), s(b)),
        }
    }

    fn distance(&self, x: Point) -> f64 {
        match self {
            InteriorShape::SubCube(c) => c.distance(x),
            InteriorShape::Points(pts) => pts
                .iter()
                .map(|p| (p[0] - x[0]).hypot(p[1] - x[1]))
                .fold(f64::INFINITY, f64::min),
            InteriorShape::Segment(a, b) => {
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let t = if len2 > 0.0 {
                    (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (x[0] - a[0] - t * d[0]).hypot(x[1] - a[1] - t * d[1])
            }
        }
    }

    fn within(&self, cube: &Cube, slack: f64) -> bool {
        match self {
            InteriorShape::SubCube(c) => cube.contains_cube(c, slack),
            InteriorShape::Points(pts) => pts.iter().all(|&p| cube.contains_closed(p, slack)),
            InteriorShape::Segment(a, b) => {
                cube.contains_closed(*a, slack) && cube.contains_closed(*b, slack)
            }
        }
    }
}

/// Nodes within `h/2` of `shape`.
pub fn interior_set(grid: &Grid, shape: &InteriorShape) -> Result<NodeSet> {
    let h = grid.h();
    if !shape.within(grid.cube(), COORD_TOL * h) {
        return Err(Error::OutOfDomain);
    }
    let reach = 0.5 * h * (1.0 + COORD_TOL);
    Ok(NodeSet::from_indices(
        (0..grid.node_count())
            .filter(|&k| shape.distance(grid.node_coords(k)) <= reach)
            .collect(),
    ))
}
