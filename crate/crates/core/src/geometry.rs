//! Curves, quadrature meshes, the box grid and random scatterer clouds.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Range, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default corner-grading exponent.
pub const DEFAULT_GRADING: u32 = 4;

/// Rejection-sampling attempts per scatterer.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Tolerance for coincident interface nodes.
pub const CONFORMITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn unit(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    /// Rotation by −90°, the outward normal direction for a
    /// counterclockwise tangent.
    pub fn rot_cw(self) -> Self {
        Self::new(self.y, -self.x)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    let t = if len2 > 0.0 {
        ((p - a).dot(d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(a + d * t)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = (b - a).cross(c - a);
    let o2 = (b - a).cross(d - a);
    let o3 = (d - c).cross(a - c);
    let o4 = (d - c).cross(b - c);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

pub fn segment_segment_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scatterer {
    Circle { center: Point, radius: f64 },
    Segment { a: Point, b: Point },
}

impl Scatterer {
    pub fn circle(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("circle radius must be > 0, got {radius}")));
        }
        Ok(Self::Circle { center, radius })
    }

    pub fn segment(a: Point, b: Point) -> Result<Self> {
        if a.dist(b) == 0.0 {
            return Err(Error::Parameter("segment endpoints coincide".into()));
        }
        Ok(Self::Segment { a, b })
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Scatterer::Circle { radius, .. } => 2.0 * radius,
            Scatterer::Segment { a, b } => a.dist(b),
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Scatterer::Circle { center, .. } => center,
            Scatterer::Segment { a, b } => (a + b) * 0.5,
        }
    }

    /// Separation between two scatterers; zero or negative means overlap.
    pub fn separation(&self, other: &Scatterer) -> f64 {
        use Scatterer::*;
        match (*self, *other) {
            (Circle { center: c1, radius: r1 }, Circle { center: c2, radius: r2 }) => {
                c1.dist(c2) - r1 - r2
            }
            (Circle { center, radius }, Segment { a, b })
            | (Segment { a, b }, Circle { center, radius }) => {
                point_segment_distance(center, a, b) - radius
            }
            (Segment { a, b }, Segment { a: c, b: d }) => segment_segment_distance(a, b, c, d),
        }
    }

    /// Distance to the boundary of `rect` if inside, negative otherwise.
    pub fn clearance_in(&self, rect: &Rect) -> f64 {
        match *self {
            Scatterer::Circle { center, radius } => rect.inner_distance(center) - radius,
            Scatterer::Segment { a, b } => rect.inner_distance(a).min(rect.inner_distance(b)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) || ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter(format!(
                "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Corners in counterclockwise order starting at the south-west corner.
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x0, self.y0),
            Point::new(self.x1, self.y0),
            Point::new(self.x1, self.y1),
            Point::new(self.x0, self.y1),
        ]
    }

    /// Signed distance to the boundary, positive inside.
    pub fn inner_distance(&self, p: Point) -> f64 {
        (p.x - self.x0)
            .min(self.x1 - p.x)
            .min(p.y - self.y0)
            .min(self.y1 - p.y)
    }

    pub fn contains(&self, p: Point) -> bool {
        self.inner_distance(p) > 0.0
    }
}

/// Cardinal side of a box, in counterclockwise traversal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    S,
    E,
    N,
    W,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::S, Side::E, Side::N, Side::W];

    pub fn opposite(self) -> Side {
        match self {
            Side::S => Side::N,
            Side::E => Side::W,
            Side::N => Side::S,
            Side::W => Side::E,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Label of one straight piece of a cornered mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeLabel {
    pub box_index: usize,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    ClosedSmooth,
    ClosedCornered,
    OpenArc,
}

/// Quadrature nodes of a curve.
///
/// Closed curves carry a 2π-periodic parametrization sampled on an
/// equispaced grid `params`; `d1` and `d2` are the first and second
/// parameter derivatives. Open arcs carry the cosine variable `s ∈ (0, π)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshedBoundary {
    pub topology: Topology,
    pub nodes: Vec<Point>,
    pub normals: Vec<Point>,
    pub weights: Vec<f64>,
    pub speed: Vec<f64>,
    pub params: Vec<f64>,
    pub d1: Vec<Point>,
    pub d2: Vec<Point>,
    /// Contiguous labeled pieces of cornered meshes.
    pub pieces: Vec<(EdgeLabel, Range<usize>)>,
    /// Chord length of an open arc.
    pub arc_length: Option<f64>,
}

impl MeshedBoundary {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.topology != Topology::OpenArc
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Mean node spacing, the unit of the near-field threshold.
    pub fn mean_spacing(&self) -> f64 {
        self.total_weight() / self.len().max(1) as f64
    }

    pub fn piece(&self, label: EdgeLabel) -> Option<Range<usize>> {
        self.pieces
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, r)| r.clone())
    }

    pub fn min_distance_to(&self, p: Point) -> f64 {
        self.nodes.iter().fold(f64::INFINITY, |m, x| m.min(x.dist(p)))
    }

    fn from_parametrization(
        topology: Topology,
        params: Vec<f64>,
        positions: Vec<(Point, Point, Point)>,
    ) -> Self {
        let n = params.len();
        let h = 2.0 * PI / n as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        let mut speed = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (x, dx, ddx) in positions {
            let s = dx.norm();
            nodes.push(x);
            d1.push(dx);
            d2.push(ddx);
            speed.push(s);
            normals.push(dx.rot_cw() * (1.0 / s));
            weights.push(h * s);
        }
        Self {
            topology,
            nodes,
            normals,
            weights,
            speed,
            params,
            d1,
            d2,
            pieces: Vec::new(),
            arc_length: None,
        }
    }
}

pub fn build_circle_mesh(center: Point, radius: f64, n: usize) -> Result<MeshedBoundary> {
    if n < 8 || n % 2 == 1 {
        return Err(Error::Parameter(format!("circle mesh needs even n >= 8, got {n}")));
    }
    if !(radius > 0.0) {
        return Err(Error::Parameter(format!("circle radius must be > 0, got {radius}")));
    }
    let params: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
    let pos = params
        .iter()
        .map(|&t| {
            let (s, c) = t.sin_cos();
            (
                center + Point::new(c, s) * radius,
                Point::new(-s, c) * radius,
                Point::new(-c, -s) * radius,
            )
        })
        .collect();
    Ok(MeshedBoundary::from_parametrization(
        Topology::ClosedSmooth,
        params,
        pos,
    ))
}

/// Kress sigmoid `w: [0, 2π] → [0, 2π]` with derivatives vanishing to order
/// `p − 1` at both ends. Returns `(w, w′, w″)`.
pub fn sigmoid(s: f64, p: u32) -> (f64, f64, f64) {
    let pf = p as f64;
    let c = 1.0 / pf - 0.5;
    let u = (PI - s) / PI;
    let v = c * u * u * u + (s - PI) / (PI * pf) + 0.5;
    let dv = -3.0 * c * u * u / PI + 1.0 / (PI * pf);
    let ddv = 6.0 * c * u / (PI * PI);
    let a = v.powi(p as i32);
    let b = (1.0 - v).powi(p as i32);
    let g = a + b;
    let vw = v * (1.0 - v);
    let f = pf * dv * vw.powi(p as i32 - 1);
    let df = pf * ddv * vw.powi(p as i32 - 1)
        + pf * dv * dv * (pf - 1.0) * vw.powi(p as i32 - 2) * (1.0 - 2.0 * v);
    let dg = pf * dv * (v.powi(p as i32 - 1) - (1.0 - v).powi(p as i32 - 1));
    let w = 2.0 * PI * a / g;
    let dw = 2.0 * PI * f / (g * g);
    let ddw = 2.0 * PI * (df * g - 2.0 * f * dg) / (g * g * g);
    (w, dw, ddw)
}

/// Graded mesh of a closed polygon whose vertices are listed
/// counterclockwise. Every edge is one parameter piece of length `2π/M`
/// carrying `n_per_piece` nodes on the half-shifted grid.
pub fn build_polygon_mesh(
    vertices: &[Point],
    labels: &[EdgeLabel],
    n_per_piece: usize,
    p: u32,
) -> Result<MeshedBoundary> {
    let m = vertices.len();
    if m < 3 || labels.len() != m {
        return Err(Error::Parameter(
            "polygon needs >= 3 vertices and one label per edge".into(),
        ));
    }
    if n_per_piece < 8 {
        return Err(Error::Parameter(format!("n_per_edge must be >= 8, got {n_per_piece}")));
    }
    if p < 2 {
        return Err(Error::Parameter(format!("grading exponent must be >= 2, got {p}")));
    }
    let total = m * n_per_piece;
    let delta = 2.0 * PI / m as f64;
    let mut params = Vec::with_capacity(total);
    let mut pos = Vec::with_capacity(total);
    let mut pieces = Vec::with_capacity(m);
    for q in 0..m {
        let a = vertices[q];
        let b = vertices[(q + 1) % m];
        let e = b - a;
        if e.norm() == 0.0 {
            return Err(Error::Parameter(format!("polygon edge {q} has zero length")));
        }
        for i in 0..n_per_piece {
            let s = 2.0 * PI * (i as f64 + 0.5) / n_per_piece as f64;
            let (w, dw, ddw) = sigmoid(s, p);
            let scale = 2.0 * PI / delta;
            params.push(delta * q as f64 + s / scale);
            pos.push((
                a + e * (w / (2.0 * PI)),
                e * (dw * scale / (2.0 * PI)),
                e * (ddw * scale * scale / (2.0 * PI)),
            ));
        }
        pieces.push((labels[q], q * n_per_piece..(q + 1) * n_per_piece));
    }
    let mut mesh = MeshedBoundary::from_parametrization(Topology::ClosedCornered, params, pos);
    mesh.pieces = pieces;
    Ok(mesh)
}

/// Graded mesh of an axis-aligned box with sides S, E, N, W.
pub fn build_box_mesh(
    rect: &Rect,
    box_index: usize,
    n_per_edge: usize,
    p: u32,
) -> Result<MeshedBoundary> {
    let rect = Rect::new(rect.x0, rect.y0, rect.x1, rect.y1)?;
    let labels: Vec<EdgeLabel> = Side::ALL
        .iter()
        .map(|&side| EdgeLabel { box_index, side })
        .collect();
    build_polygon_mesh(&rect.corners(), &labels, n_per_edge, p)
}

/// Mesh of a straight segment in the cosine variable
/// `x(s) = m + (L/2) cos(s) d`, nodes at `s_j = π(j + ½)/n`.
///
/// Weights are `(π/n)(L/2) sin s_j`: a density with inverse square-root
/// endpoint behavior becomes smooth after multiplication by the speed.
pub fn build_arc_mesh(segment: &Scatterer, n: usize) -> Result<MeshedBoundary> {
    let (a, b) = match *segment {
        Scatterer::Segment { a, b } => (a, b),
        Scatterer::Circle { .. } => {
            return Err(Error::Topology("arc mesh requested for a circle".into()))
        }
    };
    if n < 8 || n % 2 == 1 {
        return Err(Error::Parameter(format!("arc mesh needs even n >= 8, got {n}")));
    }
    let len = a.dist(b);
    if len == 0.0 {
        return Err(Error::Parameter("zero-length segment".into()));
    }
    let mid = (a + b) * 0.5;
    let dir = (b - a) * (1.0 / len);
    let half = 0.5 * len;
    let h = PI / n as f64;
    let mut mesh = MeshedBoundary {
        topology: Topology::OpenArc,
        nodes: Vec::with_capacity(n),
        normals: vec![dir.rot_cw(); n],
        weights: Vec::with_capacity(n),
        speed: Vec::with_capacity(n),
        params: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
        d2: Vec::with_capacity(n),
        pieces: Vec::new(),
        arc_length: Some(len),
    };
    for j in 0..n {
        let s = h * (j as f64 + 0.5);
        let (sn, cs) = s.sin_cos();
        mesh.params.push(s);
        mesh.nodes.push(mid + dir * (half * cs));
        mesh.d1.push(dir * (-half * sn));
        mesh.d2.push(dir * (-half * cs));
        mesh.speed.push(half * sn);
        mesh.weights.push(h * half * sn);
    }
    Ok(mesh)
}

/// Mesh of a scatterer with `n` nodes.
pub fn build_scatterer_mesh(s: &Scatterer, n: usize) -> Result<MeshedBoundary> {
    match *s {
        Scatterer::Circle { center, radius } => build_circle_mesh(center, radius, n),
        Scatterer::Segment { .. } => build_arc_mesh(s, n),
    }
}

/// Size parameters of a random cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScattererShape {
    Circle { radius: f64 },
    Segment { length: f64 },
}

impl ScattererShape {
    pub fn diameter(&self) -> f64 {
        match *self {
            ScattererShape::Circle { radius } => 2.0 * radius,
            ScattererShape::Segment { length } => length,
        }
    }
}

/// Rectangular grid of congruent boxes with the scatterers of each box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub origin: Point,
    pub box_width: f64,
    pub box_height: f64,
    pub cols: usize,
    pub rows: usize,
    /// Scatterers per box, indexed by `row * cols + col`.
    pub scatterers: Vec<Vec<Scatterer>>,
}

impl BoxGrid {
    pub fn new(origin: Point, box_width: f64, box_height: f64, cols: usize, rows: usize) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::Parameter("grid needs at least one row and column".into()));
        }
        if !(box_width > 0.0 && box_height > 0.0) {
            return Err(Error::Parameter("box sizes must be positive".into()));
        }
        Ok(Self {
            origin,
            box_width,
            box_height,
            cols,
            rows,
            scatterers: vec![Vec::new(); cols * rows],
        })
    }

    pub fn num_boxes(&self) -> usize {
        self.cols * self.rows
    }

    pub fn box_index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn box_position(&self, index: usize) -> (usize, usize) {
        (index % self.cols, index / self.cols)
    }

    fn x_line(&self, c: usize) -> f64 {
        self.origin.x + c as f64 * self.box_width
    }

    fn y_line(&self, r: usize) -> f64 {
        self.origin.y + r as f64 * self.box_height
    }

    pub fn box_rect(&self, index: usize) -> Rect {
        let (c, r) = self.box_position(index);
        Rect {
            x0: self.x_line(c),
            y0: self.y_line(r),
            x1: self.x_line(c + 1),
            y1: self.y_line(r + 1),
        }
    }

    pub fn outer_rect(&self) -> Rect {
        Rect {
            x0: self.x_line(0),
            y0: self.y_line(0),
            x1: self.x_line(self.cols),
            y1: self.y_line(self.rows),
        }
    }

    pub fn total_scatterers(&self) -> usize {
        self.scatterers.iter().map(Vec::len).sum()
    }

    pub fn all_scatterers(&self) -> impl Iterator<Item = &Scatterer> {
        self.scatterers.iter().flatten()
    }

    /// Box containing the point, if any.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let c = ((p.x - self.origin.x) / self.box_width).floor();
        let r = ((p.y - self.origin.y) / self.box_height).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some(self.box_index(c as usize, r as usize))
    }

    /// Sides of box `index` that lie on the outer boundary.
    pub fn outer_sides(&self, index: usize) -> Vec<Side> {
        let (c, r) = self.box_position(index);
        let mut out = Vec::new();
        if r == 0 {
            out.push(Side::S);
        }
        if c + 1 == self.cols {
            out.push(Side::E);
        }
        if r + 1 == self.rows {
            out.push(Side::N);
        }
        if c == 0 {
            out.push(Side::W);
        }
        out
    }

    /// Neighbor across `side`, if inside the grid.
    pub fn neighbor(&self, index: usize, side: Side) -> Option<usize> {
        let (c, r) = self.box_position(index);
        match side {
            Side::S if r > 0 => Some(self.box_index(c, r - 1)),
            Side::E if c + 1 < self.cols => Some(self.box_index(c + 1, r)),
            Side::N if r + 1 < self.rows => Some(self.box_index(c, r + 1)),
            Side::W if c > 0 => Some(self.box_index(c - 1, r)),
            _ => None,
        }
    }

    /// Outer boundary pieces in counterclockwise order, one per box edge:
    /// the bottom row S sides, the right column E sides, the top row N sides
    /// reversed, the left column W sides reversed.
    pub fn outer_edges(&self) -> Vec<(EdgeLabel, Point)> {
        let mut out = Vec::new();
        for c in 0..self.cols {
            let b = self.box_index(c, 0);
            out.push((EdgeLabel { box_index: b, side: Side::S }, Point::new(self.x_line(c), self.y_line(0))));
        }
        for r in 0..self.rows {
            let b = self.box_index(self.cols - 1, r);
            out.push((EdgeLabel { box_index: b, side: Side::E }, Point::new(self.x_line(self.cols), self.y_line(r))));
        }
        for c in (0..self.cols).rev() {
            let b = self.box_index(c, self.rows - 1);
            out.push((EdgeLabel { box_index: b, side: Side::N }, Point::new(self.x_line(c + 1), self.y_line(self.rows))));
        }
        for r in (0..self.rows).rev() {
            let b = self.box_index(0, r);
            out.push((EdgeLabel { box_index: b, side: Side::W }, Point::new(self.x_line(0), self.y_line(r + 1))));
        }
        out
    }

    /// Checks containment with clearance `> min_clearance` and pairwise
    /// separation `> min_clearance` within each box.
    pub fn validate(&self, min_clearance: f64) -> Result<()> {
        if self.scatterers.len() != self.num_boxes() {
            return Err(Error::Parameter(format!(
                "grid has {} boxes but {} scatterer lists",
                self.num_boxes(),
                self.scatterers.len()
            )));
        }
        for (b, list) in self.scatterers.iter().enumerate() {
            let rect = self.box_rect(b);
            for (i, s) in list.iter().enumerate() {
                let c = s.clearance_in(&rect);
                if !(c > min_clearance) {
                    return Err(Error::Geometry(format!(
                        "scatterer {i} of box {b} has clearance {c:e} to its box boundary"
                    )));
                }
                for (j, t) in list.iter().enumerate().skip(i + 1) {
                    let d = s.separation(t);
                    if !(d > min_clearance) {
                        return Err(Error::Geometry(format!(
                            "scatterers {i} and {j} of box {b} are {d:e} apart"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Random cloud in every box of `grid`, deterministic in `seed`.
pub fn generate_cloud(
    grid: &BoxGrid,
    per_box_count: usize,
    shape: ScattererShape,
    clearance: Option<f64>,
    seed: u64,
) -> Result<BoxGrid> {
    let diam = shape.diameter();
    if !(diam > 0.0) {
        return Err(Error::Parameter(format!("scatterer size must be > 0, got {diam}")));
    }
    let delta = clearance.unwrap_or(0.5 * diam);
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("clearance must be > 0, got {delta}")));
    }
    let area = grid.box_width * grid.box_height;
    if per_box_count as f64 * (diam + delta).powi(2) >= area {
        return Err(Error::Parameter(format!(
            "{per_box_count} scatterers of size {diam} with clearance {delta} do not fit a box of area {area}"
        )));
    }
    let half_extent = match shape {
        ScattererShape::Circle { radius } => radius,
        ScattererShape::Segment { length } => 0.5 * length,
    };
    if 2.0 * (delta + half_extent) >= grid.box_width.min(grid.box_height) {
        return Err(Error::Parameter("scatterer and clearance exceed the box".into()));
    }
    let mut out = grid.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in 0..grid.num_boxes() {
        let rect = grid.box_rect(b);
        let mut placed: Vec<Scatterer> = Vec::with_capacity(per_box_count);
        for _ in 0..per_box_count {
            let mut ok = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let m = delta + half_extent;
                let center = Point::new(
                    rng.gen_range(rect.x0 + m..rect.x1 - m),
                    rng.gen_range(rect.y0 + m..rect.y1 - m),
                );
                let cand = match shape {
                    ScattererShape::Circle { radius } => Scatterer::Circle { center, radius },
                    ScattererShape::Segment { length } => {
                        let d = Point::unit(rng.gen_range(0.0..PI)) * (0.5 * length);
                        Scatterer::Segment {
                            a: center - d,
                            b: center + d,
                        }
                    }
                };
                if cand.clearance_in(&rect) >= delta
                    && placed.iter().all(|s| s.separation(&cand) >= delta)
                {
                    ok = Some(cand);
                    break;
                }
            }
            match ok {
                Some(s) => placed.push(s),
                None => {
                    return Err(Error::Placement {
                        box_index: b,
                        attempts: MAX_PLACEMENT_ATTEMPTS,
                    })
                }
            }
        }
        out.scatterers[b] = placed;
    }
    Ok(out)
}

/// Node correspondence across the edge shared by two adjacent boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceMap {
    pub box_a: usize,
    pub side_a: Side,
    pub box_b: usize,
    pub side_b: Side,
    /// `mirror[i]` is the index on b's side matching node `i` of a's side.
    pub mirror: Vec<usize>,
}

/// Pairs the shared-edge nodes of `box_a` and `box_b`. Traversals are
/// opposite, so node `i` of one side matches node `n − 1 − i` of the other.
pub fn interface_node_map(
    grid: &BoxGrid,
    box_a: usize,
    box_b: usize,
    n_per_edge: usize,
    p: u32,
) -> Result<InterfaceMap> {
    if box_a >= grid.num_boxes() || box_b >= grid.num_boxes() {
        return Err(Error::Parameter("box index out of range".into()));
    }
    let side_a = Side::ALL
        .into_iter()
        .find(|&s| grid.neighbor(box_a, s) == Some(box_b))
        .ok_or_else(|| Error::Conformity(format!("boxes {box_a} and {box_b} are not adjacent")))?;
    let side_b = side_a.opposite();
    let ma = build_box_mesh(&grid.box_rect(box_a), box_a, n_per_edge, p)?;
    let mb = build_box_mesh(&grid.box_rect(box_b), box_b, n_per_edge, p)?;
    let map = InterfaceMap {
        box_a,
        side_a,
        box_b,
        side_b,
        mirror: (0..n_per_edge).rev().collect(),
    };
    check_conformity(&ma, &mb, &map)?;
    Ok(map)
}

/// Verifies that paired interface nodes coincide.
pub fn check_conformity(ma: &MeshedBoundary, mb: &MeshedBoundary, map: &InterfaceMap) -> Result<()> {
    let ra = ma
        .piece(EdgeLabel { box_index: map.box_a, side: map.side_a })
        .ok_or_else(|| Error::Conformity("side missing on first mesh".into()))?;
    let rb = mb
        .piece(EdgeLabel { box_index: map.box_b, side: map.side_b })
        .ok_or_else(|| Error::Conformity("side missing on second mesh".into()))?;
    if ra.len() != rb.len() || ra.len() != map.mirror.len() {
        return Err(Error::Conformity(format!(
            "interface sizes differ: {} vs {}",
            ra.len(),
            rb.len()
        )));
    }
    for (i, &j) in map.mirror.iter().enumerate() {
        let d = ma.nodes[ra.start + i].dist(mb.nodes[rb.start + j]);
        if d > CONFORMITY_TOL {
            return Err(Error::Conformity(format!(
                "interface node {i} of boxes {}/{} mismatched by {d:e}",
                map.box_a, map.box_b
            )));
        }
    }
    Ok(())
}

/// Mesh of the outer boundary made of every outer box edge, graded at the
/// endpoints of each edge so that it coincides with the leaf meshes.
pub fn build_outer_mesh(grid: &BoxGrid, n_per_edge: usize, p: u32) -> Result<MeshedBoundary> {
    let edges = grid.outer_edges();
    let vertices: Vec<Point> = edges.iter().map(|e| e.1).collect();
    let labels: Vec<EdgeLabel> = edges.iter().map(|e| e.0).collect();
    build_polygon_mesh(&vertices, &labels, n_per_edge, p)
}
