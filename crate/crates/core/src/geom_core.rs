//! Points, polygons, triangulation and the balanced diagonal decomposition.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use crate::math;

/// Geometric tolerance in normalized (unit box) coordinates.
pub const EPS_GEOM: f64 = 1e-9;
/// Termination tolerance of the 1D root finders.
pub const EPS_ROOT: f64 = 1e-12;
/// Two distances closer than this are a tie, broken by site id.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }
    pub fn norm(self) -> f64 {
        math::hypot(self.x, self.y)
    }
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }
    pub fn unit(self) -> Point {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }
    pub fn lerp(self, o: Point, t: f64) -> Point {
        self + (o - self) * t
    }
    /// Rotates by the angle whose cosine and sine are given.
    pub fn rotate(self, c: f64, s: f64) -> Point {
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
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
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}
impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Twice the signed area of `abc`; positive for a left turn.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

/// Sign of `orient` with a tolerance scaled to the edge lengths.
pub fn turn(a: Point, b: Point, c: Point) -> i8 {
    let o = orient(a, b, c);
    let scale = (b - a).norm() * (c - b).norm();
    if o.abs() <= EPS_GEOM * scale.max(EPS_GEOM) {
        0
    } else if o > 0.0 {
        1
    } else {
        -1
    }
}

/// `true` when `(d1, id1)` precedes `(d2, id2)`: smaller distance, ties by id.
#[inline]
pub fn tie_less(d1: f64, id1: u64, d2: f64, id2: u64) -> bool {
    if (d1 - d2).abs() <= TIE_EPS {
        id1 < id2
    } else {
        d1 < d2
    }
}

/// Sorts `(distance, id)` pairs by distance, ordering near-ties by id.
///
/// Runs of values chained within `TIE_EPS` are treated as one tie class, so the
/// result is deterministic even though `tie_less` alone is not transitive.
pub fn sort_ranked(v: &mut [(f64, u64)]) {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        while j < v.len() && v[j].0 - v[j - 1].0 <= TIE_EPS {
            j += 1;
        }
        if j - i > 1 {
            v[i..j].sort_by_key(|e| e.1);
        }
        i = j;
    }
}

/// Parameters `(t, u)` of the intersection of segments `p0p1` and `q0q1`,
/// touching included. `None` for disjoint or parallel segments.
pub fn segment_intersection(p0: Point, p1: Point, q0: Point, q1: Point) -> Option<(f64, f64)> {
    let r = p1 - p0;
    let s = q1 - q0;
    let den = r.cross(s);
    if den.abs() <= 1e-18 * (r.norm() * s.norm()).max(1e-300) {
        return None;
    }
    let qp = q0 - p0;
    let t = qp.cross(s) / den;
    let u = qp.cross(r) / den;
    let e = 1e-12;
    if t < -e || t > 1.0 + e || u < -e || u > 1.0 + e {
        return None;
    }
    Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
}

/// Distance from `p` to segment `ab`.
pub fn point_segment_dist(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let l2 = ab.dot(ab);
    if l2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / l2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Point-in-polygon for a closed region; points within `tol` of the boundary count as inside.
pub fn point_in_ring(ring: &[Point], p: Point, tol: f64) -> bool {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if point_segment_dist(p, a, b) <= tol {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn ring_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        s += ring[i].cross(ring[(i + 1) % n]);
    }
    s * 0.5
}

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    NotSimple,
    Collinear,
    TooFewVertices,
    Parse(String),
    PointOutsidePolygon,
    IndexOutOfRange,
    NotReflex,
    DegenerateSites,
    KTooLarge,
    RetriesExhausted,
    NoSites,
    UnsupportedOp,
    UnknownId(u64),
    DuplicateId(u64),
    ScheduleInconsistent(String),
    TimeRegression,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotSimple => write!(f, "polygon is not simple"),
            Error::Collinear => write!(f, "polygon has degenerate collinear vertices"),
            Error::TooFewVertices => write!(f, "polygon needs at least 3 vertices"),
            Error::Parse(m) => write!(f, "parse error: {m}"),
            Error::PointOutsidePolygon => write!(f, "point lies outside the polygon"),
            Error::IndexOutOfRange => write!(f, "index out of range"),
            Error::NotReflex => write!(f, "extension ray leaves the polygon immediately"),
            Error::DegenerateSites => write!(f, "sites are not in general position"),
            Error::KTooLarge => write!(f, "k is too large for the site set"),
            Error::RetriesExhausted => write!(f, "randomized construction failed after all retries"),
            Error::NoSites => write!(f, "no live sites"),
            Error::UnsupportedOp => write!(f, "operation not supported by this variant"),
            Error::UnknownId(id) => write!(f, "unknown site id {id}"),
            Error::DuplicateId(id) => write!(f, "site id {id} already present"),
            Error::ScheduleInconsistent(m) => write!(f, "inconsistent schedule: {m}"),
            Error::TimeRegression => write!(f, "time must not decrease"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Site {
    pub id: u64,
    pub point: Point,
}

impl Site {
    pub const fn new(id: u64, point: Point) -> Self {
        Site { id, point }
    }
}

/// A validated simple polygon, counterclockwise.
#[derive(Clone, Debug)]
pub struct Polygon {
    vertices: Vec<Point>,
    reversed: bool,
}

impl Polygon {
    /// Validates `vertices` as given (no normalization). Clockwise input is reversed.
    pub fn new(mut vertices: Vec<Point>) -> Result<Polygon> {
        if vertices.len() < 3 {
            return Err(Error::TooFewVertices);
        }
        validate(&vertices)?;
        let reversed = ring_area(&vertices) < 0.0;
        if reversed {
            vertices.reverse();
        }
        Ok(Polygon { vertices, reversed })
    }

    /// Parses the polygon text format and normalizes to the unit bounding box.
    pub fn parse(text: &str) -> Result<Polygon> {
        Ok(Polygon::parse_normalized(text)?.0)
    }

    /// Like [`Polygon::parse`], also returning the map from input coordinates.
    pub fn parse_normalized(text: &str) -> Result<(Polygon, Normalization)> {
        let pts = parse_polygon_points(text)?;
        if pts.len() < 3 {
            return Err(Error::TooFewVertices);
        }
        let n = Normalization::fit(&pts);
        Ok((Polygon::new(pts.iter().map(|&p| n.apply(p)).collect())?, n))
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
    pub fn m(&self) -> usize {
        self.vertices.len()
    }
    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }
    /// `true` if the input was clockwise and had to be reversed.
    pub fn was_reversed(&self) -> bool {
        self.reversed
    }
    pub fn area(&self) -> f64 {
        ring_area(&self.vertices)
    }
    pub fn prev(&self, i: usize) -> usize {
        (i + self.m() - 1) % self.m()
    }
    pub fn next(&self, i: usize) -> usize {
        (i + 1) % self.m()
    }
    /// Reflex vertex: interior angle above pi.
    pub fn is_reflex(&self, i: usize) -> bool {
        orient(self.vertices[self.prev(i)], self.vertices[i], self.vertices[self.next(i)]) < 0.0
    }
    pub fn contains(&self, p: Point) -> bool {
        point_in_ring(&self.vertices, p, EPS_GEOM)
    }
    /// Does direction `dir` leave vertex `i` into the open interior?
    pub fn points_inside(&self, i: usize, dir: Point) -> bool {
        let v = self.vertices[i];
        let a = self.vertices[self.next(i)] - v;
        let b = self.vertices[self.prev(i)] - v;
        let c1 = a.cross(dir);
        let c2 = dir.cross(b);
        let tol = 1e-12 * dir.norm();
        if a.cross(b) > 0.0 {
            c1 > tol && c2 > tol
        } else {
            c1 > tol || c2 > tol
        }
    }

    /// First boundary point hit by the ray `origin + t*dir`, `t > 0`, ignoring
    /// edges incident to vertex `skip`. Returns the point and `t`.
    pub fn ray_exit(&self, origin: Point, dir: Point, skip: Option<usize>) -> Option<(Point, f64)> {
        let n = self.m();
        let far = origin + dir * (4.0 / dir.norm().max(1e-300)) * self.diameter_bound();
        let mut best: Option<(Point, f64)> = None;
        for i in 0..n {
            let j = (i + 1) % n;
            if let Some(k) = skip {
                if i == k || j == k {
                    continue;
                }
            }
            if let Some((t, _)) = segment_intersection(origin, far, self.vertices[i], self.vertices[j]) {
                let tt = t * (far - origin).norm() / dir.norm();
                if tt <= 1e-12 {
                    continue;
                }
                if best.map_or(true, |(_, b)| tt < b) {
                    best = Some((origin + dir * tt, tt));
                }
            }
        }
        best
    }

    fn diameter_bound(&self) -> f64 {
        let (mut lo, mut hi) = (self.vertices[0], self.vertices[0]);
        for v in &self.vertices {
            lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (hi - lo).norm().max(1.0)
    }

    /// Closed segment `pq` lies inside the polygon (touching the boundary allowed).
    pub fn segment_inside(&self, p: Point, q: Point) -> bool {
        segment_inside_ring(&self.vertices, p, q)
    }
}

/// Visibility inside a simple ring: `pq` never leaves the closed region.
pub fn segment_inside_ring(ring: &[Point], p: Point, q: Point) -> bool {
    let n = ring.len();
    let len = p.dist(q);
    if len <= EPS_GEOM {
        return point_in_ring(ring, p, EPS_GEOM);
    }
    let mut cuts: Vec<f64> = vec![0.0, 1.0];
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let oa = orient(p, q, a) / len;
        let ob = orient(p, q, b) / len;
        let eab = (b - a).norm().max(1e-300);
        let op = orient(a, b, p) / eab;
        let oq = orient(a, b, q) / eab;
        let e = EPS_GEOM;
        if ((oa > e && ob < -e) || (oa < -e && ob > e)) && ((op > e && oq < -e) || (op < -e && oq > e)) {
            return false;
        }
        for (v, ov) in [(a, oa), (b, ob)] {
            if ov.abs() <= e {
                let t = (v - p).dot(q - p) / (len * len);
                if t > 0.0 && t < 1.0 {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));
    for w in cuts.windows(2) {
        if w[1] - w[0] <= 1e-12 {
            continue;
        }
        let m = p.lerp(q, 0.5 * (w[0] + w[1]));
        if !point_in_ring(ring, m, EPS_GEOM) {
            return false;
        }
    }
    true
}

fn parse_polygon_points(text: &str) -> Result<Vec<Point>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let head = lines.next().ok_or_else(|| Error::Parse("empty polygon file".into()))?;
    let m: usize = head.parse().map_err(|_| Error::Parse(alloc::format!("bad vertex count {head:?}")))?;
    let mut pts = Vec::with_capacity(m);
    for _ in 0..m {
        let l = lines.next().ok_or_else(|| Error::Parse("missing vertex line".into()))?;
        pts.push(parse_xy(l)?);
    }
    if lines.next().is_some() {
        return Err(Error::Parse("trailing lines after vertices".into()));
    }
    Ok(pts)
}

/// Parses `"x y"` or `"x,y"`.
pub fn parse_xy(s: &str) -> Result<Point> {
    let mut it = s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty());
    let bad = || Error::Parse(alloc::format!("bad point {s:?}"));
    let x: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let y: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if it.next().is_some() || !x.is_finite() || !y.is_finite() {
        return Err(bad());
    }
    Ok(Point::new(x, y))
}

/// Uniform scale + translation into the unit box (aspect ratio kept).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub origin: Point,
    pub scale: f64,
}

impl Normalization {
    pub fn fit(pts: &[Point]) -> Normalization {
        let (mut lo, mut hi) = (pts[0], pts[0]);
        for v in pts {
            lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        let s = (hi.x - lo.x).max(hi.y - lo.y);
        Normalization { origin: lo, scale: if s > 0.0 { 1.0 / s } else { 1.0 } }
    }
    pub fn apply(&self, p: Point) -> Point {
        (p - self.origin) * self.scale
    }
    pub fn invert(&self, p: Point) -> Point {
        p * (1.0 / self.scale) + self.origin
    }
    /// A normalized length in input units.
    pub fn length_out(&self, d: f64) -> f64 {
        d / self.scale
    }
}

pub fn normalize(pts: &[Point]) -> Vec<Point> {
    let n = Normalization::fit(pts);
    pts.iter().map(|&p| n.apply(p)).collect()
}

fn validate(v: &[Point]) -> Result<()> {
    let n = v.len();
    let scale = {
        let mut s: f64 = 0.0;
        for p in v {
            s = s.max(p.x.abs()).max(p.y.abs());
        }
        s.max(1e-300)
    };
    for i in 0..n {
        let a = v[(i + n - 1) % n];
        let b = v[i];
        let c = v[(i + 1) % n];
        if b.dist(c) <= EPS_GEOM * scale {
            return Err(Error::Collinear);
        }
        // straight vertices are fine, spikes are not
        let o = orient(a, b, c) / ((b - a).norm() * (c - b).norm());
        if o.abs() <= EPS_GEOM && (b - a).dot(c - b) < 0.0 {
            return Err(Error::Collinear);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = (v[i], v[(i + 1) % n]);
            let (c, d) = (v[j], v[(j + 1) % n]);
            if segment_intersection(a, b, c, d).is_some() {
                return Err(Error::NotSimple);
            }
            // collinear overlap is not caught by the parametric test
            if point_segment_dist(c, a, b) <= EPS_GEOM * scale || point_segment_dist(a, c, d) <= EPS_GEOM * scale {
                return Err(Error::NotSimple);
            }
        }
    }
    if ring_area(v).abs() <= EPS_GEOM * scale * scale {
        return Err(Error::Collinear);
    }
    Ok(())
}

fn min_angle(a: Point, b: Point, c: Point) -> f64 {
    let ang = |p: Point, q: Point, r: Point| {
        let u = q - p;
        let w = r - p;
        math::atan2(u.cross(w).abs(), u.dot(w))
    };
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b))
}

/// Ear clipping, always clipping the ear with the largest minimum angle
/// (ties to the lowest index). Returns `m - 2` counterclockwise triangles.
pub fn triangulate(p: &Polygon) -> Vec<[usize; 3]> {
    triangulate_indices(p.vertices(), &(0..p.m()).collect::<Vec<_>>())
}

pub(crate) fn triangulate_indices(pts: &[Point], idx: &[usize]) -> Vec<[usize; 3]> {
    let mut ring: Vec<usize> = idx.to_vec();
    let mut out = Vec::with_capacity(ring.len().saturating_sub(2));
    while ring.len() > 3 {
        let n = ring.len();
        let mut best: Option<(f64, usize)> = None;
        for k in 0..n {
            let (ia, ib, ic) = (ring[(k + n - 1) % n], ring[k], ring[(k + 1) % n]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            if turn(a, b, c) <= 0 {
                continue;
            }
            let tri = [a, b, c];
            let blocked = ring.iter().any(|&o| {
                o != ia && o != ib && o != ic && {
                    let q = pts[o];
                    point_in_ring(&tri, q, EPS_GEOM * 1e-3) && q != a && q != b && q != c
                }
            });
            if blocked {
                continue;
            }
            let q = min_angle(a, b, c);
            if best.map_or(true, |(bq, _)| q > bq + 1e-12) {
                best = Some((q, k));
            }
        }
        let Some((_, k)) = best else {
            // numerically stuck; clip the most convex vertex
            let k = (0..n)
                .max_by(|&x, &y| {
                    let o = |k: usize| orient(pts[ring[(k + n - 1) % n]], pts[ring[k]], pts[ring[(k + 1) % n]]);
                    o(x).total_cmp(&o(y))
                })
                .unwrap();
            out.push([ring[(k + n - 1) % n], ring[k], ring[(k + 1) % n]]);
            ring.remove(k);
            continue;
        };
        out.push([ring[(k + n - 1) % n], ring[k], ring[(k + 1) % n]]);
        ring.remove(k);
    }
    if ring.len() == 3 {
        out.push([ring[0], ring[1], ring[2]]);
    }
    out
}

/// Neighbor of each triangle across edge `k` (from corner `k` to corner `k+1`).
pub fn triangle_adjacency(tris: &[[usize; 3]]) -> Vec<[Option<usize>; 3]> {
    let mut adj = vec![[None; 3]; tris.len()];
    for i in 0..tris.len() {
        for ei in 0..3 {
            let (a, b) = (tris[i][ei], tris[i][(ei + 1) % 3]);
            for j in 0..tris.len() {
                if j == i {
                    continue;
                }
                for ej in 0..3 {
                    if tris[j][ej] == b && tris[j][(ej + 1) % 3] == a {
                        adj[i][ei] = Some(j);
                    }
                }
            }
        }
    }
    adj
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

/// Coordinates in which a diagonal runs up the y axis from the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub origin: Point,
    pub up: Point,
    pub right: Point,
    pub len: f64,
}

impl Frame {
    pub fn new(bottom: Point, top: Point) -> Frame {
        let up = (top - bottom).unit();
        Frame { origin: bottom, up, right: Point::new(up.y, -up.x), len: bottom.dist(top) }
    }
    pub fn to_local(&self, p: Point) -> Point {
        let v = p - self.origin;
        Point::new(v.dot(self.right), v.dot(self.up))
    }
    pub fn to_world(&self, p: Point) -> Point {
        self.origin + self.right * p.x + self.up * p.y
    }
}

#[derive(Clone, Debug)]
pub struct DecompNode {
    /// Subpolygon as counterclockwise global vertex indices.
    pub vertices: Vec<usize>,
    /// Triangles (indices into the global triangulation) covering the node.
    pub triangles: Vec<usize>,
    /// `(bottom, top)` vertex indices; `None` for leaf triangles.
    pub diagonal: Option<(usize, usize)>,
    /// Child on the left of bottom->top, then the child on the right.
    pub children: Option<(usize, usize)>,
    pub depth: usize,
}

/// One side of a node's diagonal seen from the other: sites live in `near`,
/// queries in `far`. The diagonal runs `a` (bottom) to `b` (top) with `far`
/// on its right.
#[derive(Clone, Debug)]
pub struct Portal {
    pub node: usize,
    pub sites_side: Side,
    pub a: Point,
    pub b: Point,
    pub a_idx: usize,
    pub b_idx: usize,
    pub near: Vec<Point>,
    pub far: Vec<Point>,
    /// Outer boundary of `far` from `a` to `b`, diagonal excluded.
    pub far_chain: Vec<Point>,
    /// Polygon vertex indices of `far_chain`.
    pub far_chain_idx: Vec<usize>,
    pub frame: Frame,
}

impl Portal {
    pub fn point_at(&self, lambda: f64) -> Point {
        self.a.lerp(self.b, lambda)
    }
    /// Parameter of the projection of `p` onto the diagonal, clamped to `[0, 1]`.
    pub fn param_of(&self, p: Point) -> f64 {
        (self.frame.to_local(p).y / self.frame.len).clamp(0.0, 1.0)
    }
    pub fn in_far(&self, p: Point) -> bool {
        point_in_ring(&self.far, p, EPS_GEOM)
    }
    pub fn in_near(&self, p: Point) -> bool {
        point_in_ring(&self.near, p, EPS_GEOM)
    }
    /// Position along `far_chain` as `edge index + fraction`, if `p` is on it.
    pub fn chain_param(&self, p: Point) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for i in 0..self.far_chain.len().saturating_sub(1) {
            let (u, v) = (self.far_chain[i], self.far_chain[i + 1]);
            let d = point_segment_dist(p, u, v);
            if best.map_or(true, |(bd, _)| d < bd) {
                let l2 = (v - u).dot(v - u);
                let t = if l2 > 0.0 { ((p - u).dot(v - u) / l2).clamp(0.0, 1.0) } else { 0.0 };
                best = Some((d, i as f64 + t));
            }
        }
        best.filter(|&(d, _)| d <= 1e-7).map(|(_, t)| t)
    }
}

/// Balanced hierarchical decomposition by centroid diagonals.
#[derive(Clone, Debug)]
pub struct DecompositionTree {
    pub points: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub nodes: Vec<DecompNode>,
}

impl DecompositionTree {
    pub fn build(p: &Polygon) -> DecompositionTree {
        let triangles = triangulate(p);
        let adj = triangle_adjacency(&triangles);
        let mut t = DecompositionTree { points: p.vertices().to_vec(), triangles, nodes: Vec::new() };
        let all_tris: Vec<usize> = (0..t.triangles.len()).collect();
        t.split((0..p.m()).collect(), all_tris, &adj, 0);
        t
    }

    fn split(&mut self, verts: Vec<usize>, tris: Vec<usize>, adj: &[[Option<usize>; 3]], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(DecompNode { vertices: verts.clone(), triangles: tris.clone(), diagonal: None, children: None, depth });
        if tris.len() <= 1 {
            return id;
        }
        let (ia, ib) = self.centroid_diagonal(&tris, adj);
        let (pa, pb) = (self.points[ia], self.points[ib]);
        let (bottom, top) = if (pa.y, pa.x) < (pb.y, pb.x) { (ia, ib) } else { (ib, ia) };
        let i = verts.iter().position(|&v| v == ia).unwrap();
        let j = verts.iter().position(|&v| v == ib).unwrap();
        let (i, j) = (i.min(j), i.max(j));
        let chain_a: Vec<usize> = verts[i..=j].to_vec();
        let mut chain_b: Vec<usize> = verts[j..].to_vec();
        chain_b.extend_from_slice(&verts[..=i]);
        // chain_a lies left of verts[j] -> verts[i]
        let a_is_left = verts[j] == bottom;
        let (left_v, right_v) = if a_is_left { (chain_a, chain_b) } else { (chain_b, chain_a) };
        let in_left = |t: &[usize; 3]| t.iter().all(|v| left_v.contains(v)) && t.iter().any(|&v| v != ia && v != ib);
        let (mut lt, mut rt) = (Vec::new(), Vec::new());
        for &ti in &tris {
            if in_left(&self.triangles[ti]) {
                lt.push(ti);
            } else {
                rt.push(ti);
            }
        }
        let l = self.split(left_v, lt, adj, depth + 1);
        let r = self.split(right_v, rt, adj, depth + 1);
        self.nodes[id].diagonal = Some((bottom, top));
        self.nodes[id].children = Some((l, r));
        id
    }

    /// Dual-tree edge minimizing the larger side; ties to the lexicographically smallest diagonal.
    fn centroid_diagonal(&self, tris: &[usize], adj: &[[Option<usize>; 3]]) -> (usize, usize) {
        let set: Vec<bool> = {
            let mut s = vec![false; self.triangles.len()];
            for &t in tris {
                s[t] = true;
            }
            s
        };
        let total = tris.len();
        let mut best: Option<(usize, (usize, usize))> = None;
        for &t in tris {
            for e in 0..3 {
                let Some(u) = adj[t][e] else { continue };
                if !set[u] || u < t {
                    continue;
                }
                let size = self.component_size(t, u, &set, adj);
                let worst = size.max(total - size);
                let (a, b) = (self.triangles[t][e], self.triangles[t][(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                if best.map_or(true, |(bw, bk)| worst < bw || (worst == bw && key < bk)) {
                    best = Some((worst, key));
                }
            }
        }
        best.expect("a polygon with two or more triangles has a diagonal").1
    }

    fn component_size(&self, start: usize, blocked: usize, set: &[bool], adj: &[[Option<usize>; 3]]) -> usize {
        let mut stack = vec![(start, blocked)];
        let mut count = 0;
        while let Some((t, from)) = stack.pop() {
            count += 1;
            for n in adj[t].iter().flatten() {
                if *n != from && set[*n] {
                    stack.push((*n, t));
                }
            }
        }
        count
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.nodes[node].children.is_none()
    }

    pub fn ring(&self, node: usize) -> Vec<Point> {
        self.nodes[node].vertices.iter().map(|&i| self.points[i]).collect()
    }

    /// Which child holds `p`. Points on the diagonal go left.
    pub fn side_of_diagonal(&self, node: usize, p: Point) -> Side {
        let (l, _) = self.nodes[node].children.expect("leaf has no diagonal");
        if point_in_ring(&self.ring(l), p, EPS_GEOM) {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn child(&self, node: usize, side: Side) -> usize {
        let (l, r) = self.nodes[node].children.expect("leaf has no children");
        match side {
            Side::Left => l,
            Side::Right => r,
        }
    }

    /// Internal nodes from the root down to the leaf containing `p`, with the side taken at each.
    pub fn route(&self, p: Point) -> (Vec<(usize, Side)>, usize) {
        let mut path = Vec::new();
        let mut n = self.root();
        while !self.is_leaf(n) {
            let s = self.side_of_diagonal(n, p);
            path.push((n, s));
            n = self.child(n, s);
        }
        (path, n)
    }

    /// Sites on `sites_side` of `node`, queries on the other side.
    pub fn portal(&self, node: usize, sites_side: Side) -> Portal {
        let (bottom, top) = self.nodes[node].diagonal.expect("leaf has no diagonal");
        let (l, r) = self.nodes[node].children.unwrap();
        let (near_n, far_n, a_idx, b_idx) = match sites_side {
            Side::Left => (l, r, bottom, top),
            Side::Right => (r, l, top, bottom),
        };
        let fv = &self.nodes[far_n].vertices;
        // far is counterclockwise and crosses the diagonal as b -> a
        let ia = fv.iter().position(|&v| v == a_idx).unwrap();
        let far_chain_idx: Vec<usize> = (0..fv.len()).map(|k| fv[(ia + k) % fv.len()]).collect();
        let far_chain = far_chain_idx.iter().map(|&i| self.points[i]).collect();
        let (a, b) = (self.points[a_idx], self.points[b_idx]);
        Portal {
            node,
            sites_side,
            a,
            b,
            a_idx,
            b_idx,
            near: self.ring(near_n),
            far: self.ring(far_n),
            far_chain,
            far_chain_idx,
            frame: Frame::new(a, b),
        }
    }
}
