//! Higher-order diagrams of one side's sites inside the other side of a
//! diagonal: order-i cells built one order at a time, the subdivision by k-th
//! nearest site, and vertical decompositions into pseudo-trapezoids.
//!
//! Coordinates are taken in the diagonal's frame: x grows away from the
//! diagonal, so "vertical" segments run parallel to it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::bisector::{bisect, intersect_bisectors, BisectorPos, ImplicitBisector, SideRef};
use crate::geom_core::{sort_ranked, tie_less, Error, Frame, Point, Portal, Result};
use crate::voronoi_d::{voronoi_of, BisectorCache, VEdge, VoronoiForest};

/// The sites of one side together with their bisector cache.
pub struct SiteSet {
    pub portal: Arc<Portal>,
    /// Sorted by id.
    pub sites: Vec<SideRef>,
    pub cache: BisectorCache,
}

impl SiteSet {
    pub fn new(portal: &Arc<Portal>, sites: &[SideRef]) -> SiteSet {
        let mut v = sites.to_vec();
        v.sort_by_key(|s| s.id());
        SiteSet { portal: portal.clone(), sites: v, cache: BisectorCache::new() }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    /// The sites with the given ids, borrowing this set's bisector cache
    /// until handed back with [`SiteSet::restore`].
    pub fn subset(&mut self, ids: &[u64]) -> SiteSet {
        let sites: Vec<SideRef> = ids.iter().map(|&id| self.by_id(id).clone()).collect();
        let mut sub = SiteSet::new(&self.portal, &sites);
        sub.cache = core::mem::take(&mut self.cache);
        sub
    }

    pub fn restore(&mut self, sub: SiteSet) {
        self.cache = sub.cache;
    }

    pub fn ids(&self) -> Vec<u64> {
        self.sites.iter().map(|s| s.id()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn by_id(&self, id: u64) -> &SideRef {
        &self.sites[self.sites.binary_search_by_key(&id, |s| s.id()).unwrap()]
    }

    /// All sites by distance from `q`, ties by id.
    pub fn ranked(&self, q: Point) -> Vec<(f64, u64)> {
        let mut v: Vec<(f64, u64)> = self.sites.iter().map(|s| (s.dist(q), s.id())).collect();
        sort_ranked(&mut v);
        v
    }

    pub fn kth(&self, q: Point, k: usize) -> u64 {
        self.ranked(q)[k - 1].1
    }

    /// Ids of the `k` nearest sites, sorted by id.
    pub fn nearest_set(&self, q: Point, k: usize) -> Vec<u64> {
        let mut v: Vec<u64> = self.ranked(q)[..k].iter().map(|x| x.1).collect();
        v.sort_unstable();
        v
    }
}

pub fn set_hash(ids: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for id in ids {
        for b in id.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}

/// A piece of the bisector of `s` and `t` between two positions.
#[derive(Clone, Debug)]
pub struct KEdge {
    pub s: u64,
    pub t: u64,
    pub bisector: Arc<ImplicitBisector>,
    pub from: BisectorPos,
    pub to: BisectorPos,
    pub a: Point,
    pub b: Point,
}

impl KEdge {
    pub fn of_vedge(f: &VoronoiForest, e: &VEdge) -> KEdge {
        KEdge {
            s: f.sites[e.s].id(),
            t: f.sites[e.t].id(),
            bisector: e.bisector.clone(),
            from: e.start,
            to: e.end,
            a: e.bisector.point_at(e.start),
            b: e.bisector.point_at(e.end),
        }
    }

    pub fn polyline(&self, per_arc: usize) -> Vec<Point> {
        self.bisector.sample_between(self.from, self.to, per_arc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Carrier {
    /// An x-monotone chain of the far side's boundary.
    Boundary(usize),
    /// An edge of the subdivision.
    Edge(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wall {
    /// On the diagonal or a boundary edge parallel to it.
    Boundary,
    /// A vertical extension through the interior.
    Extension,
    /// Top and bottom meet.
    Point,
}

#[derive(Clone, Debug)]
pub struct PseudoTrapezoid {
    pub x0: f64,
    pub x1: f64,
    pub bottom: Carrier,
    pub top: Carrier,
    pub left: Wall,
    pub right: Wall,
    /// Distinct corners in world coordinates, at most four.
    pub corners: Vec<Point>,
    pub center: Point,
    /// Region label: a site id, or a set hash for order cells.
    pub label: u64,
}

const XTOL: f64 = 1e-10;
const YTOL: f64 = 1e-9;

enum Curve {
    Chain(Vec<Point>),
    Edge(usize),
}

/// Vertical decomposition of the far side cut by a set of x-monotone edges.
pub struct Decomposition {
    pub portal: Arc<Portal>,
    frame: Frame,
    curves: Vec<Curve>,
    pub edges: Vec<KEdge>,
    xs: Vec<f64>,
    pub traps: Vec<PseudoTrapezoid>,
    slab_traps: Vec<Vec<usize>>,
    /// Neighboring trapezoids; the carrier is `None` across a vertical wall.
    pub adjacency: Vec<(usize, usize, Option<Carrier>)>,
}

fn chain_y(pts: &[Point], x: f64) -> f64 {
    let i = pts.partition_point(|p| p.x < x);
    if i == 0 {
        return pts[0].y;
    }
    if i >= pts.len() {
        return pts[pts.len() - 1].y;
    }
    let (a, b) = (pts[i - 1], pts[i]);
    if b.x - a.x <= 0.0 {
        return b.y;
    }
    a.y + (x - a.x) / (b.x - a.x) * (b.y - a.y)
}

// boundary of the far side split into maximal x-monotone chains plus
// vertical edges (x, y0, y1), all in frame coordinates
fn boundary_pieces(portal: &Portal) -> (Vec<Vec<Point>>, Vec<(f64, f64, f64)>) {
    let f = portal.frame;
    let ring: Vec<Point> = portal.far.iter().map(|&p| f.to_local(p)).collect();
    let n = ring.len();
    let dir = |i: usize| {
        let dx = ring[(i + 1) % n].x - ring[i].x;
        if dx > XTOL {
            1
        } else if dx < -XTOL {
            -1
        } else {
            0
        }
    };
    let start = (0..n).find(|&i| dir(i) != dir((i + n - 1) % n)).unwrap_or(0);
    let mut chains = Vec::new();
    let mut verticals = Vec::new();
    let mut flush = |cur: &mut Vec<Point>, d: i32| {
        if cur.len() >= 2 {
            if d < 0 {
                cur.reverse();
            }
            chains.push(core::mem::take(cur));
        }
        cur.clear();
    };
    let mut cur: Vec<Point> = Vec::new();
    let mut cur_dir = 0;
    for k in 0..n {
        let i = (start + k) % n;
        let d = dir(i);
        if d != cur_dir {
            flush(&mut cur, cur_dir);
            cur_dir = d;
        }
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if d == 0 {
            verticals.push((a.x, a.y.min(b.y), a.y.max(b.y)));
            continue;
        }
        if cur.is_empty() {
            cur.push(a);
        }
        cur.push(b);
    }
    flush(&mut cur, cur_dir);
    (chains, verticals)
}

// 5-point Gauss-Legendre on [a, b]
fn gauss<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [0.0, -0.538_469_310_105_683, 0.538_469_310_105_683, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const W: [f64; 5] = [0.568_888_888_888_889, 0.478_628_670_499_366, 0.478_628_670_499_366, 0.236_926_885_056_189, 0.236_926_885_056_189];
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    X.iter().zip(W.iter()).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (gauss(f, a, m), gauss(f, m, b));
    if depth == 0 || (l + r - whole).abs() <= 1e-14 {
        return l + r;
    }
    adaptive(f, a, m, l, depth - 1) + adaptive(f, m, b, r, depth - 1)
}

impl Decomposition {
    /// Decomposes the far side of `portal` cut by `edges`; `label` names the
    /// region around each trapezoid's center.
    pub fn build<L: FnMut(Point) -> u64>(portal: &Arc<Portal>, edges: Vec<KEdge>, mut label: L) -> Decomposition {
        let frame = portal.frame;
        let (chains, verticals) = boundary_pieces(portal);
        let mut curves: Vec<Curve> = chains.into_iter().map(Curve::Chain).collect();
        curves.extend((0..edges.len()).map(Curve::Edge));
        let mut d = Decomposition {
            portal: portal.clone(),
            frame,
            curves,
            edges,
            xs: Vec::new(),
            traps: Vec::new(),
            slab_traps: Vec::new(),
            adjacency: Vec::new(),
        };
        // event abscissae
        let mut raw: Vec<f64> = Vec::new();
        let mut ends: Vec<(Point, Point)> = Vec::new();
        for c in 0..d.curves.len() {
            let (a, b) = d.curve_ends(c);
            raw.push(a.x);
            raw.push(b.x);
            ends.push((a, b));
        }
        raw.extend(verticals.iter().map(|v| v.0));
        raw.sort_by(|a, b| a.total_cmp(b));
        let mut xs: Vec<f64> = Vec::new();
        for x in raw {
            if xs.last().is_none_or(|&l| x - l > XTOL) {
                xs.push(x);
            }
        }
        let xi = |x: f64| {
            let i = xs.partition_point(|&v| v < x - XTOL);
            i.min(xs.len() - 1)
        };
        let spans: Vec<(usize, usize)> = ends.iter().map(|(a, b)| (xi(a.x), xi(b.x))).collect();
        let mut points_at: Vec<Vec<f64>> = vec![Vec::new(); xs.len()];
        for (a, b) in &ends {
            points_at[xi(a.x)].push(a.y);
            points_at[xi(b.x)].push(b.y);
        }
        let mut verts_at: Vec<Vec<(f64, f64)>> = vec![Vec::new(); xs.len()];
        for &(x, y0, y1) in &verticals {
            verts_at[xi(x)].push((y0, y1));
        }
        d.xs = xs;
        let nx = d.xs.len();
        d.slab_traps = vec![Vec::new(); nx.saturating_sub(1)];
        let boundary: Vec<bool> = d.curves.iter().map(|c| matches!(c, Curve::Chain(_))).collect();
        let mut open: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut across: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
        for i in 0..nx.saturating_sub(1) {
            let (xl, xr) = (d.xs[i], d.xs[i + 1]);
            let mid = 0.5 * (xl + xr);
            let mut active: Vec<(f64, usize)> =
                (0..d.curves.len()).filter(|&c| spans[c].0 <= i && i < spans[c].1).map(|c| (d.curve_y(c, mid), c)).collect();
            active.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut gaps: Vec<(usize, usize)> = Vec::new();
            let mut parity = 0;
            for j in 0..active.len().saturating_sub(1) {
                parity ^= usize::from(boundary[active[j].1]);
                if parity == 1 {
                    gaps.push((active[j].1, active[j + 1].1));
                }
            }
            let blocked_gap = |g: (usize, usize)| {
                let (ya, yb) = (d.curve_y(g.0, xl), d.curve_y(g.1, xl));
                points_at[i].iter().any(|&y| ya + YTOL < y && y < yb - YTOL)
                    || verts_at[i].iter().any(|&(y0, y1)| y0.max(ya) < y1.min(yb) - YTOL)
            };
            let blocked: Vec<bool> = gaps.iter().map(|&g| blocked_gap(g)).collect();
            let mut next: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            let mut created = Vec::new();
            for (gi, &g) in gaps.iter().enumerate() {
                let id = match open.get(&g) {
                    Some(&t) if !blocked[gi] => t,
                    _ => {
                        let left = d.wall(i, g, &verts_at[i]);
                        d.traps.push(PseudoTrapezoid {
                            x0: xl,
                            x1: xr,
                            bottom: d.carrier(g.0),
                            top: d.carrier(g.1),
                            left,
                            right: Wall::Boundary,
                            corners: Vec::new(),
                            center: Point::new(0.0, 0.0),
                            label: 0,
                        });
                        created.push((d.traps.len() - 1, g));
                        d.traps.len() - 1
                    }
                };
                next.insert(g, id);
                d.slab_traps[i].push(id);
            }
            let mut closed = Vec::new();
            for (&g, &t) in &open {
                if next.get(&g) != Some(&t) {
                    d.traps[t].x1 = xl;
                    d.traps[t].right = d.wall(i, g, &verts_at[i]);
                    closed.push((t, g));
                }
            }
            for &(t, g) in &closed {
                let (a0, a1) = (d.curve_y(g.0, xl), d.curve_y(g.1, xl));
                for &(u, h) in &created {
                    let (b0, b1) = (d.curve_y(h.0, xl), d.curve_y(h.1, xl));
                    if a0.max(b0) < a1.min(b1) - YTOL {
                        d.adjacency.push((t, u, None));
                    }
                }
            }
            for w in gaps.windows(2) {
                if w[0].1 == w[1].0 {
                    across.insert((next[&w[0]], next[&w[1]], w[0].1));
                }
            }
            for g in gaps.iter() {
                d.traps[next[g]].x1 = xr;
            }
            open = next;
        }
        for (g, t) in open {
            let last = nx - 1;
            d.traps[t].x1 = d.xs[last];
            d.traps[t].right = d.wall(last, g, &verts_at[last]);
        }
        for (a, b, c) in across {
            let carrier = d.carrier(c);
            d.adjacency.push((a, b, Some(carrier)));
        }
        for t in 0..d.traps.len() {
            let tr = &d.traps[t];
            let (x0, x1) = (tr.x0, tr.x1);
            let (bc, tc) = (d.curve_index(tr.bottom), d.curve_index(tr.top));
            let mut corners: Vec<Point> = Vec::new();
            for (x, c) in [(x0, bc), (x0, tc), (x1, tc), (x1, bc)] {
                let p = frame.to_world(Point::new(x, d.curve_y(c, x)));
                if corners.iter().all(|q| q.dist(p) > 1e-12) {
                    corners.push(p);
                }
            }
            let xc = 0.5 * (x0 + x1);
            let center = frame.to_world(Point::new(xc, 0.5 * (d.curve_y(bc, xc) + d.curve_y(tc, xc))));
            d.traps[t].corners = corners;
            d.traps[t].center = center;
        }
        for t in 0..d.traps.len() {
            d.traps[t].label = label(d.traps[t].center);
        }
        d
    }

    fn wall(&self, i: usize, g: (usize, usize), verts: &[(f64, f64)]) -> Wall {
        let x = self.xs[i];
        let (ya, yb) = (self.curve_y(g.0, x), self.curve_y(g.1, x));
        if yb - ya <= 1e-12 {
            Wall::Point
        } else if verts.iter().any(|&(y0, y1)| y0 <= ya + YTOL && yb - YTOL <= y1) {
            Wall::Boundary
        } else {
            Wall::Extension
        }
    }

    fn carrier(&self, c: usize) -> Carrier {
        match self.curves[c] {
            Curve::Chain(_) => Carrier::Boundary(c),
            Curve::Edge(e) => Carrier::Edge(e),
        }
    }

    fn curve_index(&self, c: Carrier) -> usize {
        match c {
            Carrier::Boundary(i) => i,
            Carrier::Edge(e) => self.curves.iter().position(|k| matches!(k, Curve::Edge(x) if *x == e)).unwrap(),
        }
    }

    fn curve_ends(&self, c: usize) -> (Point, Point) {
        match &self.curves[c] {
            Curve::Chain(p) => (p[0], p[p.len() - 1]),
            Curve::Edge(e) => {
                let e = &self.edges[*e];
                let (a, b) = (self.frame.to_local(e.a), self.frame.to_local(e.b));
                if a.x <= b.x {
                    (a, b)
                } else {
                    (b, a)
                }
            }
        }
    }

    fn curve_y(&self, c: usize, x: f64) -> f64 {
        match &self.curves[c] {
            Curve::Chain(p) => chain_y(p, x),
            Curve::Edge(e) => {
                let e = &self.edges[*e];
                let (a, b) = (self.frame.to_local(e.a), self.frame.to_local(e.b));
                let (lo, hi) = if a.x <= b.x { (a, b) } else { (b, a) };
                if x <= lo.x {
                    return lo.y;
                }
                if x >= hi.x {
                    return hi.y;
                }
                match e.bisector.point_at_x(x) {
                    Some(p) => self.frame.to_local(p).y,
                    None => lo.y + (x - lo.x) / (hi.x - lo.x) * (hi.y - lo.y),
                }
            }
        }
    }

    fn curve_breaks(&self, c: usize, x0: f64, x1: f64) -> Vec<f64> {
        let mut v: Vec<f64> = match &self.curves[c] {
            Curve::Chain(p) => p.iter().map(|q| q.x).collect(),
            Curve::Edge(e) => self.edges[*e].bisector.breakpoints_x().to_vec(),
        };
        v.retain(|&x| x > x0 && x < x1);
        v
    }

    /// Lower and upper boundary heights (frame y) of a trapezoid at frame x.
    pub fn span_at(&self, t: usize, x: f64) -> (f64, f64) {
        let tr = &self.traps[t];
        (self.curve_y(self.curve_index(tr.bottom), x), self.curve_y(self.curve_index(tr.top), x))
    }

    pub fn contains(&self, t: usize, q: Point) -> bool {
        let l = self.frame.to_local(q);
        let tr = &self.traps[t];
        if l.x < tr.x0 - XTOL || l.x > tr.x1 + XTOL {
            return false;
        }
        let (lo, hi) = self.span_at(t, l.x);
        lo - YTOL <= l.y && l.y <= hi + YTOL
    }

    /// Trapezoid containing `q`, if any.
    pub fn locate(&self, q: Point) -> Option<usize> {
        let l = self.frame.to_local(q);
        if self.xs.len() < 2 {
            return None;
        }
        let i = self.xs.partition_point(|&x| x <= l.x).clamp(1, self.xs.len() - 1) - 1;
        for s in [i, i.saturating_sub(1), (i + 1).min(self.slab_traps.len() - 1)] {
            for &t in &self.slab_traps[s] {
                if self.contains(t, q) {
                    return Some(t);
                }
            }
        }
        None
    }

    pub fn area(&self, t: usize) -> f64 {
        let tr = &self.traps[t];
        let (bc, tc) = (self.curve_index(tr.bottom), self.curve_index(tr.top));
        let mut cuts = vec![tr.x0, tr.x1];
        cuts.extend(self.curve_breaks(bc, tr.x0, tr.x1));
        cuts.extend(self.curve_breaks(tc, tr.x0, tr.x1));
        cuts.sort_by(|a, b| a.total_cmp(b));
        let f = |x: f64| self.curve_y(tc, x) - self.curve_y(bc, x);
        cuts.windows(2).map(|w| adaptive(&f, w[0], w[1], gauss(&f, w[0], w[1]), 24)).sum()
    }

    /// Closed outline in world coordinates, `samples` points per side.
    pub fn outline(&self, t: usize, samples: usize) -> Vec<Point> {
        let tr = &self.traps[t];
        let (bc, tc) = (self.curve_index(tr.bottom), self.curve_index(tr.top));
        let mut out = Vec::new();
        for k in 0..=samples {
            let x = tr.x0 + (tr.x1 - tr.x0) * k as f64 / samples as f64;
            out.push(self.frame.to_world(Point::new(x, self.curve_y(bc, x))));
        }
        for k in (0..=samples).rev() {
            let x = tr.x0 + (tr.x1 - tr.x0) * k as f64 / samples as f64;
            out.push(self.frame.to_world(Point::new(x, self.curve_y(tc, x))));
        }
        out
    }

    /// Neighbor lists per trapezoid.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.traps.len()];
        for &(a, b, _) in &self.adjacency {
            nb[a].push(b);
            nb[b].push(a);
        }
        nb
    }
}

/// One face of an order-i diagram, a union of trapezoids with the same nearest set.
#[derive(Clone, Debug)]
pub struct Cell {
    pub hash: u64,
    pub rep: Point,
    pub traps: Vec<usize>,
    pub neighbors: Vec<usize>,
}

pub struct OrderLevel {
    pub order: usize,
    pub decomposition: Decomposition,
    pub cells: Vec<Cell>,
}

impl OrderLevel {
    pub fn edges(&self) -> &[KEdge] {
        &self.decomposition.edges
    }
}

pub struct KOrderDiagram {
    pub levels: Vec<OrderLevel>,
    /// Neighboring trapezoids with different labels but no edge between them.
    pub inconsistencies: usize,
}

fn cells_of(dec: &Decomposition) -> (Vec<Cell>, usize) {
    let n = dec.traps.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut bad = 0;
    for &(a, b, c) in &dec.adjacency {
        let same = dec.traps[a].label == dec.traps[b].label;
        match c {
            None if !same => bad += 1,
            Some(_) if same => bad += 1,
            _ => {}
        }
        if same && c.is_none() {
            let (x, y) = (find(&mut parent, a), find(&mut parent, b));
            parent[x] = y;
        }
    }
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cells: Vec<Cell> = Vec::new();
    let mut cell_of = vec![0; n];
    for t in 0..n {
        let r = find(&mut parent, t);
        let c = *index.entry(r).or_insert_with(|| {
            cells.push(Cell { hash: dec.traps[t].label, rep: dec.traps[t].center, traps: Vec::new(), neighbors: Vec::new() });
            cells.len() - 1
        });
        cells[c].traps.push(t);
        cell_of[t] = c;
    }
    for &(a, b, c) in &dec.adjacency {
        let (ca, cb) = (cell_of[a], cell_of[b]);
        if c.is_some() && ca != cb {
            if !cells[ca].neighbors.contains(&cb) {
                cells[ca].neighbors.push(cb);
            }
            if !cells[cb].neighbors.contains(&ca) {
                cells[cb].neighbors.push(ca);
            }
        }
    }
    (cells, bad)
}

fn mid_pos(a: BisectorPos, b: BisectorPos) -> BisectorPos {
    if a.arc == b.arc {
        BisectorPos { arc: a.arc, frac: 0.5 * (a.frac + b.frac) }
    } else if a.frac < 1.0 {
        BisectorPos { arc: a.arc, frac: 0.5 * (a.frac + 1.0) }
    } else {
        BisectorPos { arc: b.arc, frac: 0.5 * b.frac }
    }
}

// pieces of `e` lying strictly inside the cell whose nearest set is `h`; the
// cell boundary can cross `e` only where the bisector of `e.s` and a member
// of `h` does
fn clip_to_cell(set: &mut SiteSet, h: &[u64], e: &KEdge) -> Result<Vec<KEdge>> {
    let portal = set.portal.clone();
    let s = set.by_id(e.s).clone();
    let hs: Vec<SideRef> = h.iter().map(|&id| set.by_id(id).clone()).collect();
    let bis = &e.bisector;
    let mut cuts = vec![e.from, e.to];
    for x in &hs {
        if let Some(b2) = set.cache.get(&portal, &s, x)? {
            if let Some((_, p, _)) = intersect_bisectors(bis, &b2) {
                if e.from.lt(&p) && p.lt(&e.to) {
                    cuts.push(p);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.cmp(b));
    let inside = |p: Point| {
        let worst_in = hs.iter().map(|x| x.dist(p)).fold(f64::NEG_INFINITY, f64::max);
        set.sites.iter().filter(|x| h.binary_search(&x.id()).is_err()).all(|x| x.dist(p) > worst_in)
    };
    let mut out: Vec<KEdge> = Vec::new();
    for w in cuts.windows(2) {
        let (p0, p1) = (bis.point_at(w[0]), bis.point_at(w[1]));
        if p0.dist(p1) <= 1e-12 || !inside(bis.point_at(mid_pos(w[0], w[1]))) {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.to.cmp(&w[0]) == core::cmp::Ordering::Equal => {
                last.to = w[1];
                last.b = p1;
            }
            _ => out.push(KEdge { s: e.s, t: e.t, bisector: bis.clone(), from: w[0], to: w[1], a: p0, b: p1 }),
        }
    }
    Ok(out)
}

// sites appearing on the lower envelope of distances along the diagonal
// between parameters lo and hi; any two distance functions cross at most once
fn diagonal_envelope(sites: &[&SideRef], lo: f64, hi: f64) -> Vec<u64> {
    if sites.is_empty() || hi <= lo {
        return Vec::new();
    }
    let below = |a: &SideRef, b: &SideRef, l: f64| tie_less(a.dist_on_diagonal(l), a.id(), b.dist_on_diagonal(l), b.id());
    let mut cur = sites[0];
    for s in &sites[1..] {
        if below(s, cur, lo) {
            cur = s;
        }
    }
    let mut out = vec![cur.id()];
    let mut at = lo;
    loop {
        let mut next: Option<(f64, &SideRef)> = None;
        for s in sites {
            if s.id() == cur.id() || !below(s, cur, hi) {
                continue;
            }
            let f = |l: f64| s.dist_on_diagonal(l) - cur.dist_on_diagonal(l);
            let x = if f(at) <= 0.0 { at } else { bisect(f, at, hi) };
            let better = match next {
                None => true,
                Some((y, t)) => x < y || (x == y && below(s, t, hi)),
            };
            if better {
                next = Some((x, s));
            }
        }
        match next {
            Some((x, s)) => {
                at = x;
                cur = s;
                out.push(s.id());
            }
            None => return out,
        }
    }
}

// edges of the next order: inside each cell, the diagram of the sites across
// its edges, clipped to the cell
fn lee_step(set: &mut SiteSet, level: &OrderLevel) -> Result<Vec<KEdge>> {
    let i = level.order;
    let sets: Vec<Vec<u64>> = level.cells.iter().map(|c| set.nearest_set(c.rep, i)).collect();
    let mut out = Vec::new();
    for (ci, c) in level.cells.iter().enumerate() {
        let h = &sets[ci];
        let mut q: BTreeSet<u64> = BTreeSet::new();
        for &nb in &c.neighbors {
            q.extend(sets[nb].iter().filter(|id| h.binary_search(id).is_err()));
        }
        // a site ranked next somewhere in the cell either swaps with a member
        // across a cell edge or is ranked next where the cell meets the diagonal
        let rest: Vec<&SideRef> = set.sites.iter().filter(|s| h.binary_search(&s.id()).is_err()).collect();
        let dec = &level.decomposition;
        let len = set.portal.frame.len;
        for &t in &c.traps {
            let tr = &dec.traps[t];
            if tr.x0.abs() <= XTOL {
                let (lo, hi) = dec.span_at(t, tr.x0);
                q.extend(diagonal_envelope(&rest, (lo / len).max(0.0), (hi / len).min(1.0)));
            }
        }
        if q.len() < 2 {
            continue;
        }
        let refs: Vec<SideRef> = q.iter().map(|&id| set.by_id(id).clone()).collect();
        let portal = set.portal.clone();
        let vd = voronoi_of(&portal, &refs, &mut set.cache)?;
        for e in &vd.edges {
            out.extend(clip_to_cell(set, h, &KEdge::of_vedge(&vd, e))?);
        }
    }
    Ok(out)
}

fn order_one_edges(set: &mut SiteSet) -> Result<Vec<KEdge>> {
    let portal = set.portal.clone();
    let sites = set.sites.clone();
    let vd = voronoi_of(&portal, &sites, &mut set.cache)?;
    Ok(vd.edges.iter().map(|e| KEdge::of_vedge(&vd, e)).collect())
}

fn order_level(set: &SiteSet, order: usize, edges: Vec<KEdge>) -> (OrderLevel, usize) {
    let dec = Decomposition::build(&set.portal, edges, |q| set_hash(&set.nearest_set(q, order)));
    let (cells, bad) = cells_of(&dec);
    (OrderLevel { order, decomposition: dec, cells }, bad)
}

/// Order-1 through order-k diagrams, each order built inside the cells of the previous one.
pub fn build_k_order(set: &mut SiteSet, k: usize) -> Result<KOrderDiagram> {
    if k == 0 || k >= set.len() {
        return Err(Error::KTooLarge);
    }
    let mut levels: Vec<OrderLevel> = Vec::new();
    let mut inconsistencies = 0;
    let mut edges = order_one_edges(set)?;
    for order in 1..=k {
        let (level, bad) = order_level(set, order, edges);
        inconsistencies += bad;
        if order < k {
            edges = lee_step(set, &level)?;
        } else {
            edges = Vec::new();
        }
        levels.push(level);
    }
    let _ = edges;
    Ok(KOrderDiagram { levels, inconsistencies })
}

/// Vertex of a subdivision: where edges end.
#[derive(Clone, Debug)]
pub struct KVertex {
    pub point: Point,
    pub degree: usize,
}

/// The far side partitioned by k-th nearest site.
pub struct KLevelSubdivision {
    pub k: usize,
    pub n: usize,
    pub vertices: Vec<KVertex>,
    pub decomposition: Decomposition,
    pub inconsistencies: usize,
    ranks: SiteRanker,
}

// brute-force ranking kept for labels and as the fallback of point location
struct SiteRanker {
    sites: Vec<SideRef>,
}

impl SiteRanker {
    fn kth(&self, q: Point, k: usize) -> u64 {
        let mut v: Vec<(f64, u64)> = self.sites.iter().map(|s| (s.dist(q), s.id())).collect();
        sort_ranked(&mut v);
        v[k - 1].1
    }
}

fn vertices_of(edges: &[KEdge]) -> Vec<KVertex> {
    let mut out: Vec<KVertex> = Vec::new();
    for e in edges {
        for p in [e.a, e.b] {
            match out.iter_mut().find(|v| v.point.dist(p) <= 1e-7) {
                Some(v) => v.degree += 1,
                None => out.push(KVertex { point: p, degree: 1 }),
            }
        }
    }
    out
}

/// Subdivision by k-th nearest site: the edges of the order-(k-1) and
/// order-k diagrams.
pub fn build_k_level(set: &mut SiteSet, k: usize) -> Result<KLevelSubdivision> {
    let n = set.len();
    if k == 0 || k > n {
        return Err(Error::KTooLarge);
    }
    let (edges, inconsistencies) = if n == 1 {
        (Vec::new(), 0)
    } else if k == 1 {
        (order_one_edges(set)?, 0)
    } else {
        let diag = build_k_order(set, k - 1)?;
        let last = diag.levels.last().unwrap();
        let mut edges = last.edges().to_vec();
        if k < n {
            edges.extend(lee_step(set, last)?);
        }
        (edges, diag.inconsistencies)
    };
    let vertices = vertices_of(&edges);
    let ranks = SiteRanker { sites: set.sites.clone() };
    let decomposition = Decomposition::build(&set.portal, edges, |q| ranks.kth(q, k));
    let (_, bad) = cells_of(&decomposition);
    Ok(KLevelSubdivision { k, n, vertices, decomposition, inconsistencies: inconsistencies + bad, ranks })
}

impl KLevelSubdivision {
    /// Degree-1 and degree-3 (or higher) vertices.
    pub fn complexity(&self) -> usize {
        self.vertices.iter().filter(|v| v.degree != 2).count()
    }

    pub fn edges(&self) -> &[KEdge] {
        &self.decomposition.edges
    }

    /// Site at rank k from `q`.
    pub fn kth_nearest(&self, q: Point) -> u64 {
        match self.decomposition.locate(q) {
            Some(t) => self.decomposition.traps[t].label,
            None => self.ranks.kth(q, self.k),
        }
    }
}

/// The trapezoids of a subdivision, labeled by region.
pub fn build_vertical_decomposition(l: &KLevelSubdivision) -> Vec<PseudoTrapezoid> {
    l.decomposition.traps.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bisector::{FieldSite, SideSite};
    use crate::fixtures::*;
    use crate::geom_core::{point_in_ring, ring_area, DecompositionTree, Polygon, Side, Site};
    use crate::oracle::Oracle;
    use crate::shortest_path::Geodesic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(p: &Polygon, side: Side, pts: &[Point]) -> SiteSet {
        let tree = DecompositionTree::build(p);
        let portal = Arc::new(tree.portal(0, side));
        let geo = Arc::new(Geodesic::new(p.clone()));
        let sites: Vec<SideRef> = pts
            .iter()
            .enumerate()
            .map(|(i, &q)| SideSite::new(FieldSite::new(&geo, Site::new(i as u64 + 1, q)).unwrap(), &portal))
            .collect();
        SiteSet::new(&portal, &sites)
    }

    fn random_set(m: usize, n: usize, seed: u64) -> (Polygon, SiteSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polygon(m, seed);
        let tree = DecompositionTree::build(&p);
        let side = if seed % 2 == 0 { Side::Left } else { Side::Right };
        let near = tree.portal(0, side).near;
        let pts: Vec<Point> = (0..n).map(|_| random_point_in_ring(&near, 1e-3, &mut rng)).collect();
        let set = setup(&p, side, &pts);
        (p, set)
    }

    fn grid(ring: &[Point], g: usize) -> Vec<Point> {
        let (mut lo, mut hi) = (ring[0], ring[0]);
        for v in ring {
            lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        let mut out = Vec::new();
        for i in 0..g {
            for j in 0..g {
                let q = Point::new(lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / g as f64, lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / g as f64);
                if point_in_ring(ring, q, 0.0) {
                    out.push(q);
                }
            }
        }
        out
    }

    #[test]
    fn mirror_pair_levels() {
        let mut set = setup(&rect6(), Side::Left, &[Point::new(0.2, 0.2), Point::new(0.2, 0.8)]);
        let l2 = build_k_level(&mut set, 2).unwrap();
        assert_eq!(l2.kth_nearest(Point::new(1.5, 0.9)), 1);
        assert_eq!(l2.kth_nearest(Point::new(1.5, 0.5 + 1e-6)), 1);
        let l1 = build_k_level(&mut set, 1).unwrap();
        assert_eq!(l1.kth_nearest(Point::new(1.5, 0.9)), 2);
        // one edge, two regions, each a single trapezoid
        let traps = build_vertical_decomposition(&l1);
        assert_eq!(traps.len(), 2);
        assert_eq!(l1.complexity(), 2);
        assert!(traps.iter().all(|t| t.corners.len() == 4));
        let total: f64 = (0..traps.len()).map(|t| l1.decomposition.area(t)).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(build_k_level(&mut set, 3).err(), Some(Error::KTooLarge));
        assert_eq!(build_k_order(&mut set, 2).err(), Some(Error::KTooLarge));
    }

    #[test]
    fn single_site_is_one_trapezoid_per_region() {
        let mut set = setup(&lshape6(), Side::Left, &[Point::new(1.5, 0.3)]);
        let l = build_k_level(&mut set, 1).unwrap();
        assert!(l.edges().is_empty());
        let far = &set.portal.far;
        let total: f64 = (0..l.decomposition.traps.len()).map(|t| l.decomposition.area(t)).sum();
        assert!((total - ring_area(far)).abs() < 1e-9);
    }

    #[test]
    fn three_sites_second_order_labels() {
        let pts = [Point::new(0.9, 0.1), Point::new(0.9, 0.9), Point::new(0.5, 0.5)];
        let mut set = setup(&rect6(), Side::Left, &pts);
        let d = build_k_order(&mut set, 2).unwrap();
        assert_eq!(d.inconsistencies, 0);
        let o = Oracle::new(rect6());
        let sites: Vec<Site> = set.sites.iter().map(|s| s.site.site).collect();
        let lvl = &d.levels[1];
        for q in grid(&set.portal.far, 32) {
            let t = lvl.decomposition.locate(q).unwrap();
            let mut want: Vec<u64> = o.sorted(q, &sites).unwrap()[..2].iter().map(|x| x.0.id).collect();
            want.sort_unstable();
            assert_eq!(lvl.decomposition.traps[t].label, set_hash(&want));
        }
    }

    fn check_levels(seed: u64, n: usize) {
        check_levels_in(16, seed, n)
    }

    fn check_levels_in(m: usize, seed: u64, n: usize) {
        let (p, mut set) = random_set(m, n, seed);
        let o = Oracle::new(p);
        let sites: Vec<Site> = set.sites.iter().map(|s| s.site.site).collect();
        let levels: Vec<KLevelSubdivision> = (1..=n).map(|k| build_k_level(&mut set, k).unwrap()).collect();
        let far = set.portal.far.clone();
        for l in &levels {
            assert_eq!(l.inconsistencies, 0, "seed {seed} k {}", l.k);
            let total: f64 = (0..l.decomposition.traps.len()).map(|t| l.decomposition.area(t)).sum();
            assert!((total - ring_area(&far)).abs() < 1e-6, "area {total} vs {}", ring_area(&far));
            assert!(l.decomposition.traps.iter().all(|t| t.corners.len() <= 4));
        }
        for q in grid(&far, 16) {
            let sorted = o.sorted(q, &sites).unwrap();
            let mut seen = Vec::new();
            for l in &levels {
                assert!(l.decomposition.locate(q).is_some());
                let got = l.kth_nearest(q);
                assert_eq!(got, sorted[l.k - 1].0.id, "seed {seed} k {} q {q:?}", l.k);
                seen.push(got);
            }
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), n);
        }
    }

    #[test]
    fn random_levels_match_oracle() {
        for seed in 0..3 {
            check_levels(seed, 6);
        }
    }

    #[test]
    fn random_levels_across_polygon_sizes() {
        for seed in 10..22 {
            check_levels_in(12 + (seed as usize % 5) * 8, seed, 6 + seed as usize % 7);
        }
    }

    #[test]
    fn corners_on_edges_are_equidistant() {
        let (_, mut set) = random_set(24, 10, 7);
        for k in [2, 5] {
            let l = build_k_level(&mut set, k).unwrap();
            let dec = &l.decomposition;
            for (i, tr) in dec.traps.iter().enumerate() {
                for (c, upper) in [(tr.bottom, false), (tr.top, true)] {
                    if let Carrier::Edge(e) = c {
                        let e = &dec.edges[e];
                        let (s, t) = (set.by_id(e.s), set.by_id(e.t));
                        for x in [tr.x0, tr.x1] {
                            let (lo, hi) = dec.span_at(i, x);
                            let p = set.portal.frame.to_world(Point::new(x, if upper { hi } else { lo }));
                            assert!((s.dist(p) - t.dist(p)).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn first_level_matches_voronoi() {
        let (_, mut set) = random_set(20, 9, 4);
        let l = build_k_level(&mut set, 1).unwrap();
        let sites = set.sites.clone();
        let portal = set.portal.clone();
        let vd = voronoi_of(&portal, &sites, &mut set.cache).unwrap();
        for q in grid(&portal.far, 32) {
            assert_eq!(l.kth_nearest(q), vd.sites[vd.locate(q).0].id());
        }
    }

    #[test]
    fn complexity_follows_k_times_n_minus_k() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for n in [8usize, 16, 32] {
            let k = n / 4;
            let mut total = 0.0;
            for seed in 0..3 {
                let (_, mut set) = random_set(24, n, 100 + seed);
                let l = build_k_level(&mut set, k).unwrap();
                assert!(l.complexity() <= 8 * k * (n - k) + 16);
                total += l.complexity() as f64;
            }
            xs.push(libm::log((k * (n - k)) as f64));
            ys.push(libm::log(total / 3.0));
        }
        let slope = crate::math::slope(&xs, &ys);
        assert!((slope - 1.0).abs() <= 0.5, "slope {slope}");
    }

    #[test]
    fn order_cells_differ_by_one_site() {
        let (_, mut set) = random_set(16, 8, 21);
        let d = build_k_order(&mut set, 3).unwrap();
        assert_eq!(d.inconsistencies, 0);
        for lvl in &d.levels {
            let sets: Vec<Vec<u64>> = lvl.cells.iter().map(|c| set.nearest_set(c.rep, lvl.order)).collect();
            for (i, c) in lvl.cells.iter().enumerate() {
                assert_eq!(set_hash(&sets[i]), c.hash);
                for &nb in &c.neighbors {
                    let common = sets[i].iter().filter(|x| sets[nb].contains(x)).count();
                    assert_eq!(common, lvl.order - 1);
                }
            }
        }
        // order one equals the Voronoi labeling
        let lvl = &d.levels[0];
        for q in grid(&set.portal.far, 32) {
            let t = lvl.decomposition.locate(q).unwrap();
            assert_eq!(lvl.decomposition.traps[t].label, set_hash(&[set.kth(q, 1)]));
        }
    }

    #[test]
    fn random_points_in_exactly_one_trapezoid() {
        let (_, mut set) = random_set(16, 8, 33);
        let l = build_k_level(&mut set, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let q = random_point_in_ring(&set.portal.far, 1e-6, &mut rng);
            let hits = (0..l.decomposition.traps.len()).filter(|&t| l.decomposition.contains(t, q)).count();
            assert_eq!(hits, 1);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn level_labels_are_a_permutation(seed in 1000u64..100_000, n in 2usize..7) {
            check_levels_in(14, seed, n);
        }
    }
}
