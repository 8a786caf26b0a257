//! Geodesic paths inside the polygon: two-point queries by the sleeve funnel
//! algorithm, per-source shortest path maps, path handles and diagonal funnels.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::geom_core::{orient, point_in_ring, triangle_adjacency, triangulate, Error, Point, Polygon, Portal, Result};

/// Triangulated polygon with the dual tree, shared by all path computations.
#[derive(Clone, Debug)]
pub struct Geodesic {
    poly: Polygon,
    tris: Vec<[usize; 3]>,
    adj: Vec<[Option<usize>; 3]>,
    reflex: Vec<bool>,
    // triangle holding polygon edge (i, i+1)
    edge_tri: Vec<usize>,
    // a triangle on each diagonal of the triangulation, keyed (low, high)
    chord_tri: BTreeMap<(usize, usize), usize>,
    grid: TriGrid,
}

const GRID: usize = 16;

// triangles bucketed by bounding box for point location
#[derive(Clone, Debug)]
struct TriGrid {
    lo: Point,
    cell: Point,
    buckets: Vec<Vec<usize>>,
}

impl TriGrid {
    fn new(poly: &Polygon, tris: &[[usize; 3]]) -> TriGrid {
        let vs = poly.vertices();
        let (mut lo, mut hi) = (vs[0], vs[0]);
        for v in vs {
            lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        let cell = Point::new(((hi.x - lo.x) / GRID as f64).max(1e-12), ((hi.y - lo.y) / GRID as f64).max(1e-12));
        let mut g = TriGrid { lo, cell, buckets: vec![Vec::new(); GRID * GRID] };
        for (t, tri) in tris.iter().enumerate() {
            let ps = tri.map(|i| poly.vertex(i));
            let (mut a, mut b) = (ps[0], ps[0]);
            for p in ps {
                a = Point::new(a.x.min(p.x), a.y.min(p.y));
                b = Point::new(b.x.max(p.x), b.y.max(p.y));
            }
            let (i0, j0) = g.cell_of(a - Point::new(1e-9, 1e-9));
            let (i1, j1) = g.cell_of(b + Point::new(1e-9, 1e-9));
            for i in i0..=i1 {
                for j in j0..=j1 {
                    g.buckets[j * GRID + i].push(t);
                }
            }
        }
        g
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let f = |v: f64, lo: f64, c: f64| (((v - lo) / c).max(0.0) as usize).min(GRID - 1);
        (f(p.x, self.lo.x, self.cell.x), f(p.y, self.lo.y, self.cell.y))
    }

    fn candidates(&self, p: Point) -> &[usize] {
        let (i, j) = self.cell_of(p);
        &self.buckets[j * GRID + i]
    }
}

impl Geodesic {
    pub fn new(poly: Polygon) -> Geodesic {
        let tris = triangulate(&poly);
        let adj = triangle_adjacency(&tris);
        let reflex = (0..poly.m()).map(|i| poly.is_reflex(i)).collect();
        let m = poly.m();
        let mut edge_tri = vec![0; m];
        let mut chord_tri = BTreeMap::new();
        for (t, tri) in tris.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if b == (a + 1) % m {
                    edge_tri[a] = t;
                } else if a != (b + 1) % m {
                    chord_tri.insert((a.min(b), a.max(b)), t);
                }
            }
        }
        let grid = TriGrid::new(&poly, &tris);
        Geodesic { poly, tris, adj, reflex, edge_tri, chord_tri, grid }
    }

    pub fn polygon(&self) -> &Polygon {
        &self.poly
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.tris
    }
    pub fn is_reflex(&self, v: usize) -> bool {
        self.reflex[v]
    }
    fn p(&self, v: usize) -> Point {
        self.poly.vertex(v)
    }
    pub fn vertex(&self, v: usize) -> Point {
        self.poly.vertex(v)
    }
    /// Triangle containing polygon edge `(i, i+1)`.
    pub fn edge_triangle(&self, i: usize) -> usize {
        self.edge_tri[i]
    }

    /// A triangle with both `u` and `v` as corners, for a polygon edge or a
    /// triangulation diagonal; otherwise the triangle holding the midpoint.
    pub fn chord_triangle(&self, u: usize, v: usize) -> Result<usize> {
        let m = self.poly.m();
        if v == (u + 1) % m {
            return Ok(self.edge_tri[u]);
        }
        if u == (v + 1) % m {
            return Ok(self.edge_tri[v]);
        }
        match self.chord_tri.get(&(u.min(v), u.max(v))) {
            Some(&t) => Ok(t),
            None => self.locate(self.p(u).lerp(self.p(v), 0.5)),
        }
    }

    fn in_triangle(&self, t: usize, q: Point, tol: f64) -> bool {
        let [a, b, c] = self.tris[t];
        let (a, b, c) = (self.p(a), self.p(b), self.p(c));
        let e = |u: Point, v: Point| orient(u, v, q) / u.dist(v).max(1e-300) >= -tol;
        e(a, b) && e(b, c) && e(c, a)
    }

    /// Triangle containing `q`.
    pub fn locate(&self, q: Point) -> Result<usize> {
        for &t in self.grid.candidates(q) {
            if self.in_triangle(t, q, 1e-12) {
                return Ok(t);
            }
        }
        for t in 0..self.tris.len() {
            if self.in_triangle(t, q, 1e-12) {
                return Ok(t);
            }
        }
        let mut best = (f64::INFINITY, 0);
        for t in 0..self.tris.len() {
            let [a, b, c] = self.tris[t];
            let tri = [self.p(a), self.p(b), self.p(c)];
            let mut d = f64::INFINITY;
            for k in 0..3 {
                d = d.min(crate::geom_core::point_segment_dist(q, tri[k], tri[(k + 1) % 3]));
            }
            if point_in_ring(&tri, q, 0.0) {
                d = 0.0;
            }
            if d < best.0 {
                best = (d, t);
            }
        }
        if best.0 <= 1e-7 {
            Ok(best.1)
        } else {
            Err(Error::PointOutsidePolygon)
        }
    }

    /// Triangles from `from` to `to` in the dual tree, with the exit edge of each.
    fn sleeve(&self, from: usize, to: usize) -> Vec<(usize, usize)> {
        let n = self.tris.len();
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut q = VecDeque::new();
        q.push_back(from);
        seen[from] = true;
        while let Some(t) = q.pop_front() {
            if t == to {
                break;
            }
            for e in 0..3 {
                if let Some(u) = self.adj[t][e] {
                    if !seen[u] {
                        seen[u] = true;
                        prev[u] = Some((t, e));
                        q.push_back(u);
                    }
                }
            }
        }
        let mut out = Vec::new();
        let mut cur = to;
        while let Some((t, e)) = prev[cur] {
            out.push((t, e));
            cur = t;
        }
        out.reverse();
        out
    }

    /// The geodesic from `p` to `q`.
    pub fn shortest_path(&self, p: Point, q: Point) -> Result<PathHandle> {
        let tp = self.locate(p)?;
        let tq = self.locate(q)?;
        let mut portals = vec![(p, p)];
        for (t, e) in self.sleeve(tp, tq) {
            let a = self.p(self.tris[t][e]);
            let b = self.p(self.tris[t][(e + 1) % 3]);
            portals.push((b, a));
        }
        portals.push((q, q));
        Ok(PathHandle::new(string_pull(&portals)))
    }

    pub fn distance(&self, p: Point, q: Point) -> Result<f64> {
        Ok(self.shortest_path(p, q)?.length())
    }

    /// Extension of the path edge `u -> v` beyond polygon vertex `v`, up to the first boundary hit.
    pub fn extension_segment(&self, u: Point, v: usize) -> Result<ExtensionSegment> {
        if v >= self.poly.m() {
            return Err(Error::IndexOutOfRange);
        }
        let vp = self.p(v);
        let dir = vp - u;
        if dir.norm() <= 1e-15 || !self.poly.points_inside(v, dir) {
            return Err(Error::NotReflex);
        }
        let (w, _) = self.poly.ray_exit(vp, dir, Some(v)).ok_or(Error::NotReflex)?;
        Ok(ExtensionSegment { origin: v, from: u, start: vp, end: w })
    }

    pub fn field(self: &Arc<Self>, source: Point) -> Result<SourceField> {
        SourceField::new(self.clone(), source)
    }
}

/// Simple funnel string pulling over portals given as `(left, right)`;
/// the first and last portals are the degenerate endpoints.
fn string_pull(portals: &[(Point, Point)]) -> Vec<Point> {
    let start = portals[0].0;
    let end = portals[portals.len() - 1].0;
    let mut path = vec![start];
    let (mut apex, mut left, mut right) = (start, start, start);
    let (mut li, mut ri) = (0usize, 0usize);
    let mut ai;
    let mut i = 1;
    while i < portals.len() {
        let (l, r) = portals[i];
        if orient(apex, right, r) >= 0.0 {
            if apex == right || apex == left || orient(apex, left, r) < 0.0 {
                right = r;
                ri = i;
            } else {
                path.push(left);
                apex = left;
                ai = li;
                right = apex;
                ri = ai;
                i = ai + 1;
                continue;
            }
        }
        if orient(apex, left, l) <= 0.0 {
            if apex == left || apex == right || orient(apex, right, l) > 0.0 {
                left = l;
                li = i;
            } else {
                path.push(right);
                apex = right;
                ai = ri;
                left = apex;
                li = ai;
                i = ai + 1;
                continue;
            }
        }
        i += 1;
    }
    if *path.last().unwrap() != end || path.len() == 1 {
        path.push(end);
    }
    path
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtensionSegment {
    /// Polygon vertex the segment starts at.
    pub origin: usize,
    /// The other endpoint of the generating edge.
    pub from: Point,
    pub start: Point,
    pub end: Point,
}

#[derive(Clone, Copy, Debug)]
struct Summary {
    size: usize,
    convex: bool,
    // sign of the turns inside the range, 0 if none yet
    dir: i8,
}

/// A geodesic as a balanced tree over its vertices with subtree sizes and
/// convexity flags, supporting indexed access and convex prefix/suffix queries.
#[derive(Clone, Debug)]
pub struct PathHandle {
    pts: Vec<Point>,
    tree: Vec<Summary>,
    len: f64,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

impl PathHandle {
    pub fn new(pts: Vec<Point>) -> PathHandle {
        let len = pts.windows(2).map(|w| w[0].dist(w[1])).sum();
        let n = pts.len().max(1);
        let mut h = PathHandle { pts, tree: vec![Summary { size: 0, convex: true, dir: 0 }; 4 * n], len };
        if !h.pts.is_empty() {
            h.build(1, 0, h.pts.len());
        }
        h
    }

    fn turn_at(&self, i: usize) -> i8 {
        if i == 0 || i + 1 >= self.pts.len() {
            return 0;
        }
        let (a, b, c) = (self.pts[i - 1], self.pts[i], self.pts[i + 1]);
        let o = orient(a, b, c);
        if o.abs() <= 1e-12 * a.dist(b) * b.dist(c) {
            0
        } else {
            sign(o)
        }
    }

    // range [lo, hi) of vertices; turns counted at vertices strictly inside the range
    fn merge(&self, l: Summary, r: Summary, mid: usize) -> Summary {
        let mut dir = l.dir;
        let mut convex = l.convex && r.convex;
        // junction turns at mid-1 and mid are interior once the halves are joined
        let mut push = |d: i8| {
            if d != 0 {
                if dir == 0 {
                    dir = d;
                } else if dir != d {
                    convex = false;
                }
            }
        };
        push(r.dir);
        if l.size >= 2 && r.size > 0 {
            push(self.turn_at(mid - 1));
        }
        if r.size >= 2 && l.size > 0 {
            push(self.turn_at(mid));
        }
        Summary { size: l.size + r.size, convex, dir }
    }

    fn range_turns(&self, lo: usize, hi: usize) -> Summary {
        // turns at vertices lo+1 .. hi-2
        let mut s = Summary { size: hi - lo, convex: true, dir: 0 };
        for i in lo + 1..hi.saturating_sub(1) {
            let d = self.turn_at(i);
            if d != 0 {
                if s.dir == 0 {
                    s.dir = d;
                } else if s.dir != d {
                    s.convex = false;
                }
            }
        }
        s
    }

    fn build(&mut self, node: usize, lo: usize, hi: usize) {
        if hi - lo <= 2 {
            self.tree[node] = self.range_turns(lo, hi);
            return;
        }
        let mid = (lo + hi) / 2;
        self.build(2 * node, lo, mid);
        self.build(2 * node + 1, mid, hi);
        let (l, r) = (self.tree[2 * node], self.tree[2 * node + 1]);
        self.tree[node] = self.merge(l, r, mid);
    }

    pub fn vertex_count(&self) -> usize {
        self.pts.len()
    }
    pub fn length(&self) -> f64 {
        self.len
    }
    pub fn vertices(&self) -> &[Point] {
        &self.pts
    }
    pub fn first(&self) -> Point {
        self.pts[0]
    }
    pub fn last(&self) -> Point {
        self.pts[self.pts.len() - 1]
    }

    /// The `i`-th vertex, found by descending on subtree sizes.
    pub fn path_vertex(&self, i: usize) -> Result<Point> {
        if i >= self.pts.len() {
            return Err(Error::IndexOutOfRange);
        }
        let (mut node, mut lo, mut hi, mut i) = (1, 0, self.pts.len(), i);
        while hi - lo > 2 {
            let mid = (lo + hi) / 2;
            let ls = self.tree[2 * node].size;
            if i < ls {
                node *= 2;
                hi = mid;
            } else {
                i -= ls;
                node = 2 * node + 1;
                lo = mid;
            }
        }
        Ok(self.pts[lo + i])
    }

    /// Largest `j` such that vertices `0..=j` form a convex chain.
    pub fn longest_convex_prefix(&self) -> usize {
        if self.pts.len() <= 2 {
            return self.pts.len().saturating_sub(1);
        }
        let mut acc: Option<(Summary, usize)> = None;
        let end = self.prefix_descend(1, 0, self.pts.len(), &mut acc);
        end - 1
    }

    // returns the exclusive end of the longest convex prefix within this subtree
    fn prefix_descend(&self, node: usize, lo: usize, hi: usize, acc: &mut Option<(Summary, usize)>) -> usize {
        let whole = self.tree[node];
        let joined = match acc {
            None => whole,
            Some((a, _)) => self.merge(*a, whole, lo),
        };
        if joined.convex {
            *acc = Some((joined, hi));
            return hi;
        }
        if hi - lo <= 2 {
            // try single vertices
            for k in lo..hi {
                let one = self.range_turns(k, k + 1);
                let j = match acc {
                    None => one,
                    Some((a, _)) => self.merge(*a, one, k),
                };
                if !j.convex {
                    return k;
                }
                *acc = Some((j, k + 1));
            }
            return hi;
        }
        let mid = (lo + hi) / 2;
        let e = self.prefix_descend(2 * node, lo, mid, acc);
        if e < mid {
            return e;
        }
        self.prefix_descend(2 * node + 1, mid, hi, acc)
    }

    /// Smallest `i` such that vertices `i..` form a convex chain.
    pub fn longest_convex_suffix(&self) -> usize {
        let rev = PathHandle::new(self.pts.iter().rev().copied().collect());
        self.pts.len() - 1 - rev.longest_convex_prefix()
    }

    pub fn is_convex(&self) -> bool {
        self.pts.is_empty() || self.tree[1].convex
    }

    pub fn reversed(&self) -> PathHandle {
        PathHandle::new(self.pts.iter().rev().copied().collect())
    }

    /// Concatenates two paths sharing an endpoint.
    pub fn concat(&self, other: &PathHandle) -> PathHandle {
        let mut v = self.pts.clone();
        let skip = usize::from(!v.is_empty() && !other.pts.is_empty() && v[v.len() - 1] == other.pts[0]);
        v.extend_from_slice(&other.pts[skip..]);
        PathHandle::new(v)
    }

    /// Subpath between vertex indices `i..=j`.
    pub fn subpath(&self, i: usize, j: usize) -> PathHandle {
        PathHandle::new(self.pts[i..=j].to_vec())
    }
}

/// One vertex of a propagated funnel: a point, its geodesic distance from the
/// source, and the polygon vertex it is (`None` for the source itself).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub point: Point,
    pub dist: f64,
    pub vertex: Option<usize>,
}

#[derive(Clone, Debug)]
struct TriFunnel {
    // from the entry edge's first endpoint, through the apex, to its second
    pts: Vec<Anchor>,
    apex: usize,
}

impl TriFunnel {
    fn anchor_index(&self, q: Point) -> usize {
        let f = &self.pts;
        let k = self.apex;
        let past = |i: usize| orient(f[i].point, f[i + 1].point, q) < 0.0;
        // a-side: smallest i < k with past(i)
        let (mut lo, mut hi) = (0, k);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if past(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        if lo < k {
            return lo;
        }
        // b-side: largest i >= k with past(i)
        let (mut lo, mut hi) = (k, f.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if past(mid) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Shortest path map of a single source: funnels propagated over the dual tree.
#[derive(Clone, Debug)]
pub struct SourceField {
    geo: Arc<Geodesic>,
    source: Point,
    funnels: Vec<Option<TriFunnel>>,
    vdist: Vec<f64>,
    vpred: Vec<Option<usize>>,
}

impl SourceField {
    pub fn new(geo: Arc<Geodesic>, source: Point) -> Result<SourceField> {
        let tri = geo.locate(source)?;
        let nt = geo.tris.len();
        let m = geo.poly.m();
        let mut f = SourceField {
            source,
            funnels: vec![None; nt],
            vdist: vec![f64::INFINITY; m],
            vpred: vec![None; m],
            geo: geo.clone(),
        };
        let src = Anchor { point: source, dist: 0.0, vertex: None };
        let vert = |v: usize, d: f64| Anchor { point: geo.p(v), dist: d, vertex: Some(v) };
        for &v in &geo.tris[tri] {
            f.vdist[v] = source.dist(geo.p(v));
        }
        let mut stack = Vec::new();
        for e in 0..3 {
            if let Some(n) = geo.adj[tri][e] {
                let (a, b) = (geo.tris[tri][(e + 1) % 3], geo.tris[tri][e]);
                stack.push((n, tri, vec![vert(a, f.vdist[a]), src, vert(b, f.vdist[b])], 1usize));
            }
        }
        while let Some((t, from, pts, apex)) = stack.pop() {
            let ein = (0..3).find(|&e| geo.adj[t][e] == Some(from)).unwrap();
            let fun = TriFunnel { pts, apex };
            let c = geo.tris[t][(ein + 2) % 3];
            let cp = geo.p(c);
            let j = fun.anchor_index(cp);
            let aj = fun.pts[j];
            let dc = aj.dist + aj.point.dist(cp);
            if dc < f.vdist[c] {
                f.vdist[c] = dc;
                f.vpred[c] = aj.vertex;
            }
            let ca = vert(c, dc);
            let k = fun.apex;
            let l = fun.pts.len();
            // across edge b -> c: [c, f_j .. f_L]
            if let Some(n) = geo.adj[t][(ein + 1) % 3] {
                let mut p = vec![ca];
                p.extend_from_slice(&fun.pts[j..l]);
                let apex = if j <= k { k - j + 1 } else { 1 };
                stack.push((n, t, p, apex));
            }
            // across edge c -> a: [f_0 .. f_j, c]
            if let Some(n) = geo.adj[t][(ein + 2) % 3] {
                let mut p = fun.pts[..=j].to_vec();
                p.push(ca);
                let apex = if j >= k { k } else { j };
                stack.push((n, t, p, apex));
            }
            f.funnels[t] = Some(fun);
        }
        Ok(f)
    }

    pub fn source(&self) -> Point {
        self.source
    }
    pub fn geodesic(&self) -> &Arc<Geodesic> {
        &self.geo
    }

    /// Geodesic distance to polygon vertex `v`.
    pub fn vertex_dist(&self, v: usize) -> f64 {
        self.vdist[v]
    }

    /// Previous vertex on the path to `v` (`None` means the source).
    pub fn vertex_pred(&self, v: usize) -> Option<usize> {
        self.vpred[v]
    }

    pub fn anchor_of_vertex(&self, v: usize) -> Anchor {
        match self.vpred[v] {
            None => Anchor { point: self.source, dist: 0.0, vertex: None },
            Some(u) => Anchor { point: self.geo.p(u), dist: self.vdist[u], vertex: Some(u) },
        }
    }

    /// Last vertex of the geodesic to `q` before `q`.
    pub fn anchor(&self, q: Point) -> Result<Anchor> {
        let t = self.geo.locate(q)?;
        Ok(self.anchor_in(t, q))
    }

    pub fn anchor_in(&self, t: usize, q: Point) -> Anchor {
        match &self.funnels[t] {
            None => Anchor { point: self.source, dist: 0.0, vertex: None },
            Some(f) => f.pts[f.anchor_index(q)],
        }
    }

    pub fn dist(&self, q: Point) -> Result<f64> {
        let a = self.anchor(q)?;
        Ok(a.dist + a.point.dist(q))
    }

    pub fn dist_in(&self, t: usize, q: Point) -> f64 {
        let a = self.anchor_in(t, q);
        a.dist + a.point.dist(q)
    }

    /// Polygon vertices on the path from the source to vertex `v`, in order, `v` included.
    pub fn vertex_chain(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut cur = v;
        while let Some(u) = self.vpred[cur] {
            out.push(u);
            cur = u;
        }
        out.reverse();
        out
    }

    /// The geodesic from the source to `q` as polygon vertex indices (source and `q` excluded).
    pub fn path_vertices(&self, q: Point) -> Result<Vec<usize>> {
        let a = self.anchor(q)?;
        Ok(match a.vertex {
            None => Vec::new(),
            Some(v) => self.vertex_chain(v),
        })
    }

    pub fn path(&self, q: Point) -> Result<PathHandle> {
        let mut pts = vec![self.source];
        for v in self.path_vertices(q)? {
            pts.push(self.geo.p(v));
        }
        if *pts.last().unwrap() != q {
            pts.push(q);
        }
        Ok(PathHandle::new(pts))
    }

    /// Extension segment of vertex `v` in this source's shortest path tree.
    pub fn extension(&self, v: usize) -> Result<ExtensionSegment> {
        let a = self.anchor_of_vertex(v);
        self.geo.extension_segment(a.point, v)
    }
}

/// Shortest paths from one source to every point of a diagonal: apex, two
/// concave chains, and the sorted breakpoints where the anchor changes.
#[derive(Clone, Debug)]
pub struct Funnel {
    pub apex: Anchor,
    /// From just after the apex to the bottom endpoint `a` (inclusive).
    pub chain_a: Vec<Anchor>,
    /// From just after the apex to the top endpoint `b` (inclusive).
    pub chain_b: Vec<Anchor>,
    /// Breakpoint parameters along the diagonal, increasing.
    pub breaks: Vec<f64>,
    /// `anchors[i]` serves parameters between `breaks[i-1]` and `breaks[i]`.
    pub anchors: Vec<Anchor>,
    a: Point,
    b: Point,
}

impl Funnel {
    pub fn breakpoints(&self) -> Vec<Point> {
        self.breaks.iter().map(|&l| self.a.lerp(self.b, l)).collect()
    }

    fn interval(&self, lambda: f64) -> usize {
        self.breaks.partition_point(|&b| b < lambda)
    }

    pub fn anchor_at(&self, lambda: f64) -> Anchor {
        self.anchors[self.interval(lambda)]
    }

    /// Geodesic distance from the source to the point at `lambda` on the diagonal.
    pub fn dist_at(&self, lambda: f64) -> f64 {
        let p = self.a.lerp(self.b, lambda);
        let an = self.anchor_at(lambda);
        an.dist + an.point.dist(p)
    }
}

/// The funnel of `field`'s source onto the diagonal of `portal`.
pub fn funnel_to_diagonal(field: &SourceField, portal: &Portal) -> Funnel {
    let chain = |v: usize| -> Vec<Anchor> {
        let mut c: Vec<Anchor> = vec![Anchor { point: field.source, dist: 0.0, vertex: None }];
        for u in field.vertex_chain(v) {
            c.push(Anchor { point: field.geo.p(u), dist: field.vdist[u], vertex: Some(u) });
        }
        c
    };
    let pa = chain(portal.a_idx);
    let pb = chain(portal.b_idx);
    let mut common = 0;
    while common + 1 < pa.len() && common + 1 < pb.len() && pa[common + 1].vertex == pb[common + 1].vertex {
        common += 1;
    }
    let apex = pa[common];
    let chain_a: Vec<Anchor> = pa[common + 1..].to_vec();
    let chain_b: Vec<Anchor> = pb[common + 1..].to_vec();
    let (a, b) = (portal.a, portal.b);
    let ab = b - a;
    let hit = |from: Point, at: Point| -> f64 {
        let dir = at - from;
        let den = ab.cross(dir);
        if den.abs() < 1e-300 {
            return (at - a).dot(ab) / ab.dot(ab);
        }
        ((at - a).cross(dir) / den).clamp(0.0, 1.0)
    };
    let mut breaks = Vec::new();
    let mut anchors = Vec::new();
    // bottom part: chain_a reversed, non-final vertices
    let mut prev = apex.point;
    let mut a_side = Vec::new();
    for i in 0..chain_a.len().saturating_sub(1) {
        a_side.push((hit(prev, chain_a[i].point), chain_a[i]));
        prev = chain_a[i].point;
    }
    for (l, an) in a_side.iter().rev() {
        anchors.push(*an);
        breaks.push(*l);
    }
    anchors.push(apex);
    let mut prev = apex.point;
    for i in 0..chain_b.len().saturating_sub(1) {
        breaks.push(hit(prev, chain_b[i].point));
        anchors.push(chain_b[i]);
        prev = chain_b[i].point;
    }
    // guard against rounding in nearly parallel extensions
    for i in 1..breaks.len() {
        if breaks[i] < breaks[i - 1] {
            breaks[i] = breaks[i - 1];
        }
    }
    Funnel { apex, chain_a, chain_b, breaks, anchors, a, b }
}
