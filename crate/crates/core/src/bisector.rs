//! Implicit bisectors of two same-side sites restricted to the far side of a
//! diagonal: entry point `w` on the diagonal, exit point `z` on the outer
//! chain, the pseudo-triangle of `z, s, t`, and the extension-segment suffixes
//! whose crossings are the bisector's vertices.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::geom_core::{segment_intersection, tie_less, Error, Point, Portal, Result, Site, EPS_ROOT};
use crate::math;
use crate::shortest_path::{funnel_to_diagonal, Anchor, ExtensionSegment, Funnel, Geodesic, PathHandle, SourceField};

/// A site together with its shortest path map.
#[derive(Debug)]
pub struct FieldSite {
    pub site: Site,
    pub field: SourceField,
}

pub type SiteRef = Arc<FieldSite>;

impl FieldSite {
    pub fn new(geo: &Arc<Geodesic>, site: Site) -> Result<SiteRef> {
        Ok(Arc::new(FieldSite { site, field: SourceField::new(geo.clone(), site.point)? }))
    }
    pub fn id(&self) -> u64 {
        self.site.id
    }
    pub fn point(&self) -> Point {
        self.site.point
    }
    /// Geodesic distance; infinite outside the polygon.
    pub fn dist(&self, q: Point) -> f64 {
        self.field.dist(q).unwrap_or(f64::INFINITY)
    }
}

/// A site as seen through one diagonal: its funnel onto it.
#[derive(Debug)]
pub struct SideSite {
    pub site: SiteRef,
    pub funnel: Funnel,
}

pub type SideRef = Arc<SideSite>;

impl SideSite {
    pub fn new(site: SiteRef, portal: &Portal) -> SideRef {
        let funnel = funnel_to_diagonal(&site.field, portal);
        Arc::new(SideSite { site, funnel })
    }
    pub fn id(&self) -> u64 {
        self.site.site.id
    }
    pub fn point(&self) -> Point {
        self.site.site.point
    }
    pub fn dist(&self, q: Point) -> f64 {
        self.site.dist(q)
    }
    /// Distance to the point at parameter `lambda` on the diagonal.
    pub fn dist_on_diagonal(&self, lambda: f64) -> f64 {
        self.funnel.dist_at(lambda)
    }
}

/// Bracketed bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let neg_lo = f(lo) < 0.0;
    for _ in 0..128 {
        if hi - lo <= EPS_ROOT * 1e-3 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Point where the bisector of `s` and `t` crosses the diagonal, as
/// `(parameter, point)`; `None` if one site is closer along all of it.
pub fn find_w(portal: &Portal, s: &SideSite, t: &SideSite) -> Result<Option<(f64, Point)>> {
    let g = |l: f64| s.dist_on_diagonal(l) - t.dist_on_diagonal(l);
    let (g0, g1) = (g(0.0), g(1.0));
    if g0.abs() <= EPS_ROOT || g1.abs() <= EPS_ROOT {
        return Err(Error::DegenerateSites);
    }
    if (g0 < 0.0) == (g1 < 0.0) {
        return Ok(None);
    }
    let mut bps: Vec<f64> = Vec::with_capacity(s.funnel.breaks.len() + t.funnel.breaks.len() + 2);
    bps.push(0.0);
    bps.extend(s.funnel.breaks.iter().chain(t.funnel.breaks.iter()).copied());
    bps.push(1.0);
    bps.sort_by(|a, b| a.total_cmp(b));
    let neg0 = g0 < 0.0;
    let (mut lo, mut hi) = (0, bps.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if (g(bps[mid]) < 0.0) == neg0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l = bisect(g, bps[lo], bps[hi]);
    Ok(Some((l, portal.point_at(l))))
}

/// Point where the bisector leaves through the outer chain of the far side,
/// as `(chain parameter, point)`. Only meaningful when `find_w` succeeded.
pub fn find_z(portal: &Portal, s: &SideSite, t: &SideSite) -> Result<(f64, Point)> {
    let ids = &portal.far_chain_idx;
    let k = ids.len();
    let (fs, ft) = (&s.site.field, &t.site.field);
    let gv = |i: usize| fs.vertex_dist(ids[i]) - ft.vertex_dist(ids[i]);
    let (g0, gk) = (gv(0), gv(k - 1));
    if (g0 < 0.0) == (gk < 0.0) {
        return Err(Error::DegenerateSites);
    }
    let neg0 = g0 < 0.0;
    let (mut lo, mut hi) = (0, k - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let gm = gv(mid);
        if gm.abs() <= EPS_ROOT {
            return Err(Error::DegenerateSites);
        }
        if (gm < 0.0) == neg0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let geo = fs.geodesic();
    let tri = geo.chord_triangle(ids[lo], ids[hi])?;
    let (a, b) = (portal.far_chain[lo], portal.far_chain[hi]);
    let g = |u: f64| {
        let p = a.lerp(b, u);
        fs.dist_in(tri, p) - ft.dist_in(tri, p)
    };
    let u = bisect(g, 0.0, 1.0);
    Ok((lo as f64 + u, a.lerp(b, u)))
}

/// The pseudo-triangle of `z, s, t`: corners and the three chains between them.
#[derive(Clone, Debug)]
pub struct PseudoTriangle {
    pub s_hat: Point,
    pub t_hat: Point,
    pub z: Point,
    /// Polygon vertex at each corner; `None` when the corner is the site itself.
    pub s_hat_vertex: Option<usize>,
    pub t_hat_vertex: Option<usize>,
    pub chain_st: Vec<Point>,
    pub chain_sz: Vec<Point>,
    pub chain_tz: Vec<Point>,
    /// Whether the convex-chain construction found the same corners as path divergence.
    pub via_convex_chains: bool,
}

// last common vertex of two vertex chains from the same source
fn divergence(a: &[usize], b: &[usize]) -> Option<usize> {
    let mut last = None;
    for (x, y) in a.iter().zip(b) {
        if x != y {
            break;
        }
        last = Some(*x);
    }
    last
}

fn ray_hits_polyline(origin: Point, dir: Point, line: &[Point]) -> Option<(usize, Point)> {
    let far = origin + dir.unit() * 8.0;
    let mut best: Option<(f64, usize, Point)> = None;
    for i in 0..line.len().saturating_sub(1) {
        if let Some((t, _)) = segment_intersection(origin, far, line[i], line[i + 1]) {
            if best.is_none_or(|(bt, _, _)| t < bt) {
                best = Some((t, i, origin.lerp(far, t)));
            }
        }
    }
    best.map(|(_, i, p)| (i, p))
}

fn corner_by_convex_chains(geo: &Geodesic, z: Point, ps: &PathHandle, pt: &PathHandle) -> Option<(Point, Point)> {
    let sp = ps.path_vertex(ps.longest_convex_suffix()).ok()?;
    let tp = pt.path_vertex(pt.longest_convex_suffix()).ok()?;
    if ps.vertex_count() < 2 {
        return None;
    }
    let z1 = ps.path_vertex(ps.vertex_count() - 2).ok()?;
    let mid = geo.shortest_path(sp, tp).ok()?;
    let line = mid.vertices();
    let (seg, v) = ray_hits_polyline(z1, z1 - z, line)?;
    let mut first: Vec<Point> = line[..=seg].to_vec();
    if *first.last().unwrap() != v {
        first.push(v);
    }
    let mut second = vec![v];
    second.extend(line[seg + 1..].iter().copied().filter(|&p| p != v));
    let h1 = PathHandle::new(first);
    let h2 = PathHandle::new(second);
    let s2 = h1.path_vertex(h1.longest_convex_suffix()).ok()?;
    let t2 = h2.path_vertex(h2.longest_convex_prefix()).ok()?;
    Some((s2, t2))
}

pub fn build_pseudo_triangle(z: Point, s: &FieldSite, t: &FieldSite) -> Result<PseudoTriangle> {
    let geo = s.field.geodesic().clone();
    let ps = s.field.path(z)?;
    let pt = t.field.path(z)?;
    let st = s.field.path_vertices(t.point())?;
    let ts: Vec<usize> = st.iter().rev().copied().collect();
    let sz = s.field.path_vertices(z)?;
    let tz = t.field.path_vertices(z)?;
    let s_div = divergence(&st, &sz);
    let t_div = divergence(&ts, &tz);
    let vp = |v: Option<usize>, site: Point| v.map_or(site, |i| geo.vertex(i));
    let (s_hat, t_hat) = (vp(s_div, s.point()), vp(t_div, t.point()));
    let via_convex_chains = match corner_by_convex_chains(&geo, z, &ps, &pt) {
        Some((a, b)) => a.dist(s_hat) <= 1e-12 && b.dist(t_hat) <= 1e-12,
        None => false,
    };
    let pos = |chain: &[usize], v: Option<usize>| v.map_or(0, |x| chain.iter().position(|&y| y == x).unwrap() + 1);
    // chains as points, corners included
    let pts_of = |start: Point, chain: &[usize], from: usize, end: Point, upto: usize| {
        let mut out = vec![start];
        out.extend(chain[from..upto].iter().map(|&i| geo.vertex(i)));
        if *out.last().unwrap() != end {
            out.push(end);
        }
        out
    };
    let i_s = pos(&st, s_div);
    let i_t = st.len() + 1 - pos(&ts, t_div);
    let chain_st = pts_of(s_hat, &st, i_s, t_hat, i_t.saturating_sub(1).max(i_s));
    let j_s = pos(&sz, s_div);
    let chain_sz = pts_of(s_hat, &sz, j_s, z, sz.len());
    let j_t = pos(&tz, t_div);
    let chain_tz = pts_of(t_hat, &tz, j_t, z, tz.len());
    Ok(PseudoTriangle {
        s_hat,
        t_hat,
        z,
        s_hat_vertex: s_div,
        t_hat_vertex: t_div,
        chain_st,
        chain_sz,
        chain_tz,
        via_convex_chains,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Owner {
    S,
    T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    // vertex of the path between the two sites: crossing retreats to its parent
    Between,
    // vertex of the owner's path to z: crossing advances to it
    ToZ,
}

/// A clipped extension segment of the owner's shortest path tree.
#[derive(Clone, Copy, Debug)]
pub struct FSegment {
    pub vertex: usize,
    part: Part,
    pub ext: Option<ExtensionSegment>,
    /// The part of `ext` inside the far side, as parameters along it.
    pub far_range: Option<(f64, f64)>,
}

/// Parameters of the part of segment `ab` that lies in the far side of `portal`.
pub fn far_portion(portal: &Portal, a: Point, b: Point) -> Option<(f64, f64)> {
    let mid_in = |t0: f64, t1: f64| portal.in_far(a.lerp(b, 0.5 * (t0 + t1))) && !on_diagonal(portal, a.lerp(b, 0.5 * (t0 + t1)));
    match segment_intersection(a, b, portal.a, portal.b) {
        Some((tau, _)) if tau > 1e-12 && tau < 1.0 - 1e-12 => {
            if mid_in(0.0, tau) {
                Some((0.0, tau))
            } else if mid_in(tau, 1.0) {
                Some((tau, 1.0))
            } else {
                None
            }
        }
        _ => mid_in(0.0, 1.0).then_some((0.0, 1.0)),
    }
}

fn on_diagonal(portal: &Portal, p: Point) -> bool {
    crate::geom_core::point_segment_dist(p, portal.a, portal.b) <= 1e-12
}

/// A vertex of the bisector: a crossing with a clipped extension segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BisectorVertex {
    pub index: usize,
    pub point: Point,
    pub owner: Owner,
    /// Index into the owner's suffix list.
    pub segment: usize,
    /// Polygon vertex the carrying extension segment starts at.
    pub origin: usize,
}

/// Position along a bisector: arc index and fraction of that arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BisectorPos {
    pub arc: usize,
    pub frac: f64,
}

impl BisectorPos {
    pub const START: BisectorPos = BisectorPos { arc: 0, frac: 0.0 };
    pub fn cmp(&self, o: &BisectorPos) -> Ordering {
        self.arc.cmp(&o.arc).then(self.frac.total_cmp(&o.frac))
    }
    pub fn lt(&self, o: &BisectorPos) -> bool {
        self.cmp(o) == Ordering::Less
    }
}

/// Piece of the bisector with fixed anchors: a straight or hyperbolic arc.
#[derive(Clone, Copy, Debug)]
pub struct Piece {
    pub anchor_s: Anchor,
    pub anchor_t: Anchor,
    pub from: Point,
    pub to: Point,
    phi0: f64,
    dphi: f64,
}

fn wrap(a: f64) -> f64 {
    let tau = 2.0 * core::f64::consts::PI;
    let mut a = a % tau;
    if a > core::f64::consts::PI {
        a -= tau;
    }
    if a <= -core::f64::consts::PI {
        a += tau;
    }
    a
}

impl Piece {
    fn new(anchor_s: Anchor, anchor_t: Anchor, from: Point, to: Point) -> Piece {
        let ang = |p: Point| {
            let v = p - anchor_s.point;
            math::atan2(v.y, v.x)
        };
        let phi0 = ang(from);
        let dphi = wrap(ang(to) - phi0);
        Piece { anchor_s, anchor_t, from, to, phi0, dphi }
    }

    /// Point at fraction `f` of the arc.
    pub fn point(&self, f: f64) -> Point {
        if f <= 0.0 {
            return self.from;
        }
        if f >= 1.0 {
            return self.to;
        }
        let phi = self.phi0 + f * self.dphi;
        let u = Point::new(math::cos(phi), math::sin(phi));
        let (ps, pt) = (self.anchor_s.point, self.anchor_t.point);
        let delta = self.anchor_t.dist - self.anchor_s.dist;
        let c = ps - pt;
        let den = 2.0 * (u.dot(c) + delta);
        let rho = (delta * delta - c.dot(c)) / den;
        if !rho.is_finite() || rho < 0.0 {
            return self.from.lerp(self.to, f);
        }
        ps + u * rho
    }

    pub fn frac_of(&self, p: Point) -> f64 {
        if self.dphi == 0.0 {
            return 0.0;
        }
        let v = p - self.anchor_s.point;
        (wrap(math::atan2(v.y, v.x) - self.phi0) / self.dphi).clamp(0.0, 1.0)
    }

    pub fn dist(&self, p: Point) -> f64 {
        self.anchor_s.dist + self.anchor_s.point.dist(p)
    }
}

/// `b_st` restricted to the far side of a diagonal, oriented from `w` to `z`.
#[derive(Clone, Debug)]
pub struct ImplicitBisector {
    pub portal: Arc<Portal>,
    pub s: SideRef,
    pub t: SideRef,
    pub w: Point,
    pub w_param: f64,
    pub z: Point,
    pub z_param: f64,
    pub pseudo: PseudoTriangle,
    pub f_s: Vec<FSegment>,
    pub f_t: Vec<FSegment>,
    pub suffix_start_s: usize,
    pub suffix_start_t: usize,
    vertices: Vec<BisectorVertex>,
    pieces: Vec<Piece>,
    xs: Vec<f64>,
}

struct Sides<'a> {
    owner: &'a SideSite,
    other: &'a SideSite,
}

impl Sides<'_> {
    fn segment(&self, vertex: usize, part: Part, portal: &Portal) -> FSegment {
        let ext = self.owner.site.field.extension(vertex).ok();
        let far_range = ext.and_then(|e| far_portion(portal, e.start, e.end));
        FSegment { vertex, part, ext, far_range }
    }

    fn g(&self, seg: &FSegment, tau: f64) -> f64 {
        let e = seg.ext.unwrap();
        let p = e.start.lerp(e.end, tau);
        self.owner.site.field.vertex_dist(seg.vertex) + e.start.dist(p) - self.other.dist(p)
    }

    fn crosses(&self, seg: &FSegment) -> bool {
        match seg.far_range {
            None => false,
            Some((t0, t1)) => self.g(seg, t0) < 0.0 && self.g(seg, t1) > 0.0,
        }
    }

    fn crossing(&self, seg: &FSegment) -> Point {
        let (t0, t1) = seg.far_range.unwrap();
        let e = seg.ext.unwrap();
        e.start.lerp(e.end, bisect(|u| self.g(seg, u), t0, t1))
    }

    fn closer_to_owner(&self, seg: &FSegment) -> bool {
        seg.part == Part::ToZ
            || self.owner.site.field.vertex_dist(seg.vertex) < self.other.site.field.vertex_dist(seg.vertex)
    }

    /// First index of the suffix whose segments cross inside the far side.
    fn suffix_start(&self, f: &[FSegment]) -> usize {
        let a1 = f.partition_point(|seg| !self.closer_to_owner(seg));
        a1 + f[a1..].partition_point(|seg| !self.crosses(seg))
    }
}

/// Builds the implicit representation of `b_st` beyond the portal's diagonal;
/// `None` when the bisector does not reach the far side.
pub fn build_implicit_bisector(portal: &Arc<Portal>, s: &SideRef, t: &SideRef) -> Result<Option<ImplicitBisector>> {
    let Some((w_param, w)) = find_w(portal, s, t)? else {
        return Ok(None);
    };
    let (z_param, z) = find_z(portal, s, t)?;
    let pseudo = build_pseudo_triangle(z, &s.site, &t.site)?;
    let fs_field = &s.site.field;
    let ft_field = &t.site.field;
    let st = fs_field.path_vertices(t.point())?;
    let pos_in = |v: Option<usize>| v.map(|x| st.iter().position(|&y| y == x).unwrap());
    // indices into st; None stands for the site end itself
    let i_s = pos_in(pseudo.s_hat_vertex);
    let i_t = pos_in(pseudo.t_hat_vertex);
    let lo = i_s.map_or(0, |i| i + 1);
    let hi = i_t.map_or(st.len(), |i| i + 1);
    let ss = Sides { owner: s, other: t };
    let ts = Sides { owner: t, other: s };
    let mut f_s = Vec::new();
    for k in (lo..hi.max(lo)).rev() {
        f_s.push(ss.segment(st[k], Part::Between, portal));
    }
    let sz = fs_field.path_vertices(z)?;
    let from = pseudo.s_hat_vertex.map_or(0, |v| sz.iter().position(|&y| y == v).unwrap() + 1);
    for &v in &sz[from..] {
        f_s.push(ss.segment(v, Part::ToZ, portal));
    }
    let mut f_t = Vec::new();
    let lo_t = i_s.unwrap_or(0);
    let hi_t = i_t.unwrap_or(st.len());
    for &v in &st[lo_t..hi_t.max(lo_t)] {
        if Some(v) == pseudo.t_hat_vertex {
            continue;
        }
        f_t.push(ts.segment(v, Part::Between, portal));
    }
    let tz = ft_field.path_vertices(z)?;
    let from = pseudo.t_hat_vertex.map_or(0, |v| tz.iter().position(|&y| y == v).unwrap() + 1);
    for &v in &tz[from..] {
        f_t.push(ts.segment(v, Part::ToZ, portal));
    }
    // clipping to the far side leaves nothing of these
    f_s.retain(|seg| seg.far_range.is_some());
    f_t.retain(|seg| seg.far_range.is_some());
    let suffix_start_s = ss.suffix_start(&f_s);
    let suffix_start_t = ts.suffix_start(&f_t);

    let frame = portal.frame;
    let mut vertices: Vec<BisectorVertex> = Vec::new();
    for (i, seg) in f_s[suffix_start_s..].iter().enumerate() {
        let p = ss.crossing(seg);
        vertices.push(BisectorVertex { index: 0, point: p, owner: Owner::S, segment: i, origin: seg.vertex });
    }
    for (i, seg) in f_t[suffix_start_t..].iter().enumerate() {
        let p = ts.crossing(seg);
        vertices.push(BisectorVertex { index: 0, point: p, owner: Owner::T, segment: i, origin: seg.vertex });
    }
    // each owner's crossings are already in order; merge by distance from the diagonal
    vertices.sort_by(|a, b| {
        frame.to_local(a.point).x.total_cmp(&frame.to_local(b.point).x).then(match (a.owner, b.owner) {
            (Owner::S, Owner::S) | (Owner::T, Owner::T) => a.segment.cmp(&b.segment),
            (Owner::S, Owner::T) => Ordering::Less,
            (Owner::T, Owner::S) => Ordering::Greater,
        })
    });
    for (i, v) in vertices.iter_mut().enumerate() {
        v.index = i;
    }

    let mut sa = s.funnel.anchor_at(w_param);
    let mut ta = t.funnel.anchor_at(w_param);
    let mut pieces = Vec::with_capacity(vertices.len() + 1);
    let mut prev = w;
    for v in &vertices {
        pieces.push(Piece::new(sa, ta, prev, v.point));
        let (field, list, start, anchor) = match v.owner {
            Owner::S => (fs_field, &f_s, suffix_start_s, &mut sa),
            Owner::T => (ft_field, &f_t, suffix_start_t, &mut ta),
        };
        let seg = &list[start + v.segment];
        *anchor = match seg.part {
            Part::Between => field.anchor_of_vertex(seg.vertex),
            Part::ToZ => Anchor { point: field.geodesic().vertex(seg.vertex), dist: field.vertex_dist(seg.vertex), vertex: Some(seg.vertex) },
        };
        prev = v.point;
    }
    pieces.push(Piece::new(sa, ta, prev, z));
    let mut xs = vec![0.0];
    xs.extend(vertices.iter().map(|v| frame.to_local(v.point).x));
    xs.push(frame.to_local(z).x);

    Ok(Some(ImplicitBisector {
        portal: portal.clone(),
        s: s.clone(),
        t: t.clone(),
        w,
        w_param,
        z,
        z_param,
        pseudo,
        f_s,
        f_t,
        suffix_start_s,
        suffix_start_t,
        vertices,
        pieces,
        xs,
    }))
}

impl ImplicitBisector {
    pub fn vertex_count(&self) -> usize {
        (self.f_s.len() - self.suffix_start_s) + (self.f_t.len() - self.suffix_start_t)
    }

    pub fn ids(&self) -> (u64, u64) {
        (self.s.id(), self.t.id())
    }

    /// Which site is closer at the bottom endpoint of the diagonal.
    pub fn closer_at_bottom(&self) -> Owner {
        if self.s.dist_on_diagonal(0.0) < self.t.dist_on_diagonal(0.0) {
            Owner::S
        } else {
            Owner::T
        }
    }

    pub fn g_s(&self) -> &[FSegment] {
        &self.f_s[self.suffix_start_s..]
    }
    pub fn g_t(&self) -> &[FSegment] {
        &self.f_t[self.suffix_start_t..]
    }

    /// Vertices materialized in order from `w` to `z`.
    pub fn vertices(&self) -> &[BisectorVertex] {
        &self.vertices
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    fn sides(&self, owner: Owner) -> Sides<'_> {
        match owner {
            Owner::S => Sides { owner: &self.s, other: &self.t },
            Owner::T => Sides { owner: &self.t, other: &self.s },
        }
    }

    /// How many of the other owner's suffix segments cut segment `r` at a
    /// point closer to `r`'s owner.
    fn count_before(&self, owner: Owner, r: &FSegment) -> usize {
        let others = match owner {
            Owner::S => self.g_t(),
            Owner::T => self.g_s(),
        };
        let me = self.sides(owner);
        let er = r.ext.unwrap();
        let mut j = 0;
        for f in others {
            let ef = f.ext.unwrap();
            if let Some((u, _)) = segment_intersection(er.start, er.end, ef.start, ef.end) {
                if me.g(r, u) < 0.0 {
                    j += 1;
                }
            }
        }
        j
    }

    /// The `i`-th vertex from `w`, located by counting crossings of the two
    /// suffix lists and root-finding on the carrying segment.
    pub fn bisector_vertex(&self, i: usize) -> Result<BisectorVertex> {
        if i >= self.vertex_count() {
            return Err(Error::IndexOutOfRange);
        }
        // counting failed to place it; fall back to the materialized order
        Ok(self.vertex_by_count(i).unwrap_or(self.vertices[i]))
    }

    fn vertex_by_count(&self, i: usize) -> Option<BisectorVertex> {
        for owner in [Owner::S, Owner::T] {
            let list = match owner {
                Owner::S => self.g_s(),
                Owner::T => self.g_t(),
            };
            // rank of the k-th segment's vertex is k + count_before, increasing in k
            let rank = |k: usize| k + self.count_before(owner, &list[k]);
            let k = (0..list.len()).collect::<Vec<_>>().partition_point(|&k| rank(k) < i);
            if k < list.len() && rank(k) == i {
                let seg = &list[k];
                let p = self.sides(owner).crossing(seg);
                return Some(BisectorVertex { index: i, point: p, owner, segment: k, origin: seg.vertex });
            }
        }
        None
    }

    /// Distance from the diagonal (frame x) of each vertex of `[w, v.., z]`.
    pub fn breakpoints_x(&self) -> &[f64] {
        &self.xs
    }

    pub fn point_at(&self, pos: BisectorPos) -> Point {
        self.pieces[pos.arc.min(self.pieces.len() - 1)].point(pos.frac)
    }

    pub fn end_pos(&self) -> BisectorPos {
        BisectorPos { arc: self.pieces.len() - 1, frac: 1.0 }
    }

    /// Position of a point known to lie on the bisector.
    pub fn pos_of(&self, p: Point) -> BisectorPos {
        let x = self.portal.frame.to_local(p).x;
        let arc = self.xs[1..self.xs.len() - 1].partition_point(|&v| v < x);
        BisectorPos { arc, frac: self.pieces[arc].frac_of(p) }
    }

    /// Point of the bisector at frame x coordinate `x`, if within range.
    pub fn point_at_x(&self, x: f64) -> Option<Point> {
        let n = self.xs.len();
        if x < self.xs[0] - 1e-12 || x > self.xs[n - 1] + 1e-12 {
            return None;
        }
        let arc = self.xs[1..n - 1].partition_point(|&v| v < x).min(self.pieces.len() - 1);
        let pc = &self.pieces[arc];
        let fx = |f: f64| self.portal.frame.to_local(pc.point(f)).x - x;
        if fx(0.0) >= 0.0 {
            return Some(pc.from);
        }
        if fx(1.0) <= 0.0 {
            return Some(pc.to);
        }
        Some(pc.point(bisect(fx, 0.0, 1.0)))
    }

    /// Evaluates distances from `s` along the bisector at `pos`.
    pub fn dist_at(&self, pos: BisectorPos) -> f64 {
        let pc = &self.pieces[pos.arc];
        pc.dist(pc.point(pos.frac))
    }

    /// `samples` points per arc from `w` to `z`.
    pub fn sample(&self, samples: usize) -> Vec<Point> {
        let mut out = vec![self.w];
        for pc in &self.pieces {
            for k in 1..=samples {
                out.push(pc.point(k as f64 / samples as f64));
            }
        }
        out
    }

    /// Sub-polyline between two positions.
    pub fn sample_between(&self, a: BisectorPos, b: BisectorPos, per_arc: usize) -> Vec<Point> {
        let mut out = vec![self.point_at(a)];
        for arc in a.arc..=b.arc.min(self.pieces.len() - 1) {
            let f0 = if arc == a.arc { a.frac } else { 0.0 };
            let f1 = if arc == b.arc { b.frac } else { 1.0 };
            for k in 1..=per_arc {
                out.push(self.pieces[arc].point(f0 + (f1 - f0) * k as f64 / per_arc as f64));
            }
        }
        out
    }

    fn other_of(&self, id: u64) -> Option<&SideRef> {
        if self.s.id() == id {
            Some(&self.t)
        } else if self.t.id() == id {
            Some(&self.s)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closer {
    S,
    T,
}

/// Which of `s`, `t` is closer to `q`; ties go to the smaller id.
pub fn side_of_bisector(q: Point, s: &FieldSite, t: &FieldSite) -> Closer {
    if tie_less(s.dist(q), s.id(), t.dist(q), t.id()) {
        Closer::S
    } else {
        Closer::T
    }
}

/// Intersection of two bisectors sharing a site: the point equidistant from
/// all three, with its positions along both.
pub fn intersect_bisectors(b1: &ImplicitBisector, b2: &ImplicitBisector) -> Option<(Point, BisectorPos, BisectorPos)> {
    let (ids1, ids2) = (b1.ids(), b2.ids());
    let shared = if ids1.0 == ids2.0 || ids1.0 == ids2.1 { ids1.0 } else if ids1.1 == ids2.0 || ids1.1 == ids2.1 { ids1.1 } else { return None };
    let c = if b1.s.id() == shared { &b1.s } else { &b1.t };
    let u = b2.other_of(shared)?;
    if b1.other_of(shared)?.id() == u.id() {
        return None;
    }
    let h = |p: Point| c.dist(p) - u.dist(p);
    let mut seq = vec![b1.w];
    seq.extend(b1.vertices.iter().map(|v| v.point));
    seq.push(b1.z);
    let (h0, hz) = (h(seq[0]), h(seq[seq.len() - 1]));
    if (h0 < 0.0) == (hz < 0.0) || h0.abs() <= EPS_ROOT || hz.abs() <= EPS_ROOT {
        return None;
    }
    let neg0 = h0 < 0.0;
    let (mut lo, mut hi) = (0, seq.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if (h(seq[mid]) < 0.0) == neg0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pc = &b1.pieces[lo];
    let f = bisect(|f| h(pc.point(f)), 0.0, 1.0);
    let p = pc.point(f);
    let pos1 = BisectorPos { arc: lo, frac: f };
    Some((p, pos1, b2.pos_of(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;
    use crate::geom_core::{point_in_ring, DecompositionTree, Polygon, Side};
    use crate::oracle::{bisector_march, dist_to_polyline, Oracle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Setup {
        geo: Arc<Geodesic>,
        portal: Arc<Portal>,
    }

    fn setup(p: Polygon, side: Side) -> Setup {
        let tree = DecompositionTree::build(&p);
        let portal = Arc::new(tree.portal(0, side));
        Setup { geo: Arc::new(Geodesic::new(p)), portal }
    }

    impl Setup {
        fn site(&self, id: u64, x: f64, y: f64) -> SideRef {
            SideSite::new(FieldSite::new(&self.geo, Site::new(id, Point::new(x, y))).unwrap(), &self.portal)
        }
    }

    #[test]
    fn rect6_mirror_pair() {
        let st = setup(rect6(), Side::Left);
        let (s, t) = (st.site(1, 0.2, 0.2), st.site(2, 0.2, 0.8));
        let (_, w) = find_w(&st.portal, &s, &t).unwrap().unwrap();
        assert!(w.dist(Point::new(1.0, 0.5)) < 1e-12);
        let (_, z) = find_z(&st.portal, &s, &t).unwrap();
        assert!(z.dist(Point::new(2.0, 0.5)) < 1e-12);
        // (2,0) is closer to s, (2,1) to t
        assert!(s.site.field.vertex_dist(2) < t.site.field.vertex_dist(2));
        assert!(s.site.field.vertex_dist(3) > t.site.field.vertex_dist(3));
        let b = build_implicit_bisector(&st.portal, &s, &t).unwrap().unwrap();
        assert_eq!(b.vertex_count(), 0);
        assert_eq!(b.bisector_vertex(0), Err(Error::IndexOutOfRange));
        assert!(b.pseudo.chain_st.len() == 2 && b.pseudo.chain_sz.len() == 2 && b.pseudo.chain_tz.len() == 2);
        assert_eq!(b.pseudo.s_hat, s.point());
        for k in 0..=10 {
            assert!((b.point_at(BisectorPos { arc: 0, frac: k as f64 / 10.0 }).y - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn dominated_pair_has_no_w() {
        let st = setup(rect6(), Side::Left);
        let (s, t) = (st.site(1, 0.9, 0.5), st.site(2, 0.1, 0.5));
        assert!(s.dist_on_diagonal(0.0) < t.dist_on_diagonal(0.0));
        assert!(s.dist_on_diagonal(1.0) < t.dist_on_diagonal(1.0));
        assert!(find_w(&st.portal, &s, &t).unwrap().is_none());
        assert!(build_implicit_bisector(&st.portal, &s, &t).unwrap().is_none());
    }

    #[test]
    fn side_of_bisector_examples() {
        let st = setup(rect6(), Side::Left);
        let (s, t) = (st.site(1, 0.2, 0.2), st.site(2, 0.2, 0.8));
        assert_eq!(side_of_bisector(Point::new(1.5, 0.9), &s.site, &t.site), Closer::T);
        assert_eq!(side_of_bisector(Point::new(1.0, 0.5), &s.site, &t.site), Closer::S);
        assert_eq!(side_of_bisector(Point::new(1.0, 0.5), &t.site, &s.site), Closer::T);
    }

    #[test]
    fn parallel_bisectors_do_not_meet() {
        let st = setup(rect6(), Side::Left);
        let (s, t, u) = (st.site(1, 0.2, 0.2), st.site(2, 0.2, 0.5), st.site(3, 0.2, 0.8));
        let bst = build_implicit_bisector(&st.portal, &s, &t).unwrap().unwrap();
        let btu = build_implicit_bisector(&st.portal, &t, &u).unwrap().unwrap();
        assert!((bst.w.y - 0.35).abs() < 1e-12 && (btu.w.y - 0.65).abs() < 1e-12);
        assert!(intersect_bisectors(&bst, &btu).is_none());
    }

    #[test]
    fn three_sites_meet_at_the_circumcenter() {
        let st = setup(rect6(), Side::Left);
        let (s, t, u) = (st.site(1, 0.5, 0.1), st.site(2, 0.4, 0.5), st.site(3, 0.5, 0.9));
        let bst = build_implicit_bisector(&st.portal, &s, &t).unwrap().unwrap();
        let btu = build_implicit_bisector(&st.portal, &t, &u).unwrap().unwrap();
        // (x-0.5)^2 + 0.16 = (x-0.4)^2 on y = 0.5
        let (p, p1, p2) = intersect_bisectors(&bst, &btu).unwrap();
        assert!(p.dist(Point::new(1.25, 0.5)) < 1e-9, "{p:?}");
        assert!(bst.point_at(p1).dist(p) < 1e-9 && btu.point_at(p2).dist(p) < 1e-9);
        let (q, _, _) = intersect_bisectors(&btu, &bst).unwrap();
        assert!(q.dist(p) < 1e-9);
    }

    #[test]
    fn swapping_sites_keeps_geometry() {
        let st = setup(lshape6(), Side::Left);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_point_in_ring(&st.portal.near, 1e-3, &mut rng);
            let b = random_point_in_ring(&st.portal.near, 1e-3, &mut rng);
            let (s, t) = (st.site(1, a.x, a.y), st.site(2, b.x, b.y));
            let (Some(b1), Some(b2)) = (
                build_implicit_bisector(&st.portal, &s, &t).unwrap(),
                build_implicit_bisector(&st.portal, &t, &s).unwrap(),
            ) else {
                continue;
            };
            assert!(b1.w.dist(b2.w) < 1e-9 && b1.z.dist(b2.z) < 1e-9);
            assert_eq!(b1.vertex_count(), b2.vertex_count());
            assert_ne!(b1.closer_at_bottom(), b2.closer_at_bottom());
            for (x, y) in b1.vertices().iter().zip(b2.vertices()) {
                assert!(x.point.dist(y.point) < 1e-9);
                assert_ne!(x.owner, y.owner);
            }
        }
    }

    #[test]
    fn lshape_bisector_wraps_the_reflex_corner() {
        // diagonal (2,0)-(1,1); sites below it, bisector in the upper arm
        let st = setup(lshape6(), Side::Left);
        let corner = Point::new(1.0, 1.0);
        let mut found = 0;
        for i in 1..10 {
            for j in 1..10 {
                let (a, b) = (Point::new(0.1 * i as f64, 0.9), Point::new(0.15 * j as f64, 0.1));
                if !point_in_ring(&st.portal.near, a, -1e-6) || !point_in_ring(&st.portal.near, b, -1e-6) {
                    continue;
                }
                let (s, t) = (st.site(1, a.x, a.y), st.site(2, b.x, b.y));
                let Ok(Some(bis)) = build_implicit_bisector(&st.portal, &s, &t) else { continue };
                if bis.vertex_count() >= 1 && bis.pseudo.chain_sz.iter().chain(&bis.pseudo.chain_tz).any(|&p| p == corner) {
                    found += 1;
                    for v in bis.vertices() {
                        assert!((s.dist(v.point) - t.dist(v.point)).abs() < 1e-9);
                        let e = bis.g_s().get(v.segment).filter(|_| v.owner == Owner::S).or(bis.g_t().get(v.segment)).unwrap();
                        let e = e.ext.unwrap();
                        assert!(crate::geom_core::point_segment_dist(v.point, e.start, e.end) < 1e-9);
                    }
                }
            }
        }
        assert!(found > 0);
        assert_eq!(st.portal.a, Point::new(2.0, 0.0));
        assert_eq!(st.portal.b, Point::new(1.0, 1.0));
    }

    fn check_random_pair(st: &Setup, s: &SideRef, t: &SideRef, o: &Oracle) -> bool {
        let Some(b) = build_implicit_bisector(&st.portal, s, t).unwrap() else {
            return false;
        };
        let os = o.source(s.point()).unwrap();
        let ot = o.source(t.point()).unwrap();
        assert!((o.distance_from(&os, b.w).unwrap() - o.distance_from(&ot, b.w).unwrap()).abs() < 1e-9);
        assert!((o.distance_from(&os, b.z).unwrap() - o.distance_from(&ot, b.z).unwrap()).abs() < 1e-9);
        // vertices equidistant, strictly ordered away from the diagonal
        let mut last_x = 0.0;
        for i in 0..b.vertex_count() {
            let v = b.bisector_vertex(i).unwrap();
            assert_eq!(b.vertex_by_count(i), Some(b.vertices()[i]));
            assert_eq!(v, b.vertices()[i]);
            assert!((s.dist(v.point) - t.dist(v.point)).abs() < 1e-9);
            let x = st.portal.frame.to_local(v.point).x;
            assert!(x > last_x);
            last_x = x;
        }
        // arcs carry equidistant points
        for pc in b.pieces() {
            for k in 0..=8 {
                let p = pc.point(k as f64 / 8.0);
                assert!((s.dist(p) - t.dist(p)).abs() < 1e-9, "arc point off the bisector");
            }
        }
        // suffix property of the crossing indicator
        for (list, start, sides) in [(&b.f_s, b.suffix_start_s, (s, t)), (&b.f_t, b.suffix_start_t, (t, s))] {
            let sd = Sides { owner: sides.0, other: sides.1 };
            for (k, seg) in list.iter().enumerate() {
                assert_eq!(sd.crosses(seg), k >= start);
            }
        }
        let line = bisector_march(&st.portal.far, &st.portal.frame, |q| s.dist(q), |q| t.dist(q), 2e-3);
        for v in b.vertices() {
            assert!(dist_to_polyline(v.point, &line) < 4e-3);
        }
        true
    }

    #[test]
    fn random_pairs_match_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut built = 0;
        let mut with_vertices = 0;
        for seed in 0..12 {
            let p = random_polygon(24, 500 + seed);
            let o = Oracle::new(p.clone());
            for side in [Side::Left, Side::Right] {
                let st = setup(p.clone(), side);
                for k in 0..4 {
                    let a = random_point_in_ring(&st.portal.near, 1e-3, &mut rng);
                    let c = random_point_in_ring(&st.portal.near, 1e-3, &mut rng);
                    let (s, t) = (st.site(2 * k, a.x, a.y), st.site(2 * k + 1, c.x, c.y));
                    if check_random_pair(&st, &s, &t, &o) {
                        built += 1;
                        let b = build_implicit_bisector(&st.portal, &s, &t).unwrap().unwrap();
                        with_vertices += b.vertex_count();
                        assert!(b.pseudo.via_convex_chains, "convex-chain corners disagree");
                    }
                }
            }
        }
        assert!(built > 20 && with_vertices > 10, "{built} {with_vertices}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn diagonal_has_at_most_one_sign_change(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_polygon(16, seed);
            let side = if seed % 2 == 0 { Side::Left } else { Side::Right };
            let st = setup(p, side);
            let a = random_point_in_ring(&st.portal.near, 1e-3, &mut rng);
            let c = random_point_in_ring(&st.portal.near, 1e-3, &mut rng);
            let (s, t) = (st.site(1, a.x, a.y), st.site(2, c.x, c.y));
            let mut changes = 0;
            let mut prev = s.dist_on_diagonal(0.0) < t.dist_on_diagonal(0.0);
            for k in 1..=1000 {
                let l = k as f64 / 1000.0;
                let cur = s.dist_on_diagonal(l) < t.dist_on_diagonal(l);
                changes += usize::from(cur != prev);
                prev = cur;
            }
            proptest::prop_assert!(changes <= 1);
            if let Ok(Some(b)) = build_implicit_bisector(&st.portal, &s, &t) {
                for pc in b.pieces() {
                    let q = pc.point(0.5);
                    proptest::prop_assert!((s.dist(q) - t.dist(q)).abs() < 1e-9);
                }
            }
        }
    }
}
