//! Voronoi diagram of sites on one side of a diagonal, restricted to the
//! other side. Every region meets the diagonal in one interval, so the
//! diagram is built by sweeping away from the diagonal with a front of
//! adjacent regions.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::bisector::{build_implicit_bisector, find_w, intersect_bisectors, BisectorPos, ImplicitBisector, SideRef};
use crate::geom_core::{segment_intersection, sort_ranked, tie_less, Error, Point, Portal, Result};

/// Memoized bisectors keyed by the ordered id pair.
#[derive(Default)]
pub struct BisectorCache {
    map: BTreeMap<(u64, u64), Option<Arc<ImplicitBisector>>>,
    pub built: usize,
}

impl BisectorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, portal: &Arc<Portal>, s: &SideRef, t: &SideRef) -> Result<Option<Arc<ImplicitBisector>>> {
        let key = (s.id(), t.id());
        if let Some(b) = self.map.get(&key) {
            return Ok(b.clone());
        }
        let b = build_implicit_bisector(portal, s, t)?.map(Arc::new);
        self.built += 1;
        self.map.insert(key, b.clone());
        Ok(b)
    }
}

/// Sites by distance from the bottom endpoint of the diagonal, ties by id.
pub fn order_sites(sites: &[SideRef]) -> Vec<SideRef> {
    let mut keyed: Vec<(f64, u64)> = sites.iter().map(|s| (s.dist_on_diagonal(0.0), s.id())).collect();
    sort_ranked(&mut keyed);
    keyed.iter().map(|&(_, id)| sites.iter().find(|s| s.id() == id).unwrap().clone()).collect()
}

/// Sites whose region reaches the diagonal, bottom to top, with the
/// diagonal parameters where consecutive regions meet.
pub fn extract_t(portal: &Portal, sorted: &[SideRef]) -> Result<(Vec<SideRef>, Vec<f64>)> {
    let mut stack: Vec<SideRef> = Vec::new();
    let mut breaks: Vec<f64> = Vec::new();
    for s in sorted {
        let Some(top) = stack.last() else {
            stack.push(s.clone());
            continue;
        };
        if !tie_less(s.dist_on_diagonal(1.0), s.id(), top.dist_on_diagonal(1.0), top.id()) {
            continue;
        }
        loop {
            let top = stack.last().unwrap();
            let (l, _) = find_w(portal, top, s)?.ok_or(Error::DegenerateSites)?;
            match breaks.last() {
                Some(&prev) if l <= prev => {
                    stack.pop();
                    breaks.pop();
                }
                _ => {
                    breaks.push(l);
                    stack.push(s.clone());
                    break;
                }
            }
        }
    }
    Ok((stack, breaks))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexKind {
    /// Degree one: on the diagonal or on the outer boundary.
    Boundary,
    /// Degree three: equidistant to three sites.
    Triple,
}

#[derive(Clone, Debug)]
pub struct VVertex {
    pub point: Point,
    pub kind: VertexKind,
    /// Indices into the diagram's site list.
    pub sites: Vec<usize>,
    /// Counterclockwise position on the boundary of the far side, for boundary vertices.
    pub boundary_param: Option<f64>,
}

/// Edge between the regions of `s` and `t`, oriented away from the diagonal.
#[derive(Clone, Debug)]
pub struct VEdge {
    pub s: usize,
    pub t: usize,
    pub from: usize,
    pub to: usize,
    pub bisector: Arc<ImplicitBisector>,
    pub start: BisectorPos,
    pub end: BisectorPos,
}

#[derive(Clone, Debug)]
pub struct VoronoiForest {
    pub portal: Arc<Portal>,
    /// Sites with a region, bottom to top along the diagonal.
    pub sites: Vec<SideRef>,
    /// Diagonal parameters separating consecutive regions.
    pub breaks: Vec<f64>,
    pub vertices: Vec<VVertex>,
    pub edges: Vec<VEdge>,
    adj: Vec<Vec<usize>>,
    /// One root vertex per tree, counterclockwise along the boundary.
    pub roots: Vec<usize>,
}

struct Link {
    s: usize,
    t: usize,
    bis: Arc<ImplicitBisector>,
    start: BisectorPos,
    start_point: Point,
    start_vertex: usize,
    prev: Option<usize>,
    next: Option<usize>,
    alive: bool,
}

enum Event {
    Boundary(usize),
    Merge(usize, usize, Point, BisectorPos),
}

fn boundary_param(portal: &Portal, p: Point) -> f64 {
    match portal.chain_param(p) {
        Some(c) => c,
        None => (portal.far_chain.len() - 1) as f64 + (1.0 - portal.param_of(p)),
    }
}

/// Builds the diagram of `sites` (already extracted, bottom to top) inside
/// the far side of `portal`.
pub fn build_voronoi(portal: &Arc<Portal>, sites: Vec<SideRef>, breaks: Vec<f64>, cache: &mut BisectorCache) -> Result<VoronoiForest> {
    if sites.is_empty() {
        return Err(Error::NoSites);
    }
    let k = sites.len();
    let frame = portal.frame;
    let mut vertices: Vec<VVertex> = Vec::new();
    let mut edges: Vec<VEdge> = Vec::new();
    let mut links: Vec<Link> = Vec::new();
    for i in 0..k.saturating_sub(1) {
        let bis = cache.get(portal, &sites[i], &sites[i + 1])?.ok_or(Error::DegenerateSites)?;
        vertices.push(VVertex {
            point: bis.w,
            kind: VertexKind::Boundary,
            sites: vec![i, i + 1],
            boundary_param: Some(boundary_param(portal, bis.w)),
        });
        links.push(Link {
            s: i,
            t: i + 1,
            start: BisectorPos::START,
            start_point: bis.w,
            bis,
            start_vertex: vertices.len() - 1,
            prev: i.checked_sub(1),
            next: (i + 2 < k).then_some(i + 1),
            alive: true,
        });
    }

    // merge candidate between a link and its successor
    let merge_of = |links: &[Link], l: usize| -> Option<(f64, Point, BisectorPos, BisectorPos)> {
        let r = links[l].next?;
        let (a, b) = (&links[l], &links[r]);
        let (p, pa, pb) = intersect_bisectors(&a.bis, &b.bis)?;
        let after = |lk: &Link, pos: BisectorPos| pos.cmp(&lk.start).is_gt() && p.dist(lk.start_point) > 1e-12;
        (after(a, pa) && after(b, pb)).then(|| (frame.to_local(p).x, p, pa, pb))
    };
    let mut merge_cand: Vec<Option<(f64, Point, BisectorPos, BisectorPos)>> = (0..links.len()).map(|l| merge_of(&links, l)).collect();

    loop {
        let mut best: Option<(f64, Event)> = None;
        for (l, lk) in links.iter().enumerate() {
            if !lk.alive {
                continue;
            }
            let zx = frame.to_local(lk.bis.z).x;
            if best.as_ref().is_none_or(|(bx, _)| zx < *bx) {
                best = Some((zx, Event::Boundary(l)));
            }
            if let Some((x, p, pa, _)) = merge_cand[l] {
                if best.as_ref().is_none_or(|(bx, _)| x < *bx) {
                    best = Some((x, Event::Merge(l, lk.next.unwrap(), p, pa)));
                }
            }
        }
        let Some((_, ev)) = best else { break };
        match ev {
            Event::Boundary(l) => {
                let lk = &links[l];
                vertices.push(VVertex {
                    point: lk.bis.z,
                    kind: VertexKind::Boundary,
                    sites: vec![lk.s, lk.t],
                    boundary_param: Some(boundary_param(portal, lk.bis.z)),
                });
                edges.push(VEdge {
                    s: lk.s,
                    t: lk.t,
                    from: lk.start_vertex,
                    to: vertices.len() - 1,
                    bisector: lk.bis.clone(),
                    start: lk.start,
                    end: lk.bis.end_pos(),
                });
                let (prev, next) = (lk.prev, lk.next);
                links[l].alive = false;
                if let Some(p) = prev {
                    links[p].next = None;
                    merge_cand[p] = None;
                }
                if let Some(n) = next {
                    links[n].prev = None;
                }
            }
            Event::Merge(l, r, p, pa) => {
                let (a, b, c) = (links[l].s, links[l].t, links[r].t);
                vertices.push(VVertex { point: p, kind: VertexKind::Triple, sites: vec![a, b, c], boundary_param: None });
                let v = vertices.len() - 1;
                let pb = links[r].bis.pos_of(p);
                for (lk, end) in [(&links[l], pa), (&links[r], pb)] {
                    edges.push(VEdge { s: lk.s, t: lk.t, from: lk.start_vertex, to: v, bisector: lk.bis.clone(), start: lk.start, end });
                }
                let bis = cache.get(portal, &sites[a], &sites[c])?.ok_or(Error::DegenerateSites)?;
                let start = bis.pos_of(p);
                let (prev, next) = (links[l].prev, links[r].next);
                links[l].alive = false;
                links[r].alive = false;
                let n = links.len();
                links.push(Link { s: a, t: c, bis, start, start_point: p, start_vertex: v, prev, next, alive: true });
                if let Some(pv) = prev {
                    links[pv].next = Some(n);
                }
                if let Some(nx) = next {
                    links[nx].prev = Some(n);
                }
                merge_cand[l] = None;
                merge_cand[r] = None;
                merge_cand.push(merge_of(&links, n));
                if let Some(pv) = prev {
                    merge_cand[pv] = merge_of(&links, pv);
                }
            }
        }
    }

    let mut adj = vec![Vec::new(); k];
    for e in &edges {
        if !adj[e.s].contains(&e.t) {
            adj[e.s].push(e.t);
            adj[e.t].push(e.s);
        }
    }
    let roots = tree_roots(&vertices, &edges);
    Ok(VoronoiForest { portal: portal.clone(), sites, breaks, vertices, edges, adj, roots })
}

// one boundary vertex per connected component, the first counterclockwise
fn tree_roots(vertices: &[VVertex], edges: &[VEdge]) -> Vec<usize> {
    let n = vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in edges {
        let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
        parent[a] = b;
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for v in 0..n {
        let Some(bp) = vertices[v].boundary_param else { continue };
        let c = find(&mut parent, v);
        let cur = best.entry(c).or_insert(v);
        if bp < vertices[*cur].boundary_param.unwrap() {
            *cur = v;
        }
    }
    let mut roots: Vec<usize> = best.into_values().collect();
    roots.sort_by(|&a, &b| vertices[a].boundary_param.unwrap().total_cmp(&vertices[b].boundary_param.unwrap()));
    roots
}

/// Sorts, extracts and builds in one go.
pub fn voronoi_of(portal: &Arc<Portal>, sites: &[SideRef], cache: &mut BisectorCache) -> Result<VoronoiForest> {
    let sorted = order_sites(sites);
    let (t, breaks) = extract_t(portal, &sorted)?;
    build_voronoi(portal, t, breaks, cache)
}

impl VoronoiForest {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    /// Region index owning the diagonal point at parameter `l`.
    pub fn region_on_diagonal(&self, l: f64) -> usize {
        self.breaks.partition_point(|&b| b < l)
    }

    fn d_crossing(&self, c: usize, q: Point) -> Option<f64> {
        let path = self.sites[c].site.field.path(q).ok()?;
        let pts = path.vertices();
        let (a, b) = (self.portal.a, self.portal.b);
        for w in pts.windows(2).rev() {
            if let Some((_, u)) = segment_intersection(w[0], w[1], a, b) {
                return Some(u.clamp(0.0, 1.0));
            }
        }
        None
    }

    /// Site of the region containing `q` (ties to the smaller id), with its
    /// distance. Walks from the region owning the diagonal crossing of the
    /// current site's path to `q`, then to strictly closer neighbors.
    pub fn locate(&self, q: Point) -> (usize, f64) {
        let dist = |i: usize| self.sites[i].dist(q);
        let mut c = self.region_on_diagonal(0.5);
        let mut dc = dist(c);
        loop {
            if let Some(l) = self.d_crossing(c, q) {
                let o = self.region_on_diagonal(l);
                if o != c {
                    let d = dist(o);
                    if tie_less(d, self.sites[o].id(), dc, self.sites[c].id()) {
                        c = o;
                        dc = d;
                        continue;
                    }
                }
            }
            let mut best: Option<(usize, f64)> = None;
            for &n in &self.adj[c] {
                let d = dist(n);
                if best.is_none_or(|(b, bd)| tie_less(d, self.sites[n].id(), bd, self.sites[b].id())) {
                    best = Some((n, d));
                }
            }
            match best {
                Some((n, d)) if tie_less(d, self.sites[n].id(), dc, self.sites[c].id()) => {
                    c = n;
                    dc = d;
                }
                _ => return (c, dc),
            }
        }
    }

    /// Linear scan over all regions; the verification mode of `locate`.
    pub fn locate_linear(&self, q: Point) -> (usize, f64) {
        let mut best = (0, self.sites[0].dist(q));
        for i in 1..self.sites.len() {
            let d = self.sites[i].dist(q);
            if tie_less(d, self.sites[i].id(), best.1, self.sites[best.0].id()) {
                best = (i, d);
            }
        }
        best
    }

    /// Sampled polyline of each edge, `per_arc` points per bisector arc.
    pub fn edge_polylines(&self, per_arc: usize) -> Vec<Vec<Point>> {
        self.edges.iter().map(|e| e.bisector.sample_between(e.start, e.end, per_arc)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bisector::{FieldSite, SideSite};
    use crate::fixtures::*;
    use crate::geom_core::{DecompositionTree, Polygon, Side, Site};
    use crate::oracle::Oracle;
    use crate::shortest_path::Geodesic;
    use rand::seq::SliceRandom;
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
        fn sites(&self, pts: &[(f64, f64)]) -> Vec<SideRef> {
            pts.iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    SideSite::new(FieldSite::new(&self.geo, Site::new(i as u64 + 1, Point::new(x, y))).unwrap(), &self.portal)
                })
                .collect()
        }
        fn random_sites(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<SideRef> {
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let p = random_point_in_ring(&self.portal.near, 1e-3, rng);
                    (p.x, p.y)
                })
                .collect();
            self.sites(&pts)
        }
    }

    fn ids(v: &[SideRef]) -> Vec<u64> {
        v.iter().map(|s| s.id()).collect()
    }

    #[test]
    fn rect6_order_and_extraction() {
        let st = setup(rect6(), Side::Left);
        let sites = st.sites(&[(0.9, 0.1), (0.9, 0.9), (0.1, 0.5)]);
        let sorted = order_sites(&[sites[2].clone(), sites[0].clone(), sites[1].clone()]);
        assert_eq!(ids(&sorted), vec![1, 2, 3]);
        let d: Vec<f64> = sorted.iter().map(|s| s.dist_on_diagonal(0.0)).collect();
        for (got, want) in d.iter().zip([0.1414, 0.9055, 1.0296]) {
            assert!((got - want).abs() < 1e-4);
        }
        let (t, _) = extract_t(&st.portal, &sorted).unwrap();
        assert_eq!(ids(&t), vec![1, 2]);
        // s3 is never the closest on the diagonal
        for k in 0..=1000 {
            let l = k as f64 / 1000.0;
            assert!(sorted[2].dist_on_diagonal(l) > sorted[0].dist_on_diagonal(l).min(sorted[1].dist_on_diagonal(l)));
        }
    }

    #[test]
    fn single_site_has_empty_forest() {
        let st = setup(rect6(), Side::Left);
        let sites = st.sites(&[(0.5, 0.5)]);
        let mut cache = BisectorCache::new();
        let f = voronoi_of(&st.portal, &sites, &mut cache).unwrap();
        assert_eq!(f.len(), 1);
        assert!(f.edges.is_empty() && f.vertices.is_empty());
        assert_eq!(f.locate(Point::new(1.5, 0.5)).0, 0);
    }

    #[test]
    fn mirror_pair_is_one_edge() {
        let st = setup(rect6(), Side::Left);
        let sites = st.sites(&[(0.2, 0.2), (0.2, 0.8)]);
        let mut cache = BisectorCache::new();
        let f = voronoi_of(&st.portal, &sites, &mut cache).unwrap();
        assert_eq!(f.edges.len(), 1);
        assert_eq!(f.vertices.len(), 2);
        assert!(f.vertices.iter().all(|v| v.kind == VertexKind::Boundary));
        assert!(f.vertices[0].point.dist(Point::new(1.0, 0.5)) < 1e-12);
        assert!(f.vertices[1].point.dist(Point::new(2.0, 0.5)) < 1e-12);
        assert_eq!(f.roots.len(), 1);
        let (i, d) = f.locate(Point::new(1.5, 0.9));
        assert_eq!(f.sites[i].id(), 2);
        assert!((d - 1.303840).abs() < 1e-6);
        assert_eq!(f.sites[f.locate(Point::new(1.5, 0.5)).0].id(), 1);
        assert_eq!(f.sites[f.locate(Point::new(1.0, 0.5)).0].id(), 1);
    }

    fn check_instance(st: &Setup, sites: &[SideRef], o: &Oracle, rng: &mut ChaCha8Rng, queries: usize) {
        let mut cache = BisectorCache::new();
        let f = voronoi_of(&st.portal, sites, &mut cache).unwrap();
        let plain: Vec<Site> = sites.iter().map(|s| s.site.site).collect();
        for v in &f.vertices {
            if v.kind == VertexKind::Triple {
                let d: Vec<f64> = v.sites.iter().map(|&i| f.sites[i].dist(v.point)).collect();
                assert!((d[0] - d[1]).abs() < 1e-9 && (d[1] - d[2]).abs() < 1e-9);
            }
        }
        // Hamiltonian: runs along the diagonal follow the extracted order
        let mut runs = Vec::new();
        for k in 0..1000 {
            let q = st.portal.point_at((k as f64 + 0.5) / 1000.0);
            let (i, _) = f.locate(q);
            if runs.last() != Some(&i) {
                runs.push(i);
            }
        }
        assert_eq!(runs, (0..f.len()).collect::<Vec<_>>());
        for _ in 0..queries {
            let q = random_point_in_ring(&st.portal.far, 1e-6, rng);
            let (i, d) = f.locate(q);
            let (want, wd) = o.nearest(q, &plain).unwrap();
            assert_eq!(f.sites[i].id(), want.id);
            assert!((d - wd).abs() < 1e-9);
            assert_eq!(f.locate_linear(q).0, i);
        }
    }

    #[test]
    fn random_diagrams_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..10 {
            let p = random_polygon(20, 900 + seed);
            let o = Oracle::new(p.clone());
            for side in [Side::Left, Side::Right] {
                let st = setup(p.clone(), side);
                let n = 2 + (seed as usize % 15);
                let sites = st.random_sites(n, &mut rng);
                check_instance(&st, &sites, &o, &mut rng, 50);
            }
        }
    }

    #[test]
    fn shuffled_input_gives_same_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_polygon(16, 42);
        let st = setup(p, Side::Left);
        let mut sites = st.random_sites(10, &mut rng);
        let mut cache = BisectorCache::new();
        let f1 = voronoi_of(&st.portal, &sites, &mut cache).unwrap();
        sites.shuffle(&mut rng);
        let f2 = voronoi_of(&st.portal, &sites, &mut BisectorCache::new()).unwrap();
        let far = &st.portal.far;
        let (mut lo, mut hi) = (far[0], far[0]);
        for v in far {
            lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        for i in 0..32 {
            for j in 0..32 {
                let q = Point::new(lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / 32.0, lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / 32.0);
                if !crate::geom_core::point_in_ring(far, q, 0.0) {
                    continue;
                }
                assert_eq!(f1.sites[f1.locate(q).0].id(), f2.sites[f2.locate(q).0].id());
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn forest_has_no_cycles(seed in 0u64..10_000, n in 2usize..14) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let st = setup(random_polygon(16, seed), if seed % 2 == 0 { Side::Left } else { Side::Right });
            let sites = st.random_sites(n, &mut rng);
            let f = voronoi_of(&st.portal, &sites, &mut BisectorCache::new()).unwrap();
            // a forest: edges = vertices - components
            proptest::prop_assert_eq!(f.edges.len() + f.roots.len(), f.vertices.len());
            let triples = f.vertices.iter().filter(|v| v.kind == VertexKind::Triple).count();
            proptest::prop_assert_eq!(triples + f.roots.len(), f.len() - 1);
        }
    }
}
