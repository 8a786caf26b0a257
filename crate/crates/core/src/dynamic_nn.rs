//! Nearest-site indexes over the balanced decomposition.
//!
//! Every internal node keeps two one-sided structures: sites left of its
//! diagonal answering queries on the right, and vice versa. A query visits
//! the opposite-side structure at each node on its root-to-leaf route and
//! scans the sites sharing its leaf triangle.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::bisector::{FieldSite, SideRef, SideSite, SiteRef};
use crate::geom_core::{tie_less, DecompositionTree, Error, Point, Polygon, Portal, Result, Side, Site};
use crate::math;
use crate::shortest_path::Geodesic;
use crate::voronoi_d::{voronoi_of, BisectorCache, VoronoiForest};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    InsertOnly,
    Offline,
    SqrtDynamic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleOp {
    Insert(Site),
    Delete(u64),
}

/// A group of sites with the diagram answering queries for them.
#[derive(Clone, Debug, Default)]
struct Group {
    ids: Vec<u64>,
    forest: Option<VoronoiForest>,
}

#[derive(Clone, Debug)]
struct SideCtx {
    portal: Arc<Portal>,
    // funnel views of member sites, keyed by site instance
    views: BTreeMap<usize, SideRef>,
    rebuild_work: usize,
}

impl SideCtx {
    fn view(&mut self, key: usize, site: &SiteRef) -> SideRef {
        let portal = &self.portal;
        self.views.entry(key).or_insert_with(|| SideSite::new(site.clone(), portal)).clone()
    }

    fn build(&mut self, members: &[(usize, SiteRef)]) -> Result<Option<VoronoiForest>> {
        if members.is_empty() {
            return Ok(None);
        }
        self.rebuild_work += members.len();
        let refs: Vec<SideRef> = members.iter().map(|(k, s)| self.view(*k, s)).collect();
        Ok(Some(voronoi_of(&self.portal, &refs, &mut BisectorCache::new())?))
    }
}

#[derive(Clone, Debug)]
enum SideStore {
    /// Groups of distinct power-of-two sizes.
    Binary(Vec<Group>),
    /// Groups of about the square root of the side's size.
    Sqrt { groups: Vec<Group>, updates: usize },
    /// Diagrams on the nodes of a segment tree over time slots.
    Timeline(Vec<Option<VoronoiForest>>),
}

#[derive(Clone, Debug)]
struct OneSide {
    ctx: SideCtx,
    store: SideStore,
}

#[derive(Clone, Debug)]
struct Instance {
    field: SiteRef,
    // slot range [from, to) for scheduled sites
    slots: (usize, usize),
    path: Vec<(usize, Side)>,
    leaf: usize,
}

#[derive(Clone, Debug)]
pub struct NNIndex {
    variant: Variant,
    geo: Arc<Geodesic>,
    tree: DecompositionTree,
    sides: BTreeMap<(usize, usize), OneSide>,
    instances: Vec<Instance>,
    live: BTreeMap<u64, usize>,
    leaves: BTreeMap<usize, Vec<usize>>,
    times: Vec<f64>,
    now: Option<f64>,
    tie_fault: f64,
}

fn ceil_sqrt(n: usize) -> usize {
    (math::ceil(math::sqrt(n as f64)) as usize).max(1)
}

impl NNIndex {
    /// Empty index; the offline variant takes its whole update schedule here.
    pub fn new(poly: Polygon, variant: Variant, schedule: Option<&[(f64, ScheduleOp)]>) -> Result<NNIndex> {
        let tree = DecompositionTree::build(&poly);
        let geo = Arc::new(Geodesic::new(poly));
        let mut sides = BTreeMap::new();
        for (node, n) in tree.nodes.iter().enumerate() {
            if n.children.is_none() {
                continue;
            }
            for side in [Side::Left, Side::Right] {
                let portal = Arc::new(tree.portal(node, side));
                let store = match variant {
                    Variant::InsertOnly => SideStore::Binary(Vec::new()),
                    Variant::SqrtDynamic => SideStore::Sqrt { groups: Vec::new(), updates: 0 },
                    Variant::Offline => SideStore::Timeline(Vec::new()),
                };
                let ctx = SideCtx { portal, views: BTreeMap::new(), rebuild_work: 0 };
                sides.insert((node, side.index()), OneSide { ctx, store });
            }
        }
        let mut idx = NNIndex {
            variant,
            geo,
            tree,
            sides,
            instances: Vec::new(),
            live: BTreeMap::new(),
            leaves: BTreeMap::new(),
            times: Vec::new(),
            now: None,
            tie_fault: 0.0,
        };
        match (variant, schedule) {
            (Variant::Offline, Some(s)) => idx.load_schedule(s)?,
            (Variant::Offline, None) => return Err(Error::ScheduleInconsistent("offline index needs a schedule".into())),
            (_, Some(_)) => return Err(Error::UnsupportedOp),
            _ => {}
        }
        Ok(idx)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn tree(&self) -> &DecompositionTree {
        &self.tree
    }

    pub fn geodesic(&self) -> &Arc<Geodesic> {
        &self.geo
    }

    fn instance(&mut self, s: Site, slots: (usize, usize)) -> Result<usize> {
        if !self.geo.polygon().contains(s.point) {
            return Err(Error::PointOutsidePolygon);
        }
        let field = FieldSite::new(&self.geo, s)?;
        let (path, leaf) = self.tree.route(s.point);
        self.instances.push(Instance { field, slots, path, leaf });
        Ok(self.instances.len() - 1)
    }

    fn load_schedule(&mut self, schedule: &[(f64, ScheduleOp)]) -> Result<()> {
        let mut ops: Vec<(f64, usize, ScheduleOp)> = schedule.iter().enumerate().map(|(i, &(t, op))| (t, i, op)).collect();
        ops.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut times: Vec<f64> = ops.iter().map(|o| o.0).collect();
        times.dedup();
        let slot = |t: f64| times.partition_point(|&x| x < t);
        let mut open: BTreeMap<u64, (Site, usize)> = BTreeMap::new();
        let mut spans: Vec<(Site, usize, usize)> = Vec::new();
        let mut distinct: BTreeMap<u64, ()> = BTreeMap::new();
        for &(t, _, op) in &ops {
            match op {
                ScheduleOp::Insert(s) => {
                    if open.contains_key(&s.id) {
                        return Err(Error::ScheduleInconsistent(format!("site {} inserted twice", s.id)));
                    }
                    distinct.insert(s.id, ());
                    open.insert(s.id, (s, slot(t)));
                }
                ScheduleOp::Delete(id) => {
                    let Some((s, from)) = open.remove(&id) else {
                        return Err(Error::ScheduleInconsistent(format!("delete of site {id} without insert")));
                    };
                    spans.push((s, from, slot(t)));
                }
            }
        }
        if ops.len() > 4 * distinct.len().max(1) {
            return Err(Error::ScheduleInconsistent(format!("{} updates exceed four per site", ops.len())));
        }
        for (_, (s, from)) in open {
            spans.push((s, from, times.len()));
        }
        let slots = times.len().max(1);
        self.times = times;
        // per side: site lists on each segment tree node
        let mut lists: BTreeMap<(usize, usize), Vec<Vec<(usize, SiteRef)>>> = BTreeMap::new();
        for (s, from, to) in spans {
            if from >= to {
                continue;
            }
            let k = self.instance(s, (from, to))?;
            let inst = self.instances[k].clone();
            for &(node, side) in &inst.path {
                let l = lists.entry((node, side.index())).or_insert_with(|| vec![Vec::new(); 4 * slots]);
                cover(l, 1, 0, slots, from, to, (k, inst.field.clone()));
            }
            self.leaves.entry(inst.leaf).or_default().push(k);
        }
        for (key, l) in lists {
            let side = self.sides.get_mut(&key).unwrap();
            let mut seg = Vec::with_capacity(l.len());
            for members in &l {
                seg.push(side.ctx.build(members)?);
            }
            side.store = SideStore::Timeline(seg);
        }
        Ok(())
    }

    /// Moves the offline index to time `t`.
    pub fn advance_time(&mut self, t: f64) -> Result<()> {
        if self.variant != Variant::Offline {
            return Err(Error::UnsupportedOp);
        }
        if self.now.is_some_and(|n| t < n) {
            return Err(Error::TimeRegression);
        }
        self.now = Some(t);
        Ok(())
    }

    // time slot of the cursor; None before the first event
    fn slot(&self) -> Option<usize> {
        let t = self.now?;
        let k = self.times.partition_point(|&x| x <= t);
        k.checked_sub(1)
    }

    pub fn insert(&mut self, s: Site) -> Result<()> {
        if self.variant == Variant::Offline {
            return Err(Error::UnsupportedOp);
        }
        if self.live.contains_key(&s.id) {
            return Err(Error::DuplicateId(s.id));
        }
        let k = self.instance(s, (0, 0))?;
        self.live.insert(s.id, k);
        let inst = self.instances[k].clone();
        self.leaves.entry(inst.leaf).or_default().push(k);
        for &(node, side) in &inst.path {
            let (live, instances) = (&self.live, &self.instances);
            let os = self.sides.get_mut(&(node, side.index())).unwrap();
            let members =
                |ids: &[u64]| -> Vec<(usize, SiteRef)> { ids.iter().map(|i| (live[i], instances[live[i]].field.clone())).collect() };
            match &mut os.store {
                SideStore::Binary(groups) => {
                    let mut ids = vec![s.id];
                    // carry: merge equal sizes
                    while let Some(pos) = groups.iter().position(|g| g.ids.len() == ids.len()) {
                        let g = groups.remove(pos);
                        ids.extend(g.ids);
                    }
                    let forest = os.ctx.build(&members(&ids))?;
                    groups.push(Group { ids, forest });
                    groups.sort_by_key(|g| g.ids.len());
                }
                SideStore::Sqrt { groups, updates } => {
                    let total: usize = groups.iter().map(|g| g.ids.len()).sum::<usize>() + 1;
                    let cap = ceil_sqrt(total);
                    match groups.iter().position(|g| g.ids.len() < cap) {
                        Some(i) => {
                            groups[i].ids.push(s.id);
                            groups[i].forest = os.ctx.build(&members(&groups[i].ids))?;
                        }
                        None => groups.push(Group { forest: os.ctx.build(&members(&[s.id]))?, ids: vec![s.id] }),
                    }
                    *updates += 1;
                }
                SideStore::Timeline(_) => unreachable!(),
            }
            self.regroup_if_due(node, side)?;
        }
        Ok(())
    }

    pub fn delete(&mut self, id: u64) -> Result<()> {
        match self.variant {
            Variant::SqrtDynamic => {}
            _ => return Err(Error::UnsupportedOp),
        }
        let k = self.live.remove(&id).ok_or(Error::UnknownId(id))?;
        let inst = self.instances[k].clone();
        if let Some(l) = self.leaves.get_mut(&inst.leaf) {
            l.retain(|&x| x != k);
        }
        for &(node, side) in &inst.path {
            let live = &self.live;
            let instances = &self.instances;
            let os = self.sides.get_mut(&(node, side.index())).unwrap();
            os.ctx.views.remove(&k);
            if let SideStore::Sqrt { groups, updates } = &mut os.store {
                let gi = groups.iter().position(|g| g.ids.contains(&id)).unwrap();
                groups[gi].ids.retain(|&x| x != id);
                if groups[gi].ids.is_empty() {
                    groups.remove(gi);
                } else {
                    let members: Vec<(usize, SiteRef)> =
                        groups[gi].ids.iter().map(|i| (live[i], instances[live[i]].field.clone())).collect();
                    groups[gi].forest = os.ctx.build(&members)?;
                }
                *updates += 1;
            }
            self.regroup_if_due(node, side)?;
        }
        Ok(())
    }

    // full rebuild of a square-root side once enough updates piled up
    fn regroup_if_due(&mut self, node: usize, side: Side) -> Result<()> {
        let live = &self.live;
        let instances = &self.instances;
        let os = self.sides.get_mut(&(node, side.index())).unwrap();
        let SideStore::Sqrt { groups, updates } = &mut os.store else { return Ok(()) };
        let n: usize = groups.iter().map(|g| g.ids.len()).sum();
        let cap = ceil_sqrt(n);
        if *updates < cap && groups.len() <= 2 * cap {
            return Ok(());
        }
        let mut all: Vec<u64> = groups.iter().flat_map(|g| g.ids.iter().copied()).collect();
        all.sort_unstable();
        let mut fresh = Vec::new();
        for chunk in all.chunks(cap) {
            let members: Vec<(usize, SiteRef)> = chunk.iter().map(|i| (live[i], instances[live[i]].field.clone())).collect();
            fresh.push(Group { ids: chunk.to_vec(), forest: os.ctx.build(&members)? });
        }
        *groups = fresh;
        *updates = 0;
        Ok(())
    }

    /// Live sites, by id.
    pub fn live_sites(&self) -> Vec<Site> {
        match self.variant {
            Variant::Offline => match self.slot() {
                None => Vec::new(),
                Some(j) => {
                    let mut v: Vec<Site> = self
                        .instances
                        .iter()
                        .filter(|i| i.slots.0 <= j && j < i.slots.1)
                        .map(|i| i.field.site)
                        .collect();
                    v.sort_by_key(|s| s.id);
                    v
                }
            },
            _ => self.live.values().map(|&k| self.instances[k].field.site).collect(),
        }
    }

    /// Group sizes of one side of a node, smallest first.
    pub fn group_sizes(&self, node: usize, side: Side) -> Vec<usize> {
        let Some(os) = self.sides.get(&(node, side.index())) else { return Vec::new() };
        let mut v: Vec<usize> = match &os.store {
            SideStore::Binary(g) | SideStore::Sqrt { groups: g, .. } => g.iter().map(|g| g.ids.len()).collect(),
            SideStore::Timeline(seg) => seg.iter().flatten().map(|f| f.len()).collect(),
        };
        v.sort_unstable();
        v
    }

    /// Sites fed to diagram builds on one side of a node so far.
    pub fn rebuild_work(&self, node: usize, side: Side) -> usize {
        self.sides.get(&(node, side.index())).map_or(0, |os| os.ctx.rebuild_work)
    }

    /// Internal nodes with their two sides.
    pub fn node_sides(&self) -> Vec<(usize, Side)> {
        self.sides.keys().map(|&(n, s)| (n, if s == 0 { Side::Left } else { Side::Right })).collect()
    }

    /// Harness self-test only: prefer the larger id among candidates whose
    /// distances differ by at most `window`.
    #[doc(hidden)]
    pub fn inject_tie_fault(&mut self, window: f64) {
        self.tie_fault = window;
    }

    /// Exact geodesic nearest live site to `q`, ties to the smaller id.
    pub fn nearest(&self, q: Point) -> Result<(Site, f64)> {
        if !self.geo.polygon().contains(q) {
            return Err(Error::PointOutsidePolygon);
        }
        let slot = self.slot();
        if self.variant == Variant::Offline && slot.is_none() {
            return Err(Error::NoSites);
        }
        let mut best: Option<(Site, f64)> = None;
        let fault = self.tie_fault;
        let mut offer = |s: Site, d: f64| {
            let wins = |(b, bd): (Site, f64)| {
                if fault > 0.0 && (d - bd).abs() <= fault {
                    s.id > b.id
                } else {
                    tie_less(d, s.id, bd, b.id)
                }
            };
            if best.is_none_or(wins) {
                best = Some((s, d));
            }
        };
        let mut ask = |f: &VoronoiForest| {
            let (i, d) = f.locate(q);
            offer(f.sites[i].site.site, d);
        };
        let (path, leaf) = self.tree.route(q);
        for (node, side) in path {
            let os = &self.sides[&(node, side.other().index())];
            match &os.store {
                SideStore::Binary(groups) | SideStore::Sqrt { groups, .. } => {
                    for f in groups.iter().filter_map(|g| g.forest.as_ref()) {
                        ask(f);
                    }
                }
                SideStore::Timeline(seg) => {
                    if seg.is_empty() {
                        continue;
                    }
                    let (mut v, mut lo, mut hi) = (1, 0, self.times.len().max(1));
                    let j = slot.unwrap();
                    loop {
                        if let Some(f) = &seg[v] {
                            ask(f);
                        }
                        if hi - lo == 1 {
                            break;
                        }
                        let mid = (lo + hi) / 2;
                        if j < mid {
                            v *= 2;
                            hi = mid;
                        } else {
                            v = 2 * v + 1;
                            lo = mid;
                        }
                    }
                }
            }
        }
        // leaf triangles are convex: straight-line distances
        for &k in self.leaves.get(&leaf).map_or(&[][..], |v| v.as_slice()) {
            let inst = &self.instances[k];
            let alive = match self.variant {
                Variant::Offline => inst.slots.0 <= slot.unwrap() && slot.unwrap() < inst.slots.1,
                _ => self.live.get(&inst.field.id()) == Some(&k),
            };
            if alive {
                offer(inst.field.site, inst.field.point().dist(q));
            }
        }
        best.ok_or(Error::NoSites)
    }
}

// adds `item` to the canonical nodes of [from, to) in a segment tree over [lo, hi)
fn cover<T: Clone>(tree: &mut [Vec<T>], v: usize, lo: usize, hi: usize, from: usize, to: usize, item: T) {
    if to <= lo || hi <= from {
        return;
    }
    if from <= lo && hi <= to {
        tree[v].push(item);
        return;
    }
    let mid = (lo + hi) / 2;
    cover(tree, 2 * v, lo, mid, from, to, item.clone());
    cover(tree, 2 * v + 1, mid, hi, from, to, item);
}

/// Canonical segment tree nodes of the slot range `[from, to)` over `slots` slots.
pub fn canonical_nodes(slots: usize, from: usize, to: usize) -> Vec<usize> {
    let mut t: Vec<Vec<usize>> = vec![Vec::new(); 4 * slots.max(1)];
    cover(&mut t, 1, 0, slots.max(1), from, to, 0);
    t.iter().enumerate().filter(|(_, l)| !l.is_empty()).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;
    use crate::oracle::Oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn site(id: u64, x: f64, y: f64) -> Site {
        Site::new(id, Point::new(x, y))
    }

    #[test]
    fn rect6_example() {
        for v in [Variant::InsertOnly, Variant::SqrtDynamic] {
            let mut idx = NNIndex::new(rect6(), v, None).unwrap();
            assert_eq!(idx.nearest(Point::new(1.0, 0.5)).unwrap_err(), Error::NoSites);
            idx.insert(site(1, 0.2, 0.2)).unwrap();
            idx.insert(site(2, 0.2, 0.8)).unwrap();
            let (s, d) = idx.nearest(Point::new(1.5, 0.9)).unwrap();
            assert_eq!(s.id, 2);
            assert!((d - 1.303840).abs() < 1e-6);
            let (s, d) = idx.nearest(Point::new(0.2, 0.2)).unwrap();
            assert_eq!((s.id, d), (1, 0.0));
            assert_eq!(idx.insert(site(2, 0.5, 0.5)).unwrap_err(), Error::DuplicateId(2));
            assert_eq!(idx.insert(site(3, 5.0, 0.5)).unwrap_err(), Error::PointOutsidePolygon);
        }
    }

    #[test]
    fn binary_counter_group_sizes() {
        let mut idx = NNIndex::new(rect6(), Variant::InsertOnly, None).unwrap();
        let (node, side) = (0, Side::Left);
        for i in 0..5 {
            idx.insert(site(i, 0.1 + 0.15 * i as f64, 0.1 + 0.17 * i as f64)).unwrap();
        }
        assert_eq!(idx.tree().side_of_diagonal(0, Point::new(0.5, 0.5)), side);
        assert_eq!(idx.group_sizes(node, side), vec![1, 4]);
        idx.insert(site(9, 0.3, 0.6)).unwrap();
        assert_eq!(idx.group_sizes(node, side), vec![2, 4]);
        assert_eq!(idx.delete(9).unwrap_err(), Error::UnsupportedOp);
    }

    #[test]
    fn offline_schedule_rules() {
        let a = site(1, 0.2, 0.2);
        let u = site(2, 0.2, 0.8);
        let sched = [(1.0, ScheduleOp::Insert(a)), (3.0, ScheduleOp::Delete(1)), (2.0, ScheduleOp::Insert(u)), (4.0, ScheduleOp::Delete(2))];
        let mut idx = NNIndex::new(rect6(), Variant::Offline, Some(&sched)).unwrap();
        assert_eq!(idx.nearest(Point::new(1.5, 0.5)).unwrap_err(), Error::NoSites);
        idx.advance_time(0.5).unwrap();
        assert_eq!(idx.nearest(Point::new(1.5, 0.5)).unwrap_err(), Error::NoSites);
        idx.advance_time(2.5).unwrap();
        assert_eq!(idx.live_sites().len(), 2);
        assert_eq!(idx.nearest(Point::new(1.5, 0.9)).unwrap().0.id, 2);
        idx.advance_time(3.0).unwrap();
        assert_eq!(idx.live_sites(), vec![u]);
        assert_eq!(idx.nearest(Point::new(1.5, 0.1)).unwrap().0.id, 2);
        assert_eq!(idx.advance_time(2.0).unwrap_err(), Error::TimeRegression);
        idx.advance_time(4.0).unwrap();
        assert_eq!(idx.nearest(Point::new(1.5, 0.1)).unwrap_err(), Error::NoSites);
        assert_eq!(idx.insert(a).unwrap_err(), Error::UnsupportedOp);

        let bad = [(1.0, ScheduleOp::Delete(1))];
        assert!(matches!(NNIndex::new(rect6(), Variant::Offline, Some(&bad)), Err(Error::ScheduleInconsistent(_))));
        let twice = [(1.0, ScheduleOp::Insert(a)), (2.0, ScheduleOp::Insert(a))];
        assert!(matches!(NNIndex::new(rect6(), Variant::Offline, Some(&twice)), Err(Error::ScheduleInconsistent(_))));
        assert!(matches!(NNIndex::new(rect6(), Variant::Offline, None), Err(Error::ScheduleInconsistent(_))));
        let empty = NNIndex::new(rect6(), Variant::Offline, Some(&[])).unwrap();
        assert!(empty.node_sides().iter().all(|&(n, s)| empty.group_sizes(n, s).is_empty()));
    }

    #[test]
    fn canonical_cover_of_an_interval() {
        // slots: [1,2) [2,3) [3,4) [4,inf); a site alive on [1,3) covers slots 0..2
        assert_eq!(canonical_nodes(4, 0, 2), vec![2]);
        assert_eq!(canonical_nodes(4, 1, 3), vec![5, 6]);
        assert_eq!(canonical_nodes(8, 1, 8).len(), 3);
    }

    fn replay(variant: Variant, seed: u64, ops: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poly = random_polygon(12 + (seed as usize % 20), seed);
        let o = Oracle::new(poly.clone());
        let mut idx = NNIndex::new(poly.clone(), variant, None).unwrap();
        let mut live: Vec<Site> = Vec::new();
        let mut next = 1;
        for _ in 0..ops {
            let r: f64 = rng.random();
            if r < 0.35 || live.is_empty() {
                let s = Site::new(next, random_point_in(&poly, 1e-4, &mut rng));
                next += 1;
                idx.insert(s).unwrap();
                live.push(s);
            } else if r < 0.5 && variant == Variant::SqrtDynamic {
                let i = rng.random_range(0..live.len());
                idx.delete(live.swap_remove(i).id).unwrap();
            } else {
                let q = random_point_in(&poly, 1e-6, &mut rng);
                let got = idx.nearest(q);
                if live.is_empty() {
                    assert_eq!(got.unwrap_err(), Error::NoSites);
                    continue;
                }
                let (s, d) = got.unwrap();
                let (want, wd) = o.nearest(q, &live).unwrap();
                assert_eq!(s.id, want.id, "seed {seed}");
                assert!((d - wd).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn insert_only_matches_oracle() {
        for seed in 0..4 {
            replay(Variant::InsertOnly, seed, 150);
        }
    }

    #[test]
    fn sqrt_dynamic_matches_oracle() {
        for seed in 10..14 {
            replay(Variant::SqrtDynamic, seed, 200);
        }
    }

    #[test]
    fn offline_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let poly = random_polygon(20, 4);
        let o = Oracle::new(poly.clone());
        let mut sched = Vec::new();
        let mut spans = Vec::new();
        for id in 0..30u64 {
            let s = Site::new(id, random_point_in(&poly, 1e-4, &mut rng));
            let t1 = rng.random_range(0..40) as f64;
            sched.push((t1, ScheduleOp::Insert(s)));
            let t2 = if rng.random::<f64>() < 0.7 { t1 + rng.random_range(1..20) as f64 } else { f64::INFINITY };
            if t2.is_finite() {
                sched.push((t2, ScheduleOp::Delete(id)));
            }
            spans.push((s, t1, t2));
        }
        let mut idx = NNIndex::new(poly.clone(), Variant::Offline, Some(&sched)).unwrap();
        let mut t = 0.0;
        while t < 60.0 {
            idx.advance_time(t).unwrap();
            let alive: Vec<Site> = spans.iter().filter(|(_, a, b)| *a <= t && t < *b).map(|x| x.0).collect();
            for _ in 0..5 {
                let q = random_point_in(&poly, 1e-6, &mut rng);
                match idx.nearest(q) {
                    Err(Error::NoSites) => assert!(alive.is_empty()),
                    Ok((s, d)) => {
                        let (w, wd) = o.nearest(q, &alive).unwrap();
                        assert_eq!(s.id, w.id);
                        assert!((d - wd).abs() < 1e-9);
                    }
                    Err(e) => panic!("{e}"),
                }
            }
            t += 0.75;
        }
    }

    #[test]
    fn variants_agree_on_inserts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let poly = random_polygon(24, 8);
        let mut a = NNIndex::new(poly.clone(), Variant::InsertOnly, None).unwrap();
        let mut b = NNIndex::new(poly.clone(), Variant::SqrtDynamic, None).unwrap();
        for id in 0..40 {
            let s = Site::new(id, random_point_in(&poly, 1e-4, &mut rng));
            a.insert(s).unwrap();
            b.insert(s).unwrap();
            let q = random_point_in(&poly, 1e-6, &mut rng);
            assert_eq!(a.nearest(q).unwrap().0.id, b.nearest(q).unwrap().0.id);
        }
    }

    #[test]
    fn insert_only_rebuild_work_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let poly = random_polygon(16, 2);
        let mut idx = NNIndex::new(poly.clone(), Variant::InsertOnly, None).unwrap();
        let n = 128;
        for id in 0..n {
            idx.insert(Site::new(id, random_point_in(&poly, 1e-4, &mut rng))).unwrap();
        }
        let bound = 2 * n as usize * 7;
        for (node, side) in idx.node_sides() {
            assert!(idx.rebuild_work(node, side) <= bound);
            let sizes = idx.group_sizes(node, side);
            assert!(sizes.windows(2).all(|w| w[0] < w[1]) && sizes.iter().all(|s| s.is_power_of_two()));
        }
    }
}
