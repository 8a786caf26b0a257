//! Approximate levels of the distance functions by sampling, the hierarchy
//! of sampled lower envelopes used to report the k lowest functions, and
//! shallow cuttings: trapezoids of a level raised to prisms with conflict
//! lists.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bisector::SideRef;
use crate::geom_core::{point_in_ring, sort_ranked, Error, Point, Result};
use crate::korder::{build_k_level, Decomposition, KEdge, KLevelSubdivision, PseudoTrapezoid, SiteSet};
use crate::math::{ceil, floor, ln, log2};
use crate::voronoi_d::voronoi_of;

pub const C_SAMPLE: f64 = 4.0;
pub const C_LEVEL: f64 = 2.0;
pub const MAX_RETRIES: usize = 8;
pub const SANDWICH_SLACK: f64 = 4.0;
pub const SANDWICH_POINTS: usize = 200;
const CORNER_TOL: f64 = 1e-9;

/// Sample size, target level and the range `t` is drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelParams {
    pub k: usize,
    pub eps: f64,
    pub r: usize,
    pub h: usize,
    pub t_lo: usize,
    pub t_hi: usize,
    pub small_k: bool,
}

pub fn level_params(n: usize, k: usize, eps: f64) -> LevelParams {
    let lnn = ln(n.max(2) as f64);
    if (k as f64) < lnn / (eps * eps) {
        let hi = (ceil(k as f64 * (1.0 + eps)) as usize).min(n);
        return LevelParams { k, eps, r: n, h: k, t_lo: k.min(hi), t_hi: hi, small_k: true };
    }
    let r = (ceil(C_SAMPLE * n as f64 / (k as f64 * eps * eps) * lnn) as usize).min(n);
    let h = ceil(C_LEVEL / (eps * eps) * lnn) as usize;
    let hi = (floor((1.0 + eps / 2.0) * h as f64) as usize).min(r);
    let lo = (ceil((1.0 + eps / 3.0) * h as f64) as usize).min(hi);
    LevelParams { k, eps, r, h, t_lo: lo.max(1), t_hi: hi.max(1), small_k: false }
}

/// The `t`-level of a random sample, standing in for the k-level of all sites.
pub struct ApproxLevel {
    pub params: LevelParams,
    pub sample: Vec<u64>,
    pub t: usize,
    pub level: KLevelSubdivision,
    pub seed: u64,
    pub attempts: usize,
    /// Fraction of the grid points that passed the sandwich check.
    pub sandwich: f64,
}

/// Up to `count` points of a regular grid inside `ring`, refined until enough fall inside.
pub fn grid_points(ring: &[Point], count: usize) -> Vec<Point> {
    let (mut lo, mut hi) = (ring[0], ring[0]);
    for v in ring {
        lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    let mut g = 16;
    loop {
        let mut out = Vec::new();
        for i in 0..g {
            for j in 0..g {
                let q = Point::new(
                    lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / g as f64,
                    lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / g as f64,
                );
                if point_in_ring(ring, q, 0.0) {
                    out.push(q);
                }
            }
        }
        if out.len() >= count || g >= 512 {
            if out.len() > count {
                // spread the kept points over the whole grid
                let step = out.len() as f64 / count as f64;
                out = (0..count).map(|i| out[(i as f64 * step) as usize]).collect();
            }
            return out;
        }
        g *= 2;
    }
}

fn sorted_dists(sites: &[SideRef], q: Point) -> Vec<f64> {
    let mut v: Vec<f64> = sites.iter().map(|s| s.dist(q)).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

// one sampling round; None when the size or sandwich check fails
fn try_level(set: &mut SiteSet, p: &LevelParams, rng: &mut ChaCha8Rng, seed: u64, attempt: usize) -> Result<Option<ApproxLevel>> {
    let n = set.len();
    let mut ids = set.ids();
    let sample: Vec<u64> = if p.r >= n {
        ids
    } else {
        ids.shuffle(rng);
        ids.truncate(p.r);
        ids.sort_unstable();
        ids
    };
    let t = rng.random_range(p.t_lo..=p.t_hi);
    let mut sub = set.subset(&sample);
    let level = build_k_level(&mut sub, t);
    let r_sites = sub.sites.clone();
    set.restore(sub);
    let level = level?;
    let r = sample.len();
    if level.complexity() > 8 * t * (r - t) + 4 * r + 8 {
        return Ok(None);
    }
    let pts = grid_points(&set.portal.far, SANDWICH_POINTS);
    let upper = (1.0 + p.eps) * p.k as f64 * SANDWICH_SLACK;
    let mut good = 0;
    for &q in &pts {
        let z = sorted_dists(&r_sites, q)[t - 1];
        let rank = set.sites.iter().filter(|s| s.dist(q) <= z + 1e-12).count();
        if rank >= p.k && rank as f64 <= upper {
            good += 1;
        }
    }
    let frac = good as f64 / pts.len().max(1) as f64;
    if good < pts.len() {
        return Ok(None);
    }
    Ok(Some(ApproxLevel { params: *p, sample, t, level, seed, attempts: attempt + 1, sandwich: frac }))
}

/// An approximate k-level, resampled up to eight times until the size and
/// sandwich checks pass.
pub fn approximate_k_level(set: &mut SiteSet, k: usize, eps: f64, seed: u64) -> Result<ApproxLevel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    approximate_with(set, k, eps, seed, &mut rng)
}

fn approximate_with(set: &mut SiteSet, k: usize, eps: f64, seed: u64, rng: &mut ChaCha8Rng) -> Result<ApproxLevel> {
    let n = set.len();
    if n == 0 {
        return Err(Error::NoSites);
    }
    if k == 0 || k > n {
        return Err(Error::KTooLarge);
    }
    let p = level_params(n, k, eps);
    for attempt in 0..MAX_RETRIES {
        if let Some(a) = try_level(set, &p, rng, seed, attempt)? {
            return Ok(a);
        }
    }
    Err(Error::RetriesExhausted)
}

/// Lower envelope of one sample, decomposed, with conflict lists against all sites.
pub struct EnvelopeLevel {
    pub sample: Vec<u64>,
    pub decomposition: Decomposition,
    /// Per trapezoid, per corner: sites strictly below the envelope there.
    pub corner_conflicts: Vec<Vec<Vec<u64>>>,
    /// Per trapezoid: union of its corners' lists.
    pub conflicts: Vec<Vec<u64>>,
    pub conflict_total: usize,
}

pub struct HierarchyCopy {
    pub permutation: Vec<u64>,
    pub levels: Vec<EnvelopeLevel>,
}

/// Three independent nested-sample hierarchies over the same sites.
pub struct SampleHierarchy {
    pub sites: Vec<SideRef>,
    pub copies: Vec<HierarchyCopy>,
    pub far: Vec<Point>,
}

fn envelope_level(set: &mut SiteSet, sample: &[u64]) -> Result<EnvelopeLevel> {
    let portal = set.portal.clone();
    let mut sub = set.subset(sample);
    let r_sites = sub.sites.clone();
    let vd = voronoi_of(&portal, &r_sites, &mut sub.cache);
    set.restore(sub);
    let vd = vd?;
    let edges: Vec<KEdge> = vd.edges.iter().map(|e| KEdge::of_vedge(&vd, e)).collect();
    let dec = Decomposition::build(&portal, edges, |q| {
        let mut v: Vec<(f64, u64)> = r_sites.iter().map(|s| (s.dist(q), s.id())).collect();
        sort_ranked(&mut v);
        v[0].1
    });
    let ntr = dec.traps.len();
    let mut corner_conflicts: Vec<Vec<Vec<u64>>> = dec.traps.iter().map(|t| vec![Vec::new(); t.corners.len()]).collect();
    let neighbors = dec.neighbors();
    let ceiling = |t: usize, c: usize| set.by_id(dec.traps[t].label).dist(dec.traps[t].corners[c]);
    let ceilings: Vec<Vec<f64>> = (0..ntr).map(|t| (0..dec.traps[t].corners.len()).map(|c| ceiling(t, c)).collect()).collect();
    // diagonal points where the envelope changes hands: a site below the
    // envelope somewhere on the diagonal is below it at one of these
    let mut params = vec![0.0];
    params.extend(vd.breaks.iter().copied());
    params.push(1.0);
    let env: Vec<f64> = params
        .iter()
        .map(|&l| r_sites.iter().map(|s| s.dist_on_diagonal(l)).fold(f64::INFINITY, f64::min))
        .collect();
    for s in &set.sites {
        if sample.binary_search(&s.id()).is_ok() {
            continue;
        }
        let below = |t: usize| -> Vec<usize> {
            (0..dec.traps[t].corners.len()).filter(|&c| s.dist(dec.traps[t].corners[c]) < ceilings[t][c]).collect()
        };
        let mut seen = vec![false; ntr];
        let mut queue = VecDeque::new();
        for (j, &l) in params.iter().enumerate() {
            if s.dist_on_diagonal(l) < env[j] {
                let p = portal.point_at(l);
                for t in 0..ntr {
                    if !seen[t] && dec.contains(t, p) {
                        seen[t] = true;
                        queue.push_back(t);
                    }
                }
            }
        }
        while let Some(t) = queue.pop_front() {
            let b = below(t);
            if b.is_empty() {
                continue;
            }
            for c in b {
                corner_conflicts[t][c].push(s.id());
            }
            for &u in &neighbors[t] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    let conflicts: Vec<Vec<u64>> = corner_conflicts
        .iter()
        .map(|cs| {
            let set: BTreeSet<u64> = cs.iter().flatten().copied().collect();
            set.into_iter().collect()
        })
        .collect();
    let conflict_total = conflicts.iter().map(|c| c.len()).sum();
    Ok(EnvelopeLevel { sample: sample.to_vec(), decomposition: dec, corner_conflicts, conflicts, conflict_total })
}

fn build_copy(set: &mut SiteSet, rng: &mut ChaCha8Rng) -> Result<HierarchyCopy> {
    let mut perm = set.ids();
    perm.shuffle(rng);
    let n = perm.len();
    let top = ceil(log2(n.max(1) as f64)) as usize;
    let mut levels = Vec::new();
    for i in 0..=top {
        let mut sample: Vec<u64> = perm[..(1usize << i).min(n)].to_vec();
        sample.sort_unstable();
        levels.push(envelope_level(set, &sample)?);
    }
    Ok(HierarchyCopy { permutation: perm, levels })
}

/// Three hierarchies of lower envelopes of nested random samples.
pub fn build_hierarchy(set: &mut SiteSet, seed: u64) -> Result<SampleHierarchy> {
    if set.is_empty() {
        return Err(Error::NoSites);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut copies = Vec::new();
    for _ in 0..3 {
        copies.push(build_copy(set, &mut rng)?);
    }
    Ok(SampleHierarchy { sites: set.sites.clone(), copies, far: set.portal.far.clone() })
}

/// How a k-lowest query was answered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryPath {
    /// Hierarchy copy and level that succeeded.
    Level { copy: usize, level: usize, j: usize },
    /// Every attempt failed; distances to all sites were compared.
    Fallback,
}

impl SampleHierarchy {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    fn by_id(&self, id: u64) -> &SideRef {
        &self.sites[self.sites.binary_search_by_key(&id, |s| s.id()).unwrap()]
    }

    fn attempt(&self, copy: usize, level: usize, q: Point, k: usize, cap: f64) -> Option<Vec<(f64, u64)>> {
        let lv = &self.copies[copy].levels[level];
        let t = lv.decomposition.locate(q)?;
        let list = &lv.conflicts[t];
        if list.len() as f64 > cap {
            return None;
        }
        let c = lv.decomposition.traps[t].label;
        let top = self.by_id(c).dist(q);
        let mut cand: Vec<(f64, u64)> = list.iter().map(|&id| (self.by_id(id).dist(q), id)).collect();
        cand.push((top, c));
        cand.retain(|x| x.0 <= top);
        if cand.len() < k {
            return None;
        }
        sort_ranked(&mut cand);
        cand.truncate(k);
        Some(cand)
    }

    /// The k nearest sites to `q` in increasing order, with their distances.
    pub fn query_k_lowest(&self, q: Point, k: usize) -> (Vec<(f64, u64)>, QueryPath) {
        let n = self.len();
        let k = k.min(n);
        if k == 0 {
            return (Vec::new(), QueryPath::Fallback);
        }
        let top = self.copies[0].levels.len() - 1;
        let mut j = 1;
        loop {
            let delta = 1.0 / (1u64 << j) as f64;
            let m = ceil(n as f64 * delta / k as f64).max(1.0);
            let level = (ceil(log2(m)) as usize).min(top);
            let cap = k as f64 / (delta * delta);
            for copy in 0..self.copies.len() {
                if let Some(v) = self.attempt(copy, level, q, k, cap) {
                    return (v, QueryPath::Level { copy, level, j });
                }
            }
            if level == 0 && cap >= n as f64 {
                break;
            }
            j += 1;
        }
        let mut all: Vec<(f64, u64)> = self.sites.iter().map(|s| (s.dist(q), s.id())).collect();
        sort_ranked(&mut all);
        all.truncate(k);
        (all, QueryPath::Fallback)
    }

    /// Sites whose distance to `q` is below `z`, by doubling k.
    pub fn conflict_below(&self, q: Point, z: f64) -> Vec<u64> {
        let n = self.len();
        let mut k = 1;
        loop {
            let (v, _) = self.query_k_lowest(q, k);
            if k >= n || v.last().is_some_and(|x| x.0 >= z) {
                let mut out: Vec<u64> = v.iter().filter(|x| x.0 < z).map(|x| x.1).collect();
                out.sort_unstable();
                return out;
            }
            k = (2 * k).min(n);
        }
    }
}

/// A trapezoid of the level raised to a prism below the ceiling site's distance.
#[derive(Clone, Debug)]
pub struct Prism {
    pub trapezoid: PseudoTrapezoid,
    pub ceiling: u64,
    pub corner_conflicts: Vec<Vec<u64>>,
    pub conflicts: Vec<u64>,
}

pub struct ShallowCutting {
    pub k: usize,
    pub eps: f64,
    pub level: ApproxLevel,
    pub prisms: Vec<Prism>,
    /// Upper bound on conflict sizes, when it is below the number of sites.
    pub bound: Option<usize>,
    pub attempts: usize,
}

impl ShallowCutting {
    /// Prism whose projection contains `q`.
    pub fn prism_at(&self, q: Point) -> Option<usize> {
        self.level.level.decomposition.locate(q)
    }

    pub fn contains(&self, prism: usize, q: Point) -> bool {
        self.level.level.decomposition.contains(prism, q)
    }

    pub fn max_conflict(&self) -> usize {
        self.prisms.iter().map(|p| p.conflicts.len()).max().unwrap_or(0)
    }

    /// Conflict list size to number of prisms.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for p in &self.prisms {
            *h.entry(p.conflicts.len()).or_insert(0) += 1;
        }
        h
    }
}

pub fn conflict_bound(n: usize, k: usize, eps: f64) -> Option<usize> {
    let b = floor(4.0 * k as f64 * (1.0 + eps) + 1e-9) as usize;
    (b <= n).then_some(b)
}

/// A k-shallow cutting: the approximate level's trapezoids raised to prisms,
/// each with the sites passing below it. Rebuilt with fresh randomness when
/// a conflict list exceeds the size bound.
pub fn build_shallow_cutting(set: &mut SiteSet, k: usize, eps: f64, seed: u64) -> Result<ShallowCutting> {
    let n = set.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hierarchy = build_hierarchy(set, rng.next_u64())?;
    let bound = conflict_bound(n, k, eps);
    for attempt in 0..MAX_RETRIES {
        let level = match approximate_with(set, k, eps, seed, &mut rng) {
            Ok(l) => l,
            Err(Error::RetriesExhausted) => continue,
            Err(e) => return Err(e),
        };
        let dec = &level.level.decomposition;
        let mut prisms = Vec::with_capacity(dec.traps.len());
        for tr in &dec.traps {
            let ceiling = hierarchy.by_id(tr.label);
            let corner_conflicts: Vec<Vec<u64>> = tr
                .corners
                .iter()
                .map(|&c| {
                    let mut v = hierarchy.conflict_below(c, ceiling.dist(c) + CORNER_TOL);
                    if let Err(i) = v.binary_search(&tr.label) {
                        v.insert(i, tr.label);
                    }
                    v
                })
                .collect();
            let conflicts: BTreeSet<u64> = corner_conflicts.iter().flatten().copied().collect();
            prisms.push(Prism { trapezoid: tr.clone(), ceiling: tr.label, corner_conflicts, conflicts: conflicts.into_iter().collect() });
        }
        if bound.is_some_and(|b| prisms.iter().any(|p| p.conflicts.len() > b)) {
            continue;
        }
        return Ok(ShallowCutting { k, eps, level, prisms, bound, attempts: attempt + 1 });
    }
    Err(Error::RetriesExhausted)
}
