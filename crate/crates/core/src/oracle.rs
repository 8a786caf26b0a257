//! Brute-force ground truth: visibility graph plus Dijkstra.
//!
//! Shares nothing with the funnel code except the polygon itself.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::geom_core::{point_in_ring, sort_ranked, Error, Frame, Point, Polygon, Result, Site};

#[derive(Clone, Debug)]
pub struct Oracle {
    poly: Polygon,
    // vis[i][j] for polygon vertices
    vis: Vec<Vec<bool>>,
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Geodesic distances from one point to everything.
#[derive(Clone, Debug)]
pub struct OracleSource {
    src: Point,
    vdist: Vec<f64>,
}

impl Oracle {
    pub fn new(poly: Polygon) -> Oracle {
        let m = poly.m();
        let mut vis = vec![vec![false; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let v = poly.segment_inside(poly.vertex(i), poly.vertex(j));
                vis[i][j] = v;
                vis[j][i] = v;
            }
        }
        Oracle { poly, vis }
    }

    pub fn polygon(&self) -> &Polygon {
        &self.poly
    }

    fn check(&self, p: Point) -> Result<()> {
        if self.poly.contains(p) {
            Ok(())
        } else {
            Err(Error::PointOutsidePolygon)
        }
    }

    /// Single-source Dijkstra from `p` over the polygon vertices.
    pub fn source(&self, p: Point) -> Result<OracleSource> {
        self.check(p)?;
        let m = self.poly.m();
        let mut dist = vec![f64::INFINITY; m];
        let mut heap = BinaryHeap::new();
        for (v, d) in dist.iter_mut().enumerate() {
            if self.poly.segment_inside(p, self.poly.vertex(v)) {
                *d = p.dist(self.poly.vertex(v));
                heap.push(Item(*d, v));
            }
        }
        let mut done = vec![false; m];
        while let Some(Item(d, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for v in 0..m {
                if self.vis[u][v] {
                    let nd = d + self.poly.vertex(u).dist(self.poly.vertex(v));
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(Item(nd, v));
                    }
                }
            }
        }
        Ok(OracleSource { src: p, vdist: dist })
    }

    pub fn distance_from(&self, s: &OracleSource, q: Point) -> Result<f64> {
        self.check(q)?;
        if self.poly.segment_inside(s.src, q) {
            return Ok(s.src.dist(q));
        }
        let mut best = f64::INFINITY;
        for v in 0..self.poly.m() {
            let pv = self.poly.vertex(v);
            let cand = s.vdist[v] + pv.dist(q);
            if cand < best && self.poly.segment_inside(pv, q) {
                best = cand;
            }
        }
        Ok(best)
    }

    pub fn distance(&self, p: Point, q: Point) -> Result<f64> {
        let s = self.source(p)?;
        self.distance_from(&s, q)
    }

    /// Sites ordered by `(distance to q, id)`, near-ties grouped by id.
    pub fn sorted(&self, q: Point, sites: &[Site]) -> Result<Vec<(Site, f64)>> {
        let s = self.source(q)?;
        let mut v = Vec::with_capacity(sites.len());
        for site in sites {
            v.push((self.distance_from(&s, site.point)?, site.id));
        }
        sort_ranked(&mut v);
        Ok(v
            .into_iter()
            .map(|(d, id)| (*sites.iter().find(|s| s.id == id).unwrap(), d))
            .collect())
    }

    /// The `k`-th (1-based) site by distance from `q`.
    pub fn rank(&self, q: Point, sites: &[Site], k: usize) -> Result<(Site, f64)> {
        if k == 0 || k > sites.len() {
            return Err(Error::KTooLarge);
        }
        Ok(self.sorted(q, sites)?[k - 1])
    }

    pub fn nearest(&self, q: Point, sites: &[Site]) -> Result<(Site, f64)> {
        if sites.is_empty() {
            return Err(Error::NoSites);
        }
        self.rank(q, sites, 1)
    }
}

/// Dense sign-change march of `{fs = ft}` over the region `ring`, in the
/// coordinates of `frame`: columns `step` apart, each column scanned at
/// resolution `step * 16` and refined by bisection. Returns points sorted by
/// frame x.
pub fn bisector_march<F, G>(ring: &[Point], frame: &Frame, fs: F, ft: G, step: f64) -> Vec<Point>
where
    F: Fn(Point) -> f64,
    G: Fn(Point) -> f64,
{
    let local: Vec<Point> = ring.iter().map(|&p| frame.to_local(p)).collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &local {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
    }
    let g = |p: Point| {
        let w = frame.to_world(p);
        fs(w) - ft(w)
    };
    let mut out = Vec::new();
    let n = local.len();
    let mut x = x0 + step * 0.5;
    while x < x1 {
        // exact inside intervals of the vertical line
        let mut ys = Vec::new();
        for i in 0..n {
            let (a, b) = (local[i], local[(i + 1) % n]);
            if (a.x > x) != (b.x > x) {
                ys.push(a.y + (x - a.x) / (b.x - a.x) * (b.y - a.y));
            }
        }
        ys.sort_by(|a, b| a.total_cmp(b));
        for iv in ys.chunks(2) {
            if iv.len() < 2 {
                continue;
            }
            let (lo, hi) = (iv[0] + 1e-12, iv[1] - 1e-12);
            if hi <= lo {
                continue;
            }
            let cells = libm::ceil((hi - lo) / (step * 16.0)).max(1.0) as usize;
            let mut py = lo;
            let mut pg = g(Point::new(x, py));
            for c in 1..=cells {
                let y = lo + (hi - lo) * c as f64 / cells as f64;
                let gy = g(Point::new(x, y));
                if (pg < 0.0) != (gy < 0.0) {
                    let (mut a, mut b, mut ga) = (py, y, pg);
                    for _ in 0..60 {
                        let m = 0.5 * (a + b);
                        let gm = g(Point::new(x, m));
                        if (gm < 0.0) == (ga < 0.0) {
                            a = m;
                            ga = gm;
                        } else {
                            b = m;
                        }
                    }
                    let p = frame.to_world(Point::new(x, 0.5 * (a + b)));
                    if point_in_ring(ring, p, 1e-12) {
                        out.push(p);
                    }
                }
                py = y;
                pg = gy;
            }
        }
        x += step;
    }
    out
}

/// Distance from `p` to a polyline.
pub fn dist_to_polyline(p: Point, line: &[Point]) -> f64 {
    match line.len() {
        0 => f64::INFINITY,
        1 => p.dist(line[0]),
        _ => line
            .windows(2)
            .map(|w| crate::geom_core::point_segment_dist(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;
    use crate::geom_core::{DecompositionTree, Side};

    #[test]
    fn rect6_distance_is_euclidean() {
        let o = Oracle::new(rect6());
        let d = o.distance(Point::new(0.2, 0.2), Point::new(1.8, 0.8)).unwrap();
        assert!((d - libm::sqrt(2.92)).abs() < 1e-12);
        assert_eq!(o.distance(Point::new(0.3, 0.3), Point::new(0.3, 0.3)).unwrap(), 0.0);
    }

    #[test]
    fn lshape6_wraps_reflex_corner() {
        let o = Oracle::new(lshape6());
        let d = o.distance(Point::new(0.2, 0.5), Point::new(1.2, 1.8)).unwrap();
        assert!((d - (libm::sqrt(0.89) + libm::sqrt(0.68))).abs() < 1e-12);
    }

    #[test]
    fn outside_points_error() {
        let o = Oracle::new(lshape6());
        assert_eq!(o.distance(Point::new(0.5, 1.5), Point::new(0.2, 0.2)).unwrap_err(), Error::PointOutsidePolygon);
    }

    #[test]
    fn ranks_follow_sorted_order() {
        let o = Oracle::new(rect6());
        let sites = [Site::new(1, Point::new(0.2, 0.2)), Site::new(2, Point::new(0.2, 0.8))];
        let q = Point::new(1.5, 0.9);
        assert_eq!(o.rank(q, &sites, 1).unwrap().0.id, 2);
        assert_eq!(o.rank(q, &sites, 2).unwrap().0.id, 1);
        let all = o.sorted(q, &sites).unwrap();
        for k in 1..=2 {
            assert_eq!(o.rank(q, &sites, k).unwrap().0, all[k - 1].0);
        }
        assert!((o.nearest(q, &sites).unwrap().1 - 1.303840).abs() < 1e-6);
    }

    #[test]
    fn exact_ties_go_to_the_smaller_id() {
        let o = Oracle::new(rect6());
        let sites = [Site::new(7, Point::new(0.2, 0.2)), Site::new(3, Point::new(0.2, 0.8))];
        assert_eq!(o.nearest(Point::new(1.5, 0.5), &sites).unwrap().0.id, 3);
    }

    #[test]
    fn mirror_pair_march_is_the_midline() {
        let p = rect6();
        let tree = DecompositionTree::build(&p);
        let portal = tree.portal(0, Side::Left);
        let o = Oracle::new(p);
        let (s, t) = (Point::new(0.2, 0.2), Point::new(0.2, 0.8));
        let (os, ot) = (o.source(s).unwrap(), o.source(t).unwrap());
        let line = bisector_march(
            &portal.far,
            &portal.frame,
            |q| o.distance_from(&os, q).unwrap(),
            |q| o.distance_from(&ot, q).unwrap(),
            1e-2,
        );
        assert!(!line.is_empty());
        assert!(line.iter().all(|q| (q.y - 0.5).abs() < 1e-9));
    }

    #[test]
    fn march_is_empty_without_crossing() {
        let p = rect6();
        let tree = DecompositionTree::build(&p);
        let portal = tree.portal(0, Side::Left);
        let (s, t) = (Point::new(0.9, 0.5), Point::new(0.1, 0.5));
        let line = bisector_march(&portal.far, &portal.frame, |q| q.dist(s), |q| q.dist(t), 1e-2);
        assert!(line.is_empty());
    }
}
