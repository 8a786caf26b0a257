//! Hand-built polygons and seeded random instances shared by tests, the fuzzer and benchmarks.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom_core::{normalize, point_segment_dist, Point, Polygon};
use crate::math;

/// `(0,0),(1,0),(2,0),(2,1),(1,1),(0,1)`: a 2x1 rectangle with two straight vertices.
pub fn rect6() -> Polygon {
    Polygon::new(pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (0.0, 1.0)])).unwrap()
}

/// `(0,0),(2,0),(2,2),(1,2),(1,1),(0,1)`: reflex vertex at `(1,1)`.
pub fn lshape6() -> Polygon {
    Polygon::new(pts(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (1.0, 2.0), (1.0, 1.0), (0.0, 1.0)])).unwrap()
}

pub fn pts(v: &[(f64, f64)]) -> Vec<Point> {
    v.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

/// Random star-shaped polygon with `m` vertices in the unit box.
pub fn random_polygon(m: usize, seed: u64) -> Polygon {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_polygon_with(m, &mut rng)
}

pub fn random_polygon_with<R: Rng>(m: usize, rng: &mut R) -> Polygon {
    let m = m.max(3);
    loop {
        let step = 2.0 * core::f64::consts::PI / m as f64;
        let v: Vec<Point> = (0..m)
            .map(|i| {
                let a = (i as f64 + rng.random_range(-0.3..0.3)) * step;
                let r = rng.random_range(0.25..1.0);
                Point::new(r * math::cos(a), r * math::sin(a))
            })
            .collect();
        let v = normalize(&v);
        if !well_spread(&v) {
            continue;
        }
        if let Ok(p) = Polygon::new(v) {
            return p;
        }
    }
}

/// Random simple polygon, generally not star-shaped: random points joined
/// in a random order, then crossings removed by 2-opt reversals.
pub fn random_simple_polygon_with<R: Rng>(m: usize, rng: &mut R) -> Polygon {
    let m = m.max(3);
    loop {
        let mut v: Vec<Point> = (0..m).map(|_| Point::new(rng.random(), rng.random())).collect();
        // each reversal shortens the tour, so this ends
        'untangle: loop {
            for i in 0..m {
                for j in i + 2..m {
                    if i == 0 && j == m - 1 {
                        continue;
                    }
                    let (a, b, c, d) = (v[i], v[i + 1], v[j], v[(j + 1) % m]);
                    if crate::geom_core::segment_intersection(a, b, c, d).is_some() {
                        v[i + 1..=j].reverse();
                        continue 'untangle;
                    }
                }
            }
            break;
        }
        let v = normalize(&v);
        if !well_spread(&v) {
            continue;
        }
        if let Ok(p) = Polygon::new(v) {
            return p;
        }
    }
}

// keeps instances away from near-collinear triples and tiny edges
fn well_spread(v: &[Point]) -> bool {
    let n = v.len();
    for i in 0..n {
        let (a, b, c) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
        if a.dist(b) < 0.02 {
            return false;
        }
        let s = crate::geom_core::orient(a, b, c) / (a.dist(b) * b.dist(c));
        if s.abs() < 0.02 {
            return false;
        }
    }
    true
}

/// Uniform point inside `p` at least `margin` away from its boundary.
pub fn random_point_in<R: Rng>(p: &Polygon, margin: f64, rng: &mut R) -> Point {
    let vs = p.vertices();
    let (mut lo, mut hi) = (vs[0], vs[0]);
    for v in vs {
        lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    loop {
        let q = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if !p.contains(q) {
            continue;
        }
        let n = vs.len();
        if (0..n).all(|i| point_segment_dist(q, vs[i], vs[(i + 1) % n]) > margin) {
            return q;
        }
    }
}

/// Uniform point inside a ring (e.g. one side of a diagonal).
pub fn random_point_in_ring<R: Rng>(ring: &[Point], margin: f64, rng: &mut R) -> Point {
    loop {
        if let Some(q) = try_random_point_in_ring(ring, margin, rng, 1 << 16) {
            return q;
        }
    }
}

/// Like [`random_point_in_ring`], but gives up after `tries` samples; a sliver
/// ring may have no point that far from its boundary.
pub fn try_random_point_in_ring<R: Rng>(ring: &[Point], margin: f64, rng: &mut R, tries: usize) -> Option<Point> {
    let (mut lo, mut hi) = (ring[0], ring[0]);
    for v in ring {
        lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    let n = ring.len();
    (0..tries).find_map(|_| {
        let q = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        (crate::geom_core::point_in_ring(ring, q, 0.0)
            && (0..n).all(|i| point_segment_dist(q, ring[i], ring[(i + 1) % n]) > margin))
        .then_some(q)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untangled_polygons_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut reflex = 0;
        for m in [3, 8, 20, 40] {
            let p = random_simple_polygon_with(m, &mut rng);
            assert_eq!(p.m(), m);
            assert!(p.area() > 0.0);
            reflex += (0..m).filter(|&i| p.is_reflex(i)).count();
        }
        assert!(reflex > 10);
    }
}
