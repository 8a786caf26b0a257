//! Timing grid over site count and polygon size, with log-log trend slopes.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Result;
use geodesic_core::dynamic_nn::{NNIndex, Variant};
use geodesic_core::fixtures::{random_point_in, random_polygon_with};
use geodesic_core::oracle::Oracle;
use geodesic_core::{slope, Site};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const HEADER: &str = "n,m,op,mean_us,p99_us";

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub queries: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub n: usize,
    pub m: usize,
    pub op: &'static str,
    pub mean_us: f64,
    pub p99_us: f64,
}

fn stats(mut v: Vec<f64>) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let i = ((v.len() as f64 * 0.99).ceil() as usize).clamp(1, v.len()) - 1;
    (mean, v[i])
}

fn micros<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64() * 1e6)
}

/// One polygon per `m`; for each `n`, a fresh insert-only index over `n`
/// random sites, then the same query points against the index and the oracle.
pub fn run(cfg: &BenchConfig) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &m in &cfg.ms {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ m as u64);
        let poly = random_polygon_with(m, &mut rng);
        let oracle = Oracle::new(poly.clone());
        for &n in &cfg.ns {
            let sites: Vec<Site> = (0..n).map(|i| Site::new(i as u64, random_point_in(&poly, 1e-4, &mut rng))).collect();
            let qs: Vec<_> = (0..cfg.queries).map(|_| random_point_in(&poly, 1e-6, &mut rng)).collect();
            let mut idx = NNIndex::new(poly.clone(), Variant::InsertOnly, None)?;
            let mut ins = Vec::with_capacity(n);
            for &s in &sites {
                let (r, us) = micros(|| idx.insert(s));
                r?;
                ins.push(us);
            }
            let mut qt = Vec::with_capacity(qs.len());
            let mut ot = Vec::with_capacity(qs.len());
            for &q in &qs {
                let (a, us) = micros(|| idx.nearest(q));
                qt.push(us);
                let (b, us) = micros(|| oracle.nearest(q, &sites));
                ot.push(us);
                debug_assert_eq!(a?.0.id, b?.0.id);
            }
            for (op, v) in [("insert", ins), ("query", qt), ("oracle_query", ot)] {
                let (mean_us, p99_us) = stats(v);
                rows.push(Row { n, m, op, mean_us, p99_us });
            }
        }
    }
    Ok(rows)
}

pub fn csv(rows: &[Row]) -> String {
    let mut out = format!("{HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{},{:.3},{:.3}", r.n, r.m, r.op, r.mean_us, r.p99_us).unwrap();
    }
    out
}

/// Log-log slope of mean time against `n` for one `(m, op)`, if at least two sizes.
pub fn trend(rows: &[Row], m: usize, op: &str) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.m == m && r.op == op && r.mean_us > 0.0)
        .map(|r| ((r.n as f64).ln(), r.mean_us.ln()))
        .unzip();
    (xs.len() >= 2).then(|| slope(&xs, &ys))
}

/// Slope lines for every `m` and op.
pub fn trends(rows: &[Row]) -> String {
    let mut ms: Vec<usize> = rows.iter().map(|r| r.m).collect();
    ms.dedup();
    let mut out = String::new();
    for m in ms {
        for op in ["insert", "query", "oracle_query"] {
            if let Some(s) = trend(rows, m, op) {
                writeln!(out, "slope m={m} op={op} {s:.3}").unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_header_only() {
        let rows = run(&BenchConfig { ns: vec![], ms: vec![8], queries: 10, seed: 1 }).unwrap();
        assert!(rows.is_empty());
        assert_eq!(csv(&rows), format!("{HEADER}\n"));
        assert_eq!(trends(&rows), "");
    }

    #[test]
    fn small_grid_rows() {
        let rows = run(&BenchConfig { ns: vec![4, 8], ms: vec![8], queries: 5, seed: 1 }).unwrap();
        assert_eq!(rows.len(), 6);
        let text = csv(&rows);
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(1).unwrap().starts_with("4,8,insert,"));
        assert!(trend(&rows, 8, "query").is_some());
    }

    #[test]
    fn percentile() {
        let (mean, p99) = stats((1..=100).map(f64::from).collect());
        assert_eq!(mean, 50.5);
        assert_eq!(p99, 99.0);
    }
}
