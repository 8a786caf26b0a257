//! Differential fuzzing of the index against the oracle, with reproducer
//! minimization and replay.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use geodesic_core::dynamic_nn::Variant;
use geodesic_core::fixtures::{random_polygon_with, random_simple_polygon_with};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::input::{polygon_text, usage, Scene};
use crate::script::{
    format_schedule, format_script, generate, parse_schedule, parse_script, parse_variant, variant_name, Backend, Op, Runner,
};

pub const MAX_M: usize = 64;
pub const MAX_N: usize = 256;
pub const MAX_OPS: usize = 5000;
pub const DIST_TOL: f64 = 1e-9;
/// Tie window used by `--inject-fault`.
pub const FAULT_WINDOW: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct FuzzConfig {
    pub m: usize,
    pub n: usize,
    pub ops: usize,
    pub cases: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub out: PathBuf,
    pub fault: bool,
}

impl FuzzConfig {
    pub fn check(&self) -> Result<()> {
        if !(3..=MAX_M).contains(&self.m) || !(1..=MAX_N).contains(&self.n) || self.ops == 0 || self.ops > MAX_OPS {
            return Err(usage(format!("fuzz bounds: 3 <= m <= {MAX_M}, 1 <= n <= {MAX_N}, 1 <= ops <= {MAX_OPS}")));
        }
        if self.variants.is_empty() {
            return Err(usage("no variant selected"));
        }
        Ok(())
    }
}

/// A failing case: its inputs and the first disagreement.
#[derive(Clone, Debug)]
pub struct Mismatch {
    pub query: usize,
    pub got: String,
    pub want: String,
}

pub struct Case {
    pub scene: Scene,
    pub polygon: String,
    pub variant: Variant,
    pub script: Vec<Op>,
    pub schedule: Option<Vec<(f64, Op)>>,
    pub fault: bool,
}

impl Case {
    fn runner(&self, backend: Backend) -> Result<Runner<'_>, geodesic_core::Error> {
        let mut r = Runner::new(&self.scene, backend, self.schedule.as_deref())?;
        if self.fault {
            r.inject_tie_fault(FAULT_WINDOW);
        }
        Ok(r)
    }

    /// Replays `ops` on both sides; the first differing answer or error.
    pub fn compare(&self, ops: &[Op]) -> Option<Mismatch> {
        let (mut a, mut b) = match (self.runner(Backend::Index(self.variant)), self.runner(Backend::Oracle)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), Err(f)) if e == f => return None,
            (a, b) => {
                let show = |r: &Result<Runner, geodesic_core::Error>| r.as_ref().err().map_or("ok".to_string(), |e| e.to_string());
                return Some(Mismatch { query: 0, got: show(&a), want: show(&b) });
            }
        };
        let mut q = 0;
        for &op in ops {
            let (x, y) = (a.apply(op), b.apply(op));
            let same = match (&x, &y) {
                (Ok(Some(u)), Ok(Some(v))) => u.0 == v.0 && (u.1 - v.1).abs() <= DIST_TOL,
                (Ok(None), Ok(None)) => true,
                (Err(e), Err(f)) => e == f,
                _ => false,
            };
            if !same {
                let show = |r: &Result<Option<(u64, f64)>, geodesic_core::Error>| match r {
                    Ok(Some((id, d))) => format!("{id} {d:.12}"),
                    Ok(None) => "ok".into(),
                    Err(e) => format!("error: {e}"),
                };
                return Some(Mismatch { query: q, got: show(&x), want: show(&y) });
            }
            if matches!(op, Op::Query(_)) {
                q += 1;
            }
            if x.is_err() {
                break;
            }
        }
        None
    }

    pub fn queries(&self) -> usize {
        self.script.iter().filter(|o| matches!(o, Op::Query(_))).count()
    }
}

fn case_seed(seed: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng.next_u64()
}

pub fn make_case(cfg: &FuzzConfig, i: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed(cfg.seed, i));
    let variant = cfg.variants[i % cfg.variants.len()];
    // star-shaped and general polygons alternate
    let poly = if i % 2 == 0 { random_polygon_with(cfg.m, &mut rng) } else { random_simple_polygon_with(cfg.m, &mut rng) };
    let polygon = polygon_text(poly.vertices());
    let scene = Scene::parse(&polygon).expect("generated polygon parses");
    let (script, schedule) = generate(&scene, variant, cfg.n, cfg.ops, &mut rng);
    Case { scene, polygon, variant, script, schedule, fault: cfg.fault }
}

/// Drops chunks of the script while the case still fails.
pub fn minimize(case: &Case) -> Vec<Op> {
    let mut ops = case.script.clone();
    let mut chunk = ops.len().div_ceil(2).max(1);
    loop {
        let mut i = 0;
        while i < ops.len() {
            let mut trial = ops.clone();
            trial.drain(i..(i + chunk).min(ops.len()));
            if !trial.is_empty() && case.compare(&trial).is_some() {
                ops = trial;
            } else {
                i += chunk;
            }
        }
        if chunk == 1 {
            return ops;
        }
        chunk = chunk.div_ceil(2);
    }
}

fn dump(dir: &Path, case: &Case, ops: &[Op], seed: u64, mm: &Mismatch) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("polygon.txt"), &case.polygon)?;
    std::fs::write(dir.join("script.txt"), format_script(ops))?;
    if let Some(s) = &case.schedule {
        std::fs::write(dir.join("schedule.txt"), format_schedule(s))?;
    }
    let meta = format!(
        "seed {seed}\nvariant {}\nfault {}\nquery {}\ngot {}\nwant {}\n",
        variant_name(case.variant),
        case.fault,
        mm.query,
        mm.got,
        mm.want
    );
    std::fs::write(dir.join("repro.txt"), meta)?;
    Ok(())
}

pub struct Report {
    pub text: String,
    pub failure: Option<PathBuf>,
}

/// Runs all cases; the first failing one is minimized and written under
/// `cfg.out`.
pub fn run(cfg: &FuzzConfig) -> Result<Report> {
    cfg.check()?;
    let mut text = String::new();
    let mut total = 0;
    for i in 0..cfg.cases {
        let case = make_case(cfg, i);
        let q = case.queries();
        total += q;
        match case.compare(&case.script) {
            None => {
                writeln!(
                    text,
                    "case {i}: {} m={} ops={} queries={q} ok",
                    variant_name(case.variant),
                    case.scene.poly.m(),
                    case.script.len()
                )?;
            }
            Some(_) => {
                let ops = minimize(&case);
                let mm = case.compare(&ops).expect("minimized script still fails");
                let dir = cfg.out.join(format!("case-{i}"));
                dump(&dir, &case, &ops, cfg.seed, &mm)?;
                writeln!(text, "case {i}: {} mismatch at query {}: got {} want {}", variant_name(case.variant), mm.query, mm.got, mm.want)?;
                writeln!(text, "reproducer ({} ops): {}", ops.len(), dir.display())?;
                return Ok(Report { text, failure: Some(dir) });
            }
        }
    }
    writeln!(text, "fuzz: {} cases, {total} queries, 0 mismatches", cfg.cases)?;
    Ok(Report { text, failure: None })
}

/// Re-runs a dumped reproducer.
pub fn replay(dir: &Path) -> Result<Option<Mismatch>> {
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).with_context(|| format!("reading {}", dir.join(f).display()));
    let polygon = read("polygon.txt")?;
    let meta = read("repro.txt")?;
    let field = |k: &str| meta.lines().find_map(|l| l.strip_prefix(k).map(str::trim)).map(String::from);
    let variant = field("variant ").and_then(|v| parse_variant(&v)).context("repro.txt: missing variant")?;
    let fault = field("fault ").is_some_and(|v| v == "true");
    let scene = Scene::parse(&polygon)?;
    let script = parse_script(&read("script.txt")?)?;
    let schedule = match dir.join("schedule.txt").exists() {
        true => Some(parse_schedule(&read("schedule.txt")?)?),
        false => None,
    };
    if variant == Variant::Offline && schedule.is_none() {
        bail!("offline reproducer without schedule.txt");
    }
    let case = Case { scene, polygon, variant, script, schedule, fault };
    Ok(case.compare(&case.script))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(fault: bool, out: PathBuf) -> FuzzConfig {
        FuzzConfig {
            m: 12,
            n: 24,
            ops: 120,
            cases: 3,
            seed: 5,
            variants: vec![Variant::InsertOnly, Variant::SqrtDynamic, Variant::Offline],
            out,
            fault,
        }
    }

    #[test]
    fn clean_run_passes() {
        let dir = tempfile::tempdir().unwrap();
        let r = run(&cfg(false, dir.path().into())).unwrap();
        assert!(r.failure.is_none(), "{}", r.text);
        assert!(r.text.ends_with("0 mismatches\n"));
    }

    #[test]
    fn fault_is_caught_minimized_and_replayed() {
        let dir = tempfile::tempdir().unwrap();
        let r = run(&cfg(true, dir.path().into())).unwrap();
        let repro = r.failure.expect("fault must be detected");
        let script = std::fs::read_to_string(repro.join("script.txt")).unwrap();
        assert!(script.lines().count() < 120);
        assert!(replay(&repro).unwrap().is_some());
    }

    #[test]
    fn bounds_are_enforced() {
        let mut c = cfg(false, "x".into());
        c.m = 65;
        assert!(c.check().is_err());
        c.m = 12;
        c.ops = 5001;
        assert!(c.check().is_err());
    }
}
