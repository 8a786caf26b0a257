//! Operation scripts, offline schedules, random generators and the two
//! runners (index and oracle) that replay them.

use std::collections::BTreeMap;
use std::fmt;

use geodesic_core::dynamic_nn::{NNIndex, ScheduleOp, Variant};
use geodesic_core::fixtures::random_point_in;
use geodesic_core::geom_core::{parse_xy, sort_ranked};
use geodesic_core::oracle::Oracle;
use geodesic_core::{Error, Point, Site};
use rand::Rng;

use crate::input::Scene;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Insert(u64, Point),
    Delete(u64),
    Advance(f64),
    Query(Point),
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Insert(id, p) => write!(f, "insert {id} {} {}", p.x, p.y),
            Op::Delete(id) => write!(f, "delete {id}"),
            Op::Advance(t) => write!(f, "advance {t}"),
            Op::Query(p) => write!(f, "query {} {}", p.x, p.y),
        }
    }
}

fn bad(no: usize, msg: impl fmt::Display) -> Error {
    Error::Parse(format!("line {no}: {msg}"))
}

fn parse_id(no: usize, s: Option<&str>) -> Result<u64, Error> {
    let s = s.ok_or_else(|| bad(no, "missing id"))?;
    s.parse().map_err(|_| bad(no, format!("bad id {s:?}")))
}

fn parse_time(no: usize, s: &str) -> Result<f64, Error> {
    match s.parse::<f64>() {
        Ok(t) if t.is_finite() => Ok(t),
        _ => Err(bad(no, format!("bad time {s:?}"))),
    }
}

fn parse_op(no: usize, words: &[&str]) -> Result<Op, Error> {
    let point = |w: &[&str]| parse_xy(&w.join(" ")).map_err(|e| bad(no, e));
    match words {
        ["insert", id, rest @ ..] => Ok(Op::Insert(parse_id(no, Some(id))?, point(rest)?)),
        ["delete", id] => Ok(Op::Delete(parse_id(no, Some(id))?)),
        ["advance", t] => Ok(Op::Advance(parse_time(no, t)?)),
        ["query", rest @ ..] => Ok(Op::Query(point(rest)?)),
        _ => Err(bad(no, format!("unknown operation {:?}", words.join(" ")))),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap().trim();
        (!l.is_empty()).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

pub fn parse_script(text: &str) -> Result<Vec<Op>, Error> {
    lines(text).map(|(no, w)| parse_op(no, &w)).collect()
}

pub fn format_script(ops: &[Op]) -> String {
    ops.iter().map(|o| format!("{o}\n")).collect()
}

/// Offline schedule: `t insert id x y` and `t delete id` lines, any order.
pub fn parse_schedule(text: &str) -> Result<Vec<(f64, Op)>, Error> {
    lines(text)
        .map(|(no, w)| {
            let t = parse_time(no, w[0])?;
            match parse_op(no, &w[1..])? {
                op @ (Op::Insert(..) | Op::Delete(_)) => Ok((t, op)),
                _ => Err(bad(no, "schedules hold only inserts and deletes")),
            }
        })
        .collect()
}

pub fn format_schedule(s: &[(f64, Op)]) -> String {
    s.iter().map(|(t, o)| format!("{t} {o}\n")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Index(Variant),
    Oracle,
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::InsertOnly => "insert-only",
        Variant::Offline => "offline",
        Variant::SqrtDynamic => "sqrt-dynamic",
    }
}

pub fn parse_variant(s: &str) -> Option<Variant> {
    [Variant::InsertOnly, Variant::Offline, Variant::SqrtDynamic].into_iter().find(|&v| variant_name(v) == s)
}

enum State {
    Index(Box<NNIndex>),
    Oracle { oracle: Oracle, live: BTreeMap<u64, Site>, spans: Option<Vec<(Site, f64, f64)>>, now: Option<f64> },
}

/// Replays a script against one backend. Points arrive in input units.
pub struct Runner<'a> {
    scene: &'a Scene,
    state: State,
}

// alive on [from, to), in schedule order with ties by line
fn schedule_spans(sched: &[(f64, ScheduleOp)]) -> Result<Vec<(Site, f64, f64)>, Error> {
    let mut ops: Vec<(usize, &(f64, ScheduleOp))> = sched.iter().enumerate().collect();
    ops.sort_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)));
    let mut open: BTreeMap<u64, (Site, f64)> = BTreeMap::new();
    let mut spans = Vec::new();
    let mut distinct = BTreeMap::new();
    for (_, &(t, op)) in ops {
        match op {
            ScheduleOp::Insert(s) => {
                if open.insert(s.id, (s, t)).is_some() {
                    return Err(Error::ScheduleInconsistent(format!("site {} inserted twice", s.id)));
                }
                distinct.insert(s.id, ());
            }
            ScheduleOp::Delete(id) => {
                let (s, from) = open.remove(&id).ok_or_else(|| Error::ScheduleInconsistent(format!("delete of site {id} without insert")))?;
                spans.push((s, from, t));
            }
        }
    }
    if sched.len() > 4 * distinct.len().max(1) {
        return Err(Error::ScheduleInconsistent(format!("{} updates exceed four per site", sched.len())));
    }
    spans.extend(open.into_values().map(|(s, from)| (s, from, f64::INFINITY)));
    Ok(spans)
}

impl<'a> Runner<'a> {
    pub fn new(scene: &'a Scene, backend: Backend, schedule: Option<&[(f64, Op)]>) -> Result<Runner<'a>, Error> {
        let sched: Option<Vec<(f64, ScheduleOp)>> = schedule.map(|s| {
            s.iter()
                .map(|&(t, op)| match op {
                    Op::Insert(id, p) => (t, ScheduleOp::Insert(Site::new(id, scene.to_inner(p)))),
                    Op::Delete(id) => (t, ScheduleOp::Delete(id)),
                    _ => unreachable!("schedules hold only updates"),
                })
                .collect()
        });
        let state = match backend {
            Backend::Index(v) => State::Index(Box::new(NNIndex::new(scene.poly.clone(), v, sched.as_deref())?)),
            Backend::Oracle => {
                let spans = sched.map(|s| schedule_spans(&s)).transpose()?;
                State::Oracle { oracle: Oracle::new(scene.poly.clone()), live: BTreeMap::new(), spans, now: None }
            }
        };
        Ok(Runner { scene, state })
    }

    #[doc(hidden)]
    pub fn inject_tie_fault(&mut self, window: f64) {
        if let State::Index(idx) = &mut self.state {
            idx.inject_tie_fault(window);
        }
    }

    /// Applies one operation; queries return `(id, distance)` in input units.
    pub fn apply(&mut self, op: Op) -> Result<Option<(u64, f64)>, Error> {
        let scene = self.scene;
        match (&mut self.state, op) {
            (State::Index(idx), Op::Insert(id, p)) => idx.insert(Site::new(id, scene.to_inner(p)))?,
            (State::Index(idx), Op::Delete(id)) => idx.delete(id)?,
            (State::Index(idx), Op::Advance(t)) => idx.advance_time(t)?,
            (State::Index(idx), Op::Query(p)) => {
                let (s, d) = idx.nearest(scene.to_inner(p))?;
                return Ok(Some((s.id, scene.dist_out(d))));
            }
            (State::Oracle { spans: Some(_), .. }, Op::Insert(..) | Op::Delete(_)) => return Err(Error::UnsupportedOp),
            (State::Oracle { oracle, live, .. }, Op::Insert(id, p)) => {
                let q = scene.to_inner(p);
                if live.contains_key(&id) {
                    return Err(Error::DuplicateId(id));
                }
                if !oracle.polygon().contains(q) {
                    return Err(Error::PointOutsidePolygon);
                }
                live.insert(id, Site::new(id, q));
            }
            (State::Oracle { live, .. }, Op::Delete(id)) => {
                live.remove(&id).ok_or(Error::UnknownId(id))?;
            }
            (State::Oracle { live, spans, now, .. }, Op::Advance(t)) => {
                let spans = spans.as_ref().ok_or(Error::UnsupportedOp)?;
                if now.is_some_and(|n| t < n) {
                    return Err(Error::TimeRegression);
                }
                *now = Some(t);
                *live = spans.iter().filter(|(_, a, b)| *a <= t && t < *b).map(|(s, _, _)| (s.id, *s)).collect();
            }
            (State::Oracle { oracle, live, .. }, Op::Query(p)) => {
                let q = scene.to_inner(p);
                let sites: Vec<Site> = live.values().copied().collect();
                if !oracle.polygon().contains(q) {
                    return Err(Error::PointOutsidePolygon);
                }
                if sites.is_empty() {
                    return Err(Error::NoSites);
                }
                let mut ranked: Vec<(f64, u64)> = Vec::with_capacity(sites.len());
                let src = oracle.source(q)?;
                for s in &sites {
                    ranked.push((oracle.distance_from(&src, s.point)?, s.id));
                }
                sort_ranked(&mut ranked);
                return Ok(Some((ranked[0].1, scene.dist_out(ranked[0].0))));
            }
        }
        Ok(None)
    }

    /// All query answers, stopping at the first error.
    pub fn run(&mut self, ops: &[Op]) -> Result<Vec<(u64, f64)>, Error> {
        let mut out = Vec::new();
        for &op in ops {
            if let Some(a) = self.apply(op)? {
                out.push(a);
            }
        }
        Ok(out)
    }
}

pub fn format_answer(a: (u64, f64)) -> String {
    format!("{} {:.12}", a.0, a.1)
}

/// A random script for `variant`: at most `n` distinct ids, `ops` lines.
/// Offline scripts come with their schedule. Queries never hit an empty set.
pub fn generate<R: Rng>(scene: &Scene, variant: Variant, n: usize, ops: usize, rng: &mut R) -> (Vec<Op>, Option<Vec<(f64, Op)>>) {
    let poly = &scene.poly;
    let point = |rng: &mut R, margin: f64| scene.to_outer(random_point_in(poly, margin, rng));
    let n = n.max(1);
    match variant {
        Variant::InsertOnly | Variant::SqrtDynamic => {
            let mut script = Vec::with_capacity(ops);
            let mut live: Vec<u64> = Vec::new();
            let mut free: Vec<u64> = (1..=n as u64).rev().collect();
            while script.len() < ops {
                let r: f64 = rng.random();
                if live.is_empty() || (r < 0.3 && !free.is_empty()) {
                    let Some(id) = free.pop() else { break };
                    script.push(Op::Insert(id, point(rng, 1e-4)));
                    live.push(id);
                } else if r < 0.45 && variant == Variant::SqrtDynamic {
                    let id = live.swap_remove(rng.random_range(0..live.len()));
                    script.push(Op::Delete(id));
                    // deleted ids come back later
                    free.insert(0, id);
                } else {
                    script.push(Op::Query(point(rng, 1e-6)));
                }
            }
            (script, None)
        }
        Variant::Offline => {
            let horizon = (2 * n) as f64;
            let mut sched = Vec::new();
            let mut spans = Vec::new();
            for id in 1..=n as u64 {
                let t1 = rng.random_range(0..2 * n) as f64;
                sched.push((t1, Op::Insert(id, point(rng, 1e-4))));
                let t2 = if rng.random::<f64>() < 0.6 { t1 + rng.random_range(1..=n) as f64 } else { f64::INFINITY };
                if t2.is_finite() {
                    sched.push((t2, Op::Delete(id)));
                }
                spans.push((t1, t2));
            }
            let alive = |t: f64| spans.iter().any(|&(a, b)| a <= t && t < b);
            let mut script = Vec::with_capacity(ops);
            let mut t = 0.0;
            while script.len() < ops {
                let step = horizon * 2.0 / ops.max(1) as f64;
                t += rng.random_range(0.0..step.max(1e-3));
                if !alive(t) {
                    if t > 3.0 * horizon {
                        break;
                    }
                    continue;
                }
                script.push(Op::Advance(t));
                let q = rng.random_range(1..=3).min(ops - script.len());
                for _ in 0..q {
                    script.push(Op::Query(point(rng, 1e-6)));
                }
            }
            (script, Some(sched))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rect6() -> Scene {
        Scene::parse("6\n0 0\n1 0\n2 0\n2 1\n1 1\n0 1\n").unwrap()
    }

    #[test]
    fn script_round_trip() {
        let text = "insert 1 0.2 0.2\n# note\n\ninsert 2 0.2,0.8\nquery 1.5 0.9\ndelete 1\nadvance 2.5\n";
        let ops = parse_script(text).unwrap();
        assert_eq!(ops.len(), 5);
        assert_eq!(ops[1], Op::Insert(2, Point::new(0.2, 0.8)));
        assert_eq!(parse_script(&format_script(&ops)).unwrap(), ops);
        assert!(parse_script("insert x 0 0\n").is_err());
        assert!(parse_script("jump 1\n").is_err());
        assert!(parse_script("advance nan\n").is_err());
    }

    #[test]
    fn schedule_round_trip() {
        let s = parse_schedule("1 insert 1 0.2 0.2\n3 delete 1\n").unwrap();
        assert_eq!(s, vec![(1.0, Op::Insert(1, Point::new(0.2, 0.2))), (3.0, Op::Delete(1))]);
        assert_eq!(parse_schedule(&format_schedule(&s)).unwrap(), s);
        assert!(parse_schedule("1 query 0 0\n").is_err());
    }

    #[test]
    fn rect6_answers_in_input_units() {
        let scene = rect6();
        let ops = parse_script("insert 1 0.2 0.2\ninsert 2 0.2 0.8\nquery 1.5 0.9\n").unwrap();
        for b in [Backend::Index(Variant::InsertOnly), Backend::Index(Variant::SqrtDynamic), Backend::Oracle] {
            let got = Runner::new(&scene, b, None).unwrap().run(&ops).unwrap();
            assert_eq!(got.len(), 1);
            assert_eq!(got[0].0, 2);
            assert!((got[0].1 - 1.303840).abs() < 1e-6);
        }
    }

    #[test]
    fn generated_scripts_agree() {
        let scene = rect6();
        for (i, v) in [Variant::InsertOnly, Variant::SqrtDynamic, Variant::Offline].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let (ops, sched) = generate(&scene, v, 8, 60, &mut rng);
            assert!(ops.len() <= 60);
            let a = Runner::new(&scene, Backend::Index(v), sched.as_deref()).unwrap().run(&ops).unwrap();
            let b = Runner::new(&scene, Backend::Oracle, sched.as_deref()).unwrap().run(&ops).unwrap();
            assert!(!a.is_empty());
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.0, y.0);
                assert!((x.1 - y.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn oracle_errors_mirror_the_index() {
        let scene = rect6();
        let mut r = Runner::new(&scene, Backend::Oracle, None).unwrap();
        assert_eq!(r.apply(Op::Query(Point::new(1.0, 0.5))), Err(Error::NoSites));
        assert_eq!(r.apply(Op::Delete(4)), Err(Error::UnknownId(4)));
        assert_eq!(r.apply(Op::Insert(1, Point::new(3.0, 0.5))), Err(Error::PointOutsidePolygon));
        assert_eq!(r.apply(Op::Advance(1.0)), Err(Error::UnsupportedOp));
        let sched = parse_schedule("1 insert 1 0.2 0.2\n3 delete 1\n").unwrap();
        let mut r = Runner::new(&scene, Backend::Oracle, Some(&sched)).unwrap();
        assert_eq!(r.apply(Op::Query(Point::new(1.0, 0.5))), Err(Error::NoSites));
        r.apply(Op::Advance(2.0)).unwrap();
        assert_eq!(r.apply(Op::Query(Point::new(0.2, 0.3))).unwrap().unwrap().0, 1);
        assert_eq!(r.apply(Op::Advance(1.0)), Err(Error::TimeRegression));
        assert_eq!(r.apply(Op::Insert(2, Point::new(0.5, 0.5))), Err(Error::UnsupportedOp));
        let bad = parse_schedule("1 delete 1\n").unwrap();
        assert!(matches!(Runner::new(&scene, Backend::Oracle, Some(&bad)), Err(Error::ScheduleInconsistent(_))));
    }
}
