//! Subcommand bodies. Each returns its stdout text and, where asked for,
//! an SVG document.

use std::fmt::Write as _;
use std::sync::Arc;

use anyhow::{anyhow, bail, Result};
use geodesic_core::bisector::{build_implicit_bisector, FieldSite, Owner, SideRef, SideSite};
use geodesic_core::cutting::build_shallow_cutting;
use geodesic_core::geom_core::{DecompositionTree, Portal, Side};
use geodesic_core::korder::{build_k_level, SiteSet};
use geodesic_core::shortest_path::Geodesic;
use geodesic_core::voronoi_d::{voronoi_of, BisectorCache};
use geodesic_core::{Point, Site};

use crate::input::Scene;
use crate::svg::Svg;

/// Trimmed fixed-point number.
pub fn num(x: f64) -> String {
    let s = format!("{x:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn pt(scene: &Scene, p: Point) -> String {
    let q = scene.to_outer(p);
    format!("{} {}", num(q.x), num(q.y))
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Left => "left",
        Side::Right => "right",
    }
}

pub fn parse_side(s: &str) -> Option<Side> {
    match s {
        "left" => Some(Side::Left),
        "right" => Some(Side::Right),
        _ => None,
    }
}

pub fn dist(scene: &Scene, from: Point, to: Point) -> Result<String> {
    let geo = Geodesic::new(scene.poly.clone());
    let path = geo.shortest_path(from, to)?;
    let mut out = format!("length {:.12}\n", scene.dist_out(path.length()));
    writeln!(out, "vertices {}", path.vertex_count())?;
    for &p in path.vertices() {
        writeln!(out, "{}", pt(scene, p))?;
    }
    Ok(out)
}

/// A node's diagonal with geodesic fields for sites on one side of it.
struct Setup {
    geo: Arc<Geodesic>,
    portal: Arc<Portal>,
}

impl Setup {
    fn new(scene: &Scene, node: usize, side: impl FnOnce(&DecompositionTree) -> Side) -> Result<Setup> {
        let tree = DecompositionTree::build(&scene.poly);
        if node >= tree.nodes.len() || tree.nodes[node].diagonal.is_none() {
            let internal: Vec<String> = (0..tree.nodes.len()).filter(|&i| tree.nodes[i].diagonal.is_some()).map(|i| i.to_string()).collect();
            bail!("node {node} has no diagonal; internal nodes: {}", internal.join(" "));
        }
        let side = side(&tree);
        Ok(Setup { geo: Arc::new(Geodesic::new(scene.poly.clone())), portal: Arc::new(tree.portal(node, side)) })
    }

    fn site(&self, s: Site) -> Result<SideRef> {
        Ok(SideSite::new(FieldSite::new(&self.geo, s)?, &self.portal))
    }

    /// Sites on the portal's near side, and how many were left out.
    fn sites(&self, sites: &[Site]) -> Result<(Vec<SideRef>, usize)> {
        let mut refs = Vec::new();
        for &s in sites {
            if self.portal.in_near(s.point) && !self.portal.in_far(s.point) {
                refs.push(self.site(s)?);
            }
        }
        let skipped = sites.len() - refs.len();
        Ok((refs, skipped))
    }

    fn header(&self, scene: &Scene, node: usize) -> String {
        let p = &self.portal;
        format!("node {node} side {} diagonal {} -> {}\n", side_name(p.sites_side), pt(scene, p.a), pt(scene, p.b))
    }

    fn svg<'a>(&self, scene: &'a Scene) -> Svg<'a> {
        let mut svg = Svg::new(scene);
        svg.segment(self.portal.a, self.portal.b, "crimson");
        svg
    }
}

fn side_for(sites: &[Point], side: Option<Side>, node: usize) -> impl FnOnce(&DecompositionTree) -> Side + '_ {
    move |tree| side.unwrap_or_else(|| sites.first().map_or(Side::Left, |&p| tree.side_of_diagonal(node, p)))
}

pub fn bisector(scene: &Scene, node: usize, s: Point, t: Point, want_svg: bool) -> Result<(String, Option<String>)> {
    let pts = [s, t];
    let set = Setup::new(scene, node, side_for(&pts, None, node))?;
    let (refs, skipped) = set.sites(&[Site::new(1, s), Site::new(2, t)])?;
    if skipped > 0 {
        bail!("s and t must lie on the same side of node {node}'s diagonal");
    }
    let mut out = set.header(scene, node);
    let b = build_implicit_bisector(&set.portal, &refs[0], &refs[1])?;
    let mut svg = want_svg.then(|| set.svg(scene));
    if let Some(svg) = svg.as_mut() {
        svg.dot(s, "blue", Some("s"));
        svg.dot(t, "green", Some("t"));
    }
    match &b {
        None => out.push_str("bisector does not cross the diagonal\n"),
        Some(b) => {
            writeln!(out, "w {} lambda {}", pt(scene, b.w), num(b.w_param))?;
            writeln!(out, "z {}", pt(scene, b.z))?;
            writeln!(out, "vertices {}", b.vertex_count())?;
            for v in b.vertices() {
                let owner = if v.owner == Owner::S { "s" } else { "t" };
                writeln!(out, "{} {} {owner}", v.index, pt(scene, v.point))?;
            }
            writeln!(out, "arcs {}", b.pieces().len())?;
            if let Some(svg) = svg.as_mut() {
                svg.dot(b.w, "crimson", Some("w"));
                svg.dot(b.z, "crimson", Some("z"));
                svg.bisector(b, geodesic_core::bisector::BisectorPos::START, b.end_pos(), "black");
            }
        }
    }
    Ok((out, svg.map(Svg::finish)))
}

fn near_sites(set: &Setup, scene: &Scene, node: usize, sites: &[Site]) -> Result<(Vec<SideRef>, String)> {
    let (refs, skipped) = set.sites(sites)?;
    let mut out = set.header(scene, node);
    writeln!(out, "sites {} skipped {skipped}", refs.len())?;
    if refs.is_empty() {
        bail!("no sites on the {} side of node {node}", side_name(set.portal.sites_side));
    }
    Ok((refs, out))
}

pub fn voronoi(scene: &Scene, sites: &[Site], node: usize, side: Option<Side>, want_svg: bool) -> Result<(String, Option<String>)> {
    let pts: Vec<Point> = sites.iter().map(|s| s.point).collect();
    let set = Setup::new(scene, node, side_for(&pts, side, node))?;
    let (refs, mut out) = near_sites(&set, scene, node, sites)?;
    let f = voronoi_of(&set.portal, &refs, &mut BisectorCache::new())?;
    let order: Vec<String> = f.sites.iter().map(|s| s.id().to_string()).collect();
    writeln!(out, "regions {}", f.len())?;
    writeln!(out, "order {}", order.join(" "))?;
    let breaks: Vec<String> = f.breaks.iter().map(|&b| num(b)).collect();
    writeln!(out, "breaks {}", breaks.join(" "))?;
    writeln!(out, "vertices {} edges {}", f.vertices.len(), f.edges.len())?;
    for e in &f.edges {
        writeln!(out, "edge {} {} {} -> {}", f.sites[e.s].id(), f.sites[e.t].id(), pt(scene, f.vertices[e.from].point), pt(scene, f.vertices[e.to].point))?;
    }
    let svg = want_svg.then(|| {
        let mut svg = set.svg(scene);
        for e in &f.edges {
            svg.bisector(&e.bisector, e.start, e.end, "black");
        }
        for s in &refs {
            svg.dot(s.point(), "blue", Some(&s.id().to_string()));
        }
        svg.finish()
    });
    Ok((out, svg))
}

pub fn klevel(scene: &Scene, sites: &[Site], node: usize, side: Option<Side>, k: usize, want_svg: bool) -> Result<(String, Option<String>)> {
    let pts: Vec<Point> = sites.iter().map(|s| s.point).collect();
    let set = Setup::new(scene, node, side_for(&pts, side, node))?;
    let (refs, mut out) = near_sites(&set, scene, node, sites)?;
    let mut ss = SiteSet::new(&set.portal, &refs);
    let l = build_k_level(&mut ss, k)?;
    let d = &l.decomposition;
    writeln!(out, "k {k} vertices {} complexity {}", l.vertices.len(), l.complexity())?;
    writeln!(out, "edges {} trapezoids {}", l.edges().len(), d.traps.len())?;
    if l.inconsistencies > 0 {
        writeln!(out, "inconsistencies {}", l.inconsistencies)?;
    }
    let s2 = scene.norm.scale * scene.norm.scale;
    for (i, tr) in d.traps.iter().enumerate() {
        writeln!(out, "trapezoid {i} label {} area {}", tr.label, num(d.area(i) / s2))?;
    }
    let svg = want_svg.then(|| {
        let mut svg = set.svg(scene);
        svg.trapezoids(d);
        for s in &refs {
            svg.dot(s.point(), "blue", Some(&s.id().to_string()));
        }
        svg.finish()
    });
    Ok((out, svg))
}

pub struct CuttingArgs {
    pub node: usize,
    pub side: Option<Side>,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub stats: bool,
}

pub fn cutting(scene: &Scene, sites: &[Site], a: &CuttingArgs, want_svg: bool) -> Result<(String, Option<String>)> {
    if !(a.eps > 0.0 && a.eps < 1.0) {
        return Err(crate::input::usage("--eps must lie in (0, 1)"));
    }
    let pts: Vec<Point> = sites.iter().map(|s| s.point).collect();
    let set = Setup::new(scene, a.node, side_for(&pts, a.side, a.node))?;
    let (refs, mut out) = near_sites(&set, scene, a.node, sites)?;
    let mut ss = SiteSet::new(&set.portal, &refs);
    let c = build_shallow_cutting(&mut ss, a.k, a.eps, a.seed).map_err(|e| anyhow!("{e}"))?;
    let p = &c.level.params;
    writeln!(out, "k {} eps {} seed {}", a.k, num(a.eps), a.seed)?;
    writeln!(out, "sample {} level {} attempts {}", c.level.sample.len(), c.level.t, c.attempts)?;
    writeln!(out, "small_k {}", p.small_k)?;
    writeln!(out, "prisms {}", c.prisms.len())?;
    let bound = c.bound.map_or("none".to_string(), |b| b.to_string());
    writeln!(out, "max_conflict {} bound {bound}", c.max_conflict())?;
    if a.stats {
        writeln!(out, "conflict_size count")?;
        for (size, count) in c.histogram() {
            writeln!(out, "{size} {count}")?;
        }
    }
    let svg = want_svg.then(|| {
        let mut svg = set.svg(scene);
        svg.trapezoids(&c.level.level.decomposition);
        for s in &refs {
            svg.dot(s.point(), "blue", Some(&s.id().to_string()));
        }
        svg.finish()
    });
    Ok((out, svg))
}
