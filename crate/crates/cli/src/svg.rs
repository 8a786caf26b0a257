//! Static SVG renders. Sampled curves (bisector arcs, trapezoid outlines)
//! each become one `<path>`; everything else uses other elements so the
//! path count stays a structural check.

use std::fmt::Write;

use geodesic_core::bisector::{BisectorPos, ImplicitBisector};
use geodesic_core::korder::Decomposition;
use geodesic_core::Point;

use crate::input::Scene;

/// Points per sampled arc.
pub const ARC_SAMPLES: usize = 64;

pub struct Svg<'a> {
    scene: &'a Scene,
    body: String,
    paths: usize,
    radius: f64,
}

fn color(i: usize) -> String {
    // golden-angle hues
    format!("hsl({},60%,75%)", (i * 137) % 360)
}

impl<'a> Svg<'a> {
    pub fn new(scene: &'a Scene) -> Svg<'a> {
        let mut s = Svg { scene, body: String::new(), paths: 0, radius: 0.006 / scene.norm.scale };
        let pts = s.coords(scene.poly.vertices());
        writeln!(s.body, r#"<polygon points="{pts}" fill="none" stroke="black" stroke-width="2" vector-effect="non-scaling-stroke"/>"#).unwrap();
        s
    }

    fn xy(&self, p: Point) -> (f64, f64) {
        let q = self.scene.to_outer(p);
        (q.x, q.y)
    }

    fn coords(&self, pts: &[Point]) -> String {
        let v: Vec<String> = pts.iter().map(|&p| self.xy(p)).map(|(x, y)| format!("{x:.6},{y:.6}")).collect();
        v.join(" ")
    }

    pub fn path_count(&self) -> usize {
        self.paths
    }

    pub fn path(&mut self, pts: &[Point], closed: bool, stroke: &str, fill: &str) {
        let mut d = String::new();
        for (i, &p) in pts.iter().enumerate() {
            let (x, y) = self.xy(p);
            write!(d, "{}{x:.6},{y:.6}", if i == 0 { "M" } else { " L" }).unwrap();
        }
        if closed {
            d.push_str(" Z");
        }
        writeln!(self.body, r#"<path d="{d}" fill="{fill}" stroke="{stroke}" stroke-width="1" vector-effect="non-scaling-stroke"/>"#).unwrap();
        self.paths += 1;
    }

    pub fn segment(&mut self, a: Point, b: Point, stroke: &str) {
        let ((x1, y1), (x2, y2)) = (self.xy(a), self.xy(b));
        writeln!(self.body, r#"<line x1="{x1:.6}" y1="{y1:.6}" x2="{x2:.6}" y2="{y2:.6}" stroke="{stroke}" stroke-width="1.5" vector-effect="non-scaling-stroke"/>"#).unwrap();
    }

    pub fn dot(&mut self, p: Point, fill: &str, title: Option<&str>) {
        let (x, y) = self.xy(p);
        let r = self.radius;
        match title {
            Some(t) => writeln!(self.body, r#"<circle cx="{x:.6}" cy="{y:.6}" r="{r:.6}" fill="{fill}"><title>{t}</title></circle>"#),
            None => writeln!(self.body, r#"<circle cx="{x:.6}" cy="{y:.6}" r="{r:.6}" fill="{fill}"/>"#),
        }
        .unwrap();
    }

    /// One path per arc of `b` between two positions.
    pub fn bisector(&mut self, b: &ImplicitBisector, from: BisectorPos, to: BisectorPos, stroke: &str) {
        for arc in from.arc..=to.arc.min(b.pieces().len() - 1) {
            let a = if arc == from.arc { from } else { BisectorPos { arc, frac: 0.0 } };
            let z = if arc == to.arc { to } else { BisectorPos { arc, frac: 1.0 } };
            let pts = b.sample_between(a, z, ARC_SAMPLES - 1);
            self.path(&pts, false, stroke, "none");
        }
    }

    /// Trapezoids of a decomposition, shaded by label, one path each.
    pub fn trapezoids(&mut self, d: &Decomposition) {
        for (t, tr) in d.traps.iter().enumerate() {
            let ring = d.outline(t, ARC_SAMPLES / 2 - 1);
            self.path(&ring, true, "gray", &color(tr.label as usize));
        }
    }

    pub fn finish(self) -> String {
        let vs = self.scene.poly.vertices();
        let (mut lo, mut hi) = (self.xy(vs[0]), self.xy(vs[0]));
        for &v in vs {
            let (x, y) = self.xy(v);
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        let pad = 0.05 * (hi.0 - lo.0).max(hi.1 - lo.1);
        let (w, h) = (hi.0 - lo.0 + 2.0 * pad, hi.1 - lo.1 + 2.0 * pad);
        let mut out = String::new();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.6} {:.6} {w:.6} {h:.6}" width="800" height="{:.0}">"#,
            lo.0 - pad,
            -(hi.1 + pad),
            800.0 * h / w
        )
        .unwrap();
        // y up
        writeln!(out, r#"<g transform="scale(1,-1)">"#).unwrap();
        out.push_str(&self.body);
        out.push_str("</g>\n</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_paths_only() {
        let scene = Scene::parse("4\n0 0\n2 0\n2 1\n0 1\n").unwrap();
        let mut s = Svg::new(&scene);
        s.segment(Point::new(0.0, 0.0), Point::new(0.5, 0.5), "red");
        s.dot(Point::new(0.2, 0.2), "blue", Some("1"));
        s.path(&[Point::new(0.0, 0.0), Point::new(0.5, 0.0)], false, "black", "none");
        assert_eq!(s.path_count(), 1);
        let text = s.finish();
        assert_eq!(text.matches("<path").count(), 1);
        assert!(text.starts_with("<svg") && text.ends_with("</svg>\n"));
        assert!(text.contains("2.000000,0.000000"));
    }
}
