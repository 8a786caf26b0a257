//! Polygon and site files. Inputs are normalized to the unit box on load;
//! everything printed is mapped back to input coordinates.

use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use geodesic_core::geom_core::{parse_xy, Normalization};
use geodesic_core::{Error, Point, Polygon, Site};

/// Bad flags or flag combinations; the binary exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub poly: Polygon,
    pub norm: Normalization,
}

impl Scene {
    pub fn parse(text: &str) -> Result<Scene, Error> {
        let (poly, norm) = Polygon::parse_normalized(text)?;
        Ok(Scene { poly, norm })
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Scene::parse(&text).with_context(|| format!("polygon {}", path.display()))
    }

    /// Input coordinates to internal ones.
    pub fn to_inner(&self, p: Point) -> Point {
        self.norm.apply(p)
    }

    pub fn to_outer(&self, p: Point) -> Point {
        self.norm.invert(p)
    }

    pub fn dist_out(&self, d: f64) -> f64 {
        self.norm.length_out(d)
    }

    pub fn point_arg(&self, s: &str) -> Result<Point> {
        let p = parse_xy(s).map_err(|e| usage(e.to_string()))?;
        Ok(self.to_inner(p))
    }
}

pub fn polygon_text(pts: &[Point]) -> String {
    let mut out = format!("{}\n", pts.len());
    for p in pts {
        out.push_str(&format!("{} {}\n", p.x, p.y));
    }
    out
}

/// Sites file: one `id x y` per line, `#` comments.
pub fn parse_sites(text: &str) -> Result<Vec<Site>, Error> {
    let mut out: Vec<Site> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, rest) = line.split_once(char::is_whitespace).ok_or_else(|| Error::Parse(format!("line {}: expected `id x y`", no + 1)))?;
        let id: u64 = id.parse().map_err(|_| Error::Parse(format!("line {}: bad id {id:?}", no + 1)))?;
        if out.iter().any(|s| s.id == id) {
            return Err(Error::DuplicateId(id));
        }
        out.push(Site::new(id, parse_xy(rest.trim())?));
    }
    Ok(out)
}

pub fn load_sites(path: &Path, scene: &Scene) -> Result<Vec<Site>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sites = parse_sites(&text).with_context(|| format!("sites {}", path.display()))?;
    Ok(sites.into_iter().map(|s| Site::new(s.id, scene.to_inner(s.point))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect6_round_trip() {
        let scene = Scene::parse("6\n0 0\n1 0\n2 0\n2 1\n1 1\n0 1\n").unwrap();
        assert_eq!(scene.poly.m(), 6);
        let q = Point::new(1.5, 0.25);
        assert_eq!(scene.to_outer(scene.to_inner(q)), q);
        assert_eq!(scene.dist_out(0.5), 1.0);
    }

    #[test]
    fn sites_file() {
        let s = parse_sites("# two\n1 0.2 0.2\n2 0.2,0.8\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].point, Point::new(0.2, 0.8));
        assert_eq!(parse_sites("1 0 0\n1 1 1\n").unwrap_err(), Error::DuplicateId(1));
        assert!(parse_sites("x 0 0\n").is_err());
    }
}
