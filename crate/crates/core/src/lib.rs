//! Geodesic nearest-neighbor search among point sites in a simple polygon.
//!
//! Everything here is `no_std` + `alloc`. File formats, the command line and
//! timing live in the `geodesic` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod math;

pub mod geom_core;
pub mod shortest_path;
pub mod oracle;
pub mod bisector;
pub mod voronoi_d;
pub mod korder;
pub mod cutting;
pub mod dynamic_nn;

pub mod fixtures;

pub use geom_core::{Error, Point, Polygon, Result, Site};
pub use math::slope;
