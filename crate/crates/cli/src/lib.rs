//! Plumbing behind the `geodesic` binary: input files, operation scripts,
//! SVG output, differential fuzzing and benchmarks.

pub mod bench;
pub mod commands;
pub mod fuzz;
pub mod input;
pub mod script;
pub mod svg;

pub use input::{Scene, UsageError};
