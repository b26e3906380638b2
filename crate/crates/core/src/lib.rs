//! Crowd-counting scale machinery: ground-truth map generation, closeness
//! measurement, learning-to-scale, dense-region rescaling and evaluation.

pub mod closeness;
pub mod components;
pub mod error;
pub mod io;
pub mod l2s;
pub mod losses;
pub mod mapgen;
pub mod metrics;
pub mod pipeline;
pub mod points;
pub mod raster;
mod split;
pub mod synth;

pub use error::{Error, Result};
pub use points::{Point, PointSet};
pub use raster::{BBox, Raster};
