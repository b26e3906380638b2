//! Head annotations as a sparse point set attached to a frame.

use crate::error::{Error, Result};
use crate::raster::{scaled_dim, BBox};

/// A continuous image-plane location in pixels (x rightward, y downward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

/// Ordered annotation points inside a `width x height` frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Point>,
    width: u32,
    height: u32,
}

/// Result of [`PointSet::scale`]: the rescaled set plus the number of points
/// that left the new frame and were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub points: PointSet,
    pub dropped: usize,
}

impl PointSet {
    /// Validating constructor: every point must be finite and lie in
    /// `[0, width) x [0, height)`.
    pub fn new(points: Vec<Point>, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("frame {width}x{height} must be at least 1x1")));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::invalid(format!("point {i} is not finite")));
            }
            if !Self::in_frame(p, width, height) {
                return Err(Error::invalid(format!(
                    "point {i} ({}, {}) outside {width}x{height} frame",
                    p.x, p.y
                )));
            }
        }
        Ok(Self {
            points,
            width,
            height,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self> {
        Self::new(Vec::new(), width, height)
    }

    /// Keep only the points that fall inside the frame, returning how many were dropped.
    pub fn new_lossy(points: Vec<Point>, width: u32, height: u32) -> Result<(Self, usize)> {
        let before = points.len();
        let kept: Vec<Point> = points
            .into_iter()
            .filter(|p| p.x.is_finite() && p.y.is_finite() && Self::in_frame(p, width, height))
            .collect();
        let dropped = before - kept.len();
        Ok((Self::new(kept, width, height)?, dropped))
    }

    fn in_frame(p: &Point, width: u32, height: u32) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn frame(&self) -> BBox {
        BBox::full(self.width, self.height)
    }

    /// Pixel holding a point.
    pub fn pixel_of(p: &Point) -> (u32, u32) {
        (p.x.floor() as u32, p.y.floor() as u32)
    }

    /// Points inside `bbox` (half-open), kept in absolute coordinates and frame.
    pub fn inside(&self, bbox: &BBox) -> Vec<Point> {
        self.points
            .iter()
            .copied()
            .filter(|p| bbox.contains(p.x, p.y))
            .collect()
    }

    /// Points strictly outside `bbox`.
    pub fn outside(&self, bbox: &BBox) -> Vec<Point> {
        self.points
            .iter()
            .copied()
            .filter(|p| !bbox.contains(p.x, p.y))
            .collect()
    }

    /// Points inside `bbox`, translated to box-local coordinates in a frame of the box's size.
    pub fn restrict(&self, bbox: &BBox) -> Result<PointSet> {
        if !bbox.fits(self.width, self.height) {
            return Err(Error::OutOfBounds {
                x0: bbox.x0,
                y0: bbox.y0,
                x1: bbox.x1,
                y1: bbox.y1,
                width: self.width,
                height: self.height,
            });
        }
        let (ox, oy) = (bbox.x0 as f64, bbox.y0 as f64);
        let local = self
            .points
            .iter()
            .filter(|p| bbox.contains(p.x, p.y))
            .map(|p| Point::new(p.x - ox, p.y - oy))
            .collect::<Vec<_>>();
        // Subtracting an integer offset from a value in [x0, x1) stays in [0, x1 - x0).
        PointSet::new(local, bbox.width(), bbox.height())
    }

    /// Map every point to `(p - origin) * factor` in a frame of
    /// `round(dims * factor)`; points leaving that frame are dropped and counted.
    pub fn scale(&self, factor: f64, origin: Point) -> Result<Scaled> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::invalid(format!("scale factor {factor} must be finite and > 0")));
        }
        let width = scaled_dim(self.width, factor);
        let height = scaled_dim(self.height, factor);
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "scale factor {factor} collapses a {}x{} frame",
                self.width, self.height
            )));
        }
        let moved = self
            .points
            .iter()
            .map(|p| Point::new((p.x - origin.x) * factor, (p.y - origin.y) * factor))
            .collect();
        let (points, dropped) = PointSet::new_lossy(moved, width, height)?;
        if dropped > 0 {
            log::warn!("scaling by {factor} dropped {dropped} point(s) outside the new frame");
        }
        Ok(Scaled { points, dropped })
    }
}
