//! Recombining refined region predictions with the initial full-frame one.

use crate::error::{Error, Result};
use crate::points::{Point, PointSet};
use crate::raster::{scaled_dim, BBox, Raster};

/// A refined prediction for one region, in the region's rescaled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined<T> {
    pub bbox: BBox,
    pub scale: f64,
    pub value: T,
}

fn expect_dims(bbox: &BBox, r: f64, got: (u32, u32)) -> Result<()> {
    let want = (scaled_dim(bbox.width(), r), scaled_dim(bbox.height(), r));
    if got != want {
        return Err(Error::dims(format!(
            "refined prediction is {}x{}, region at scale {r} needs {}x{}",
            got.0, got.1, want.0, want.1
        )));
    }
    Ok(())
}

/// `sum(initial) - sum(crop(initial, bbox)) + sum(refined)`, or `sum(initial)`
/// without a region.
pub fn stitch_count(initial: &Raster<f32>, bbox: Option<&BBox>, refined: Option<&Raster<f32>>) -> Result<f64> {
    match (bbox, refined) {
        (None, None) => Ok(initial.sum()),
        (Some(b), Some(r)) => Ok(initial.sum() - initial.sum_in(b)? + r.sum()),
        _ => Err(Error::invalid("a refined map needs a region and vice versa")),
    }
}

/// [`stitch_count`] over several disjoint regions, checking each refined map
/// against its region's rescaled size.
pub fn stitch_count_regions(initial: &Raster<f32>, refined: &[Refined<Raster<f32>>]) -> Result<f64> {
    let mut total = initial.sum();
    for r in refined {
        expect_dims(&r.bbox, r.scale, r.value.dims())?;
        total += r.value.sum() - initial.sum_in(&r.bbox)?;
    }
    Ok(total)
}

/// Initial points strictly outside `bbox` plus refined points mapped back by
/// `p / r + origin`.
pub fn stitch_points(
    initial: &PointSet,
    bbox: Option<&BBox>,
    refined: Option<&PointSet>,
    r: f64,
) -> Result<PointSet> {
    match (bbox, refined) {
        (None, None) => Ok(initial.clone()),
        (Some(b), Some(p)) => stitch_points_regions(
            initial,
            &[Refined {
                bbox: *b,
                scale: r,
                value: p.clone(),
            }],
        ),
        _ => Err(Error::invalid("refined points need a region and vice versa")),
    }
}

/// [`stitch_points`] over several disjoint regions.
pub fn stitch_points_regions(initial: &PointSet, refined: &[Refined<PointSet>]) -> Result<PointSet> {
    let mut out: Vec<Point> = initial
        .points()
        .iter()
        .copied()
        .filter(|p| !refined.iter().any(|r| r.bbox.contains(p.x, p.y)))
        .collect();
    for r in refined {
        if !(r.scale > 0.0 && r.scale.is_finite()) {
            return Err(Error::invalid(format!("scale factor {} must be finite and > 0", r.scale)));
        }
        expect_dims(&r.bbox, r.scale, (r.value.width(), r.value.height()))?;
        let (ox, oy) = (r.bbox.x0 as f64, r.bbox.y0 as f64);
        let (xmax, ymax) = (r.bbox.x1 as f64, r.bbox.y1 as f64);
        // Keep mapped points inside the region they came from.
        out.extend(r.value.points().iter().map(|p| {
            Point::new(
                (p.x / r.scale + ox).min(xmax.next_down()),
                (p.y / r.scale + oy).min(ymax.next_down()),
            )
        }));
    }
    PointSet::new(out, initial.width(), initial.height())
}
