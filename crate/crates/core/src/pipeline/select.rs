//! Dense-region selection on an initial prediction.

use crate::components::{connected_components, Connectivity};
use crate::error::{Error, Result};
use crate::mapgen::DistanceLabelMap;
use crate::raster::{BBox, Raster};

/// Bounding boxes of the largest 8-connected components of `mask`, largest
/// first, keeping at most `k` whose area ratio reaches `min_ratio` and that do
/// not overlap a box already taken.
pub fn select_regions(mask: &Raster<bool>, min_ratio: f64, k: usize) -> Vec<BBox> {
    let mut comps = connected_components(mask, Connectivity::Eight);
    // Stable sort keeps scan order among equal sizes.
    comps.sort_by(|a, b| b.pixel_count.cmp(&a.pixel_count));
    let frame = mask.width() as f64 * mask.height() as f64;
    let mut out: Vec<BBox> = Vec::new();
    for c in comps {
        if out.len() >= k {
            break;
        }
        if (c.bbox.area() as f64) / frame < min_ratio {
            continue;
        }
        if out.iter().any(|b| b.intersects(&c.bbox)) {
            continue;
        }
        out.push(c.bbox);
    }
    out
}

/// Pixels strictly above twice the mean density.
pub fn density_mask(density: &Raster<f32>) -> Raster<bool> {
    let mean = density.sum() / density.len() as f64;
    let cut = 2.0 * mean;
    density.map(|&v| v as f64 > cut)
}

/// Pixels whose distance class is below `c_thresh`.
pub fn label_mask(labels: &DistanceLabelMap, c_thresh: u8) -> Raster<bool> {
    labels.labels.map(|&l| l < c_thresh)
}

/// The box of the largest connected component of `{D > 2 mean(D)}`, if its
/// area is at least `j_r` of the frame.
///
/// Only the largest component is considered: when it is too small, no region
/// is returned even if a smaller component has a larger box.
pub fn select_dense_region_regression(density: &Raster<f32>, j_r: f64) -> Option<BBox> {
    largest_if_big_enough(&density_mask(density), j_r)
}

/// The box of the largest connected component of `{label < c_thresh}`, if its
/// area is at least `j_l` of the frame.
pub fn select_dense_region_localization(
    labels: &DistanceLabelMap,
    c_thresh: u8,
    j_l: f64,
) -> Result<Option<BBox>> {
    if c_thresh >= labels.config.n_classes {
        return Err(Error::invalid(format!(
            "class threshold {c_thresh} must be below {} classes",
            labels.config.n_classes
        )));
    }
    Ok(largest_if_big_enough(&label_mask(labels, c_thresh), j_l))
}

fn largest_if_big_enough(mask: &Raster<bool>, ratio: f64) -> Option<BBox> {
    let comps = connected_components(mask, Connectivity::Eight);
    let c = &comps[crate::components::largest(&comps)?];
    let frame = mask.width() as f64 * mask.height() as f64;
    (c.bbox.area() as f64 / frame >= ratio).then_some(c.bbox)
}
