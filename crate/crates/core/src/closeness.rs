//! Nearest-neighbour statistics and the closeness level of a region: the mean
//! distance from each person to the nearest other person.

use crate::error::{Error, Result};
use crate::points::{Point, PointSet};
use crate::raster::BBox;

/// Closeness summary of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosenessStats {
    /// Mean nearest-neighbour distance in pixels.
    pub level: f64,
    pub nn_distances: Vec<f64>,
    pub count: u32,
    /// Number of points sharing their location with another point.
    pub duplicates: u32,
}

impl ClosenessStats {
    pub fn min(&self) -> f64 {
        self.nn_distances.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.nn_distances.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn median(&self) -> f64 {
        let mut d = self.nn_distances.clone();
        d.sort_by(f64::total_cmp);
        crate::mapgen::percentile(&d, 0.5)
    }
}

/// Distance from each point to its nearest other point, by exhaustive search.
pub fn nn_distances_of(points: &[Point]) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let mut best = vec![f64::INFINITY; points.len()];
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i].dist_sq(&points[j]);
            if d < best[i] {
                best[i] = d;
            }
            if d < best[j] {
                best[j] = d;
            }
        }
    }
    Ok(best.into_iter().map(f64::sqrt).collect())
}

pub fn nn_distances(points: &PointSet) -> Result<Vec<f64>> {
    nn_distances_of(points.points())
}

/// Mean nearest-neighbour distance.
pub fn closeness_level(points: &PointSet) -> Result<f64> {
    Ok(closeness_stats_of(points.points())?.level)
}

pub fn closeness_stats_of(points: &[Point]) -> Result<ClosenessStats> {
    let d = nn_distances_of(points)?;
    let duplicates = d.iter().filter(|&&v| v == 0.0).count() as u32;
    if duplicates > 0 {
        log::warn!("{duplicates} point(s) coincide with another point");
    }
    Ok(ClosenessStats {
        level: d.iter().sum::<f64>() / d.len() as f64,
        count: d.len() as u32,
        nn_distances: d,
        duplicates,
    })
}

pub fn closeness_stats(points: &PointSet) -> Result<ClosenessStats> {
    closeness_stats_of(points.points())
}

/// Closeness of the points inside `bbox`, with neighbours sought only among
/// those same points.
pub fn closeness_in(points: &PointSet, bbox: &BBox) -> Result<ClosenessStats> {
    closeness_stats_of(&points.inside(bbox))
}
