//! Scale estimation and ground-truth regeneration for a rescaled region.

use crate::closeness::closeness_stats_of;
use crate::error::{Error, Result};
use crate::l2s::{optimal_scale, L2SConfig};
use crate::mapgen::{density_map, label_map, DensityConfig, DistanceLabelMap, LabelConfig};
use crate::points::{Point, PointSet};
use crate::raster::{scaled_dim, BBox, Raster};

/// How the ground-truth kernel follows the scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelMode {
    /// Same kernel as the full-frame ground truth.
    #[default]
    Fixed,
    /// Kernel spread (or label edges) multiplied by `r`.
    Multiplied,
    /// Kernel spread (or label edges) divided by `r`.
    Divided,
}

impl KernelMode {
    pub fn factor(self, r: f64) -> f64 {
        match self {
            KernelMode::Fixed => 1.0,
            KernelMode::Multiplied => r,
            KernelMode::Divided => 1.0 / r,
        }
    }

    pub fn density(self, cfg: &DensityConfig, r: f64) -> Result<DensityConfig> {
        match self {
            KernelMode::Fixed => Ok(*cfg),
            _ => DensityConfig::new(cfg.sigma * self.factor(r)),
        }
    }

    pub fn labels(self, cfg: &LabelConfig, r: f64) -> Result<LabelConfig> {
        cfg.scaled(self.factor(r))
    }
}

/// Result of [`analytic_scale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimate {
    pub r: f64,
    /// Closeness of the region, absent when it had fewer than two points.
    pub closeness: Option<f64>,
    /// Set when the estimate fell back to `r = 1`.
    pub fallback: bool,
}

/// `clamp(sqrt(target / S), r_min, r_max)` with `S` the closeness of the
/// region's points; fewer than two points give `r = 1` and `fallback`.
pub fn analytic_scale(points: &[Point], target_center: f64, cfg: &L2SConfig) -> Result<ScaleEstimate> {
    cfg.validate()?;
    if !(target_center > 0.0 && target_center.is_finite()) {
        return Err(Error::invalid(format!("target center {target_center} must be finite and > 0")));
    }
    if points.len() < 2 {
        return Ok(ScaleEstimate {
            r: cfg.clamp(1.0),
            closeness: None,
            fallback: true,
        });
    }
    let s = closeness_stats_of(points)?.level;
    Ok(ScaleEstimate {
        r: optimal_scale(s, target_center, cfg),
        closeness: Some(s),
        fallback: false,
    })
}

fn check_scale(r: f64) -> Result<()> {
    if !(0.5..=3.0).contains(&r) {
        return Err(Error::invalid(format!("scale factor {r} outside [0.5, 3]")));
    }
    Ok(())
}

/// Points inside `bbox`, moved to box-local coordinates and multiplied by
/// `r`, in a frame of `round(bbox dims * r)`.
///
/// Rounding the frame down can leave a scaled point up to half a pixel past
/// the far edge; such points are pulled back just inside rather than dropped
/// so that the region keeps its count.
pub fn rescale_region(points: &PointSet, bbox: &BBox, r: f64) -> Result<PointSet> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("scale factor {r} must be finite and > 0")));
    }
    let local = points.restrict(bbox)?;
    let w = scaled_dim(bbox.width(), r);
    let h = scaled_dim(bbox.height(), r);
    if w == 0 || h == 0 {
        return Err(Error::invalid(format!("scale factor {r} collapses the region")));
    }
    let (wf, hf) = (w as f64, h as f64);
    let mut pulled = 0;
    let pts = local
        .points()
        .iter()
        .map(|p| {
            let (x, y) = (p.x * r, p.y * r);
            if x >= wf || y >= hf {
                pulled += 1;
            }
            Point::new(x.min(wf.next_down()), y.min(hf.next_down()))
        })
        .collect();
    if pulled > 0 {
        log::debug!("pulled {pulled} rescaled point(s) back inside a {w}x{h} region");
    }
    PointSet::new(pts, w, h)
}

/// Density ground truth for the rescaled region.
pub fn regenerate_density(
    points: &PointSet,
    bbox: &BBox,
    r: f64,
    cfg: &DensityConfig,
    kernel: KernelMode,
) -> Result<Raster<f32>> {
    check_scale(r)?;
    density_map(&rescale_region(points, bbox, r)?, &kernel.density(cfg, r)?)
}

/// Distance-label ground truth for the rescaled region.
pub fn regenerate_labels(
    points: &PointSet,
    bbox: &BBox,
    r: f64,
    cfg: &LabelConfig,
    kernel: KernelMode,
) -> Result<DistanceLabelMap> {
    check_scale(r)?;
    label_map(&rescale_region(points, bbox, r)?, &kernel.labels(cfg, r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closeness::closeness_level;
    use crate::synth::{generate, Process, SceneSpec};

    #[test]
    fn analytic_scale_hand_values() {
        let cfg = L2SConfig::default();
        // Two points 2 px apart: S = 2.
        let two = [Point::new(1.0, 1.0), Point::new(3.0, 1.0)];
        assert_eq!(analytic_scale(&two, 2.0, &cfg).unwrap().r, 1.0);
        let one_apart = [Point::new(1.0, 1.0), Point::new(2.0, 1.0)];
        assert_eq!(analytic_scale(&one_apart, 4.0, &cfg).unwrap().r, 2.0);
        let far = [Point::new(0.0, 0.0), Point::new(100.0, 0.0)];
        assert_eq!(analytic_scale(&far, 4.0, &cfg).unwrap().r, 0.5);
        let lone = analytic_scale(&[Point::new(1.0, 1.0)], 4.0, &cfg).unwrap();
        assert!(lone.fallback && lone.r == 1.0 && lone.closeness.is_none());
        assert!(analytic_scale(&two, 0.0, &cfg).is_err());
    }

    #[test]
    fn regenerated_density_keeps_count() {
        let cfg = DensityConfig::new(4.0).unwrap();
        for seed in 0..10 {
            let scene = generate(&SceneSpec {
                width: 97,
                height: 83,
                process: Process::Poisson { intensity: 0.01 },
                seed,
            })
            .unwrap();
            let bbox = BBox::new(13, 7, 58, 62).unwrap();
            let inside = scene.inside(&bbox).len() as f64;
            for r in [0.5, 1.0, 1.7, 3.0] {
                for mode in [KernelMode::Fixed, KernelMode::Multiplied, KernelMode::Divided] {
                    let d = regenerate_density(&scene, &bbox, r, &cfg, mode).unwrap();
                    assert_eq!(d.dims(), (scaled_dim(45, r), scaled_dim(55, r)));
                    assert!((d.sum() - inside).abs() <= 1e-3, "r={r} {mode:?}: {} vs {inside}", d.sum());
                }
            }
        }
    }

    #[test]
    fn rounding_down_frame_keeps_edge_points() {
        // 3 * 1.7 = 5.1 rounds to 5; x = 2.99 maps to 5.083.
        let scene = PointSet::new(vec![Point::new(2.99, 0.5)], 3, 1).unwrap();
        let out = rescale_region(&scene, &BBox::full(3, 1), 1.7).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out.points()[0].x < 5.0);
    }

    #[test]
    fn empty_region_is_zero_or_background() {
        let scene = PointSet::new(vec![Point::new(1.0, 1.0)], 32, 32).unwrap();
        let bbox = BBox::new(10, 10, 20, 20).unwrap();
        let d = regenerate_density(&scene, &bbox, 2.0, &DensityConfig::new(2.0).unwrap(), KernelMode::Fixed).unwrap();
        assert_eq!(d.sum(), 0.0);
        let l = regenerate_labels(&scene, &bbox, 2.0, &LabelConfig::default(), KernelMode::Fixed).unwrap();
        assert!(l.labels.values().iter().all(|&c| c == 10));
        assert!(regenerate_density(&scene, &bbox, 3.5, &DensityConfig::new(2.0).unwrap(), KernelMode::Fixed).is_err());
    }

    #[test]
    fn upscaling_a_tight_cluster_lowers_the_peak() {
        let cfg = DensityConfig::new(4.0).unwrap();
        let pts: Vec<Point> = (0..12)
            .map(|i| Point::new(30.0 + (i % 4) as f64 * 2.0, 30.0 + (i / 4) as f64 * 2.0))
            .collect();
        let scene = PointSet::new(pts, 64, 64).unwrap();
        assert!(closeness_level(&scene).unwrap() < cfg.sigma);
        let bbox = BBox::new(20, 20, 48, 48).unwrap();
        let at1 = regenerate_density(&scene, &bbox, 1.0, &cfg, KernelMode::Fixed).unwrap();
        let at2 = regenerate_density(&scene, &bbox, 2.0, &cfg, KernelMode::Fixed).unwrap();
        assert!(at2.max_value() < at1.max_value());
    }

    #[test]
    fn kernel_modes() {
        let d = DensityConfig::new(4.0).unwrap();
        assert_eq!(KernelMode::Multiplied.density(&d, 2.0).unwrap().sigma, 8.0);
        assert_eq!(KernelMode::Divided.density(&d, 2.0).unwrap().sigma, 2.0);
        assert_eq!(KernelMode::Fixed.density(&d, 2.0).unwrap(), d);
        let l = KernelMode::Multiplied.labels(&LabelConfig::default(), 0.5).unwrap();
        assert_eq!(l.edges[0], 0.5);
    }
}
