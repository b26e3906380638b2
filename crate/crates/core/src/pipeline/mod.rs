//! The rescaling pipeline: predict on the full frame, find the densest
//! region, enlarge or shrink it toward a target closeness, predict again and
//! stitch the two answers together.

mod predictor;
mod regen;
mod select;
mod stitch;

pub use predictor::{FilePredictor, Noise, OracleExact, OracleNoisy, PredictRequest, Prediction, Predictor};
pub use regen::{analytic_scale, regenerate_density, regenerate_labels, rescale_region, KernelMode, ScaleEstimate};
pub use select::{
    density_mask, label_mask, select_dense_region_localization, select_dense_region_regression, select_regions,
};
pub use stitch::{stitch_count, stitch_count_regions, stitch_points, stitch_points_regions, Refined};

use crate::error::{Error, Result};
use crate::l2s::{L2SConfig, L2SState};
use crate::mapgen::{local_minima, DensityConfig, DistanceLabelMap, LabelConfig};
use crate::points::PointSet;
use crate::raster::{BBox, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Regression,
    Localization,
}

/// Where the scale factor of a selected region comes from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScaleSource {
    /// Closed-form minimizer toward `PipelineConfig::target_center`.
    #[default]
    Analytic,
    /// The same factor for every region.
    Fixed(f64),
    /// Closed-form minimizer toward the center of a fitted solver state.
    FromState(L2SState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Minimum region area ratio in regression mode.
    pub j_r: f64,
    /// Minimum region area ratio in localization mode.
    pub j_l: f64,
    /// Pixels with a distance class below this form the localization mask.
    pub c_thresh: u8,
    pub target_center: f64,
    pub density_cfg: DensityConfig,
    pub label_cfg: LabelConfig,
    pub l2s_cfg: L2SConfig,
    pub kernel_mode: KernelMode,
    pub scale_source: ScaleSource,
    /// Number of disjoint regions to refine.
    pub top_k: usize,
}

impl PipelineConfig {
    pub fn new(target_center: f64, density_cfg: DensityConfig) -> Self {
        Self {
            j_r: 0.1,
            j_l: 0.02,
            c_thresh: 8,
            target_center,
            density_cfg,
            label_cfg: LabelConfig::default(),
            l2s_cfg: L2SConfig::default(),
            kernel_mode: KernelMode::Fixed,
            scale_source: ScaleSource::Analytic,
            top_k: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, j) in [("j_r", self.j_r), ("j_l", self.j_l)] {
            if !(j > 0.0 && j < 1.0) {
                return Err(Error::invalid(format!("{name} = {j} must lie in (0, 1)")));
            }
        }
        self.density_cfg.validate()?;
        self.label_cfg.validate()?;
        self.l2s_cfg.validate()?;
        if self.c_thresh >= self.label_cfg.n_classes {
            return Err(Error::invalid(format!(
                "class threshold {} must be below {} classes",
                self.c_thresh, self.label_cfg.n_classes
            )));
        }
        if !(self.target_center > 0.0 && self.target_center.is_finite()) {
            return Err(Error::invalid(format!("target center {} must be finite and > 0", self.target_center)));
        }
        match &self.scale_source {
            ScaleSource::Fixed(r) if !(self.l2s_cfg.r_min..=self.l2s_cfg.r_max).contains(r) => Err(Error::invalid(
                format!("fixed scale {r} outside [{}, {}]", self.l2s_cfg.r_min, self.l2s_cfg.r_max),
            )),
            ScaleSource::FromState(st) if !(st.center > 0.0 && st.center.is_finite()) => {
                Err(Error::invalid(format!("state center {} must be finite and > 0", st.center)))
            }
            _ if self.top_k == 0 => Err(Error::invalid("top_k must be at least 1")),
            _ => Ok(()),
        }
    }

    fn area_ratio(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Regression => self.j_r,
            Mode::Localization => self.j_l,
        }
    }
}

/// A selected dense region and the factor it was rescaled by.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub bbox: BBox,
    pub scale: f64,
    pub source: Mode,
    /// Closeness of the annotation inside the region, when defined.
    pub closeness: Option<f64>,
    /// The region had fewer than two annotated points and kept `r = 1`.
    pub scale_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoScaleResult {
    pub mode: Mode,
    /// Count of the initial full-frame prediction.
    pub initial_count: f64,
    pub final_count: f64,
    /// Initial count outside the refined regions (all of it without one).
    pub sparse_count: f64,
    /// The largest refined region.
    pub region: Option<Region>,
    /// Every refined region, largest first.
    pub regions: Vec<Region>,
    /// Stitched detections in localization mode.
    pub points: Option<PointSet>,
    /// Scale of the largest region, or 1 without one.
    pub r_used: f64,
    /// Initial density prediction (regression mode).
    pub initial_density: Option<Raster<f32>>,
    /// Refined density predictions (regression mode).
    pub refined_density: Vec<Refined<Raster<f32>>>,
}

impl AutoScaleResult {
    /// The initial density with every refined region resampled back to its
    /// box size (keeping its total) and pasted in. For viewing only.
    pub fn stitched_density(&self) -> Option<Result<Raster<f32>>> {
        let init = self.initial_density.as_ref()?;
        let mut out = init.clone();
        for r in &self.refined_density {
            let back = match r.value.resize_preserving_sum(r.bbox.width(), r.bbox.height()) {
                Ok(b) => b,
                Err(e) => return Some(Err(e)),
            };
            for y in 0..r.bbox.height() {
                for x in 0..r.bbox.width() {
                    out.set(r.bbox.x0 + x, r.bbox.y0 + y, *back.get(x, y));
                }
            }
        }
        Some(Ok(out))
    }
}

fn region_scale(annotation: &PointSet, bbox: &BBox, cfg: &PipelineConfig) -> Result<ScaleEstimate> {
    let inside = annotation.inside(bbox);
    match &cfg.scale_source {
        ScaleSource::Analytic => analytic_scale(&inside, cfg.target_center, &cfg.l2s_cfg),
        ScaleSource::FromState(st) => analytic_scale(&inside, st.center, &cfg.l2s_cfg),
        ScaleSource::Fixed(r) => Ok(ScaleEstimate {
            r: *r,
            closeness: analytic_scale(&inside, cfg.target_center, &cfg.l2s_cfg)?.closeness,
            fallback: false,
        }),
    }
}

fn ask(predictor: &dyn Predictor, req: &PredictRequest<'_>, cfg: &PipelineConfig) -> Result<Prediction> {
    let out = predictor.predict(req, cfg)?;
    if out.dims() != req.output_dims() {
        let (w, h) = out.dims();
        let (ew, eh) = req.output_dims();
        return Err(Error::dims(format!("predictor returned {w}x{h}, expected {ew}x{eh}")));
    }
    Ok(out)
}

fn label_prediction(probs: crate::losses::ProbabilityVolume, cfg: &LabelConfig) -> Result<DistanceLabelMap> {
    if probs.n_classes() != cfg.n_classes {
        return Err(Error::dims(format!(
            "predictor returned {} classes, configuration has {}",
            probs.n_classes(),
            cfg.n_classes
        )));
    }
    DistanceLabelMap::new(probs.argmax(), cfg.clone())
}

/// Run the full pipeline on one annotated scene.
pub fn run_autoscale(
    annotation: &PointSet,
    predictor: &dyn Predictor,
    mode: Mode,
    cfg: &PipelineConfig,
) -> Result<AutoScaleResult> {
    cfg.validate()?;
    let full = PredictRequest {
        annotation,
        bbox: annotation.frame(),
        scale: 1.0,
        mode,
    };
    let initial = ask(predictor, &full, cfg)?;
    let ratio = cfg.area_ratio(mode);

    let (initial_density, initial_labels) = match mode {
        Mode::Regression => (Some(initial.into_density()?), None),
        Mode::Localization => (None, Some(label_prediction(initial.into_probabilities()?, &cfg.label_cfg)?)),
    };
    let boxes = match (&initial_density, &initial_labels) {
        (Some(d), _) => select_regions(&density_mask(d), ratio, cfg.top_k),
        (_, Some(l)) => select_regions(&label_mask(l, cfg.c_thresh), ratio, cfg.top_k),
        _ => unreachable!(),
    };

    let mut regions = Vec::with_capacity(boxes.len());
    let mut refined_density = Vec::new();
    let mut refined_points = Vec::new();
    for bbox in boxes {
        let est = region_scale(annotation, &bbox, cfg)?;
        let r = est.r;
        let req = PredictRequest {
            annotation,
            bbox,
            scale: r,
            mode,
        };
        let out = ask(predictor, &req, cfg)?;
        match mode {
            Mode::Regression => refined_density.push(Refined {
                bbox,
                scale: r,
                value: out.into_density()?,
            }),
            Mode::Localization => refined_points.push(Refined {
                bbox,
                scale: r,
                value: local_minima(&label_prediction(out.into_probabilities()?, &cfg.label_cfg)?)?,
            }),
        }
        log::debug!("refined region {bbox:?} at scale {r}");
        regions.push(Region {
            bbox,
            scale: r,
            source: mode,
            closeness: est.closeness,
            scale_fallback: est.fallback,
        });
    }

    let (initial_count, final_count, sparse_count, points) = match mode {
        Mode::Regression => {
            let init = initial_density.as_ref().unwrap();
            let total = init.sum();
            let mut sparse = total;
            for r in &refined_density {
                sparse -= init.sum_in(&r.bbox)?;
            }
            (total, stitch_count_regions(init, &refined_density)?, sparse, None)
        }
        Mode::Localization => {
            let init = local_minima(initial_labels.as_ref().unwrap())?;
            let sparse = init
                .points()
                .iter()
                .filter(|p| !regions.iter().any(|r| r.bbox.contains(p.x, p.y)))
                .count();
            let stitched = stitch_points_regions(&init, &refined_points)?;
            (init.len() as f64, stitched.len() as f64, sparse as f64, Some(stitched))
        }
    };
    Ok(AutoScaleResult {
        mode,
        initial_count,
        final_count,
        sparse_count,
        region: regions.first().cloned(),
        r_used: regions.first().map_or(1.0, |r| r.scale),
        regions,
        points,
        initial_density,
        refined_density,
    })
}
