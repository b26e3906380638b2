//! Training objectives as plain numeric functions: density MSE, the dynamic
//! cross-entropy over distance classes (with its analytic gradient) and the
//! two combined objectives.

use crate::error::{Error, Result};
use crate::mapgen::DistanceLabelMap;
use crate::raster::Raster;

/// Per-pixel class probabilities stored as `n_classes` row-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    n_classes: u8,
    width: u32,
    height: u32,
    /// Plane-major: `data[c * w * h + y * w + x]`.
    data: Vec<f32>,
}

impl ProbabilityVolume {
    pub fn from_planes(n_classes: u8, width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        let plane = width as usize * height as usize;
        if data.len() != plane * n_classes as usize {
            return Err(Error::dims(format!(
                "{} values for {n_classes} planes of {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            n_classes,
            width,
            height,
            data,
        })
    }

    /// Checked constructor: every pixel must hold non-negative probabilities summing to 1 (within 1e-4).
    pub fn new(n_classes: u8, width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        let v = Self::from_planes(n_classes, width, height, data)?;
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let mut probs = vec![0.0; self.n_classes as usize];
        for i in 0..self.plane_len() {
            self.pixel_into(i, &mut probs);
            if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid(format!("pixel {i} has a negative or non-finite probability")));
            }
            let s: f64 = probs.iter().sum();
            if (s - 1.0).abs() > 1e-4 {
                return Err(Error::invalid(format!("pixel {i} probabilities sum to {s}")));
            }
        }
        Ok(())
    }

    /// One-hot volume of a label map.
    pub fn one_hot(map: &DistanceLabelMap) -> Self {
        let (w, h) = map.labels.dims();
        let n = map.config.n_classes;
        let plane = w as usize * h as usize;
        let mut data = vec![0.0f32; plane * n as usize];
        for (i, &l) in map.labels.values().iter().enumerate() {
            data[l as usize * plane + i] = 1.0;
        }
        Self {
            n_classes: n,
            width: w,
            height: h,
            data,
        }
    }

    /// Uniform probabilities everywhere.
    pub fn uniform(n_classes: u8, width: u32, height: u32) -> Result<Self> {
        let len = width as usize * height as usize * n_classes as usize;
        Self::from_planes(n_classes, width, height, vec![1.0 / n_classes as f32; len])
    }

    pub fn n_classes(&self) -> u8 {
        self.n_classes
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, class: u8) -> &[f32] {
        let n = self.plane_len();
        &self.data[class as usize * n..(class as usize + 1) * n]
    }

    pub fn plane_raster(&self, class: u8) -> Raster<f32> {
        Raster::from_vec(self.width, self.height, self.plane(class).to_vec())
            .expect("plane has raster dims")
    }

    pub fn from_rasters(planes: &[Raster<f32>]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::invalid("no probability planes"))?;
        if planes.len() > u8::MAX as usize {
            return Err(Error::invalid("too many planes"));
        }
        let (w, h) = first.dims();
        let mut data = Vec::with_capacity(planes.len() * first.len());
        for p in planes {
            if p.dims() != (w, h) {
                return Err(Error::dims("probability planes differ in size"));
            }
            data.extend_from_slice(p.values());
        }
        Self::from_planes(planes.len() as u8, w, h, data)
    }

    /// Probabilities of pixel `i` (flat index) widened to f64.
    pub fn pixel_into(&self, i: usize, out: &mut [f64]) {
        let n = self.plane_len();
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.data[c * n + i] as f64;
        }
    }

    /// Most probable class per pixel; ties resolve to the lower class.
    pub fn argmax(&self) -> Raster<u8> {
        let n = self.plane_len();
        let labels = (0..n)
            .map(|i| {
                let mut best = 0u8;
                for c in 1..self.n_classes {
                    if self.data[c as usize * n + i] > self.data[best as usize * n + i] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        Raster::from_vec(self.width, self.height, labels).expect("argmax has raster dims")
    }
}

/// Objective weights and the probability floor applied before the logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub prob_floor: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            prob_floor: 1e-12,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::invalid("loss weights must be >= 0"));
        }
        if !(self.prob_floor > 0.0 && self.prob_floor < 1e-3) {
            return Err(Error::invalid(format!(
                "probability floor {} must lie in (0, 1e-3)",
                self.prob_floor
            )));
        }
        Ok(())
    }
}

/// Squared L2 distance between two maps (sum of squared differences).
pub fn mse_loss(pred: &Raster<f32>, gt: &Raster<f32>) -> Result<f64> {
    if !pred.same_dims(gt) {
        return Err(Error::dims(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    Ok(pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum())
}

/// [`mse_loss`] divided by the pixel count.
pub fn mse_loss_mean(pred: &Raster<f32>, gt: &Raster<f32>) -> Result<f64> {
    Ok(mse_loss(pred, gt)? / pred.len().max(1) as f64)
}

/// Expected ordinal distance weight `sum_i (|gt - i| + 1) p_i`.
fn dce_weight(probs: &[f64], gt: usize) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (gt.abs_diff(i) as f64 + 1.0) * p)
        .sum()
}

/// Dynamic cross-entropy of one pixel: `-w(p) * ln(max(p_gt, floor))`.
pub fn dce_pixel_loss(probs: &[f64], gt: usize, prob_floor: f64) -> f64 {
    -dce_weight(probs, gt) * probs[gt].max(prob_floor).ln()
}

/// Gradient of [`dce_pixel_loss`] with respect to every class probability,
/// treating the probabilities as free variables and differentiating through
/// the weight as well as the logarithm.
pub fn dce_pixel_grad(probs: &[f64], gt: usize, prob_floor: f64, out: &mut [f64]) {
    let p_gt = probs[gt];
    let log_term = p_gt.max(prob_floor).ln();
    for (i, o) in out.iter_mut().enumerate() {
        *o = -(gt.abs_diff(i) as f64 + 1.0) * log_term;
    }
    if p_gt > prob_floor {
        out[gt] -= dce_weight(probs, gt) / p_gt;
    }
}

fn check_volume(pr: &ProbabilityVolume, gt: &DistanceLabelMap) -> Result<()> {
    if (pr.width(), pr.height()) != gt.labels.dims() {
        return Err(Error::dims(format!(
            "probabilities {}x{} vs labels {:?}",
            pr.width(),
            pr.height(),
            gt.labels.dims()
        )));
    }
    if pr.n_classes() != gt.config.n_classes {
        return Err(Error::dims(format!(
            "{} probability planes vs {} label classes",
            pr.n_classes(),
            gt.config.n_classes
        )));
    }
    Ok(())
}

/// Dynamic cross-entropy summed over all pixels (natural logarithm).
pub fn dce_loss(pr: &ProbabilityVolume, gt: &DistanceLabelMap, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    check_volume(pr, gt)?;
    let mut probs = vec![0.0; pr.n_classes() as usize];
    let mut total = 0.0;
    for (i, &label) in gt.labels.values().iter().enumerate() {
        pr.pixel_into(i, &mut probs);
        total += dce_pixel_loss(&probs, label as usize, cfg.prob_floor);
    }
    Ok(total)
}

/// Gradient of [`dce_loss`], laid out like the probability volume
/// (plane-major, f64).
pub fn dce_grad(pr: &ProbabilityVolume, gt: &DistanceLabelMap, cfg: &LossConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_volume(pr, gt)?;
    let nc = pr.n_classes() as usize;
    let n = pr.plane_len();
    let mut probs = vec![0.0; nc];
    let mut g = vec![0.0; nc];
    let mut out = vec![0.0; nc * n];
    for (i, &label) in gt.labels.values().iter().enumerate() {
        pr.pixel_into(i, &mut probs);
        dce_pixel_grad(&probs, label as usize, cfg.prob_floor, &mut g);
        for c in 0..nc {
            out[c * n + i] = g[c];
        }
    }
    Ok(out)
}

/// Regression objective: both MSE terms plus the weighted center loss.
pub fn combined_regression(l_m_init: f64, l_m_dense: f64, l_s: f64, cfg: &LossConfig) -> f64 {
    l_m_init + l_m_dense + cfg.lambda1 * l_s
}

/// Localization objective: both cross-entropy terms plus the weighted center loss.
pub fn combined_localization(l_ce_init: f64, l_ce_dense: f64, l_s: f64, cfg: &LossConfig) -> f64 {
    l_ce_init + l_ce_dense + cfg.lambda2 * l_s
}
