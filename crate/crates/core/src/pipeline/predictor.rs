//! Stand-ins for the counting network: exact and perturbed oracles built from
//! the annotation, and a predictor that serves a precomputed map from disk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::regen::regenerate_labels;
use super::{Mode, PipelineConfig};
use crate::error::{Error, Result};
use crate::io::RasterFile;
use crate::losses::ProbabilityVolume;
use crate::mapgen::{blob_mass_in, splat, DistanceLabelMap, LabelConfig};
use crate::points::{Point, PointSet};
use crate::raster::{scaled_dim, BBox, Raster};

/// One prediction query: the region `bbox` of the annotated frame, enlarged
/// by `scale`.
#[derive(Debug, Clone, Copy)]
pub struct PredictRequest<'a> {
    pub annotation: &'a PointSet,
    pub bbox: BBox,
    pub scale: f64,
    pub mode: Mode,
}

impl PredictRequest<'_> {
    /// `round(bbox dims * scale)`, the size every answer must have.
    pub fn output_dims(&self) -> (u32, u32) {
        (
            scaled_dim(self.bbox.width(), self.scale),
            scaled_dim(self.bbox.height(), self.scale),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Density(Raster<f32>),
    Probabilities(ProbabilityVolume),
}

impl Prediction {
    pub fn dims(&self) -> (u32, u32) {
        match self {
            Prediction::Density(r) => r.dims(),
            Prediction::Probabilities(v) => (v.width(), v.height()),
        }
    }

    pub fn into_density(self) -> Result<Raster<f32>> {
        match self {
            Prediction::Density(r) => Ok(r),
            Prediction::Probabilities(_) => Err(Error::invalid("expected a density map, got class probabilities")),
        }
    }

    pub fn into_probabilities(self) -> Result<ProbabilityVolume> {
        match self {
            Prediction::Probabilities(v) => Ok(v),
            Prediction::Density(_) => Err(Error::invalid("expected class probabilities, got a density map")),
        }
    }
}

/// Anything that can answer [`PredictRequest`]s. Implementations must be
/// deterministic and safe to share across threads.
pub trait Predictor: Sync {
    fn predict(&self, req: &PredictRequest<'_>, cfg: &PipelineConfig) -> Result<Prediction>;
}

/// Perfect predictions derived from the annotation.
///
/// Density requests return, for every annotated point, the part of its
/// full-frame blob that lies inside the region, re-rendered at the rescaled
/// position with the configured kernel. The refined map therefore holds
/// exactly the mass the initial map had in the region. Label requests return
/// the one-hot regenerated label map of the points whose full-frame detection
/// falls inside the region (see [`attributed_points`]).
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleExact;

impl OracleExact {
    fn density(&self, req: &PredictRequest<'_>, cfg: &PipelineConfig) -> Result<Raster<f32>> {
        let ann = req.annotation;
        let frame = ann.frame();
        if !req.bbox.fits(frame.x1, frame.y1) {
            return Err(Error::invalid("request region outside the frame"));
        }
        let r = req.scale;
        let kernel = cfg.kernel_mode.density(&cfg.density_cfg, r)?;
        let (w, h) = req.output_dims();
        let mut acc = vec![0.0f64; w as usize * h as usize];
        let (ox, oy) = (req.bbox.x0 as f64, req.bbox.y0 as f64);
        for p in ann.points() {
            let mass = blob_mass_in(*p, &cfg.density_cfg, &frame, &req.bbox);
            if mass <= 0.0 {
                continue;
            }
            let q = Point::new((p.x - ox) * r, (p.y - oy) * r);
            if !splat(&mut acc, w, h, q, &kernel, mass) {
                let x = q.x.floor().clamp(0.0, (w - 1) as f64) as usize;
                let y = q.y.floor().clamp(0.0, (h - 1) as f64) as usize;
                acc[y * w as usize + x] += mass;
            }
        }
        Raster::from_vec(w, h, acc.into_iter().map(|v| v as f32).collect())
    }
}

impl Predictor for OracleExact {
    fn predict(&self, req: &PredictRequest<'_>, cfg: &PipelineConfig) -> Result<Prediction> {
        match req.mode {
            Mode::Regression => Ok(Prediction::Density(self.density(req, cfg)?)),
            Mode::Localization => {
                let owned = attributed_points(req.annotation, &req.bbox, &cfg.label_cfg)?;
                let labels = regenerate_labels(&owned, &req.bbox, req.scale, &cfg.label_cfg, cfg.kernel_mode)?;
                Ok(Prediction::Probabilities(ProbabilityVolume::one_hot(&labels)))
            }
        }
    }
}

/// Where the full-frame detection of an isolated point lands: the centroid of
/// the pixel centers in its lowest label class.
fn detection_anchor(p: &Point, cfg: &LabelConfig, w: u32, h: u32) -> Option<Point> {
    let reach = cfg.edges[0].ceil() as i64 + 1;
    let (cx, cy) = (p.x.floor() as i64, p.y.floor() as i64);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0u32);
    for y in (cy - reach).max(0)..=(cy + reach).min(h as i64 - 1) {
        for x in (cx - reach).max(0)..=(cx + reach).min(w as i64 - 1) {
            let c = Point::new(x as f64 + 0.5, y as f64 + 0.5);
            // Same f32 rounding as the distance map.
            if cfg.class_of(c.dist(p) as f32 as f64) == 0 {
                sx += c.x;
                sy += c.y;
                n += 1;
            }
        }
    }
    (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64))
}

/// The annotations the stitcher will credit to `bbox`: those whose detection
/// anchor lies inside it, clamped into the box. A point just outside the box
/// can have its detection land on the boundary (and vice versa), so membership
/// by annotation position would drop or duplicate it after stitching.
pub(crate) fn attributed_points(points: &PointSet, bbox: &BBox, cfg: &LabelConfig) -> Result<PointSet> {
    let (w, h) = (points.width(), points.height());
    if !bbox.fits(w, h) {
        return Err(Error::invalid("request region outside the frame"));
    }
    let (xmax, ymax) = ((bbox.x1 as f64).next_down(), (bbox.y1 as f64).next_down());
    let pts = points
        .points()
        .iter()
        .filter(|p| {
            let a = detection_anchor(p, cfg, w, h).unwrap_or(**p);
            bbox.contains(a.x, a.y)
        })
        .map(|p| Point::new(p.x.clamp(bbox.x0 as f64, xmax), p.y.clamp(bbox.y0 as f64, ymax)))
        .collect();
    PointSet::new(pts, w, h)
}

/// Perturbation applied by [`OracleNoisy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    /// Standard deviation of per-point Gaussian jitter, pixels.
    pub jitter: f64,
    /// Probability of dropping each point.
    pub drop: f64,
    /// Expected number of spurious points per frame.
    pub spurious: f64,
    pub seed: u64,
}

impl Noise {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::invalid(format!("jitter {} must be >= 0", self.jitter)));
        }
        if !(0.0..=1.0).contains(&self.drop) {
            return Err(Error::invalid(format!("drop probability {} outside [0, 1]", self.drop)));
        }
        if !(self.spurious >= 0.0 && self.spurious.is_finite()) {
            return Err(Error::invalid(format!("spurious rate {} must be >= 0", self.spurious)));
        }
        Ok(())
    }

    /// The perturbed annotation. Every point consumes the same random draws
    /// whether or not it survives, so changing one parameter does not reshuffle
    /// the others. Jittered points leaving the frame are discarded.
    pub fn perturb(&self, points: &PointSet) -> Result<PointSet> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.jitter).map_err(|e| Error::invalid(e.to_string()))?;
        let (w, h) = (points.width() as f64, points.height() as f64);
        let mut out = Vec::with_capacity(points.len());
        for p in points.points() {
            let u: f64 = rng.random();
            let q = Point::new(p.x + normal.sample(&mut rng), p.y + normal.sample(&mut rng));
            if u >= self.drop && q.x >= 0.0 && q.y >= 0.0 && q.x < w && q.y < h {
                out.push(q);
            }
        }
        if self.spurious > 0.0 {
            let n = Poisson::new(self.spurious)
                .map_err(|e| Error::invalid(e.to_string()))?
                .sample(&mut rng) as u64;
            for _ in 0..n {
                let x = (rng.random::<f64>() * w).min(w.next_down());
                let y = (rng.random::<f64>() * h).min(h.next_down());
                out.push(Point::new(x, y));
            }
        }
        PointSet::new(out, points.width(), points.height())
    }
}

/// [`OracleExact`] applied to a seeded perturbation of the annotation.
#[derive(Debug, Clone, Copy)]
pub struct OracleNoisy {
    pub noise: Noise,
}

impl Predictor for OracleNoisy {
    fn predict(&self, req: &PredictRequest<'_>, cfg: &PipelineConfig) -> Result<Prediction> {
        let perturbed = self.noise.perturb(req.annotation)?;
        OracleExact.predict(
            &PredictRequest {
                annotation: &perturbed,
                ..*req
            },
            cfg,
        )
    }
}

/// Serves crops of a full-frame map loaded from disk, resampled to the
/// requested scale. Density crops keep their total; probability crops are
/// resampled per class and renormalized per pixel.
#[derive(Debug, Clone)]
pub enum FilePredictor {
    Density(Raster<f32>),
    Probabilities(ProbabilityVolume),
}

impl FilePredictor {
    /// Wrap a raster file; u8 label maps become one-hot probabilities using
    /// `labels_cfg` for the class count.
    pub fn from_file(file: RasterFile, labels_cfg: &crate::mapgen::LabelConfig) -> Result<Self> {
        Ok(match file {
            RasterFile::F32(r) => FilePredictor::Density(r),
            RasterFile::Stack(v) => FilePredictor::Probabilities(v),
            RasterFile::U8(l) => {
                let map = DistanceLabelMap::new(l, labels_cfg.clone())?;
                FilePredictor::Probabilities(ProbabilityVolume::one_hot(&map))
            }
        })
    }

    fn dims(&self) -> (u32, u32) {
        match self {
            FilePredictor::Density(r) => r.dims(),
            FilePredictor::Probabilities(v) => (v.width(), v.height()),
        }
    }
}

impl Predictor for FilePredictor {
    fn predict(&self, req: &PredictRequest<'_>, _cfg: &PipelineConfig) -> Result<Prediction> {
        let frame = (req.annotation.width(), req.annotation.height());
        if self.dims() != frame {
            return Err(Error::dims(format!(
                "prediction map is {}x{}, annotation frame is {}x{}",
                self.dims().0,
                self.dims().1,
                frame.0,
                frame.1
            )));
        }
        let (w, h) = req.output_dims();
        let identity = (w, h) == (req.bbox.width(), req.bbox.height());
        match (self, req.mode) {
            (FilePredictor::Density(r), Mode::Regression) => {
                let crop = r.crop(&req.bbox)?;
                Ok(Prediction::Density(if identity { crop } else { crop.resize_preserving_sum(w, h)? }))
            }
            (FilePredictor::Probabilities(v), Mode::Localization) => {
                let mut planes = Vec::with_capacity(v.n_classes() as usize);
                for c in 0..v.n_classes() {
                    let crop = v.plane_raster(c).crop(&req.bbox)?;
                    planes.push(if identity { crop } else { crop.bilinear_resize_to(w, h)? });
                }
                if !identity {
                    normalize_planes(&mut planes);
                }
                Ok(Prediction::Probabilities(ProbabilityVolume::from_rasters(&planes)?))
            }
            (_, mode) => Err(Error::invalid(format!("prediction file does not fit {mode:?} mode"))),
        }
    }
}

fn normalize_planes(planes: &mut [Raster<f32>]) {
    let n = planes.len();
    for i in 0..planes[0].len() {
        let s: f64 = planes.iter().map(|p| p.values()[i] as f64).sum();
        for p in planes.iter_mut() {
            let v = &mut p.values_mut()[i];
            *v = if s > 0.0 { (*v as f64 / s) as f32 } else { 1.0 / n as f32 };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapgen::{density_map, label_map, local_minima, DensityConfig};

    fn cfg() -> PipelineConfig {
        PipelineConfig::new(4.0, DensityConfig::new(3.0).unwrap())
    }

    #[test]
    fn attribution_follows_detections() {
        let labels = LabelConfig::default();
        let pts = PointSet::new(
            vec![Point::new(8.2, 15.9996), Point::new(30.0, 104.7), Point::new(50.0, 50.0), Point::new(70.0, 15.2)],
            100,
            120,
        )
        .unwrap();
        let bbox = BBox::new(2, 16, 90, 105).unwrap();
        // Each isolated point's detection agrees with its anchor.
        let det = local_minima(&label_map(&pts, &labels).unwrap()).unwrap();
        assert_eq!(det.len(), 4);
        let inside: Vec<bool> = pts
            .points()
            .iter()
            .map(|p| {
                let d = det.points().iter().min_by(|a, b| a.dist(p).total_cmp(&b.dist(p))).unwrap();
                bbox.contains(d.x, d.y)
            })
            .collect();
        assert_eq!(inside, [true, false, true, false]);
        let owned = attributed_points(&pts, &bbox, &labels).unwrap();
        assert_eq!(owned.points(), &[Point::new(8.2, 16.0), Point::new(50.0, 50.0)]);
    }

    fn scene() -> PointSet {
        PointSet::new(
            vec![Point::new(5.0, 5.0), Point::new(20.5, 9.0), Point::new(22.0, 11.0), Point::new(30.0, 28.0)],
            40,
            32,
        )
        .unwrap()
    }

    #[test]
    fn full_frame_oracle_is_ground_truth() {
        let ann = scene();
        let c = cfg();
        for mode in [Mode::Regression, Mode::Localization] {
            let req = PredictRequest {
                annotation: &ann,
                bbox: ann.frame(),
                scale: 1.0,
                mode,
            };
            let got = OracleExact.predict(&req, &c).unwrap();
            match got {
                Prediction::Density(d) => assert_eq!(d, density_map(&ann, &c.density_cfg).unwrap()),
                Prediction::Probabilities(v) => {
                    assert_eq!(v.argmax(), label_map(&ann, &c.label_cfg).unwrap().labels)
                }
            }
        }
    }

    #[test]
    fn oracle_region_mass_matches_crop() {
        let ann = scene();
        let c = cfg();
        let full = density_map(&ann, &c.density_cfg).unwrap();
        let bbox = BBox::new(16, 4, 28, 16).unwrap();
        for r in [0.5, 1.0, 2.0, 3.0] {
            let req = PredictRequest {
                annotation: &ann,
                bbox,
                scale: r,
                mode: Mode::Regression,
            };
            let d = OracleExact.predict(&req, &c).unwrap().into_density().unwrap();
            assert_eq!(d.dims(), req.output_dims());
            assert!((d.sum() - full.sum_in(&bbox).unwrap()).abs() < 1e-4);
        }
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let ann = scene();
        let n = Noise {
            jitter: 1.0,
            drop: 0.25,
            spurious: 3.0,
            seed: 9,
        };
        assert_eq!(n.perturb(&ann).unwrap(), n.perturb(&ann).unwrap());
        let none = Noise {
            jitter: 0.0,
            drop: 0.0,
            spurious: 0.0,
            seed: 1,
        };
        assert_eq!(none.perturb(&ann).unwrap(), ann);
        let all_dropped = Noise { drop: 1.0, ..none };
        assert!(all_dropped.perturb(&ann).unwrap().is_empty());
        assert!(Noise { drop: 1.5, ..none }.perturb(&ann).is_err());
    }

    #[test]
    fn file_predictor_resamples_with_mass() {
        let ann = scene();
        let c = cfg();
        let full = density_map(&ann, &c.density_cfg).unwrap();
        let fp = FilePredictor::Density(full.clone());
        let bbox = BBox::new(16, 4, 28, 16).unwrap();
        let req = PredictRequest {
            annotation: &ann,
            bbox,
            scale: 2.0,
            mode: Mode::Regression,
        };
        let d = fp.predict(&req, &c).unwrap().into_density().unwrap();
        assert_eq!(d.dims(), (24, 24));
        assert!((d.sum() - full.sum_in(&bbox).unwrap()).abs() < 1e-4);
        let loc = PredictRequest {
            mode: Mode::Localization,
            ..req
        };
        assert!(fp.predict(&loc, &c).is_err());
        let labels = label_map(&ann, &c.label_cfg).unwrap();
        let fp = FilePredictor::from_file(RasterFile::U8(labels.labels.clone()), &c.label_cfg).unwrap();
        let v = fp.predict(&loc, &c).unwrap().into_probabilities().unwrap();
        assert_eq!((v.width(), v.height()), (24, 24));
        v.validate().unwrap();
    }
}
