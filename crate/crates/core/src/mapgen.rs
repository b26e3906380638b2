//! Ground-truth map construction: Gaussian density maps, exact distance maps,
//! quantized distance-label maps and the local-minima detector that turns a
//! label map back into head locations.

use crate::components::{label_by, Connectivity};
use crate::error::{Error, Result};
use crate::points::{Point, PointSet};
use crate::raster::{BBox, Raster};
use crate::split::split_plateau;

/// Fixed Gaussian kernel used to spread each annotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityConfig {
    pub sigma: f64,
    pub kernel_radius: u32,
}

impl DensityConfig {
    /// Kernel of spread `sigma` with the default radius `ceil(3 sigma)`.
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::invalid(format!("sigma {sigma} must be finite and > 0")));
        }
        Ok(Self {
            sigma,
            kernel_radius: (3.0 * sigma).ceil() as u32,
        })
    }

    pub fn with_radius(self, kernel_radius: u32) -> Self {
        Self {
            kernel_radius,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::invalid(format!("sigma {} must be finite and > 0", self.sigma)));
        }
        Ok(())
    }
}

/// Iterate the kernel window of a point (clipped to `clip`), yielding
/// `(x, y, unnormalized weight)`.
fn kernel_window(
    center: Point,
    cfg: &DensityConfig,
    clip: &BBox,
) -> impl Iterator<Item = (u32, u32, f64)> {
    let r = cfg.kernel_radius as i64;
    let cx = center.x.floor() as i64;
    let cy = center.y.floor() as i64;
    let xa = (cx - r).max(clip.x0 as i64);
    let xb = (cx + r + 1).min(clip.x1 as i64);
    let ya = (cy - r).max(clip.y0 as i64);
    let yb = (cy + r + 1).min(clip.y1 as i64);
    let inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    (ya..yb.max(ya)).flat_map(move |y| {
        (xa..xb.max(xa)).map(move |x| {
            let dx = x as f64 + 0.5 - center.x;
            let dy = y as f64 + 0.5 - center.y;
            (x as u32, y as u32, (-(dx * dx + dy * dy) * inv).exp())
        })
    })
}

/// Add a blob of total `mass` centered at `center` into `acc` (a
/// `width x height` f64 buffer). The window is truncated at the frame and
/// renormalized. Returns `false` when the window misses the frame entirely.
pub(crate) fn splat(
    acc: &mut [f64],
    width: u32,
    height: u32,
    center: Point,
    cfg: &DensityConfig,
    mass: f64,
) -> bool {
    let frame = BBox::full(width, height);
    let total: f64 = kernel_window(center, cfg, &frame).map(|(_, _, w)| w).sum();
    if total <= 0.0 {
        return false;
    }
    let scale = mass / total;
    for (x, y, w) in kernel_window(center, cfg, &frame) {
        acc[y as usize * width as usize + x as usize] += w * scale;
    }
    true
}

/// Fraction of a point's frame-normalized blob that falls inside `region`.
pub(crate) fn blob_mass_in(center: Point, cfg: &DensityConfig, frame: &BBox, region: &BBox) -> f64 {
    let mut total = 0.0;
    let mut inside = 0.0;
    for (x, y, w) in kernel_window(center, cfg, frame) {
        total += w;
        if region.contains_pixel(x, y) {
            inside += w;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

/// Sum of per-point Gaussian blobs, each truncated at the frame border and
/// renormalized to unit mass, so the map integrates to the point count.
pub fn density_map(points: &PointSet, cfg: &DensityConfig) -> Result<Raster<f32>> {
    cfg.validate()?;
    let (w, h) = (points.width(), points.height());
    let mut acc = vec![0.0f64; w as usize * h as usize];
    for p in points.points() {
        splat(&mut acc, w, h, *p, cfg, 1.0);
    }
    Raster::from_vec(w, h, acc.into_iter().map(|v| v as f32).collect())
}

/// Histogram of the strictly positive values of a map.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges spanning `[0, max positive value]`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// P99 / median of the positive values; `None` when no value is positive.
    pub tail_ratio: Option<f64>,
    pub positive: u64,
}

/// Linear-interpolated percentile of an ascending slice, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Distribution of positive pixel values, with the P99/median tail ratio that
/// summarizes how heavy the upper tail is.
pub fn value_histogram(map: &Raster<f32>, bins: u32) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {bins}")));
    }
    let mut pos: Vec<f64> = map
        .values()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v as f64)
        .collect();
    pos.sort_by(f64::total_cmp);
    let top = pos.last().copied().unwrap_or(1.0);
    let edges: Vec<f64> = (0..=bins).map(|i| top * i as f64 / bins as f64).collect();
    let mut counts = vec![0u64; bins as usize];
    for &v in &pos {
        let b = ((v / top) * bins as f64).floor() as usize;
        counts[b.min(bins as usize - 1)] += 1;
    }
    let tail_ratio = if pos.is_empty() {
        log::warn!("histogram: no positive pixels, tail ratio undefined");
        None
    } else {
        Some(percentile(&pos, 0.99) / percentile(&pos, 0.5))
    };
    Ok(Histogram {
        edges,
        counts,
        tail_ratio,
        positive: pos.len() as u64,
    })
}

/// Exact Euclidean distance from every pixel center to the nearest annotation.
///
/// Per column, the squared distance as a function of `y` is the lower envelope
/// of parabolas `(cx - px)^2 + (y - py)^2`, one per point, which is swept in
/// linear time. The winning point's distance is then recomputed directly, so
/// values equal the brute-force minimum.
pub fn distance_map(points: &PointSet) -> Result<Raster<f32>> {
    if points.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let (w, h) = (points.width(), points.height());
    let mut sorted: Vec<Point> = points.points().to_vec();
    sorted.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));

    let mut out = vec![0.0f32; w as usize * h as usize];
    let mut env: Vec<usize> = Vec::with_capacity(sorted.len());
    let mut bounds: Vec<f64> = Vec::with_capacity(sorted.len() + 1);
    for col in 0..w {
        let cx = col as f64 + 0.5;
        let height_of = |k: usize| {
            let dx = cx - sorted[k].x;
            dx * dx
        };
        env.clear();
        bounds.clear();
        for q in 0..sorted.len() {
            let fq = height_of(q);
            let vq = sorted[q].y;
            let mut start = f64::NEG_INFINITY;
            let mut keep = true;
            while let (Some(&top), Some(&top_start)) = (env.last(), bounds.last()) {
                let vt = sorted[top].y;
                let ft = height_of(top);
                if vq == vt {
                    if fq >= ft {
                        keep = false;
                        break;
                    }
                } else {
                    let s = ((fq + vq * vq) - (ft + vt * vt)) / (2.0 * (vq - vt));
                    if s > top_start {
                        start = s;
                        break;
                    }
                }
                env.pop();
                bounds.pop();
            }
            if keep {
                env.push(q);
                bounds.push(start);
            }
        }
        // bounds[k] is where env[k] starts winning.
        let mut k = 0usize;
        for row in 0..h {
            let cy = row as f64 + 0.5;
            while k + 1 < env.len() && bounds[k + 1] < cy {
                k += 1;
            }
            let probe = Point::new(cx, cy);
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(env.len() - 1);
            let best = (lo..=hi)
                .map(|j| probe.dist_sq(&sorted[env[j]]))
                .fold(f64::INFINITY, f64::min);
            out[row as usize * w as usize + col as usize] = best.sqrt() as f32;
        }
    }
    Raster::from_vec(w, h, out)
}

/// Class boundaries for quantizing a distance map.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelConfig {
    pub n_classes: u8,
    /// `n_classes - 1` strictly increasing positive thresholds in pixels.
    pub edges: Vec<f64>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            n_classes: 11,
            edges: vec![1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0],
        }
    }
}

impl LabelConfig {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() + 1 > u8::MAX as usize {
            return Err(Error::invalid(format!("{} edges exceed the u8 class range", edges.len())));
        }
        let cfg = Self {
            n_classes: (edges.len() + 1) as u8,
            edges,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if self.edges.len() != self.n_classes as usize - 1 {
            return Err(Error::invalid(format!(
                "{} classes need {} edges, got {}",
                self.n_classes,
                self.n_classes - 1,
                self.edges.len()
            )));
        }
        if !self.edges.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(Error::invalid("edges must be finite and positive"));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("edges must be strictly increasing"));
        }
        Ok(())
    }

    /// Class of a distance: the number of edges not exceeding it.
    pub fn class_of(&self, distance: f64) -> u8 {
        self.edges.partition_point(|&e| e <= distance) as u8
    }

    pub fn background(&self) -> u8 {
        self.n_classes - 1
    }

    /// Every edge multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let cfg = Self {
            n_classes: self.n_classes,
            edges: self.edges.iter().map(|e| e * factor).collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-pixel distance class with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceLabelMap {
    pub labels: Raster<u8>,
    pub config: LabelConfig,
}

impl DistanceLabelMap {
    pub fn new(labels: Raster<u8>, config: LabelConfig) -> Result<Self> {
        config.validate()?;
        if let Some(bad) = labels.values().iter().find(|&&l| l >= config.n_classes) {
            return Err(Error::invalid(format!(
                "label {bad} outside 0..{}",
                config.n_classes
            )));
        }
        Ok(Self { labels, config })
    }

    /// A map with every pixel in the background class.
    pub fn background(width: u32, height: u32, config: LabelConfig) -> Result<Self> {
        config.validate()?;
        let bg = config.background();
        Ok(Self {
            labels: Raster::filled(width, height, bg),
            config,
        })
    }

    pub fn width(&self) -> u32 {
        self.labels.width()
    }

    pub fn height(&self) -> u32 {
        self.labels.height()
    }
}

/// Quantize distances into half-open bins `[e_{k-1}, e_k)`.
pub fn quantize_labels(dist: &Raster<f32>, cfg: &LabelConfig) -> Result<DistanceLabelMap> {
    cfg.validate()?;
    Ok(DistanceLabelMap {
        labels: dist.map(|&d| cfg.class_of(d as f64)),
        config: cfg.clone(),
    })
}

/// Distance-label map of a point set; an empty set yields all background.
pub fn label_map(points: &PointSet, cfg: &LabelConfig) -> Result<DistanceLabelMap> {
    if points.is_empty() {
        return DistanceLabelMap::background(points.width(), points.height(), cfg.clone());
    }
    quantize_labels(&distance_map(points)?, cfg)
}

/// Head detections: centroids of 8-connected equal-label plateaus that are
/// strictly lower than all surrounding pixels, excluding the background class.
/// A lowest-class plateau too wide for a single head is split into the fewest
/// 4-connected head-sized groups, one detection each.
pub fn local_minima(map: &DistanceLabelMap) -> Result<PointSet> {
    let (w, h) = map.labels.dims();
    let labels = map.labels.values();
    let bg = map.config.background();
    let lab = label_by(
        w,
        h,
        Connectivity::Eight,
        |i| labels[i] < bg,
        |a, b| labels[a] == labels[b],
    );
    let n = lab.components.len();
    let mut is_min = vec![true; n];
    let mut sx = vec![0.0f64; n];
    let mut sy = vec![0.0f64; n];
    let mut comp_class = vec![0u8; n];
    let offsets = Connectivity::Eight.offsets();
    for y in 0..h {
        for x in 0..w {
            let i = y as usize * w as usize + x as usize;
            let c = lab.labels[i];
            if c == crate::components::UNLABELED {
                continue;
            }
            let c = c as usize;
            comp_class[c] = labels[i];
            sx[c] += x as f64 + 0.5;
            sy[c] += y as f64 + 0.5;
            if !is_min[c] {
                continue;
            }
            for &(dx, dy) in offsets {
                let nx = x as i64 + dx as i64;
                let ny = y as i64 + dy as i64;
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w as usize + nx as usize;
                if lab.labels[j] as usize != c && labels[j] <= labels[i] {
                    is_min[c] = false;
                    break;
                }
            }
        }
    }
    // A lowest-class plateau wider than one head's footprint holds several
    // heads whose plateaus touch; those are split up.
    let s = (2.0 * map.config.edges[0]).ceil().max(1.0) as u32;
    let mut oversized = vec![false; n];
    for (c, comp) in lab.components.iter().enumerate() {
        let b = &comp.bbox;
        oversized[c] = is_min[c] && comp_class[c] == 0 && (b.width() > s || b.height() > s);
    }
    let mut members: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    if oversized.iter().any(|&o| o) {
        for y in 0..h {
            for x in 0..w {
                let c = lab.labels[y as usize * w as usize + x as usize];
                if c != crate::components::UNLABELED && oversized[c as usize] {
                    members[c as usize].push((x, y));
                }
            }
        }
    }
    let mut detections = Vec::new();
    for (c, comp) in lab.components.iter().enumerate() {
        if !is_min[c] {
            continue;
        }
        if oversized[c] {
            for group in split_plateau(&members[c], s) {
                let n = group.len() as f64;
                let gx: f64 = group.iter().map(|&(x, _)| x as f64 + 0.5).sum();
                let gy: f64 = group.iter().map(|&(_, y)| y as f64 + 0.5).sum();
                detections.push(Point::new(gx / n, gy / n));
            }
        } else {
            let n = comp.pixel_count as f64;
            detections.push(Point::new(sx[c] / n, sy[c] / n));
        }
    }
    PointSet::new(detections, w, h)
}
