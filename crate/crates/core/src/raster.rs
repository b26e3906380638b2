//! Row-major rasters, axis-aligned boxes and the resampling primitives used to
//! move maps between frames.
//!
//! Continuous coordinates place pixel `(i, j)` over `[i, i + 1) x [j, j + 1)`,
//! so its center sits at `(i + 0.5, j + 0.5)`. Resampling and distance
//! computations both follow this convention.

use crate::error::{Error, Result};

/// Round half up, the rounding used for every `dims x factor` computation.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Output dimension for scaling `dim` by `factor`.
pub fn scaled_dim(dim: u32, factor: f64) -> u32 {
    let v = round_half_up(dim as f64 * factor);
    if v <= 0.0 {
        0
    } else if v >= u32::MAX as f64 {
        u32::MAX
    } else {
        v as u32
    }
}

/// Axis-aligned box with inclusive `x0, y0` and exclusive `x1, y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::invalid(format!(
                "empty box {x0},{y0},{x1},{y1}: need x0 < x1 and y0 < y1"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// The box covering a whole `width x height` frame.
    pub fn full(width: u32, height: u32) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }

    /// Half-open membership of a continuous point.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 && x < self.x1 as f64 && y >= self.y0 as f64 && y < self.y1 as f64
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    /// Express `inner` (absolute coordinates) relative to this box's origin.
    pub fn relative(&self, inner: &BBox) -> Result<BBox> {
        if inner.x0 < self.x0 || inner.y0 < self.y0 || inner.x1 > self.x1 || inner.y1 > self.y1 {
            return Err(self.out_of_bounds(inner));
        }
        BBox::new(
            inner.x0 - self.x0,
            inner.y0 - self.y0,
            inner.x1 - self.x0,
            inner.y1 - self.y0,
        )
    }

    fn out_of_bounds(&self, other: &BBox) -> Error {
        Error::OutOfBounds {
            x0: other.x0,
            y0: other.y0,
            x1: other.x1,
            y1: other.y1,
            width: self.width(),
            height: self.height(),
        }
    }
}

/// Row-major grid of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<V> {
    width: u32,
    height: u32,
    values: Vec<V>,
}

impl<V: Clone> Raster<V> {
    pub fn filled(width: u32, height: u32, value: V) -> Self {
        Self {
            width,
            height,
            values: vec![value; width as usize * height as usize],
        }
    }
}

impl<V> Raster<V> {
    pub fn from_vec(width: u32, height: u32, values: Vec<V>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::dims(format!(
                "{} values for a {width}x{height} raster",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> V) -> Self {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [V] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<V> {
        self.values
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> &V {
        &self.values[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: V) {
        let i = self.index(x, y);
        self.values[i] = v;
    }

    pub fn bbox(&self) -> BBox {
        BBox::full(self.width, self.height)
    }

    pub fn same_dims<W>(&self, other: &Raster<W>) -> bool {
        self.dims() == other.dims()
    }

    pub fn map<W>(&self, f: impl FnMut(&V) -> W) -> Raster<W> {
        Raster {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(f).collect(),
        }
    }

    fn check_box(&self, bbox: &BBox) -> Result<()> {
        if bbox.fits(self.width, self.height) {
            Ok(())
        } else {
            Err(self.bbox().out_of_bounds(bbox))
        }
    }
}

impl<V: Copy> Raster<V> {
    /// Copy the cells of `bbox` into a new raster.
    pub fn crop(&self, bbox: &BBox) -> Result<Raster<V>> {
        self.check_box(bbox)?;
        let mut values = Vec::with_capacity(bbox.area() as usize);
        for y in bbox.y0..bbox.y1 {
            let start = self.index(bbox.x0, y);
            values.extend_from_slice(&self.values[start..start + bbox.width() as usize]);
        }
        Ok(Raster {
            width: bbox.width(),
            height: bbox.height(),
            values,
        })
    }
}

impl Raster<f32> {
    /// Sum accumulated in f64.
    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    /// Sum over the cells of `bbox`.
    pub fn sum_in(&self, bbox: &BBox) -> Result<f64> {
        self.check_box(bbox)?;
        let mut s = 0.0;
        for y in bbox.y0..bbox.y1 {
            let start = self.index(bbox.x0, y);
            s += self.values[start..start + bbox.width() as usize]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>();
        }
        Ok(s)
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Bilinear sample at continuous coordinates (pixel centers at `+0.5`),
    /// clamping to the outermost pixel centers.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let (x0, x1, tx) = axis_taps(x - 0.5, self.width);
        let (y0, y1, ty) = axis_taps(y - 0.5, self.height);
        let v00 = *self.get(x0, y0) as f64;
        let v10 = *self.get(x1, y0) as f64;
        let v01 = *self.get(x0, y1) as f64;
        let v11 = *self.get(x1, y1) as f64;
        let top = v00 + (v10 - v00) * tx;
        let bottom = v01 + (v11 - v01) * tx;
        (top + (bottom - top) * ty) as f32
    }

    /// Resize by `factor` with half-pixel-center bilinear interpolation.
    /// Output dims are `round(dims x factor)`.
    pub fn bilinear_resize(&self, factor: f64) -> Result<Raster<f32>> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::invalid(format!("resize factor {factor} must be finite and > 0")));
        }
        if self.is_empty() {
            return Err(Error::invalid("cannot resize an empty raster"));
        }
        let out_w = scaled_dim(self.width, factor);
        let out_h = scaled_dim(self.height, factor);
        if out_w == 0 || out_h == 0 {
            return Err(Error::invalid(format!(
                "factor {factor} shrinks {}x{} to nothing",
                self.width, self.height
            )));
        }
        self.bilinear_resize_to(out_w, out_h)
    }

    /// Resize to exactly `out_w x out_h`, aligning pixel centers per axis.
    pub fn bilinear_resize_to(&self, out_w: u32, out_h: u32) -> Result<Raster<f32>> {
        if self.is_empty() || out_w == 0 || out_h == 0 {
            return Err(Error::invalid(format!(
                "cannot resize {}x{} to {out_w}x{out_h}",
                self.width, self.height
            )));
        }
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        Ok(Raster::from_fn(out_w, out_h, |x, y| {
            self.sample_bilinear((x as f64 + 0.5) * sx, (y as f64 + 0.5) * sy)
        }))
    }

    /// Resize to `out_w x out_h` and rescale so the total is unchanged.
    /// An all-zero resize of a non-zero map leaves the result unscaled.
    pub fn resize_preserving_sum(&self, out_w: u32, out_h: u32) -> Result<Raster<f32>> {
        let mut out = self.bilinear_resize_to(out_w, out_h)?;
        let (before, after) = (self.sum(), out.sum());
        if after != 0.0 {
            let k = before / after;
            out.values_mut().iter_mut().for_each(|v| *v = (*v as f64 * k) as f32);
        }
        Ok(out)
    }
}

/// Neighbouring sample indices and interpolation weight along one axis, for a
/// position expressed in pixel-center units.
fn axis_taps(pos: f64, len: u32) -> (u32, u32, f64) {
    let max = (len - 1) as f64;
    let p = pos.clamp(0.0, max);
    let i0 = p.floor();
    let i1 = (i0 + 1.0).min(max);
    (i0 as u32, i1 as u32, p - i0)
}
