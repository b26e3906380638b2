//! Seeded synthetic crowd scenes from homogeneous Poisson and Thomas cluster
//! processes.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`; counts are drawn
//! with `rand_distr::Poisson`, offsets with `rand_distr::Normal`, and uniform
//! positions as `u * width` with `u` in `[0, 1)`. The same spec and seed give
//! bit-identical output.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::points::{Point, PointSet};
use crate::raster::BBox;

/// Identifier of the generator, recorded in file headers.
pub const RNG_NAME: &str = "chacha8";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Process {
    /// Homogeneous Poisson process, `intensity` points per square pixel.
    Poisson { intensity: f64 },
    /// Poisson parents, each with Poisson(`mean_offspring`) children displaced
    /// by an isotropic Gaussian of standard deviation `spread` pixels. Only the
    /// children are kept; children outside the frame are rejected.
    Thomas {
        parent_intensity: f64,
        mean_offspring: f64,
        spread: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub process: Process,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("scene must be at least 1x1"));
        }
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match self.process {
            Process::Poisson { intensity } if !ok(intensity) => {
                Err(Error::invalid(format!("intensity {intensity} must be >= 0")))
            }
            Process::Thomas {
                parent_intensity,
                mean_offspring,
                spread,
            } => {
                if !ok(parent_intensity) || !ok(mean_offspring) {
                    return Err(Error::invalid("Thomas intensities must be >= 0"));
                }
                if !(spread > 0.0 && spread.is_finite()) {
                    return Err(Error::invalid(format!("spread {spread} must be > 0")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Expected number of points (ignoring border rejection for Thomas).
    pub fn expected_count(&self) -> f64 {
        let area = self.width as f64 * self.height as f64;
        match self.process {
            Process::Poisson { intensity } => intensity * area,
            Process::Thomas {
                parent_intensity,
                mean_offspring,
                ..
            } => parent_intensity * area * mean_offspring,
        }
    }
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

fn uniform_point(rng: &mut ChaCha8Rng, width: u32, height: u32) -> Point {
    loop {
        let x = rng.random::<f64>() * width as f64;
        let y = rng.random::<f64>() * height as f64;
        if x < width as f64 && y < height as f64 {
            return Point::new(x, y);
        }
    }
}

/// Draw one scene.
pub fn generate(spec: &SceneSpec) -> Result<PointSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let area = w as f64 * h as f64;
    let mut pts = Vec::new();
    match spec.process {
        Process::Poisson { intensity } => {
            let n = poisson_count(&mut rng, intensity * area)?;
            for _ in 0..n {
                pts.push(uniform_point(&mut rng, w, h));
            }
        }
        Process::Thomas {
            parent_intensity,
            mean_offspring,
            spread,
        } => {
            let offset = Normal::new(0.0, spread).map_err(|e| Error::invalid(e.to_string()))?;
            let parents = poisson_count(&mut rng, parent_intensity * area)?;
            for _ in 0..parents {
                let c = uniform_point(&mut rng, w, h);
                let kids = poisson_count(&mut rng, mean_offspring)?;
                for _ in 0..kids {
                    let p = Point::new(c.x + offset.sample(&mut rng), c.y + offset.sample(&mut rng));
                    if p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64 {
                        pts.push(p);
                    }
                }
            }
        }
    }
    PointSet::new(pts, w, h)
}

/// A sparse background scene plus a dense scene confined to `dense_bbox`.
/// Both specs describe the same frame; the dense process is drawn over the
/// box area only.
pub fn dense_sparse_composite(sparse: &SceneSpec, dense: &SceneSpec, dense_bbox: &BBox) -> Result<PointSet> {
    if (sparse.width, sparse.height) != (dense.width, dense.height) {
        return Err(Error::dims(format!(
            "sparse frame {}x{} vs dense frame {}x{}",
            sparse.width, sparse.height, dense.width, dense.height
        )));
    }
    if !dense_bbox.fits(sparse.width, sparse.height) {
        return Err(Error::OutOfBounds {
            x0: dense_bbox.x0,
            y0: dense_bbox.y0,
            x1: dense_bbox.x1,
            y1: dense_bbox.y1,
            width: sparse.width,
            height: sparse.height,
        });
    }
    let background = generate(sparse)?;
    let local = generate(&SceneSpec {
        width: dense_bbox.width(),
        height: dense_bbox.height(),
        ..*dense
    })?;
    let mut pts = background.points().to_vec();
    pts.extend(
        local
            .points()
            .iter()
            .map(|p| Point::new(p.x + dense_bbox.x0 as f64, p.y + dense_bbox.y0 as f64)),
    );
    PointSet::new(pts, sparse.width, sparse.height)
}
