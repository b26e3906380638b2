//! Multi-scene runs described by a TOML manifest.
//!
//! ```toml
//! [config]
//! mode = "regression"          # or "localization"
//! predictor = "oracle"         # oracle | noisy | file
//! target_center = 8.0
//! sigma = 4.0
//! seed = 7                     # required for the noisy predictor
//!
//! [[scene]]
//! points = "scenes/a.csv"
//! pred_map = "preds/a.crmp"    # file predictor only
//! ```
//!
//! Relative paths are resolved against the manifest's directory. Noisy scenes
//! use seed `seed + index`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use autoscale_core::metrics::count_errors;
use autoscale_core::pipeline::{run_autoscale, Mode};

use crate::commands::{eval_loc, load_points, mode_of, PipelineSettings, PredictorSettings, Report};
use crate::out::{num, sig9, to_json, Outputs, FORMAT_VERSION};
use crate::{KernelArg, ModeArg, PredictorArg};

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Manifest {
    config: Config,
    #[serde(rename = "scene", default)]
    scenes: Vec<Scene>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Config {
    mode: ModeArg,
    #[serde(default = "default_predictor")]
    predictor: PredictorArg,
    target_center: f64,
    #[serde(default = "default_sigma")]
    sigma: f64,
    edges: Option<Vec<f64>>,
    #[serde(default = "default_j_r")]
    j_r: f64,
    #[serde(default = "default_j_l")]
    j_l: f64,
    #[serde(default = "default_c_thresh")]
    c_thresh: u8,
    #[serde(default = "default_top_k")]
    top_k: usize,
    #[serde(default = "default_kernel")]
    kernel: KernelArg,
    fixed_scale: Option<f64>,
    seed: Option<u64>,
    jitter: Option<f64>,
    drop: Option<f64>,
    spurious: Option<f64>,
    /// Match distance for localization scoring.
    #[serde(default = "default_eval_sigma")]
    eval_sigma: f64,
}

fn default_predictor() -> PredictorArg {
    PredictorArg::Oracle
}
fn default_sigma() -> f64 {
    4.0
}
fn default_j_r() -> f64 {
    0.1
}
fn default_j_l() -> f64 {
    0.02
}
fn default_c_thresh() -> u8 {
    8
}
fn default_top_k() -> usize {
    1
}
fn default_kernel() -> KernelArg {
    KernelArg::Fixed
}
fn default_eval_sigma() -> f64 {
    3.0
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Scene {
    points: PathBuf,
    pred_map: Option<PathBuf>,
    width: Option<u32>,
    height: Option<u32>,
}

#[derive(Serialize)]
struct SceneOut {
    index: usize,
    points: String,
    gt_count: usize,
    abs_error: f64,
    f: Option<f64>,
    report: Report,
}

#[derive(Serialize)]
struct Summary {
    scenes: usize,
    mae: f64,
    mse: f64,
    mean_f: Option<f64>,
}

#[derive(Serialize)]
struct RunOut {
    version: u32,
    mode: &'static str,
    summary: Summary,
    scenes: Vec<SceneOut>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn run_manifest(path: &Path, jobs: usize, out: &Path, csv: Option<&Path>) -> Result<()> {
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: Manifest = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let c = &manifest.config;
    if c.predictor == PredictorArg::Noisy && c.seed.is_none() {
        bail!("the noisy predictor requires `seed` in [config]");
    }
    if !(c.eval_sigma > 0.0) {
        bail!("eval_sigma must be > 0");
    }
    let cfg = PipelineSettings {
        target_center: c.target_center,
        sigma: c.sigma,
        edges: c.edges.clone(),
        j_r: c.j_r,
        j_l: c.j_l,
        c_thresh: c.c_thresh,
        top_k: c.top_k,
        kernel: c.kernel,
        fixed_scale: c.fixed_scale,
    }
    .config()?;
    let mode = mode_of(c.mode);

    let one = |(index, scene): (usize, &Scene)| -> Result<SceneOut> {
        let pts_path = resolve(base, &scene.points);
        let dims = scene.width.zip(scene.height);
        let ann = load_points(&pts_path, dims)?;
        let pred_map = scene.pred_map.as_ref().map(|p| resolve(base, p));
        let predictor = PredictorSettings {
            kind: c.predictor,
            jitter: c.jitter,
            drop: c.drop,
            spurious: c.spurious,
            seed: c.seed.map(|s| s.wrapping_add(index as u64)),
            pred_map: pred_map.as_deref(),
        }
        .build(&cfg.label_cfg)?;
        let res = run_autoscale(&ann, predictor.as_ref(), mode, &cfg)
            .with_context(|| format!("scene {index} ({})", scene.points.display()))?;
        let f = match &res.points {
            Some(p) => Some(eval_loc(p, &ann, &c.eval_sigma.to_string(), true)?.f),
            None => None,
        };
        Ok(SceneOut {
            index,
            points: scene.points.display().to_string(),
            gt_count: ann.len(),
            abs_error: sig9((res.final_count - ann.len() as f64).abs()),
            f,
            report: Report::from_result(&res),
        })
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let results: Vec<SceneOut> = pool.install(|| {
        manifest
            .scenes
            .par_iter()
            .enumerate()
            .map(one)
            .collect::<Result<Vec<_>>>()
    })?;

    let preds: Vec<f64> = results.iter().map(|s| s.report.final_count).collect();
    let gts: Vec<f64> = results.iter().map(|s| s.gt_count as f64).collect();
    let (mae, mse) = if results.is_empty() { (0.0, 0.0) } else { count_errors(&preds, &gts)? };
    let mean_f = (mode == Mode::Localization && !results.is_empty())
        .then(|| sig9(results.iter().filter_map(|s| s.f).sum::<f64>() / results.len() as f64));
    let run = RunOut {
        version: FORMAT_VERSION,
        mode: match mode {
            Mode::Regression => "regression",
            Mode::Localization => "localization",
        },
        summary: Summary {
            scenes: results.len(),
            mae: sig9(mae),
            mse: sig9(mse),
            mean_f,
        },
        scenes: results,
    };

    let mut outs = Outputs::default();
    outs.add(out, to_json(&run)?.into_bytes());
    if let Some(csv) = csv {
        let mut s = String::from("index,points,gt_count,final_count,abs_error,r_used,f\n");
        for sc in &run.scenes {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                sc.index,
                sc.points,
                sc.gt_count,
                num(sc.report.final_count),
                num(sc.abs_error),
                num(sc.report.r_used),
                sc.f.map(num).unwrap_or_default()
            ));
        }
        outs.add(csv, s.into_bytes());
    }
    outs.commit()
}
