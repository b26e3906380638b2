use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use autoscale_core::closeness::{closeness_in, closeness_stats};
use autoscale_core::io::{read_points, read_raster, write_label_pgm_to, write_points_to, write_raster_to, RasterFile};
use autoscale_core::l2s::{fit, L2SConfig, L2SState};
use autoscale_core::losses::{dce_loss, mse_loss, mse_loss_mean, LossConfig};
use autoscale_core::mapgen::{density_map, distance_map, label_map, value_histogram, DensityConfig, DistanceLabelMap, LabelConfig};
use autoscale_core::metrics::{count_errors, game, knn_sigma, match_points, prf, MatchConfig, MatchStrategy, Sigma};
use autoscale_core::pipeline::{
    density_mask, label_mask, run_autoscale, select_regions, AutoScaleResult, FilePredictor, KernelMode, Mode, Noise,
    OracleExact, OracleNoisy, PipelineConfig, Predictor, Region, ScaleSource,
};
use autoscale_core::synth::{generate, Process, SceneSpec, RNG_NAME};
use autoscale_core::PointSet;

use crate::out::{num, sig9, sig9_opt, to_json, Outputs, FORMAT_VERSION};
use crate::{AutoscaleArgs, Command, KernelArg, LossCommand, ModeArg, PredictorArg, ProcessArg};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenDensity {
            points,
            frame,
            sigma,
            radius,
            out,
        } => {
            let pts = load_points(&points, frame.dims())?;
            let mut cfg = DensityConfig::new(sigma)?;
            if let Some(r) = radius {
                cfg = cfg.with_radius(r);
            }
            let map = density_map(&pts, &cfg)?;
            let mut outs = Outputs::default();
            outs.add(&out, raster_bytes(&RasterFile::F32(map))?);
            outs.commit()
        }
        Command::GenLabels {
            points,
            frame,
            edges,
            out,
            pgm,
        } => {
            let pts = load_points(&points, frame.dims())?;
            let map = label_map(&pts, &label_config(edges)?)?;
            let mut outs = Outputs::default();
            if let Some(p) = pgm {
                let mut buf = Vec::new();
                write_label_pgm_to(&mut buf, &map)?;
                outs.add(&p, buf);
            }
            outs.add(&out, raster_bytes(&RasterFile::U8(map.labels))?);
            outs.commit()
        }
        Command::Histogram { map, bins, csv } => histogram(&map, bins, &csv),
        Command::Closeness { points, frame, bbox } => {
            let pts = load_points(&points, frame.dims())?;
            let stats = match bbox {
                Some(b) => closeness_in(&pts, &b)?,
                None => closeness_stats(&pts)?,
            };
            print_json(&ClosenessOut {
                version: FORMAT_VERSION,
                s: sig9(stats.level),
                count: stats.count,
                duplicates: stats.duplicates,
                min: sig9(stats.min()),
                median: sig9(stats.median()),
                max: sig9(stats.max()),
            })
        }
        Command::FitL2s {
            closeness,
            alpha,
            eta,
            rmin,
            rmax,
            interval,
            max_iters,
            tol,
            center,
            trace,
        } => {
            let cfg = L2SConfig {
                r_min: rmin,
                r_max: rmax,
                alpha,
                eta,
                update_interval: interval,
                max_iters,
                tol,
            };
            let init = center.map(|c| L2SState {
                r: vec![1.0; closeness.len()],
                center: c,
                iter: 0,
                loss_trace: Vec::new(),
                center_trace: Vec::new(),
                converged: false,
            });
            let st = fit(&closeness, &cfg, init)?;
            let mut outs = Outputs::default();
            if let Some(t) = trace {
                let mut s = String::from("iter,loss,center\n");
                for (i, (l, c)) in st.loss_trace.iter().zip(&st.center_trace).enumerate() {
                    s.push_str(&format!("{i},{},{}\n", num(*l), num(*c)));
                }
                outs.add(&t, s.into_bytes());
            }
            outs.commit()?;
            print_json(&FitOut {
                version: FORMAT_VERSION,
                r: st.r.iter().map(|&r| sig9(r)).collect(),
                center: sig9(st.center),
                loss: sig9(st.loss()),
                iterations: st.iter,
                converged: st.converged,
            })
        }
        Command::Loss(LossCommand::Mse { pred, gt, mean }) => {
            let p = read_raster(&pred)?.into_f32()?;
            let g = read_raster(&gt)?.into_f32()?;
            let loss = if mean { mse_loss_mean(&p, &g)? } else { mse_loss(&p, &g)? };
            print_json(&LossOut {
                version: FORMAT_VERSION,
                loss: sig9(loss),
            })
        }
        Command::Loss(LossCommand::Dce {
            probs,
            gt,
            floor,
            edges,
        }) => {
            let pr = read_raster(&probs)?.into_stack()?;
            let labels = DistanceLabelMap::new(read_raster(&gt)?.into_u8()?, label_config(edges)?)?;
            if labels.config.n_classes != pr.n_classes() {
                bail!(
                    "probability stack has {} classes, label configuration has {}",
                    pr.n_classes(),
                    labels.config.n_classes
                );
            }
            let cfg = LossConfig {
                prob_floor: floor,
                ..LossConfig::default()
            };
            print_json(&LossOut {
                version: FORMAT_VERSION,
                loss: sig9(dce_loss(&pr, &labels, &cfg)?),
            })
        }
        Command::Select {
            map,
            mode,
            j,
            c_thresh,
            edges,
            top_k,
        } => {
            if top_k == 0 {
                bail!("--top-k must be at least 1");
            }
            let file = read_raster(&map)?;
            let (w, h) = file.dims();
            let (mask, j) = match mode {
                ModeArg::Regression => (density_mask(&file.into_f32()?), j.unwrap_or(0.1)),
                ModeArg::Localization => {
                    let cfg = label_config(edges)?;
                    if c_thresh >= cfg.n_classes {
                        bail!("--c-thresh {c_thresh} must be below {} classes", cfg.n_classes);
                    }
                    let labels = match file {
                        RasterFile::U8(l) => DistanceLabelMap::new(l, cfg)?,
                        RasterFile::Stack(v) => DistanceLabelMap::new(v.argmax(), cfg)?,
                        RasterFile::F32(_) => bail!("localization selection needs a label map or probability stack"),
                    };
                    (label_mask(&labels, c_thresh), j.unwrap_or(0.02))
                }
            };
            if !(j > 0.0 && j <= 1.0) {
                bail!("area ratio {j} must lie in (0, 1]");
            }
            let frame = w as f64 * h as f64;
            let regions = select_regions(&mask, j, top_k)
                .into_iter()
                .map(|b| BoxOut {
                    x0: b.x0,
                    y0: b.y0,
                    x1: b.x1,
                    y1: b.y1,
                    area_ratio: sig9(b.area() as f64 / frame),
                })
                .collect();
            print_json(&SelectOut {
                version: FORMAT_VERSION,
                regions,
            })
        }
        Command::Autoscale(args) => autoscale(args),
        Command::EvalCount { pred, gt } => {
            let p = read_counts(&pred)?;
            let g = read_counts(&gt)?;
            let (mae, mse) = count_errors(&p, &g)?;
            print_json(&CountOut {
                version: FORMAT_VERSION,
                mae: sig9(mae),
                mse: sig9(mse),
            })
        }
        Command::EvalLoc {
            pred,
            gt,
            sigma,
            optimal,
            frame,
        } => {
            let p = load_points(&pred, frame.dims())?;
            let g = load_points(&gt, frame.dims())?;
            let out = eval_loc(&p, &g, &sigma, optimal)?;
            print_json(&out)
        }
        Command::Game { pred, gt, n } => {
            let map = read_raster(&pred)?.into_f32()?;
            let g = read_points(&gt, Some(map.dims()))?;
            print_json(&GameOut {
                version: FORMAT_VERSION,
                n,
                game: sig9(game(&map, &g, n)?),
            })
        }
        Command::Synth {
            w,
            h,
            process,
            intensity,
            parents,
            mu,
            spread,
            seed,
            out,
        } => {
            let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| anyhow!("--process needs --{flag}"));
            let (process, label) = match process {
                ProcessArg::Poisson => (
                    Process::Poisson {
                        intensity: need(intensity, "intensity")?,
                    },
                    format!("process=poisson intensity={}", intensity.unwrap()),
                ),
                ProcessArg::Thomas => {
                    let p = Process::Thomas {
                        parent_intensity: need(parents, "parents")?,
                        mean_offspring: need(mu, "mu")?,
                        spread: need(spread, "spread")?,
                    };
                    (
                        p,
                        format!(
                            "process=thomas parents={} mu={} spread={}",
                            parents.unwrap(),
                            mu.unwrap(),
                            spread.unwrap()
                        ),
                    )
                }
            };
            let spec = SceneSpec {
                width: w,
                height: h,
                process,
                seed,
            };
            let pts = generate(&spec)?;
            let mut buf = Vec::new();
            write_points_to(&mut buf, &pts, &[format!("rng={RNG_NAME} seed={seed} {label}")])?;
            let mut outs = Outputs::default();
            outs.add(&out, buf);
            outs.commit()
        }
        Command::Bench { sizes, reps, seed } => bench(&sizes, reps, seed),
        Command::Run {
            manifest,
            jobs,
            out,
            csv,
        } => crate::manifest::run_manifest(&manifest, jobs, &out, csv.as_deref()),
    }
}

pub(crate) fn load_points(path: &Path, dims: Option<(u32, u32)>) -> Result<PointSet> {
    read_points(path, dims).with_context(|| format!("reading points from {}", path.display()))
}

pub(crate) fn label_config(edges: Option<Vec<f64>>) -> Result<LabelConfig> {
    Ok(match edges {
        Some(e) => LabelConfig::new(e)?,
        None => LabelConfig::default(),
    })
}

fn raster_bytes(file: &RasterFile) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_raster_to(&mut buf, file)?;
    Ok(buf)
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    print!("{}", to_json(v)?);
    Ok(())
}

/// Counts file: one count per line, optionally `name,count`; `#` comments
/// and a non-numeric first line (a header) are skipped.
fn read_counts(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let field = t.rsplit(',').next().unwrap_or(t).trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if first => {}
            Err(e) => bail!("{}:{}: {field:?}: {e}", path.display(), i + 1),
        }
        first = false;
    }
    Ok(out)
}

fn histogram(map: &Path, bins: u32, csv: &Path) -> Result<()> {
    let m = read_raster(map)?.into_f32()?;
    let hist = value_histogram(&m, bins)?;
    let mut s = String::from("lo,hi,count\n");
    for (i, c) in hist.counts.iter().enumerate() {
        s.push_str(&format!("{},{},{c}\n", num(hist.edges[i]), num(hist.edges[i + 1])));
    }
    let mut outs = Outputs::default();
    outs.add(csv, s.into_bytes());
    outs.commit()?;
    if hist.tail_ratio.is_none() {
        log::warn!("map has no positive pixels; tail ratio undefined");
    }
    print_json(&HistOut {
        version: FORMAT_VERSION,
        bins,
        positive: hist.positive,
        tail_ratio: sig9_opt(hist.tail_ratio),
    })
}

pub(crate) fn eval_loc(pred: &PointSet, gt: &PointSet, sigma: &str, optimal: bool) -> Result<LocOut> {
    let sigma = if sigma.eq_ignore_ascii_case("knn") {
        Sigma::PerGt(knn_sigma(gt)?)
    } else {
        let s: f64 = sigma
            .parse()
            .map_err(|e| anyhow!("--sigma must be a number or `knn`: {sigma:?}: {e}"))?;
        Sigma::Fixed(s)
    };
    let strategy = if optimal { MatchStrategy::Optimal } else { MatchStrategy::Greedy };
    let m = match_points(pred, gt, &MatchConfig { sigma, strategy })?;
    let (p, r, f) = prf(&m);
    Ok(LocOut {
        version: FORMAT_VERSION,
        precision: sig9(p),
        recall: sig9(r),
        f: sig9(f),
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
    })
}

/// Pipeline settings shared by `autoscale` and manifest runs.
pub(crate) struct PipelineSettings {
    pub target_center: f64,
    pub sigma: f64,
    pub edges: Option<Vec<f64>>,
    pub j_r: f64,
    pub j_l: f64,
    pub c_thresh: u8,
    pub top_k: usize,
    pub kernel: KernelArg,
    pub fixed_scale: Option<f64>,
}

impl PipelineSettings {
    pub fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::new(self.target_center, DensityConfig::new(self.sigma)?);
        cfg.label_cfg = label_config(self.edges.clone())?;
        cfg.j_r = self.j_r;
        cfg.j_l = self.j_l;
        cfg.c_thresh = self.c_thresh;
        cfg.top_k = self.top_k;
        cfg.kernel_mode = match self.kernel {
            KernelArg::Fixed => KernelMode::Fixed,
            KernelArg::Multiplied => KernelMode::Multiplied,
            KernelArg::Divided => KernelMode::Divided,
        };
        if let Some(r) = self.fixed_scale {
            cfg.scale_source = ScaleSource::Fixed(r);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) struct PredictorSettings<'a> {
    pub kind: PredictorArg,
    pub jitter: Option<f64>,
    pub drop: Option<f64>,
    pub spurious: Option<f64>,
    pub seed: Option<u64>,
    pub pred_map: Option<&'a Path>,
}

impl PredictorSettings<'_> {
    pub fn build(&self, labels: &LabelConfig) -> Result<Box<dyn Predictor>> {
        let noisy_flags = self.jitter.is_some() || self.drop.is_some() || self.spurious.is_some();
        match self.kind {
            PredictorArg::Oracle | PredictorArg::File if noisy_flags => {
                bail!("--sigma-jitter, --drop and --spurious need --predictor noisy")
            }
            PredictorArg::Oracle => Ok(Box::new(OracleExact)),
            PredictorArg::Noisy => {
                let seed = self.seed.ok_or_else(|| anyhow!("--predictor noisy requires --seed"))?;
                let noise = Noise {
                    jitter: self.jitter.unwrap_or(0.0),
                    drop: self.drop.unwrap_or(0.0),
                    spurious: self.spurious.unwrap_or(0.0),
                    seed,
                };
                noise.validate()?;
                Ok(Box::new(OracleNoisy { noise }))
            }
            PredictorArg::File => {
                let path = self.pred_map.ok_or_else(|| anyhow!("--predictor file requires --pred-map"))?;
                let file = read_raster(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(Box::new(FilePredictor::from_file(file, labels)?))
            }
        }
    }
}

pub(crate) fn mode_of(m: ModeArg) -> Mode {
    match m {
        ModeArg::Regression => Mode::Regression,
        ModeArg::Localization => Mode::Localization,
    }
}

fn autoscale(a: AutoscaleArgs) -> Result<()> {
    let settings = PipelineSettings {
        target_center: a.target_center,
        sigma: a.sigma,
        edges: a.edges.clone(),
        j_r: a.j_r,
        j_l: a.j_l,
        c_thresh: a.c_thresh,
        top_k: a.top_k,
        kernel: a.kernel,
        fixed_scale: a.fixed_scale,
    };
    let cfg = settings.config()?;
    let ann = load_points(&a.points, a.frame.dims())?;
    let predictor = PredictorSettings {
        kind: a.predictor,
        jitter: a.sigma_jitter,
        drop: a.drop,
        spurious: a.spurious,
        seed: a.seed,
        pred_map: a.pred_map.as_deref(),
    }
    .build(&cfg.label_cfg)?;
    let mode = mode_of(a.mode);
    if a.stitched_map.is_some() && mode != Mode::Regression {
        bail!("--stitched-map is only available in regression mode");
    }
    let res = run_autoscale(&ann, predictor.as_ref(), mode, &cfg)?;
    let mut outs = Outputs::default();
    outs.add(&a.report, to_json(&Report::from_result(&res))?.into_bytes());
    if let (Some(path), Some(map)) = (&a.stitched_map, res.stitched_density()) {
        outs.add(path, raster_bytes(&RasterFile::F32(map?))?);
    }
    outs.commit()
}

fn bench(sizes: &[u32], reps: u32, seed: u64) -> Result<()> {
    if reps == 0 {
        bail!("--reps must be at least 1");
    }
    println!("{:<14} {:>6} {:>8} {:>12}", "kernel", "size", "points", "median_ms");
    let dcfg = DensityConfig::new(4.0)?;
    for &s in sizes {
        let spec = SceneSpec {
            width: s,
            height: s,
            process: Process::Poisson { intensity: 2e-3 },
            seed,
        };
        let gt = generate(&spec)?;
        let pred = Noise {
            jitter: 1.0,
            drop: 0.05,
            spurious: gt.len() as f64 * 0.05,
            seed,
        }
        .perturb(&gt)?;
        let mcfg = MatchConfig::fixed(4.0, MatchStrategy::Optimal);
        let cases: [(&str, Box<dyn Fn() -> Result<()>>); 3] = [
            ("density_map", Box::new(|| density_map(&gt, &dcfg).map(drop).map_err(Into::into))),
            ("distance_map", Box::new(|| distance_map(&gt).map(drop).map_err(Into::into))),
            ("match_points", Box::new(|| match_points(&pred, &gt, &mcfg).map(drop).map_err(Into::into))),
        ];
        for (name, f) in cases {
            let mut times = Vec::with_capacity(reps as usize);
            for _ in 0..reps {
                let t = Instant::now();
                f()?;
                times.push(t.elapsed().as_secs_f64() * 1e3);
            }
            times.sort_by(f64::total_cmp);
            println!("{name:<14} {s:>6} {:>8} {:>12.3}", gt.len(), times[times.len() / 2]);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ClosenessOut {
    version: u32,
    s: f64,
    count: u32,
    duplicates: u32,
    min: f64,
    median: f64,
    max: f64,
}

#[derive(Serialize)]
struct FitOut {
    version: u32,
    r: Vec<f64>,
    center: f64,
    loss: f64,
    iterations: u32,
    converged: bool,
}

#[derive(Serialize)]
struct LossOut {
    version: u32,
    loss: f64,
}

#[derive(Serialize)]
struct BoxOut {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    area_ratio: f64,
}

#[derive(Serialize)]
struct SelectOut {
    version: u32,
    regions: Vec<BoxOut>,
}

#[derive(Serialize)]
struct CountOut {
    version: u32,
    mae: f64,
    mse: f64,
}

#[derive(Serialize)]
pub(crate) struct LocOut {
    version: u32,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    tp: u32,
    fp: u32,
    #[serde(rename = "fn")]
    fn_: u32,
}

#[derive(Serialize)]
struct GameOut {
    version: u32,
    n: u8,
    game: f64,
}

#[derive(Serialize)]
struct HistOut {
    version: u32,
    bins: u32,
    positive: u64,
    tail_ratio: Option<f64>,
}

#[derive(Serialize)]
pub(crate) struct RegionOut {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    scale: f64,
    closeness: Option<f64>,
    scale_fallback: bool,
}

impl From<&Region> for RegionOut {
    fn from(r: &Region) -> Self {
        Self {
            x0: r.bbox.x0,
            y0: r.bbox.y0,
            x1: r.bbox.x1,
            y1: r.bbox.y1,
            scale: sig9(r.scale),
            closeness: sig9_opt(r.closeness),
            scale_fallback: r.scale_fallback,
        }
    }
}

#[derive(Serialize)]
pub(crate) struct Report {
    version: u32,
    mode: &'static str,
    pub final_count: f64,
    sparse_count: f64,
    initial_count: f64,
    pub r_used: f64,
    region: Option<RegionOut>,
    regions: Vec<RegionOut>,
    points: Option<Vec<[f64; 2]>>,
}

impl Report {
    pub fn from_result(res: &AutoScaleResult) -> Self {
        Self {
            version: FORMAT_VERSION,
            mode: match res.mode {
                Mode::Regression => "regression",
                Mode::Localization => "localization",
            },
            final_count: sig9(res.final_count),
            sparse_count: sig9(res.sparse_count),
            initial_count: sig9(res.initial_count),
            r_used: sig9(res.r_used),
            region: res.region.as_ref().map(RegionOut::from),
            regions: res.regions.iter().map(RegionOut::from).collect(),
            points: res
                .points
                .as_ref()
                .map(|p| p.points().iter().map(|q| [sig9(q.x), sig9(q.y)]).collect()),
        }
    }
}
