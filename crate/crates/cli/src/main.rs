use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use autoscale_core::BBox;

mod commands;
mod manifest;
mod out;

/// Crowd-counting scale toolkit: ground-truth maps, scale learning,
/// dense-region rescaling and evaluation.
#[derive(Parser, Debug)]
#[command(name = "autoscale-kit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Frame size for point files without a `# width=W height=H` header.
#[derive(Args, Debug, Clone, Copy)]
struct FrameArgs {
    #[arg(long, requires = "height")]
    width: Option<u32>,
    #[arg(long, requires = "width")]
    height: Option<u32>,
}

impl FrameArgs {
    fn dims(&self) -> Option<(u32, u32)> {
        self.width.zip(self.height)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Regression,
    Localization,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum PredictorArg {
    Oracle,
    Noisy,
    File,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum KernelArg {
    Fixed,
    Multiplied,
    Divided,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ProcessArg {
    Poisson,
    Thomas,
}

#[derive(Subcommand, Debug)]
enum LossCommand {
    /// Sum of squared differences between two density maps.
    Mse {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Report the per-pixel mean instead of the sum.
        #[arg(long)]
        mean: bool,
    },
    /// Distance-weighted cross-entropy of a probability stack against labels.
    Dce {
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        floor: f64,
        #[arg(long, value_delimiter = ',')]
        edges: Option<Vec<f64>>,
    },
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a Gaussian density map from points.
    GenDensity {
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        frame: FrameArgs,
        #[arg(long)]
        sigma: f64,
        /// Kernel window radius in pixels (default ceil(3 sigma)).
        #[arg(long)]
        radius: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a quantized distance-label map from points.
    GenLabels {
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        frame: FrameArgs,
        #[arg(long, value_delimiter = ',')]
        edges: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Histogram of the positive values of a map, with its P99/median ratio.
    Histogram {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 64)]
        bins: u32,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Mean nearest-neighbour distance of a point set.
    Closeness {
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        frame: FrameArgs,
        #[arg(long, value_parser = parse_bbox)]
        bbox: Option<BBox>,
    },
    /// Fit per-region scale factors to a shared closeness center.
    FitL2s {
        #[arg(long, value_delimiter = ',', required = true)]
        closeness: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        #[arg(long, default_value_t = 0.5)]
        rmin: f64,
        #[arg(long, default_value_t = 3.0)]
        rmax: f64,
        /// Iterations between center updates; 0 keeps the center fixed.
        #[arg(long, default_value_t = 1)]
        interval: u32,
        #[arg(long, default_value_t = 10_000)]
        max_iters: u32,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Initial center (default: mean closeness).
        #[arg(long)]
        center: Option<f64>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Training losses on stored maps.
    #[command(subcommand)]
    Loss(LossCommand),
    /// Select dense regions on a prediction map.
    Select {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Area ratio threshold (default 0.1 for regression, 0.02 for localization).
        #[arg(long)]
        j: Option<f64>,
        #[arg(long, default_value_t = 8)]
        c_thresh: u8,
        #[arg(long, value_delimiter = ',')]
        edges: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
    },
    /// Run the dense-region rescaling pipeline on one scene.
    Autoscale(AutoscaleArgs),
    /// MAE and root-mean-square count error.
    EvalCount {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Precision, recall and F-measure of predicted points.
    EvalLoc {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Match distance in pixels, or `knn` for per-annotation thresholds.
        #[arg(long)]
        sigma: String,
        #[arg(long)]
        optimal: bool,
        #[command(flatten)]
        frame: FrameArgs,
    },
    /// Grid average mean absolute error of a density map.
    Game {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 3)]
        n: u8,
    },
    /// Draw a synthetic scene.
    Synth {
        #[arg(long)]
        w: u32,
        #[arg(long)]
        h: u32,
        #[arg(long, value_enum)]
        process: ProcessArg,
        /// Points per square pixel (Poisson).
        #[arg(long)]
        intensity: Option<f64>,
        /// Parents per square pixel (Thomas).
        #[arg(long)]
        parents: Option<f64>,
        /// Mean children per parent (Thomas).
        #[arg(long)]
        mu: Option<f64>,
        /// Child offset standard deviation in pixels (Thomas).
        #[arg(long)]
        spread: Option<f64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the main kernels on standard sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "128,256,512")]
        sizes: Vec<u32>,
        #[arg(long, default_value_t = 3)]
        reps: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the pipeline over every scene of a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// JSON results, ordered as in the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Per-scene CSV summary.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct AutoscaleArgs {
    #[arg(long)]
    points: PathBuf,
    #[command(flatten)]
    frame: FrameArgs,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, value_enum)]
    predictor: PredictorArg,
    /// Closeness the selected region is rescaled toward.
    #[arg(long)]
    target_center: f64,
    #[arg(long, default_value_t = 4.0)]
    sigma: f64,
    #[arg(long, value_delimiter = ',')]
    edges: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    j_r: f64,
    #[arg(long, default_value_t = 0.02)]
    j_l: f64,
    #[arg(long, default_value_t = 8)]
    c_thresh: u8,
    #[arg(long, default_value_t = 1)]
    top_k: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Fixed)]
    kernel: KernelArg,
    /// Use this scale for every region instead of the closed-form one.
    #[arg(long)]
    fixed_scale: Option<f64>,
    #[arg(long)]
    sigma_jitter: Option<f64>,
    #[arg(long)]
    drop: Option<f64>,
    #[arg(long)]
    spurious: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pred_map: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Also write the initial density with refined regions pasted back.
    #[arg(long)]
    stitched_map: Option<PathBuf>,
}

fn parse_bbox(s: &str) -> Result<BBox, String> {
    let v: Vec<u32> = s
        .split(',')
        .map(|t| t.trim().parse::<u32>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [x0, y0, x1, y1] = v[..] else {
        return Err("expected x0,y0,x1,y1".into());
    };
    BBox::new(x0, y0, x1, y1).map_err(|e| e.to_string())
}

/// Exit status for an error: 2 when it comes from the filesystem, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some()
            || c.downcast_ref::<autoscale_core::Error>().is_some_and(|e| e.is_io())
            || c.downcast_ref::<tempfile::PathPersistError>().is_some()
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AUTOSCALE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
