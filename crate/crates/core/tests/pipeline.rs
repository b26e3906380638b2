use autoscale_core::mapgen::{density_map, DensityConfig};
use autoscale_core::metrics::{match_points, prf, MatchConfig, MatchStrategy};
use autoscale_core::pipeline::{
    run_autoscale, AutoScaleResult, FilePredictor, KernelMode, Mode, Noise, OracleExact, OracleNoisy, PipelineConfig,
    ScaleSource,
};
use autoscale_core::synth::{dense_sparse_composite, Process, SceneSpec};
use autoscale_core::{BBox, Point, PointSet};

fn cfg() -> PipelineConfig {
    PipelineConfig::new(8.0, DensityConfig::new(4.0).unwrap())
}

fn crowd(seed: u64) -> PointSet {
    let sparse = SceneSpec {
        width: 160,
        height: 128,
        process: Process::Poisson { intensity: 4e-4 },
        seed,
    };
    let dense = SceneSpec {
        process: Process::Thomas {
            parent_intensity: 2e-3,
            mean_offspring: 12.0,
            spread: 4.0,
        },
        seed: seed + 1000,
        ..sparse
    };
    dense_sparse_composite(&sparse, &dense, &BBox::new(40, 30, 110, 100).unwrap()).unwrap()
}

fn check_invariants(res: &AutoScaleResult, cfg: &PipelineConfig, frame: f64) {
    assert!((0.5..=3.0).contains(&res.r_used));
    for r in &res.regions {
        let j = match r.source {
            Mode::Regression => cfg.j_r,
            Mode::Localization => cfg.j_l,
        };
        assert!(r.bbox.area() as f64 / frame >= j);
    }
    for w in res.regions.windows(2) {
        assert!(!w[0].bbox.intersects(&w[1].bbox));
    }
}

#[test]
fn oracle_regression_recovers_count() {
    let c = cfg();
    let mut refined = 0;
    for seed in 0..15 {
        let ann = crowd(seed);
        let res = run_autoscale(&ann, &OracleExact, Mode::Regression, &c).unwrap();
        check_invariants(&res, &c, 160.0 * 128.0);
        refined += res.region.is_some() as u32;
        assert!((res.final_count - ann.len() as f64).abs() <= 1e-3, "seed {seed}: {}", res.final_count);
    }
    assert!(refined >= 10, "{refined}");
}

#[test]
fn oracle_localization_recovers_points() {
    let mut c = cfg();
    c.target_center = 16.0;
    // A 4x4 lattice with 6 px spacing: separated enough for every scale in range.
    let mut pts: Vec<Point> = (0..16)
        .map(|i| Point::new(40.3 + (i % 4) as f64 * 6.0, 30.7 + (i / 4) as f64 * 6.0))
        .collect();
    pts.push(Point::new(120.0, 100.0));
    let ann = PointSet::new(pts, 160, 128).unwrap();
    let res = run_autoscale(&ann, &OracleExact, Mode::Localization, &c).unwrap();
    check_invariants(&res, &c, 160.0 * 128.0);
    assert!(res.region.is_some());
    let out = res.points.unwrap();
    let m = match_points(&out, &ann, &MatchConfig::fixed(3.0, MatchStrategy::Optimal)).unwrap();
    assert_eq!(prf(&m).2, 1.0);
    assert_eq!(res.final_count, 17.0);
}

#[test]
fn sparse_scene_passes_through() {
    let c = cfg();
    let ann = PointSet::new(vec![Point::new(10.0, 10.0), Point::new(150.0, 120.0)], 160, 128).unwrap();
    let res = run_autoscale(&ann, &OracleExact, Mode::Regression, &c).unwrap();
    assert!(res.region.is_none());
    assert_eq!(res.r_used, 1.0);
    let d = density_map(&ann, &c.density_cfg).unwrap();
    assert_eq!(res.final_count, d.sum());
    assert_eq!(res.sparse_count, res.final_count);
}

#[test]
fn file_predictor_matches_oracle_at_unit_scale() {
    let mut c = cfg();
    c.scale_source = ScaleSource::Fixed(1.0);
    let ann = crowd(3);
    let d = density_map(&ann, &c.density_cfg).unwrap();
    let a = run_autoscale(&ann, &FilePredictor::Density(d), Mode::Regression, &c).unwrap();
    let b = run_autoscale(&ann, &OracleExact, Mode::Regression, &c).unwrap();
    assert_eq!(a.region, b.region);
    assert!((a.final_count - b.final_count).abs() < 1e-6);
}

#[test]
fn noisy_oracle_is_deterministic_and_counts_its_own_points() {
    let c = cfg();
    let ann = crowd(4);
    let noise = Noise {
        jitter: 1.5,
        drop: 0.1,
        spurious: 5.0,
        seed: 77,
    };
    let p = OracleNoisy { noise };
    let a = run_autoscale(&ann, &p, Mode::Regression, &c).unwrap();
    let b = run_autoscale(&ann, &p, Mode::Regression, &c).unwrap();
    assert_eq!(a, b);
    let n = noise.perturb(&ann).unwrap().len() as f64;
    assert!((a.final_count - n).abs() < 1e-3);
}

#[test]
fn kernel_modes_and_top_k_keep_counts() {
    let ann = crowd(5);
    for mode in [KernelMode::Fixed, KernelMode::Multiplied, KernelMode::Divided] {
        for k in [1, 3] {
            let mut c = cfg();
            c.kernel_mode = mode;
            c.top_k = k;
            c.j_r = 0.01;
            let res = run_autoscale(&ann, &OracleExact, Mode::Regression, &c).unwrap();
            check_invariants(&res, &c, 160.0 * 128.0);
            assert!(res.regions.len() <= k);
            assert!((res.final_count - ann.len() as f64).abs() <= 1e-3);
            let stitched = res.stitched_density().unwrap().unwrap();
            assert!((stitched.sum() - ann.len() as f64).abs() <= 1e-2);
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let ann = crowd(6);
    let mut c = cfg();
    c.j_r = 1.0;
    assert!(run_autoscale(&ann, &OracleExact, Mode::Regression, &c).is_err());
    let mut c = cfg();
    c.c_thresh = 11;
    assert!(run_autoscale(&ann, &OracleExact, Mode::Localization, &c).is_err());
    let mut c = cfg();
    c.scale_source = ScaleSource::Fixed(4.0);
    assert!(run_autoscale(&ann, &OracleExact, Mode::Regression, &c).is_err());
    let mut c = cfg();
    c.target_center = -1.0;
    assert!(run_autoscale(&ann, &OracleExact, Mode::Regression, &c).is_err());
}
