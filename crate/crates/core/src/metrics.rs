//! Counting and localization evaluation: MAE / RMSE over images, thresholded
//! one-to-one point matching with precision / recall / F-measure, and the
//! grid average mean absolute error (GAME).

use crate::error::{Error, Result};
use crate::points::{Point, PointSet};
use crate::raster::Raster;

/// Dataset-level count errors: mean absolute error and root mean squared error.
pub fn count_errors(preds: &[f64], gts: &[f64]) -> Result<(f64, f64)> {
    if preds.len() != gts.len() {
        return Err(Error::dims(format!("{} predictions vs {} ground truths", preds.len(), gts.len())));
    }
    if preds.is_empty() {
        return Err(Error::invalid("no images to evaluate"));
    }
    let n = preds.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, g) in preds.iter().zip(gts) {
        let d = (p - g).abs();
        abs += d;
        sq += d * d;
    }
    Ok((abs / n, (sq / n).sqrt()))
}

/// Distance threshold: one value for all points, or one per ground-truth point.
#[derive(Debug, Clone, PartialEq)]
pub enum Sigma {
    Fixed(f64),
    PerGt(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchStrategy {
    /// Accept pairs in ascending distance while both ends are free.
    #[default]
    Greedy,
    /// Maximum cardinality, then minimum total distance.
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    pub sigma: Sigma,
    pub strategy: MatchStrategy,
}

impl MatchConfig {
    pub fn fixed(sigma: f64, strategy: MatchStrategy) -> Self {
        Self {
            sigma: Sigma::Fixed(sigma),
            strategy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub tp: u32,
    pub fp: u32,
    pub fn_: u32,
}

fn thresholds(gt_len: usize, sigma: &Sigma) -> Result<Vec<f64>> {
    let t = match sigma {
        Sigma::Fixed(s) => vec![*s; gt_len],
        Sigma::PerGt(v) => {
            if v.len() != gt_len {
                return Err(Error::dims(format!("{} thresholds for {gt_len} ground-truth points", v.len())));
            }
            v.clone()
        }
    };
    if let Some(bad) = t.iter().find(|s| !(**s > 0.0) || s.is_nan()) {
        return Err(Error::invalid(format!("threshold {bad} must be > 0")));
    }
    if let Sigma::Fixed(s) = sigma {
        if !(*s > 0.0) {
            return Err(Error::invalid(format!("threshold {s} must be > 0")));
        }
    }
    Ok(t)
}

/// Feasible `(pred, gt, distance)` pairs, sorted by distance then indices.
fn candidate_pairs(pred: &[Point], gt: &[Point], sigma: &[f64]) -> Vec<MatchPair> {
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = p.dist(g);
            if d <= sigma[j] {
                pairs.push(MatchPair {
                    pred: i,
                    gt: j,
                    distance: d,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });
    pairs
}

/// One-to-one matching of predictions to ground truth under a distance threshold.
pub fn match_points(pred: &PointSet, gt: &PointSet, cfg: &MatchConfig) -> Result<MatchResult> {
    match_point_slices(pred.points(), gt.points(), cfg)
}

pub fn match_point_slices(pred: &[Point], gt: &[Point], cfg: &MatchConfig) -> Result<MatchResult> {
    let sigma = thresholds(gt.len(), &cfg.sigma)?;
    let candidates = candidate_pairs(pred, gt, &sigma);
    let mut pairs = match cfg.strategy {
        MatchStrategy::Greedy => greedy(candidates, pred.len(), gt.len()),
        MatchStrategy::Optimal => optimal(candidates, pred.len(), gt.len()),
    };
    pairs.sort_by_key(|p| (p.pred, p.gt));
    let tp = pairs.len() as u32;
    Ok(MatchResult {
        tp,
        fp: pred.len() as u32 - tp,
        fn_: gt.len() as u32 - tp,
        pairs,
    })
}

fn greedy(candidates: Vec<MatchPair>, n_pred: usize, n_gt: usize) -> Vec<MatchPair> {
    let mut used_p = vec![false; n_pred];
    let mut used_g = vec![false; n_gt];
    candidates
        .into_iter()
        .filter(|c| {
            if used_p[c.pred] || used_g[c.gt] {
                false
            } else {
                used_p[c.pred] = true;
                used_g[c.gt] = true;
                true
            }
        })
        .collect()
}

/// Splits the feasibility graph into connected components and solves each
/// with a min-cost assignment whose costs reward every accepted pair by more
/// than any total distance, so cardinality wins before distance.
fn optimal(candidates: Vec<MatchPair>, n_pred: usize, n_gt: usize) -> Vec<MatchPair> {
    let n = n_pred + n_gt;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for c in &candidates {
        let a = find(&mut parent, c.pred);
        let b = find(&mut parent, n_pred + c.gt);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<&MatchPair>> = Default::default();
    for c in &candidates {
        let root = find(&mut parent, c.pred);
        groups.entry(root).or_default().push(c);
    }
    let mut out = Vec::new();
    for edges in groups.values() {
        let mut preds: Vec<usize> = edges.iter().map(|e| e.pred).collect();
        let mut gts: Vec<usize> = edges.iter().map(|e| e.gt).collect();
        preds.sort_unstable();
        preds.dedup();
        gts.sort_unstable();
        gts.dedup();
        let k = preds.len().max(gts.len());
        let reward = 1.0 + edges.iter().map(|e| e.distance).sum::<f64>();
        let mut cost = vec![vec![0.0f64; k]; k];
        let mut dist = vec![vec![None; k]; k];
        for e in edges {
            let r = preds.binary_search(&e.pred).unwrap();
            let c = gts.binary_search(&e.gt).unwrap();
            cost[r][c] = e.distance - reward;
            dist[r][c] = Some(e.distance);
        }
        for (r, c) in hungarian(&cost).into_iter().enumerate() {
            if let Some(d) = dist[r][c] {
                out.push(MatchPair {
                    pred: preds[r],
                    gt: gts[c],
                    distance: d,
                });
            }
        }
    }
    out
}

/// Minimum-cost perfect assignment on a square matrix (shortest augmenting
/// paths with potentials). Returns the column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut way = vec![0usize; n + 1];
    // row_of[j]: row matched to column j (1-based, 0 = free)
    let mut row_of = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Precision, recall and F-measure; every 0/0 ratio is taken as 0.
pub fn prf(m: &MatchResult) -> (f64, f64, f64) {
    let ratio = |a: u32, b: u32| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(m.tp, m.tp + m.fp);
    let r = ratio(m.tp, m.tp + m.fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Per ground-truth point threshold: distance to its nearest other point.
pub fn knn_sigma(gt: &PointSet) -> Result<Vec<f64>> {
    crate::closeness::nn_distances(gt)
}

/// Cell boundaries along one axis for `cells` even divisions of `len`
/// pixels. Boundaries sit at `floor(k * len / cells)`, so each grid level
/// refines the previous one.
fn grid_bounds(len: u32, cells: u32) -> Vec<u32> {
    (0..=cells)
        .map(|k| (k as u64 * len as u64 / cells as u64) as u32)
        .collect()
}

/// GAME(n) of a single image: absolute count error summed over a
/// `2^n x 2^n` grid.
pub fn game(pred_map: &Raster<f32>, gt: &PointSet, n: u8) -> Result<f64> {
    if n > 5 {
        return Err(Error::invalid(format!("GAME level {n} exceeds 5")));
    }
    if pred_map.dims() != (gt.width(), gt.height()) {
        return Err(Error::dims(format!(
            "prediction {:?} vs annotation frame {}x{}",
            pred_map.dims(),
            gt.width(),
            gt.height()
        )));
    }
    let cells = 1u32 << n;
    let (w, h) = pred_map.dims();
    if w < cells || h < cells {
        return Err(Error::invalid(format!("{w}x{h} frame too small for a {cells}x{cells} grid")));
    }
    let xb = grid_bounds(w, cells);
    let yb = grid_bounds(h, cells);
    let cell_of = |bounds: &[u32], v: u32| bounds.partition_point(|&b| b <= v) - 1;
    let mut pred = vec![0.0f64; (cells * cells) as usize];
    for y in 0..h {
        let cy = cell_of(&yb, y);
        for x in 0..w {
            pred[cy * cells as usize + cell_of(&xb, x)] += *pred_map.get(x, y) as f64;
        }
    }
    let mut truth = vec![0.0f64; (cells * cells) as usize];
    for p in gt.points() {
        let (px, py) = PointSet::pixel_of(p);
        truth[cell_of(&yb, py) * cells as usize + cell_of(&xb, px)] += 1.0;
    }
    Ok(pred.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum())
}
