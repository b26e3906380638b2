//! Learning-to-scale as a standalone solver: per-region scale factors `r_i` and
//! a shared center are driven so that every rescaled closeness `S_i r_i^2`
//! clusters around the center, with `r_i` confined to `[r_min, r_max]`.

use crate::error::{Error, Result};

/// Solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct L2SConfig {
    pub r_min: f64,
    pub r_max: f64,
    /// Center learning rate.
    pub alpha: f64,
    /// Scale-factor step size.
    pub eta: f64,
    /// Iterations between center updates; `0` freezes the center.
    pub update_interval: u32,
    pub max_iters: u32,
    /// Stop once the loss changes by less than this between iterations.
    pub tol: f64,
}

impl Default for L2SConfig {
    fn default() -> Self {
        Self {
            r_min: 0.5,
            r_max: 3.0,
            alpha: 1e-3,
            eta: 1e-3,
            update_interval: 1,
            max_iters: 10_000,
            tol: 1e-9,
        }
    }
}

impl L2SConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(Error::invalid(format!(
                "scale range [{}, {}] must satisfy 0 < r_min < r_max",
                self.r_min, self.r_max
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.eta > 0.0 && self.eta.is_finite())
        {
            return Err(Error::invalid("alpha and eta must be finite and > 0"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol must be >= 0"));
        }
        Ok(())
    }

    pub fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.r_min, self.r_max)
    }
}

/// Optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct L2SState {
    pub r: Vec<f64>,
    pub center: f64,
    pub iter: u32,
    /// Loss after each iteration, starting with the initial loss.
    pub loss_trace: Vec<f64>,
    /// Center value matching each `loss_trace` entry.
    pub center_trace: Vec<f64>,
    pub converged: bool,
}

impl L2SState {
    pub fn loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }
}

fn check_lengths(s: &[f64], r: &[f64]) -> Result<()> {
    if s.len() != r.len() {
        return Err(Error::dims(format!("{} closeness levels vs {} scale factors", s.len(), r.len())));
    }
    if s.is_empty() {
        return Err(Error::invalid("need at least one region"));
    }
    Ok(())
}

/// `1/2 * sum_i (S_i r_i^2 - center)^2`.
pub fn center_loss(s: &[f64], r: &[f64], center: f64) -> Result<f64> {
    check_lengths(s, r)?;
    Ok(0.5
        * s.iter()
            .zip(r)
            .map(|(&si, &ri)| {
                let e = si * ri * ri - center;
                e * e
            })
            .sum::<f64>())
}

/// Partial derivative of [`center_loss`] with respect to one scale factor.
pub fn grad_r(s: f64, r: f64, center: f64) -> f64 {
    2.0 * s * (s * r * r * r - center * r)
}

/// One center step: `center - alpha * sum_i (center - S_i r_i^2) / (1 + M)`.
pub fn update_center(s: &[f64], r: &[f64], center: f64, alpha: f64) -> Result<f64> {
    check_lengths(s, r)?;
    let delta = s
        .iter()
        .zip(r)
        .map(|(&si, &ri)| center - si * ri * ri)
        .sum::<f64>()
        / (1 + s.len()) as f64;
    Ok(center - alpha * delta)
}

/// Scale factor minimizing the loss of a single region for a fixed center.
pub fn optimal_scale(s: f64, center: f64, cfg: &L2SConfig) -> f64 {
    cfg.clamp((center / s).sqrt())
}

/// Alternate projected gradient steps on every `r_i` with a center update
/// every `update_interval` iterations.
///
/// Without `init`, scale factors start at 1 (projected into range) and the
/// center at `mean(S)`. A step that would raise the loss is retried with a
/// halved step size, so the recorded trace never increases.
pub fn fit(s: &[f64], cfg: &L2SConfig, init: Option<L2SState>) -> Result<L2SState> {
    cfg.validate()?;
    if s.is_empty() {
        return Err(Error::invalid("need at least one closeness level"));
    }
    if let Some(bad) = s.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return Err(Error::invalid(format!("closeness level {bad} must be finite and > 0")));
    }
    let mut state = match init {
        Some(mut st) => {
            check_lengths(s, &st.r)?;
            if !st.center.is_finite() {
                return Err(Error::invalid("initial center must be finite"));
            }
            st.r.iter_mut().for_each(|r| *r = cfg.clamp(*r));
            st.loss_trace.clear();
            st.center_trace.clear();
            st.iter = 0;
            st.converged = false;
            st
        }
        None => L2SState {
            r: vec![cfg.clamp(1.0); s.len()],
            center: s.iter().sum::<f64>() / s.len() as f64,
            iter: 0,
            loss_trace: Vec::new(),
            center_trace: Vec::new(),
            converged: false,
        },
    };

    let mut loss = center_loss(s, &state.r, state.center)?;
    state.loss_trace.push(loss);
    state.center_trace.push(state.center);
    let mut trial = state.r.clone();
    while state.iter < cfg.max_iters {
        let mut eta = cfg.eta;
        let mut next = loss;
        for _ in 0..60 {
            for (t, (&si, &ri)) in trial.iter_mut().zip(s.iter().zip(&state.r)) {
                *t = cfg.clamp(ri - eta * grad_r(si, ri, state.center));
            }
            next = center_loss(s, &trial, state.center)?;
            if next <= loss {
                break;
            }
            eta *= 0.5;
        }
        if next <= loss {
            state.r.copy_from_slice(&trial);
        } else {
            next = loss;
        }
        state.iter += 1;
        if cfg.update_interval > 0 && state.iter % cfg.update_interval == 0 {
            let c = update_center(s, &state.r, state.center, cfg.alpha)?;
            let after = center_loss(s, &state.r, c)?;
            if after <= next {
                state.center = c;
                next = after;
            }
        }
        let change = (loss - next).abs();
        loss = next;
        state.loss_trace.push(loss);
        state.center_trace.push(state.center);
        if change < cfg.tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
