//! Heteroskedasticity-adjusted bivariate kernel estimate of `f(x | σ)`.
//!
//! The estimate at `(x, σ)` is a Gaussian mixture over the data points:
//! point `j` gets weight proportional to `φ_{h_σ}(σ - σ_j)` and contributes
//! a kernel of width `h_x · σ_j` centred at `x_j`. Noisier points therefore
//! get flatter kernels, and only points with similar `σ` carry weight.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::gauss::{normal_pdf, INV_SQRT_2PI};
use crate::types::Observation;

/// Kernel bandwidths. The per-point x-bandwidth `h_x · σ_j` is derived on
/// the fly and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bandwidths {
    h_x: f64,
    h_sigma: f64,
}

impl Bandwidths {
    pub fn new(h_x: f64, h_sigma: f64) -> Result<Self> {
        for (name, h) in [("h_x", h_x), ("h_sigma", h_sigma)] {
            if !(h > 0.0) || !h.is_finite() {
                return domain(format!("bandwidth {name} must be positive and finite, got {h}"));
            }
        }
        Ok(Bandwidths { h_x, h_sigma })
    }

    pub fn h_x(&self) -> f64 {
        self.h_x
    }

    pub fn h_sigma(&self) -> f64 {
        self.h_sigma
    }
}

/// Spread statistics behind a Silverman selection, kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadDiagnostics {
    pub sd: f64,
    pub iqr: f64,
    /// Whether the zero-spread fallback was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SilvermanSelection {
    pub bandwidths: Bandwidths,
    pub x: SpreadDiagnostics,
    pub sigma: SpreadDiagnostics,
    /// Spread of the studentized sample `x_j / σ_j`. Not used for the
    /// bandwidth, reported for comparison only.
    pub studentized: SpreadDiagnostics,
}

const SILVERMAN_CONST: f64 = 1.06;

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|&a| (a - mean) * (a - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Quantile at position `(n + 1) p` of the sorted sample, linearly
/// interpolated and clamped to the extremes.
pub(crate) fn quantile_weibull(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 + 1.0) * p;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

fn rule_of_thumb(v: &[f64]) -> (f64, SpreadDiagnostics) {
    let m = v.len() as f64;
    let sd = sample_sd(v);
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_weibull(&sorted, 0.75) - quantile_weibull(&sorted, 0.25);
    let robust = sd.min(iqr / 1.34);
    let spread = if robust > 0.0 { robust } else { sd };
    if spread > 0.0 && spread.is_finite() {
        let h = SILVERMAN_CONST * spread * m.powf(-0.2);
        (h, SpreadDiagnostics { sd, iqr, fallback: false })
    } else {
        let mean = v.iter().sum::<f64>() / m;
        let h = 1e-3 * mean.abs().max(1.0);
        (h, SpreadDiagnostics { sd, iqr, fallback: true })
    }
}

/// Silverman's rule `1.06 · min(sd, IQR/1.34) · m^(-1/5)`, applied
/// separately to the raw `x` sample and the `σ` sample.
///
/// When the robust spread is zero but the standard deviation is not, the
/// standard deviation is used. When both are zero the bandwidth falls back
/// to `1e-3 · max(1, |mean|)` and the diagnostics carry the flag.
pub fn silverman_bandwidths(data: &[Observation]) -> Result<SilvermanSelection> {
    if data.len() < 2 {
        return domain(format!("bandwidth selection needs at least 2 observations, got {}", data.len()));
    }
    let xs: Vec<f64> = data.iter().map(|o| o.x()).collect();
    let ss: Vec<f64> = data.iter().map(|o| o.sigma()).collect();
    let zs: Vec<f64> = data.iter().map(|o| o.z()).collect();
    let (h_x, x) = rule_of_thumb(&xs);
    let (h_sigma, sigma) = rule_of_thumb(&ss);
    let (_, studentized) = rule_of_thumb(&zs);
    Ok(SilvermanSelection {
        bandwidths: Bandwidths::new(h_x, h_sigma)?,
        x,
        sigma,
        studentized,
    })
}

/// A pilot density value plus whether the uniform-weight fallback fired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotValue {
    pub value: f64,
    pub uniform_fallback: bool,
}

/// The fitted pilot estimator: the data and the bandwidth pair.
#[derive(Debug, Clone)]
pub struct PilotEstimate {
    data: Vec<Observation>,
    bw: Bandwidths,
    truncation: Option<f64>,
}

impl PilotEstimate {
    pub fn new(data: Vec<Observation>, bw: Bandwidths) -> Result<Self> {
        if data.is_empty() {
            return domain("pilot estimate needs at least one observation");
        }
        Ok(PilotEstimate {
            data,
            bw,
            truncation: None,
        })
    }

    /// Builds the estimator with Silverman bandwidths.
    pub fn with_silverman(data: Vec<Observation>) -> Result<(Self, SilvermanSelection)> {
        let sel = silverman_bandwidths(&data)?;
        Ok((PilotEstimate::new(data, sel.bandwidths)?, sel))
    }

    /// Ignore data points with `|σ - σ_j| > width · h_σ`. Off by default.
    pub fn with_truncation(mut self, width: f64) -> Self {
        self.truncation = Some(width);
        self
    }

    pub fn data(&self) -> &[Observation] {
        &self.data
    }

    pub fn bandwidths(&self) -> Bandwidths {
        self.bw
    }

    fn log_weight(&self, sigma: f64, sj: f64) -> f64 {
        let u = (sigma - sj) / self.bw.h_sigma;
        -0.5 * u * u
    }

    fn included(&self, sigma: f64, sj: f64) -> bool {
        match self.truncation {
            Some(w) => (sigma - sj).abs() <= w * self.bw.h_sigma,
            None => true,
        }
    }

    /// Normalized `σ`-kernel weights over the data, in data order.
    pub fn sigma_weights(&self, sigma: f64) -> (Vec<f64>, bool) {
        let logs: Vec<f64> = self
            .data
            .iter()
            .map(|o| {
                if self.included(sigma, o.sigma()) {
                    self.log_weight(sigma, o.sigma())
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            let m = self.data.len() as f64;
            return (vec![1.0 / m; self.data.len()], true);
        }
        let w: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        (w.into_iter().map(|v| v / total).collect(), false)
    }

    /// `φ̂(x, σ)`, the weighted mixture of variable-width kernels.
    pub fn density(&self, x: f64, sigma: f64) -> PilotValue {
        let hx = self.bw.h_x;
        let mut max = f64::NEG_INFINITY;
        for o in &self.data {
            if self.included(sigma, o.sigma()) {
                max = max.max(self.log_weight(sigma, o.sigma()));
            }
        }
        if !max.is_finite() {
            let m = self.data.len() as f64;
            let value = self
                .data
                .iter()
                .map(|o| normal_pdf(x - o.x(), hx * o.sigma()))
                .sum::<f64>()
                / m;
            return PilotValue {
                value,
                uniform_fallback: true,
            };
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for o in &self.data {
            if !self.included(sigma, o.sigma()) {
                continue;
            }
            let lw = self.log_weight(sigma, o.sigma()) - max;
            let bw = hx * o.sigma();
            let u = (x - o.x()) / bw;
            den += lw.exp();
            num += (lw - 0.5 * u * u).exp() / bw;
        }
        PilotValue {
            value: num * INV_SQRT_2PI / den,
            uniform_fallback: false,
        }
    }

    /// Pointwise `density` over a batch of query points.
    pub fn density_batch(&self, queries: &[Observation]) -> Vec<f64> {
        queries
            .par_iter()
            .map(|q| self.density(q.x(), q.sigma()).value)
            .collect()
    }
}

pub fn pilot_density(est: &PilotEstimate, x: f64, sigma: f64) -> f64 {
    est.density(x, sigma).value
}

pub fn pilot_density_batch(est: &PilotEstimate, queries: &[Observation]) -> Vec<f64> {
    est.density_batch(queries)
}
