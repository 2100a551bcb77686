//! Conditional local FDR statistics `P(μ ∈ A | data)`: the data-driven
//! version built on a fitted [`PriorModel`], the oracle version under a
//! [`KnownPrior`], and the z-value oracle that only sees `z = x/σ`.

use rayon::prelude::*;
use serde::Serialize;

use crate::deconv::{prior_mass, PriorModel};
use crate::error::{domain, Result};
use crate::gauss::{norm_interval, normal_log_pdf, normal_pdf};
use crate::prior::{ComponentKind, KnownPrior, PriorComponent, SigmaLaw};
use crate::quad::AdaptiveSimpson;
use crate::types::{IndifferenceRegion, Observation};

/// Smallest marginal density accepted as a divisor.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Null-component and full marginal densities at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalDensities {
    pub f0: f64,
    pub f: f64,
}

/// `f̂₀(x|σ)` and `f̂(x|σ)` from the clipped, renormalised prior masses.
pub fn marginal_hat(model: &PriorModel, x: f64, sigma: f64, region: &IndifferenceRegion) -> Result<MarginalDensities> {
    if !x.is_finite() {
        return domain(format!("x must be finite, got {x}"));
    }
    let g = prior_mass(model, sigma)?.masses;
    let mut f0 = 0.0;
    let mut f = 0.0;
    for (&u, &gj) in model.grid().points().iter().zip(&g) {
        let term = normal_pdf(x - u, sigma) * gj;
        f += term;
        if region.contains(u) {
            f0 += term;
        }
    }
    Ok(MarginalDensities { f0: f0.min(f), f })
}

/// A data-driven statistic together with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClfdrEval {
    pub value: f64,
    /// `f̂` fell below [`DENSITY_FLOOR`]; the value was set to 1.
    pub underflow: bool,
    /// Every prior mass at this σ was clipped and the uniform prior used.
    pub prior_fallback: bool,
}

pub fn clfdr_hat_eval(model: &PriorModel, obs: &Observation, region: &IndifferenceRegion) -> Result<ClfdrEval> {
    let pm = prior_mass(model, obs.sigma())?;
    let mut f0 = 0.0;
    let mut f = 0.0;
    for (&u, &gj) in model.grid().points().iter().zip(&pm.masses) {
        let term = normal_pdf(obs.x() - u, obs.sigma()) * gj;
        f += term;
        if region.contains(u) {
            f0 += term;
        }
    }
    if !(f >= DENSITY_FLOOR) {
        return Ok(ClfdrEval {
            value: 1.0,
            underflow: true,
            prior_fallback: pm.fallback,
        });
    }
    Ok(ClfdrEval {
        value: (f0 / f).clamp(0.0, 1.0),
        underflow: false,
        prior_fallback: pm.fallback,
    })
}

/// Data-driven `T̂ = f̂₀(x|σ) / f̂(x|σ)`.
pub fn clfdr_hat(model: &PriorModel, obs: &Observation, region: &IndifferenceRegion) -> Result<f64> {
    clfdr_hat_eval(model, obs, region).map(|e| e.value)
}

/// Per-unit statistics with diagnostic counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClfdrVector {
    pub values: Vec<f64>,
    pub underflows: usize,
    pub prior_fallbacks: usize,
}

impl ClfdrVector {
    /// Unit indices sorted by (value, index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        idx
    }
}

pub fn clfdr_hat_batch(model: &PriorModel, data: &[Observation], region: &IndifferenceRegion) -> Result<ClfdrVector> {
    let evals: Vec<ClfdrEval> = data
        .par_iter()
        .map(|o| clfdr_hat_eval(model, o, region))
        .collect::<Result<_>>()?;
    Ok(ClfdrVector {
        values: evals.iter().map(|e| e.value).collect(),
        underflows: evals.iter().filter(|e| e.underflow).count(),
        prior_fallbacks: evals.iter().filter(|e| e.prior_fallback).count(),
    })
}

/// Log marginal weight of each prior component at `(x, σ)` and the
/// probability that μ falls in `A` given `x` and that component.
pub(crate) fn component_terms(
    prior: &KnownPrior,
    x: f64,
    sigma: f64,
    region: &IndifferenceRegion,
    out: &mut Vec<(f64, f64)>,
) {
    terms_of(prior.components_at(sigma), x, sigma, region, out)
}

/// As `component_terms`, for an explicit component list.
fn terms_of(components: &[PriorComponent], x: f64, sigma: f64, region: &IndifferenceRegion, out: &mut Vec<(f64, f64)>) {
    out.clear();
    let (lo, hi) = region.bounds();
    for c in components {
        if c.weight == 0.0 {
            continue;
        }
        let lw = c.weight.ln();
        match c.kind {
            ComponentKind::PointMass { location } => {
                let loc = location.eval(sigma);
                let null = if region.contains(loc) { 1.0 } else { 0.0 };
                out.push((lw + normal_log_pdf(x - loc, sigma), null));
            }
            ComponentKind::Gaussian { mean, sd } => {
                let a = mean.eval(sigma);
                let tau = sd.eval(sigma);
                if tau == 0.0 {
                    let null = if region.contains(a) { 1.0 } else { 0.0 };
                    out.push((lw + normal_log_pdf(x - a, sigma), null));
                    continue;
                }
                let (s2, t2) = (sigma * sigma, tau * tau);
                let total = s2 + t2;
                let post_mean = (t2 * x + s2 * a) / total;
                let post_sd = (s2 * t2 / total).sqrt();
                let null = norm_interval((lo - post_mean) / post_sd, (hi - post_mean) / post_sd);
                out.push((lw + normal_log_pdf(x - a, total.sqrt()), null));
            }
        }
    }
}

/// `(log of the common scale, f0, f)` with both densities divided by the
/// scale, so that ratios survive extreme `x`.
pub(crate) fn scaled_oracle_densities(terms: &[(f64, f64)]) -> (f64, f64, f64) {
    let m = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return (m, 0.0, 0.0);
    }
    let mut f0 = 0.0;
    let mut f = 0.0;
    for &(l, p) in terms {
        let w = (l - m).exp();
        f += w;
        f0 += w * p;
    }
    (m, f0, f)
}

/// Oracle `T^OR(x, σ) = P(μ ∈ A | x, σ)` in closed form.
pub fn clfdr_oracle(prior: &KnownPrior, obs: &Observation, region: &IndifferenceRegion) -> f64 {
    oracle_stat(prior, obs.x(), obs.sigma(), region)
}

pub(crate) fn oracle_stat(prior: &KnownPrior, x: f64, sigma: f64, region: &IndifferenceRegion) -> f64 {
    let mut terms = Vec::new();
    component_terms(prior, x, sigma, region, &mut terms);
    let (_, f0, f) = scaled_oracle_densities(&terms);
    if f > 0.0 {
        (f0 / f).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Null and full densities of `z` given σ, `σ·f₀(σz|σ)` and `σ·f(σz|σ)`,
/// on the log scale `log_scale`.
/// `comps` is the prior piece in force, passed explicitly so that an
/// integration window ending on a breakpoint sees a single piece.
fn z_densities(comps: &[PriorComponent], z: f64, sigma: f64, region: &IndifferenceRegion, log_scale: f64) -> (f64, f64) {
    let mut terms = Vec::new();
    terms_of(comps, sigma * z, sigma, region, &mut terms);
    let mut f0 = 0.0;
    let mut f = 0.0;
    for (l, p) in terms {
        let w = (l + sigma.ln() - log_scale).exp();
        f += w;
        f0 += w * p;
    }
    (f0, f)
}

/// Largest log z-density over the σ support, used to keep the integrands
/// representable.
fn z_log_scale(prior: &KnownPrior, law: &SigmaLaw, z: f64, region: &IndifferenceRegion) -> f64 {
    let probe: Vec<f64> = match law {
        SigmaLaw::DiscreteUniform { values } => values.clone(),
        _ => law
            .segments()
            .iter()
            .flat_map(|&(a, b, _)| (0..=64).map(move |i| a + (b - a) * i as f64 / 64.0))
            .collect(),
    };
    let mut terms = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for s in probe {
        component_terms(prior, s * z, s, region, &mut terms);
        for &(l, _) in &terms {
            best = best.max(l + s.ln());
        }
    }
    best
}

/// z-value oracle `P(μ ∈ A | z)` with σ integrated out under `law`.
/// Continuous laws use adaptive Simpson on each density segment, split at
/// the prior's breakpoints; failure to converge is an error.
pub fn z_oracle_stat(prior: &KnownPrior, law: &SigmaLaw, z: f64, region: &IndifferenceRegion) -> Result<f64> {
    z_oracle_stat_with(prior, law, z, region, &AdaptiveSimpson::default())
}

pub fn z_oracle_stat_with(
    prior: &KnownPrior,
    law: &SigmaLaw,
    z: f64,
    region: &IndifferenceRegion,
    quad: &AdaptiveSimpson,
) -> Result<f64> {
    if !z.is_finite() {
        return domain(format!("z must be finite, got {z}"));
    }
    law.validate()?;
    let scale = z_log_scale(prior, law, z, region);
    if !scale.is_finite() {
        return Ok(1.0);
    }
    let (mut num, mut den) = (0.0, 0.0);
    if let SigmaLaw::DiscreteUniform { values } = law {
        let w = 1.0 / values.len() as f64;
        for &s in values {
            let (f0, f) = z_densities(prior.components_at(s), z, s, region, scale);
            num += w * f0;
            den += w * f;
        }
    } else {
        let breaks = prior.breakpoints();
        for (a, b, dens) in law.segments() {
            let mut cuts = vec![a];
            cuts.extend(breaks.iter().cloned().filter(|&c| c > a && c < b));
            cuts.push(b);
            for w in cuts.windows(2) {
                let comps = prior.components_at(0.5 * (w[0] + w[1]));
                num += dens * quad.integrate(&|s| z_densities(comps, z, s, region, scale).0, w[0], w[1])?;
                den += dens * quad.integrate(&|s| z_densities(comps, z, s, region, scale).1, w[0], w[1])?;
            }
        }
    }
    if den > 0.0 {
        Ok((num / den).clamp(0.0, 1.0))
    } else {
        Ok(1.0)
    }
}
