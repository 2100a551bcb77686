//! Known data-generating laws: the conditional prior of μ given σ and the
//! marginal law of σ. Oracle statistics and the simulation scenarios are
//! built on these.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quad::gl_nodes;

/// `offset + coef · σ^exp`; covers constants, `uσ`, `σ^1.5`, `2/σ`, `2σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaFn {
    pub offset: f64,
    pub coef: f64,
    pub exp: f64,
}

impl SigmaFn {
    pub const fn constant(c: f64) -> Self {
        SigmaFn {
            offset: c,
            coef: 0.0,
            exp: 0.0,
        }
    }

    pub const fn power(coef: f64, exp: f64) -> Self {
        SigmaFn {
            offset: 0.0,
            coef,
            exp,
        }
    }

    #[inline]
    pub fn eval(&self, sigma: f64) -> f64 {
        if self.coef == 0.0 {
            self.offset
        } else {
            self.offset + self.coef * sigma.powf(self.exp)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentKind {
    PointMass { location: SigmaFn },
    Gaussian { mean: SigmaFn, sd: SigmaFn },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorComponent {
    pub weight: f64,
    pub kind: ComponentKind,
}

impl PriorComponent {
    pub fn point(weight: f64, location: SigmaFn) -> Self {
        PriorComponent {
            weight,
            kind: ComponentKind::PointMass { location },
        }
    }

    pub fn gaussian(weight: f64, mean: SigmaFn, sd: SigmaFn) -> Self {
        PriorComponent {
            weight,
            kind: ComponentKind::Gaussian { mean, sd },
        }
    }
}

/// Mixture components of `g_μ(·|σ)` on the piece `σ ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorPiece {
    pub upper: f64,
    pub components: Vec<PriorComponent>,
}

/// A conditional prior `g_μ(·|σ)` given as a finite mixture whose
/// locations, means and spreads are functions of σ. The mixture may switch
/// at σ breakpoints (`piecewise`); each piece covers `σ ≤ upper` and the
/// last piece extends to `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownPrior {
    pieces: Vec<PriorPiece>,
}

fn check_components(components: &[PriorComponent]) -> Result<()> {
    if components.is_empty() {
        return domain("prior needs at least one component");
    }
    let mut total = 0.0;
    for c in components {
        if !(c.weight >= 0.0) || !c.weight.is_finite() {
            return domain(format!("component weight must be nonnegative, got {}", c.weight));
        }
        total += c.weight;
    }
    if (total - 1.0).abs() > 1e-12 {
        return domain(format!("component weights must sum to 1, got {total}"));
    }
    Ok(())
}

impl KnownPrior {
    pub fn new(components: Vec<PriorComponent>) -> Result<Self> {
        check_components(&components)?;
        Ok(KnownPrior {
            pieces: vec![PriorPiece {
                upper: f64::INFINITY,
                components,
            }],
        })
    }

    /// `pieces` must have strictly increasing `upper`; the last bound is
    /// replaced by `+∞`.
    pub fn piecewise(mut pieces: Vec<PriorPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return domain("piecewise prior needs at least one piece");
        }
        for p in &pieces {
            check_components(&p.components)?;
        }
        for w in pieces.windows(2) {
            if !(w[0].upper < w[1].upper) {
                return domain("piece bounds must be strictly increasing");
            }
        }
        if let Some(last) = pieces.last_mut() {
            last.upper = f64::INFINITY;
        }
        Ok(KnownPrior { pieces })
    }

    /// A point mass at zero with weight `1 − p` and a second point mass at
    /// `location(σ)` with weight `p`.
    pub fn spike_and_point(p: f64, location: SigmaFn) -> Result<Self> {
        KnownPrior::new(vec![
            PriorComponent::point(1.0 - p, SigmaFn::constant(0.0)),
            PriorComponent::point(p, location),
        ])
    }

    pub fn pieces(&self) -> &[PriorPiece] {
        &self.pieces
    }

    pub fn components_at(&self, sigma: f64) -> &[PriorComponent] {
        for p in &self.pieces {
            if sigma <= p.upper {
                return &p.components;
            }
        }
        &self.pieces[self.pieces.len() - 1].components
    }

    /// Finite σ values where the mixture switches.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces
            .iter()
            .map(|p| p.upper)
            .filter(|u| u.is_finite())
            .collect()
    }

    pub fn has_gaussian(&self) -> bool {
        self.pieces.iter().any(|p| {
            p.components
                .iter()
                .any(|c| matches!(c.kind, ComponentKind::Gaussian { .. }))
        })
    }

    /// Draws μ given σ.
    pub fn sample_mu<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> f64 {
        let comps = self.components_at(sigma);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = &comps[comps.len() - 1];
        for c in comps {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        match chosen.kind {
            ComponentKind::PointMass { location } => location.eval(sigma),
            ComponentKind::Gaussian { mean, sd } => {
                let e: f64 = rng.sample(StandardNormal);
                mean.eval(sigma) + sd.eval(sigma) * e
            }
        }
    }
}

/// Marginal law of σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaLaw {
    Uniform { lo: f64, hi: f64 },
    DiscreteUniform { values: Vec<f64> },
    /// `weight · U(first) + (1 − weight) · U(second)`.
    MixtureUniform {
        weight: f64,
        first: (f64, f64),
        second: (f64, f64),
    },
}

/// σ quadrature: nodes with probability weights summing to 1.
pub type SigmaNodes = Vec<(f64, f64)>;

impl SigmaLaw {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |a: f64, b: f64| a > 0.0 && a < b && b.is_finite();
        match self {
            SigmaLaw::Uniform { lo, hi } => {
                if !ok_range(*lo, *hi) {
                    return domain(format!("uniform σ law needs 0 < lo < hi, got ({lo}, {hi})"));
                }
            }
            SigmaLaw::DiscreteUniform { values } => {
                if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return domain("discrete σ law needs positive finite values");
                }
            }
            SigmaLaw::MixtureUniform { weight, first, second } => {
                if !(0.0..=1.0).contains(weight) || !ok_range(first.0, first.1) || !ok_range(second.0, second.1) {
                    return domain("invalid mixture-uniform σ law");
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SigmaLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            SigmaLaw::DiscreteUniform { values } => values[rng.random_range(0..values.len())],
            SigmaLaw::MixtureUniform { weight, first, second } => {
                let pick = rng.random::<f64>();
                let u = rng.random::<f64>();
                let (a, b) = if pick < *weight { *first } else { *second };
                a + (b - a) * u
            }
        }
    }

    pub fn cdf(&self, s: f64) -> f64 {
        let ucdf = |a: f64, b: f64| ((s - a) / (b - a)).clamp(0.0, 1.0);
        match self {
            SigmaLaw::Uniform { lo, hi } => ucdf(*lo, *hi),
            SigmaLaw::DiscreteUniform { values } => {
                values.iter().filter(|&&v| v <= s).count() as f64 / values.len() as f64
            }
            SigmaLaw::MixtureUniform { weight, first, second } => {
                weight * ucdf(first.0, first.1) + (1.0 - weight) * ucdf(second.0, second.1)
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            SigmaLaw::Uniform { lo, hi } => (*lo, *hi),
            SigmaLaw::DiscreteUniform { values } => {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            SigmaLaw::MixtureUniform { first, second, .. } => (first.0.min(second.0), first.1.max(second.1)),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, SigmaLaw::DiscreteUniform { .. })
    }

    /// Density segments `(a, b, density)` of a continuous law.
    pub fn segments(&self) -> Vec<(f64, f64, f64)> {
        match self {
            SigmaLaw::Uniform { lo, hi } => vec![(*lo, *hi, 1.0 / (hi - lo))],
            SigmaLaw::DiscreteUniform { .. } => Vec::new(),
            SigmaLaw::MixtureUniform { weight, first, second } => {
                let mut segs = Vec::new();
                if *weight > 0.0 {
                    segs.push((first.0, first.1, weight / (first.1 - first.0)));
                }
                if *weight < 1.0 {
                    segs.push((second.0, second.1, (1.0 - weight) / (second.1 - second.0)));
                }
                segs
            }
        }
    }

    /// Quadrature nodes for `E_σ[h(σ)]`: the atoms of a discrete law, or
    /// composite Gauss–Legendre on each density segment split at `breaks`.
    pub fn nodes(&self, panels_per_unit: usize, breaks: &[f64]) -> SigmaNodes {
        if let SigmaLaw::DiscreteUniform { values } = self {
            let w = 1.0 / values.len() as f64;
            return values.iter().map(|&v| (v, w)).collect();
        }
        let mut out = Vec::new();
        for (a, b, dens) in self.segments() {
            let mut cuts = vec![a];
            cuts.extend(breaks.iter().cloned().filter(|&c| c > a && c < b));
            cuts.push(b);
            for w in cuts.windows(2) {
                let panels = ((w[1] - w[0]) * panels_per_unit as f64).ceil().max(1.0) as usize;
                for (s, wt) in gl_nodes(w[0], w[1], panels) {
                    out.push((s, wt * dens));
                }
            }
        }
        out
    }
}
