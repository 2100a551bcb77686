//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, HamtError, Result};

/// One testing unit: a summary statistic and its known standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    x: f64,
    sigma: f64,
}

impl Observation {
    pub fn new(x: f64, sigma: f64) -> Result<Self> {
        if !x.is_finite() {
            return domain(format!("observation x must be finite, got {x}"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return domain(format!("observation sigma must be positive and finite, got {sigma}"));
        }
        Ok(Observation { x, sigma })
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Standardized statistic `x / σ`.
    #[inline]
    pub fn z(&self) -> f64 {
        self.x / self.sigma
    }
}

/// Latent state of a simulated unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthRecord {
    pub mu: f64,
    pub is_nonnull: bool,
}

impl TruthRecord {
    pub fn new(mu: f64, region: &IndifferenceRegion) -> Self {
        TruthRecord {
            mu,
            is_nonnull: !region.contains(mu),
        }
    }
}

/// The null set `A`. Both forms are closed: the boundary belongs to the null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndifferenceRegion {
    /// `A = (-∞, mu0]`.
    LeftRay { mu0: f64 },
    /// `A = [lo, hi]`.
    Interval { lo: f64, hi: f64 },
}

impl IndifferenceRegion {
    pub fn left_ray(mu0: f64) -> Result<Self> {
        if !mu0.is_finite() {
            return domain(format!("region bound must be finite, got {mu0}"));
        }
        Ok(IndifferenceRegion::LeftRay { mu0 })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return domain(format!("region bounds must be finite, got [{lo}, {hi}]"));
        }
        if !(lo < hi) {
            return domain(format!("interval region requires lo < hi, got [{lo}, {hi}]"));
        }
        Ok(IndifferenceRegion::Interval { lo, hi })
    }

    /// The whole real line, represented by the widest finite interval.
    pub fn everything() -> Self {
        IndifferenceRegion::Interval {
            lo: -f64::MAX,
            hi: f64::MAX,
        }
    }

    #[inline]
    pub fn contains(&self, mu: f64) -> bool {
        match *self {
            IndifferenceRegion::LeftRay { mu0 } => mu <= mu0,
            IndifferenceRegion::Interval { lo, hi } => lo <= mu && mu <= hi,
        }
    }

    /// Lower and upper bounds, with `-∞` for the open end of a ray.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            IndifferenceRegion::LeftRay { mu0 } => (f64::NEG_INFINITY, mu0),
            IndifferenceRegion::Interval { lo, hi } => (lo, hi),
        }
    }
}

pub fn region_contains(region: &IndifferenceRegion, mu: f64) -> bool {
    region.contains(mu)
}

impl fmt::Display for IndifferenceRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            IndifferenceRegion::LeftRay { mu0 } => write!(f, "le:{mu0}"),
            IndifferenceRegion::Interval { lo, hi } if lo == -f64::MAX && hi == f64::MAX => {
                write!(f, "all")
            }
            IndifferenceRegion::Interval { lo, hi } => write!(f, "in:{lo}:{hi}"),
        }
    }
}

/// Parses `le:<mu0>`, `in:<lo>:<hi>` or `all`.
impl FromStr for IndifferenceRegion {
    type Err = HamtError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || HamtError::InvalidConfig(format!("cannot parse region `{s}`; expected le:<mu0>, in:<lo>:<hi> or all"));
        if s == "all" {
            return Ok(IndifferenceRegion::everything());
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| bad());
        if let Some(rest) = s.strip_prefix("le:") {
            return IndifferenceRegion::left_ray(num(rest)?);
        }
        if let Some(rest) = s.strip_prefix("in:") {
            let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
            return IndifferenceRegion::interval(num(lo)?, num(hi)?);
        }
        Err(bad())
    }
}

/// Reject/accept decisions for `m` units plus the realized cutoff.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionSet {
    decisions: Vec<bool>,
    threshold: f64,
    rejected_count: usize,
}

impl DecisionSet {
    pub fn new(decisions: Vec<bool>, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return domain(format!("decision threshold must lie in [0, 1], got {threshold}"));
        }
        let rejected_count = decisions.iter().filter(|&&d| d).count();
        Ok(DecisionSet {
            decisions,
            threshold,
            rejected_count,
        })
    }

    pub fn none(m: usize) -> Self {
        DecisionSet {
            decisions: vec![false; m],
            threshold: 0.0,
            rejected_count: 0,
        }
    }

    pub fn decisions(&self) -> &[bool] {
        &self.decisions
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn rejected_count(&self) -> usize {
        self.rejected_count
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    /// Indices of rejected units, ascending.
    pub fn rejected(&self) -> impl Iterator<Item = usize> + '_ {
        self.decisions
            .iter()
            .enumerate()
            .filter_map(|(i, &d)| d.then_some(i))
    }
}
