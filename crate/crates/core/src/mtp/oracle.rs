//! Oracle thresholds under a known model.
//!
//! `Q(t)` is the mFDR of rejecting `{T < t}`: the ratio of null to total
//! probability of the rejection region. σ is integrated with the law's
//! quadrature nodes (or atoms). For each σ node the region is a finite union
//! of x-intervals, found by scanning the statistic on a grid and refining
//! each crossing by bisection. Point-mass components integrate over an
//! interval through `Φ` differences; Gaussian components add a Gauss–Legendre
//! integral over μ, split at the edges of `A`.

use rayon::prelude::*;
use serde::Serialize;

use crate::clfdr::{clfdr_oracle, oracle_stat, z_oracle_stat};
use crate::error::{domain, HamtError, Result};
use crate::gauss::{norm_interval, normal_pdf};
use crate::prior::{ComponentKind, KnownPrior, SigmaLaw};
use crate::quad::{bisect, gl_integrate};
use crate::types::{DecisionSet, IndifferenceRegion, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleOptions {
    /// Gauss–Legendre panels per unit length of σ.
    pub sigma_panels_per_unit: usize,
    /// Grid points used to locate the rejection region of each σ node.
    pub scan_points: usize,
    /// Half-width of the scanned range, in marginal standard deviations.
    pub tail_sd: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub t_tol: f64,
    pub max_bisect: usize,
    /// Evenly spaced `t` values checked before bisection.
    pub coarse_points: usize,
    /// Allowed decrease of `Q` between increasing `t` (numerical noise).
    pub monotone_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            sigma_panels_per_unit: 16,
            scan_points: 801,
            tail_sd: 10.0,
            t_lo: 1e-6,
            t_hi: 1.0 - 1e-6,
            t_tol: 1e-6,
            max_bisect: 200,
            coarse_points: 48,
            monotone_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRegime {
    /// `Q(t*) ≤ α` with `t*` strictly inside `(t_lo, t_hi)`.
    Interior,
    /// `Q(t) ≤ α` up to `t_hi`; everything with a statistic below it is rejected.
    RejectAll,
    /// No `t` achieves `Q(t) ≤ α` with a nonempty rejection region.
    RejectNone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleThreshold {
    pub t_star: f64,
    pub regime: ThresholdRegime,
    /// `Q(t*)`.
    pub mfdr: f64,
    /// Expected fraction of non-nulls rejected.
    pub power: f64,
    /// Probability that a unit is rejected.
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, Copy)]
enum Comp {
    Point { loc: f64, null: bool },
    Gauss { mean: f64, sd: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    sigma: f64,
    weight: f64,
    comps: Vec<(f64, Comp)>,
}

impl Node {
    fn new(prior: &KnownPrior, region: &IndifferenceRegion, sigma: f64, weight: f64) -> Self {
        let comps = prior
            .components_at(sigma)
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| {
                let comp = match c.kind {
                    ComponentKind::PointMass { location } => {
                        let loc = location.eval(sigma);
                        Comp::Point {
                            loc,
                            null: region.contains(loc),
                        }
                    }
                    ComponentKind::Gaussian { mean, sd } => {
                        let (mean, sd) = (mean.eval(sigma), sd.eval(sigma));
                        if sd > 0.0 {
                            Comp::Gauss { mean, sd }
                        } else {
                            Comp::Point {
                                loc: mean,
                                null: region.contains(mean),
                            }
                        }
                    }
                };
                (c.weight, comp)
            })
            .collect();
        Node { sigma, weight, comps }
    }

    /// Range of x holding all but a negligible share of the marginal mass.
    fn x_range(&self, tail: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(_, c) in &self.comps {
            let (centre, sd) = match c {
                Comp::Point { loc, .. } => (loc, self.sigma),
                Comp::Gauss { mean, sd } => (mean, (self.sigma * self.sigma + sd * sd).sqrt()),
            };
            lo = lo.min(centre - tail * sd);
            hi = hi.max(centre + tail * sd);
        }
        (lo, hi)
    }

    /// Total non-null probability at this σ.
    fn nonnull_total(&self, region: &IndifferenceRegion) -> f64 {
        let (lo, hi) = region.bounds();
        self.comps
            .iter()
            .map(|&(w, c)| match c {
                Comp::Point { null, .. } => {
                    if null {
                        0.0
                    } else {
                        w
                    }
                }
                Comp::Gauss { mean, sd } => w * (1.0 - norm_interval((lo - mean) / sd, (hi - mean) / sd)),
            })
            .sum()
    }

    /// Null and non-null probability of `x ∈ [a, b]` at this σ.
    fn masses(&self, a: f64, b: f64, region: &IndifferenceRegion, tail: f64) -> (f64, f64) {
        let s = self.sigma;
        let mut null = 0.0;
        let mut nonnull = 0.0;
        for &(w, c) in &self.comps {
            match c {
                Comp::Point { loc, null: is_null } => {
                    let p = w * norm_interval((a - loc) / s, (b - loc) / s);
                    if is_null {
                        null += p;
                    } else {
                        nonnull += p;
                    }
                }
                Comp::Gauss { mean, sd } => {
                    let (n0, n1) = gaussian_masses(mean, sd, s, a, b, region, tail);
                    null += w * n0;
                    nonnull += w * n1;
                }
            }
        }
        (null, nonnull)
    }
}

/// `P(x ∈ [a, b], μ ∈ A)` and `P(x ∈ [a, b], μ ∉ A)` for `μ ~ N(mean, sd²)`
/// and `x | μ ~ N(μ, s²)`, by quadrature over μ.
fn gaussian_masses(mean: f64, sd: f64, s: f64, a: f64, b: f64, region: &IndifferenceRegion, tail: f64) -> (f64, f64) {
    // μ values that matter: near the prior and within reach of [a, b]
    let lo = (mean - tail * sd).max(a - tail * s);
    let hi = (mean + tail * sd).min(b + tail * s);
    if !(lo < hi) {
        return (0.0, 0.0);
    }
    let (alo, ahi) = region.bounds();
    let integrate = |p: f64, q: f64| -> f64 {
        let (p, q) = (p.max(lo), q.min(hi));
        if !(p < q) {
            return 0.0;
        }
        let step = 0.25 * sd.min(s);
        let panels = ((q - p) / step).ceil().clamp(1.0, 2000.0) as usize;
        gl_integrate(|mu| normal_pdf(mu - mean, sd) * norm_interval((a - mu) / s, (b - mu) / s), p, q, panels)
    };
    let null = integrate(alo, ahi);
    let nonnull = integrate(f64::NEG_INFINITY, alo) + integrate(ahi, f64::INFINITY);
    (null, nonnull)
}

fn sigma_nodes(prior: &KnownPrior, law: &SigmaLaw, region: &IndifferenceRegion, opts: &OracleOptions) -> Result<Vec<Node>> {
    law.validate()?;
    if opts.scan_points < 3 || opts.coarse_points < 2 {
        return domain("oracle options need at least 3 scan points and 2 coarse points");
    }
    if !(opts.t_lo > 0.0 && opts.t_lo < opts.t_hi && opts.t_hi < 1.0) {
        return domain("oracle options need 0 < t_lo < t_hi < 1");
    }
    Ok(law
        .nodes(opts.sigma_panels_per_unit, &prior.breakpoints())
        .into_iter()
        .map(|(s, w)| Node::new(prior, region, s, w))
        .collect())
}

/// A statistic sampled on a grid, with its exact evaluator for refinement.
struct Scan<F: Fn(f64) -> f64> {
    xs: Vec<f64>,
    ts: Vec<f64>,
    stat: F,
}

impl<F: Fn(f64) -> f64> Scan<F> {
    fn new(lo: f64, hi: f64, n: usize, stat: F) -> Self {
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let ts = xs.iter().map(|&x| stat(x)).collect();
        Scan { xs, ts, stat }
    }

    /// Crossing of `stat = t` between grid neighbours `i − 1` and `i`.
    fn crossing(&self, i: usize, t: f64) -> f64 {
        let (a, b) = (self.xs[i - 1], self.xs[i]);
        let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
        bisect(|x| (self.stat)(x) - t, a, b, tol, 80)
    }

    /// Intervals where `stat < t`; open ends extend to `±∞`.
    fn region_below(&self, t: f64) -> Vec<(f64, f64)> {
        let n = self.xs.len();
        let mut out = Vec::new();
        let mut start = if self.ts[0] < t { Some(f64::NEG_INFINITY) } else { None };
        for i in 1..n {
            let inside = self.ts[i] < t;
            match (start, inside) {
                (None, true) => start = Some(self.crossing(i, t)),
                (Some(a), false) => {
                    out.push((a, self.crossing(i, t)));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(a) = start {
            out.push((a, f64::INFINITY));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct CurvePoint {
    t: f64,
    null: f64,
    nonnull: f64,
}

impl CurvePoint {
    fn q(&self) -> f64 {
        let total = self.null + self.nonnull;
        if total > 0.0 {
            self.null / total
        } else {
            0.0
        }
    }
}

fn check_monotone(a: &CurvePoint, b: &CurvePoint, tol: f64) -> Result<()> {
    if a.t < b.t && a.q() > b.q() + tol {
        return Err(HamtError::NonMonotone {
            t_lo: a.t,
            q_lo: a.q(),
            t_hi: b.t,
            q_hi: b.q(),
        });
    }
    Ok(())
}

/// `sup{t : Q(t) ≤ α}` by a coarse scan followed by bisection.
fn search(eval: impl Fn(f64) -> CurvePoint, alpha: f64, opts: &OracleOptions) -> Result<(CurvePoint, ThresholdRegime)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let none = CurvePoint {
        t: 0.0,
        null: 0.0,
        nonnull: 0.0,
    };
    let n = opts.coarse_points;
    let coarse: Vec<CurvePoint> = (0..n)
        .map(|i| eval(opts.t_lo + (opts.t_hi - opts.t_lo) * i as f64 / (n - 1) as f64))
        .collect();
    for w in coarse.windows(2) {
        check_monotone(&w[0], &w[1], opts.monotone_tol)?;
    }
    let top = coarse[n - 1];
    if top.null + top.nonnull == 0.0 {
        return Ok((none, ThresholdRegime::RejectNone));
    }
    if top.q() <= alpha {
        return Ok((top, ThresholdRegime::RejectAll));
    }
    let Some(k) = coarse.iter().rposition(|p| p.q() <= alpha && p.null + p.nonnull > 0.0) else {
        return Ok((none, ThresholdRegime::RejectNone));
    };
    let (mut lo, mut hi) = (coarse[k], coarse[k + 1]);
    for _ in 0..opts.max_bisect {
        if hi.t - lo.t <= opts.t_tol {
            break;
        }
        let mid = eval(0.5 * (lo.t + hi.t));
        check_monotone(&lo, &mid, opts.monotone_tol)?;
        check_monotone(&mid, &hi, opts.monotone_tol)?;
        if mid.q() <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, ThresholdRegime::Interior))
}

fn summarise(point: CurvePoint, regime: ThresholdRegime, nonnull_total: f64) -> OracleThreshold {
    OracleThreshold {
        t_star: point.t,
        regime,
        mfdr: point.q(),
        power: if nonnull_total > 0.0 {
            point.nonnull / nonnull_total
        } else {
            0.0
        },
        rejection_rate: point.null + point.nonnull,
    }
}

fn total_nonnull(nodes: &[Node], region: &IndifferenceRegion) -> f64 {
    nodes.iter().map(|n| n.weight * n.nonnull_total(region)).sum()
}

/// Oracle threshold `t* = sup{t : Q(t) ≤ α}` for the rule `T^OR < t`.
pub fn oracle_threshold(
    prior: &KnownPrior,
    law: &SigmaLaw,
    region: &IndifferenceRegion,
    alpha: f64,
    opts: &OracleOptions,
) -> Result<OracleThreshold> {
    let nodes = sigma_nodes(prior, law, region, opts)?;
    let scans: Vec<_> = nodes
        .par_iter()
        .map(|node| {
            let (lo, hi) = node.x_range(opts.tail_sd);
            let s = node.sigma;
            Scan::new(lo, hi, opts.scan_points, move |x| oracle_stat(prior, x, s, region))
        })
        .collect();
    let eval = |t: f64| {
        let parts: Vec<(f64, f64)> = nodes
            .par_iter()
            .zip(&scans)
            .map(|(node, scan)| {
                let mut acc = (0.0, 0.0);
                for (a, b) in scan.region_below(t) {
                    let (n0, n1) = node.masses(a, b, region, opts.tail_sd);
                    acc.0 += n0;
                    acc.1 += n1;
                }
                (node.weight * acc.0, node.weight * acc.1)
            })
            .collect();
        CurvePoint {
            t,
            null: parts.iter().map(|p| p.0).sum(),
            nonnull: parts.iter().map(|p| p.1).sum(),
        }
    };
    let (point, regime) = search(eval, alpha, opts)?;
    Ok(summarise(point, regime, total_nonnull(&nodes, region)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZOracleThreshold {
    /// Cutoff on the z-value oracle statistic.
    pub threshold: OracleThreshold,
    /// z-intervals rejected at the cutoff.
    pub rejection: Vec<(f64, f64)>,
    /// Lower end of the rejection region when it is a single ray `(t_z, ∞)`.
    pub t_z: Option<f64>,
}

/// Oracle threshold for the z-value rule `P(μ ∈ A | z) < t`.
pub fn z_oracle_threshold(
    prior: &KnownPrior,
    law: &SigmaLaw,
    region: &IndifferenceRegion,
    alpha: f64,
    opts: &OracleOptions,
) -> Result<ZOracleThreshold> {
    let nodes = sigma_nodes(prior, law, region, opts)?;
    let (mut zlo, mut zhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for node in &nodes {
        let (lo, hi) = node.x_range(opts.tail_sd);
        zlo = zlo.min(lo / node.sigma);
        zhi = zhi.max(hi / node.sigma);
    }
    // the scan evaluates the statistic in parallel; failures surface below
    let zs: Vec<f64> = (0..opts.scan_points)
        .map(|i| zlo + (zhi - zlo) * i as f64 / (opts.scan_points - 1) as f64)
        .collect();
    let ts: Vec<f64> = zs
        .par_iter()
        .map(|&z| z_oracle_stat(prior, law, z, region))
        .collect::<Result<_>>()?;
    let failure = std::sync::Mutex::new(None);
    let stat = |z: f64| match z_oracle_stat(prior, law, z, region) {
        Ok(v) => v,
        Err(e) => {
            failure.lock().unwrap().get_or_insert(e);
            1.0
        }
    };
    let scan = Scan { xs: zs, ts, stat };
    let eval = |t: f64| {
        let zr = scan.region_below(t);
        let parts: Vec<(f64, f64)> = nodes
            .par_iter()
            .map(|node| {
                let mut acc = (0.0, 0.0);
                for &(a, b) in &zr {
                    let (n0, n1) = node.masses(a * node.sigma, b * node.sigma, region, opts.tail_sd);
                    acc.0 += n0;
                    acc.1 += n1;
                }
                (node.weight * acc.0, node.weight * acc.1)
            })
            .collect();
        CurvePoint {
            t,
            null: parts.iter().map(|p| p.0).sum(),
            nonnull: parts.iter().map(|p| p.1).sum(),
        }
    };
    let (point, regime) = search(eval, alpha, opts)?;
    let rejection = if regime == ThresholdRegime::RejectNone {
        Vec::new()
    } else {
        scan.region_below(point.t)
    };
    if let Some(e) = failure.lock().unwrap().take() {
        return Err(e);
    }
    let t_z = match rejection.as_slice() {
        [(a, b)] if b.is_infinite() && a.is_finite() => Some(*a),
        _ => None,
    };
    Ok(ZOracleThreshold {
        threshold: summarise(point, regime, total_nonnull(&nodes, region)),
        rejection,
        t_z,
    })
}

/// The oracle rule `T^OR(x, σ) < t*` for a known model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRule {
    pub prior: KnownPrior,
    pub region: IndifferenceRegion,
    pub threshold: OracleThreshold,
}

impl OracleRule {
    pub fn new(prior: KnownPrior, law: &SigmaLaw, region: IndifferenceRegion, alpha: f64, opts: &OracleOptions) -> Result<Self> {
        let threshold = oracle_threshold(&prior, law, &region, alpha, opts)?;
        Ok(OracleRule {
            prior,
            region,
            threshold,
        })
    }

    pub fn decide(&self, data: &[Observation]) -> Result<DecisionSet> {
        let t = self.threshold.t_star;
        let decisions = data
            .par_iter()
            .map(|o| self.threshold.regime != ThresholdRegime::RejectNone && clfdr_oracle(&self.prior, o, &self.region) < t)
            .collect();
        DecisionSet::new(decisions, t)
    }
}

/// The z-value oracle rule: reject when `z` falls in the precomputed region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZOracleRule {
    pub threshold: ZOracleThreshold,
}

impl ZOracleRule {
    pub fn new(prior: &KnownPrior, law: &SigmaLaw, region: &IndifferenceRegion, alpha: f64, opts: &OracleOptions) -> Result<Self> {
        Ok(ZOracleRule {
            threshold: z_oracle_threshold(prior, law, region, alpha, opts)?,
        })
    }

    pub fn decide(&self, data: &[Observation]) -> Result<DecisionSet> {
        let zr = &self.threshold.rejection;
        let decisions = data
            .iter()
            .map(|o| {
                let z = o.z();
                zr.iter().any(|&(a, b)| a < z && z < b)
            })
            .collect();
        DecisionSet::new(decisions, self.threshold.threshold.t_star)
    }
}
