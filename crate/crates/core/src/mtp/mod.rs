//! Thresholding rules and error/power metrics.

mod oracle;

use serde::Serialize;

pub use oracle::{
    oracle_threshold, z_oracle_threshold, OracleOptions, OracleRule, OracleThreshold, ThresholdRegime, ZOracleRule,
    ZOracleThreshold,
};

use crate::error::{domain, HamtError, Result};
use crate::gauss::norm_sf;
use crate::types::{DecisionSet, IndifferenceRegion, Observation, TruthRecord};

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

fn check_unit_interval(values: &[f64], what: &str) -> Result<()> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return domain(format!("{what}[{i}] = {v} is outside [0, 1]"));
    }
    Ok(())
}

/// Indices sorted by (value, index).
fn stable_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepUpResult {
    pub decisions: DecisionSet,
    pub r: usize,
    /// `T_(r)`, or 0 when nothing is rejected.
    pub realized_threshold: f64,
    /// `(1/j) Σ_{i≤j} T_(i)` for `j = 1..m`.
    pub running_means: Vec<f64>,
}

/// Rejects the `r` smallest statistics, `r = max{j : (1/j) Σ_{i≤j} T_(i) ≤ α}`.
pub fn step_up(values: &[f64], alpha: f64) -> Result<StepUpResult> {
    check_alpha(alpha)?;
    check_unit_interval(values, "clfdr")?;
    let order = stable_order(values);
    let mut running_means = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    let mut r = 0;
    for (j, &i) in order.iter().enumerate() {
        sum += values[i];
        let mean = sum / (j + 1) as f64;
        if mean <= alpha {
            r = j + 1;
        }
        running_means.push(mean);
    }
    let mut decisions = vec![false; values.len()];
    for &i in &order[..r] {
        decisions[i] = true;
    }
    let realized_threshold = if r > 0 { values[order[r - 1]] } else { 0.0 };
    Ok(StepUpResult {
        decisions: DecisionSet::new(decisions, realized_threshold)?,
        r,
        realized_threshold,
        running_means,
    })
}

/// Largest `k` with `p_(k) ≤ k·level/m`, and the sort order.
fn bh_count(pvalues: &[f64], level: f64) -> (usize, Vec<usize>) {
    let m = pvalues.len() as f64;
    let order = stable_order(pvalues);
    let k = order
        .iter()
        .enumerate()
        .rev()
        .find(|(j, &i)| pvalues[i] <= (*j + 1) as f64 * level / m)
        .map_or(0, |(j, _)| j + 1);
    (k, order)
}

/// Benjamini–Hochberg step-up. The adaptive form runs a first pass at
/// `α/(1+α)`, sets `m̂₀ = m − r₁`, and reruns at `α·m/max(m̂₀, 1)`.
pub fn bh_step_up(pvalues: &[f64], alpha: f64, adaptive: bool) -> Result<DecisionSet> {
    check_alpha(alpha)?;
    check_unit_interval(pvalues, "p-value")?;
    let m = pvalues.len();
    if m == 0 {
        return Ok(DecisionSet::none(0));
    }
    let level = if adaptive {
        let (r1, _) = bh_count(pvalues, alpha / (1.0 + alpha));
        let m0 = (m - r1).max(1);
        alpha * m as f64 / m0 as f64
    } else {
        alpha
    };
    let (k, order) = bh_count(pvalues, level);
    let mut decisions = vec![false; m];
    for &i in &order[..k] {
        decisions[i] = true;
    }
    let threshold = if k > 0 { pvalues[order[k - 1]] } else { 0.0 };
    DecisionSet::new(decisions, threshold)
}

/// Least-favourable one-sided p-value `1 − Φ((x − μ0)/σ)` for `A = (−∞, μ0]`.
pub fn composite_pvalue(obs: &Observation, region: &IndifferenceRegion) -> Result<f64> {
    match *region {
        IndifferenceRegion::LeftRay { mu0 } => Ok(norm_sf((obs.x() - mu0) / obs.sigma())),
        IndifferenceRegion::Interval { .. } => Err(HamtError::Unsupported(
            "composite p-values are only defined for one-sided regions".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub fdp: f64,
    pub ptp: f64,
    pub rejections: usize,
}

/// `FDP = Σ(1−θ)δ / max(Σδ, 1)` and `PTP = Σθδ / max(Σθ, 1)`.
pub fn compute_metrics(decisions: &DecisionSet, truth: &[TruthRecord]) -> Result<MetricsRecord> {
    if decisions.len() != truth.len() {
        return Err(HamtError::LengthMismatch {
            expected: truth.len(),
            found: decisions.len(),
        });
    }
    let mut false_rej = 0usize;
    let mut true_rej = 0usize;
    let mut nonnull = 0usize;
    for (&d, t) in decisions.decisions().iter().zip(truth) {
        nonnull += t.is_nonnull as usize;
        if d {
            if t.is_nonnull {
                true_rej += 1;
            } else {
                false_rej += 1;
            }
        }
    }
    let rejections = false_rej + true_rej;
    Ok(MetricsRecord {
        fdp: false_rej as f64 / rejections.max(1) as f64,
        ptp: true_rej as f64 / nonnull.max(1) as f64,
        rejections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_up_hand_example() {
        let r = step_up(&[0.01, 0.05, 0.2, 0.5], 0.1).unwrap();
        assert_eq!(r.r, 3);
        assert_eq!(r.realized_threshold, 0.2);
        assert_eq!(r.decisions.decisions(), &[true, true, true, false]);
        let expect = [0.01, 0.03, 0.26 / 3.0, 0.19];
        for (a, b) in r.running_means.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn step_up_extremes() {
        let all = step_up(&[0.0; 5], 0.05).unwrap();
        assert_eq!(all.r, 5);
        let none = step_up(&[0.3, 0.2, 0.9], 0.1).unwrap();
        assert_eq!(none.r, 0);
        assert_eq!(none.realized_threshold, 0.0);
        assert_eq!(none.decisions.threshold(), 0.0);
        let empty = step_up(&[], 0.1).unwrap();
        assert_eq!(empty.r, 0);
        assert!(empty.decisions.is_empty());
    }

    #[test]
    fn step_up_breaks_ties_by_index() {
        // prefix means 0, 0.05, 0.1, 0.125: only the first tied 0.2 fits
        let r = step_up(&[0.1, 0.0, 0.2, 0.2, 0.2], 0.11).unwrap();
        assert_eq!(r.r, 3);
        assert_eq!(r.decisions.decisions(), &[true, true, true, false, false]);
    }

    #[test]
    fn step_up_validates() {
        assert!(step_up(&[0.1, 1.2], 0.1).is_err());
        assert!(step_up(&[0.1, f64::NAN], 0.1).is_err());
        assert!(step_up(&[0.1], 0.0).is_err());
        assert!(step_up(&[0.1], 1.0).is_err());
    }

    #[test]
    fn bh_hand_example() {
        let d = bh_step_up(&[0.001, 0.2, 0.9], 0.1, false).unwrap();
        assert_eq!(d.decisions(), &[true, false, false]);
        assert_eq!(bh_step_up(&[1.0; 4], 0.1, false).unwrap().rejected_count(), 0);
        assert_eq!(bh_step_up(&[0.0; 4], 0.1, false).unwrap().rejected_count(), 4);
        assert_eq!(bh_step_up(&[0.0; 4], 0.1, true).unwrap().rejected_count(), 4);
        assert_eq!(bh_step_up(&[1.0; 4], 0.1, true).unwrap().rejected_count(), 0);
    }

    #[test]
    fn adaptive_bh_uses_null_estimate() {
        // m = 4, first pass at 0.1/1.1 rejects 2, second pass at 0.2 adds 0.09
        let p = [0.001, 0.01, 0.09, 0.8];
        assert_eq!(bh_step_up(&p, 0.1, false).unwrap().rejected_count(), 2);
        assert_eq!(bh_step_up(&p, 0.1, true).unwrap().rejected_count(), 3);
    }

    #[test]
    fn pvalue_examples() {
        let ray = IndifferenceRegion::left_ray(2.0).unwrap();
        assert_eq!(composite_pvalue(&Observation::new(2.0, 0.7).unwrap(), &ray).unwrap(), 0.5);
        let p = composite_pvalue(&Observation::new(2.0 + 1.644_853_626_951_472_2 * 1.5, 1.5).unwrap(), &ray).unwrap();
        assert!((p - 0.05).abs() < 1e-15);
        let p = composite_pvalue(&Observation::new(-1e3, 1.0).unwrap(), &ray).unwrap();
        assert_eq!(p, 1.0);
        let iv = IndifferenceRegion::interval(-1.0, 1.0).unwrap();
        assert!(matches!(
            composite_pvalue(&Observation::new(0.0, 1.0).unwrap(), &iv),
            Err(HamtError::Unsupported(_))
        ));
    }

    fn truth(flags: &[bool]) -> Vec<TruthRecord> {
        flags
            .iter()
            .map(|&f| TruthRecord {
                mu: if f { 1.0 } else { 0.0 },
                is_nonnull: f,
            })
            .collect()
    }

    #[test]
    fn metrics_examples() {
        let t = truth(&[true, true, false, true, true, false]);
        let none = compute_metrics(&DecisionSet::none(6), &t).unwrap();
        assert_eq!((none.fdp, none.ptp, none.rejections), (0.0, 0.0, 0));
        let exact = DecisionSet::new(t.iter().map(|r| r.is_nonnull).collect(), 0.5).unwrap();
        let m = compute_metrics(&exact, &t).unwrap();
        assert_eq!((m.fdp, m.ptp), (0.0, 1.0));
        let two = DecisionSet::new(vec![true, false, true, false, false, false], 0.5).unwrap();
        let m = compute_metrics(&two, &t).unwrap();
        assert_eq!((m.fdp, m.ptp, m.rejections), (0.5, 0.25, 2));
        assert!(compute_metrics(&DecisionSet::none(3), &t).is_err());
    }
}
