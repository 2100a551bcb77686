//! Monte-Carlo experiments: per-replicate FDP/PTP for each procedure and
//! their aggregates.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, Replicate, Scenario};
use crate::clfdr::clfdr_hat_batch;
use crate::deconv::{default_grid, fit_npmle, fit_prior, BasisConfig, GridSupport, PriorModel, QpReport, SolverOptions};
use crate::error::{HamtError, Result};
use crate::mtp::{
    bh_step_up, composite_pvalue, compute_metrics, step_up, MetricsRecord, OracleOptions, OracleRule, ZOracleRule,
};
use crate::pilot::PilotEstimate;
use crate::types::DecisionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Procedure {
    Hamt,
    Deconv,
    Npmle,
    Bh,
    AdaptiveBh,
    Or,
    Zor,
}

impl Procedure {
    pub const ALL: [Procedure; 7] = [
        Procedure::Hamt,
        Procedure::Deconv,
        Procedure::Npmle,
        Procedure::Bh,
        Procedure::AdaptiveBh,
        Procedure::Or,
        Procedure::Zor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Procedure::Hamt => "hamt",
            Procedure::Deconv => "deconv",
            Procedure::Npmle => "npmle",
            Procedure::Bh => "bh",
            Procedure::AdaptiveBh => "adaptive-bh",
            Procedure::Or => "or",
            Procedure::Zor => "zor",
        }
    }

    /// Parses a comma-separated list such as `hamt,or`.
    pub fn parse_list(s: &str) -> Result<Vec<Procedure>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let p: Procedure = part.parse()?;
            if !out.contains(&p) {
                out.push(p);
            }
        }
        if out.is_empty() {
            return Err(HamtError::InvalidConfig("no procedures given".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Procedure {
    type Err = HamtError;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s.to_ascii_lowercase().as_str() {
            "hamt" => Procedure::Hamt,
            "deconv" | "deconv-baseline" => Procedure::Deconv,
            "npmle" | "npmle-baseline" => Procedure::Npmle,
            "bh" => Procedure::Bh,
            "adaptive-bh" | "abh" => Procedure::AdaptiveBh,
            "or" => Procedure::Or,
            "zor" => Procedure::Zor,
            _ => {
                let valid: Vec<&str> = Procedure::ALL.iter().map(|p| p.name()).collect();
                return Err(HamtError::InvalidConfig(format!(
                    "unknown procedure `{s}`; valid: {}",
                    valid.join(", ")
                )));
            }
        };
        Ok(p)
    }
}

/// Estimation settings shared by the data-driven procedures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Grid size `S`.
    pub grid_size: usize,
    /// Number of basis functions `K` for HAMT.
    pub num_basis: usize,
    pub solver: SolverOptions,
    pub npmle_max_iter: usize,
    pub npmle_tol: f64,
    #[serde(skip)]
    pub oracle: OracleOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid_size: 50,
            num_basis: 10,
            solver: SolverOptions::default(),
            npmle_max_iter: 2000,
            npmle_tol: 1e-8,
            oracle: OracleOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub procedure: Procedure,
    pub replicate: usize,
    pub seed: u64,
    /// Metrics, or the error that stopped this procedure on this replicate.
    pub outcome: std::result::Result<MetricsRecord, String>,
    /// Deconvolution solver report for HAMT and DECONV.
    pub qp: Option<QpReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub u: Option<f64>,
    pub alpha: f64,
    /// Ordered by replicate, then by procedure as requested.
    pub rows: Vec<ReplicateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub procedure: Procedure,
    pub u: Option<f64>,
    pub mean_fdp: f64,
    pub se_fdp: f64,
    pub mean_ptp: f64,
    pub se_ptp: f64,
    pub replicates: usize,
    pub failures: usize,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl ExperimentReport {
    pub fn procedures(&self) -> Vec<Procedure> {
        let mut out: Vec<Procedure> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.procedure) {
                out.push(r.procedure);
            }
        }
        out
    }

    /// Mean and standard error of FDP and PTP over successful replicates.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        self.procedures()
            .into_iter()
            .map(|p| {
                let rows: Vec<&ReplicateRow> = self.rows.iter().filter(|r| r.procedure == p).collect();
                let ok: Vec<&MetricsRecord> = rows.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
                let fdp: Vec<f64> = ok.iter().map(|m| m.fdp).collect();
                let ptp: Vec<f64> = ok.iter().map(|m| m.ptp).collect();
                let (mean_fdp, se_fdp) = mean_se(&fdp);
                let (mean_ptp, se_ptp) = mean_se(&ptp);
                AggregateRow {
                    procedure: p,
                    u: self.u,
                    mean_fdp,
                    se_fdp,
                    mean_ptp,
                    se_ptp,
                    replicates: ok.len(),
                    failures: rows.len() - ok.len(),
                }
            })
            .collect()
    }

    pub fn aggregate_for(&self, p: Procedure) -> Option<AggregateRow> {
        self.aggregate().into_iter().find(|a| a.procedure == p)
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn fmt_u(u: Option<f64>) -> String {
    u.map(fmt_num).unwrap_or_default()
}

/// Writes `procedure,replicate,fdp,ptp,rejections,seed`. Failed
/// procedure runs leave the three metric fields empty.
pub fn write_replicate_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["procedure", "replicate", "fdp", "ptp", "rejections", "seed"])?;
    for r in &report.rows {
        let (fdp, ptp, rej) = match &r.outcome {
            Ok(m) => (fmt_num(m.fdp), fmt_num(m.ptp), m.rejections.to_string()),
            Err(_) => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            r.procedure.name().to_string(),
            r.replicate.to_string(),
            fdp,
            ptp,
            rej,
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes `procedure,u,mean_fdp,se_fdp,mean_ptp,se_ptp`.
pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["procedure", "u", "mean_fdp", "se_fdp", "mean_ptp", "se_ptp"])?;
    for a in rows {
        w.write_record([
            a.procedure.name().to_string(),
            fmt_u(a.u),
            fmt_num(a.mean_fdp),
            fmt_num(a.se_fdp),
            fmt_num(a.mean_ptp),
            fmt_num(a.se_ptp),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Thresholds of the oracle rules, computed once per scenario.
struct Oracles {
    or: Option<std::result::Result<OracleRule, String>>,
    zor: Option<std::result::Result<ZOracleRule, String>>,
}

impl Oracles {
    fn new(s: &Scenario, procs: &[Procedure], opts: &OracleOptions) -> Self {
        let or = procs.contains(&Procedure::Or).then(|| {
            OracleRule::new(s.prior.clone(), &s.sigma_law, s.region, s.alpha, opts).map_err(|e| e.to_string())
        });
        let zor = procs
            .contains(&Procedure::Zor)
            .then(|| ZOracleRule::new(&s.prior, &s.sigma_law, &s.region, s.alpha, opts).map_err(|e| e.to_string()));
        Oracles { or, zor }
    }
}

/// Data-driven pieces shared by the procedures of one replicate.
struct Fitted<'a> {
    rep: &'a Replicate,
    grid: Option<std::result::Result<GridSupport, String>>,
    pilot: Option<std::result::Result<PilotEstimate, String>>,
}

impl<'a> Fitted<'a> {
    fn grid(&mut self, s: usize) -> std::result::Result<GridSupport, String> {
        self.grid
            .get_or_insert_with(|| default_grid(&self.rep.observations, s).map_err(|e| e.to_string()))
            .clone()
    }

    fn pilot(&mut self) -> std::result::Result<&PilotEstimate, String> {
        let data = &self.rep.observations;
        self.pilot
            .get_or_insert_with(|| {
                PilotEstimate::with_silverman(data.clone())
                    .map(|(p, _)| p)
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| e.clone())
    }
}

type Outcome = std::result::Result<(DecisionSet, Option<QpReport>), String>;

fn clfdr_step_up(model: &PriorModel, s: &Scenario, rep: &Replicate) -> Result<DecisionSet> {
    let t = clfdr_hat_batch(model, &rep.observations, &s.region)?;
    Ok(step_up(&t.values, s.alpha)?.decisions)
}

fn run_procedure(p: Procedure, s: &Scenario, fit: &mut Fitted, oracles: &Oracles, cfg: &ExperimentConfig) -> Outcome {
    let rep = fit.rep;
    let err = |e: HamtError| e.to_string();
    match p {
        Procedure::Hamt | Procedure::Deconv => {
            let basis = if p == Procedure::Hamt {
                BasisConfig::new(cfg.num_basis).map_err(err)?
            } else {
                BasisConfig::constant()
            };
            let grid = fit.grid(cfg.grid_size)?;
            let pilot = fit.pilot()?;
            let (model, report) = fit_prior(&rep.observations, pilot, &grid, basis, &cfg.solver).map_err(err)?;
            Ok((clfdr_step_up(&model, s, rep).map_err(err)?, Some(report)))
        }
        Procedure::Npmle => {
            let grid = fit.grid(cfg.grid_size)?;
            let npmle = fit_npmle(&rep.observations, &grid, cfg.npmle_max_iter, cfg.npmle_tol).map_err(err)?;
            let model = npmle.into_model(grid).map_err(err)?;
            Ok((clfdr_step_up(&model, s, rep).map_err(err)?, None))
        }
        Procedure::Bh | Procedure::AdaptiveBh => {
            let pv = rep
                .observations
                .iter()
                .map(|o| composite_pvalue(o, &s.region))
                .collect::<Result<Vec<f64>>>()
                .map_err(err)?;
            Ok((bh_step_up(&pv, s.alpha, p == Procedure::AdaptiveBh).map_err(err)?, None))
        }
        Procedure::Or => match oracles.or.as_ref().expect("oracle prepared") {
            Ok(rule) => Ok((rule.decide(&rep.observations).map_err(err)?, None)),
            Err(e) => Err(e.clone()),
        },
        Procedure::Zor => match oracles.zor.as_ref().expect("z-oracle prepared") {
            Ok(rule) => Ok((rule.decide(&rep.observations).map_err(err)?, None)),
            Err(e) => Err(e.clone()),
        },
    }
}

/// Runs `reps` replicates of `scenario` with seeds `base_seed + r`.
/// Replicates run in parallel; a failing procedure is recorded on its row
/// and does not stop the run.
pub fn run_experiment(
    scenario: &Scenario,
    procedures: &[Procedure],
    reps: usize,
    base_seed: u64,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if reps == 0 {
        return Err(HamtError::InvalidConfig("reps must be at least 1".into()));
    }
    if procedures.is_empty() {
        return Err(HamtError::InvalidConfig("no procedures given".into()));
    }
    scenario.validate()?;
    let oracles = Oracles::new(scenario, procedures, &cfg.oracle);
    let per_rep: Vec<Vec<ReplicateRow>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = base_seed.wrapping_add(r as u64);
            let rep = match generate(scenario, seed) {
                Ok(rep) => rep,
                Err(e) => {
                    return procedures
                        .iter()
                        .map(|&p| ReplicateRow {
                            procedure: p,
                            replicate: r,
                            seed,
                            outcome: Err(e.to_string()),
                            qp: None,
                        })
                        .collect();
                }
            };
            let mut fit = Fitted {
                rep: &rep,
                grid: None,
                pilot: None,
            };
            procedures
                .iter()
                .map(|&p| {
                    let outcome = run_procedure(p, scenario, &mut fit, &oracles, cfg);
                    let (outcome, qp) = match outcome {
                        Ok((d, q)) => (compute_metrics(&d, &rep.truth).map_err(|e| e.to_string()), q),
                        Err(e) => (Err(e), None),
                    };
                    ReplicateRow {
                        procedure: p,
                        replicate: r,
                        seed,
                        outcome,
                        qp,
                    }
                })
                .collect()
        })
        .collect();
    Ok(ExperimentReport {
        scenario: scenario.name.clone(),
        u: scenario.u,
        alpha: scenario.alpha,
        rows: per_rep.into_iter().flatten().collect(),
    })
}
