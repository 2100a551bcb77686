//! Heteroskedasticity-adjusted multiple testing (HAMT) of composite null
//! hypotheses.
//!
//! Each unit is a pair `(x_i, σ_i)` with `x_i ~ N(μ_i, σ_i²)` and the null
//! `μ_i ∈ A`. The pipeline estimates the `σ`-dependent prior of `μ` by a
//! simplex-constrained least-squares deconvolution against a kernel pilot
//! estimate, turns it into conditional local FDR statistics, and applies a
//! step-up rule on their running means.

// `!(a < b)` is used deliberately so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clfdr;
pub mod deconv;
pub mod error;
pub mod gauss;
pub mod mtp;
pub mod pilot;
pub mod prior;
pub mod quad;
pub mod simlab;
pub mod types;

pub use error::{HamtError, Result};
pub use deconv::{
    default_grid, fit_npmle, fit_prior, fit_prior_sigma_independent, prior_mass, BasisConfig, GridSupport, NpmleFit,
    PriorModel, QpReport, QpStatus, SolverOptions,
};
pub use clfdr::{
    clfdr_hat, clfdr_hat_batch, clfdr_hat_eval, clfdr_oracle, marginal_hat, z_oracle_stat, z_oracle_stat_with, ClfdrEval,
    ClfdrVector, MarginalDensities,
};
pub use mtp::{
    bh_step_up, composite_pvalue, compute_metrics, oracle_threshold, step_up, z_oracle_threshold, MetricsRecord,
    OracleOptions, OracleRule, OracleThreshold, StepUpResult, ThresholdRegime, ZOracleRule, ZOracleThreshold,
};
pub use gauss::{gauss_cdf, gauss_pdf};
pub use pilot::{pilot_density, pilot_density_batch, silverman_bandwidths, Bandwidths, PilotEstimate};
pub use simlab::{
    builtin_scenario, game_replica, generate, replicate_summary, run_experiment, write_aggregate_csv, write_replicate_csv,
    AggregateRow, ExperimentConfig, ExperimentReport, Procedure, Replicate, ReplicateRow, Scenario, SCENARIOS,
};
pub use types::{region_contains, DecisionSet, IndifferenceRegion, Observation, TruthRecord};
pub use prior::{ComponentKind, KnownPrior, PriorComponent, PriorPiece, SigmaFn, SigmaLaw};
