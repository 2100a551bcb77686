//! Run configuration: flags override the config file, which overrides the
//! built-in defaults. Every resolved value records where it came from.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use hamt_core::{Bandwidths, ExperimentConfig, IndifferenceRegion, Procedure, SolverOptions};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

/// Parses `(-inf,4]`, `[-5,5]`, `le:4`, `interval:-5,5` or `all`.
pub fn parse_region(s: &str) -> CliResult<IndifferenceRegion> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || CliError::input(format!("cannot parse region `{s}`; use `(-inf,MU0]`, `[LO,HI]` or `all`"));
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
    let lower = t.to_ascii_lowercase();
    if matches!(lower.as_str(), "all" | "r" | "everything" | "(-inf,inf)") {
        return Ok(IndifferenceRegion::everything());
    }
    if let Some(v) = lower.strip_prefix("le:") {
        return Ok(IndifferenceRegion::left_ray(num(v)?)?);
    }
    if let Some(v) = lower.strip_prefix("interval:") {
        let (a, b) = v.split_once(',').ok_or_else(bad)?;
        return Ok(IndifferenceRegion::interval(num(a)?, num(b)?)?);
    }
    if let Some(v) = lower.strip_prefix("(-inf,").and_then(|v| v.strip_suffix(']')) {
        return Ok(IndifferenceRegion::left_ray(num(v)?)?);
    }
    if let Some(v) = lower.strip_prefix('[').and_then(|v| v.strip_suffix(']')) {
        let (a, b) = v.split_once(',').ok_or_else(bad)?;
        return Ok(IndifferenceRegion::interval(num(a)?, num(b)?)?);
    }
    Err(bad())
}

pub fn format_region(r: &IndifferenceRegion) -> String {
    match *r {
        IndifferenceRegion::LeftRay { mu0 } => format!("(-inf,{mu0}]"),
        IndifferenceRegion::Interval { lo, hi } if lo == -f64::MAX && hi == f64::MAX => "all".into(),
        IndifferenceRegion::Interval { lo, hi } => format!("[{lo},{hi}]"),
    }
}

/// Flags shared by every command; all optional so the file and defaults
/// can fill the gaps.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Target FDR level α in (0, 1).
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Indifference region: `(-inf,MU0]`, `[LO,HI]` or `all`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub region: Option<String>,
    /// Grid size S.
    #[arg(long = "grid-size", global = true)]
    pub grid_size: Option<usize>,
    /// Number of basis functions K.
    #[arg(long = "num-basis", global = true)]
    pub num_basis: Option<usize>,
    /// Monte-Carlo replicates.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Base seed; replicate r uses seed + r.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (file for `generate` and `oracle`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Full-scale run: 200 replicates per setting unless --reps is given.
    #[arg(long, global = true)]
    pub full: bool,
    /// Comma-separated procedures, e.g. `hamt,or`.
    #[arg(long, global = true)]
    pub procedures: Option<String>,
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Comma-separated scenario parameter values.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub u: Option<String>,
    /// Number of units per simulated replicate.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Pilot bandwidth h_x (Silverman's rule when absent).
    #[arg(long = "h-x", global = true)]
    pub h_x: Option<f64>,
    /// Pilot bandwidth h_σ (Silverman's rule when absent).
    #[arg(long = "h-sigma", global = true)]
    pub h_sigma: Option<f64>,
}

/// Config file schema. Keys mirror the long flags with `_` for `-`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub region: Option<String>,
    pub grid_size: Option<usize>,
    pub num_basis: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub full: Option<bool>,
    pub procedures: Option<StringOrList>,
    pub u: Option<NumberOrList>,
    pub m: Option<usize>,
    pub h_x: Option<f64>,
    pub h_sigma: Option<f64>,
    pub solver: Option<SolverOptions>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StringOrList {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NumberOrList {
    One(f64),
    Many(Vec<f64>),
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Flag,
    File,
    Default,
}

/// Resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Settings {
    pub alpha: f64,
    pub alpha_given: bool,
    pub region: Option<IndifferenceRegion>,
    pub grid_size: usize,
    pub num_basis: usize,
    pub reps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub procedures: Option<Vec<Procedure>>,
    pub u: Option<Vec<f64>>,
    pub m: Option<usize>,
    pub h_x: Option<f64>,
    pub h_sigma: Option<f64>,
    pub solver: SolverOptions,
    provenance: BTreeMap<&'static str, (Value, Source)>,
}

fn parse_u_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| CliError::input(format!("cannot parse u value `{p}`"))))
        .collect()
}

struct Resolver {
    provenance: BTreeMap<&'static str, (Value, Source)>,
}

impl Resolver {
    fn pick<T: Serialize>(&mut self, key: &'static str, flag: Option<T>, file: Option<T>, default: T) -> T {
        let (v, src) = match (flag, file) {
            (Some(v), _) => (v, Source::Flag),
            (None, Some(v)) => (v, Source::File),
            (None, None) => (default, Source::Default),
        };
        self.provenance.insert(key, (json!(v), src));
        v
    }

    fn pick_opt<T: Serialize>(&mut self, key: &'static str, flag: Option<T>, file: Option<T>) -> Option<T> {
        let (v, src) = match (flag, file) {
            (Some(v), _) => (Some(v), Source::Flag),
            (None, Some(v)) => (Some(v), Source::File),
            (None, None) => (None, Source::Default),
        };
        self.provenance.insert(key, (json!(v), src));
        v
    }
}

impl Settings {
    pub fn resolve(flags: &Flags) -> CliResult<Self> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let defaults = ExperimentConfig::default();
        let mut r = Resolver {
            provenance: BTreeMap::new(),
        };
        let alpha_given = flags.alpha.is_some() || file.alpha.is_some();
        let alpha = r.pick("alpha", flags.alpha, file.alpha, 0.1);
        let region_text = r.pick_opt("region", flags.region.clone(), file.region.clone());
        let grid_size = r.pick("grid_size", flags.grid_size, file.grid_size, defaults.grid_size);
        let num_basis = r.pick("num_basis", flags.num_basis, file.num_basis, defaults.num_basis);
        let full = r.pick("full", flags.full.then_some(true), file.full, false);
        let reps = r.pick("reps", flags.reps, file.reps, if full { 200 } else { 50 });
        let seed = r.pick("seed", flags.seed, file.seed, 1);
        let out = r.pick_opt("out", flags.out.clone(), file.out.clone());
        let file_procs = file.procedures.map(|p| match p {
            StringOrList::One(s) => s,
            StringOrList::Many(v) => v.join(","),
        });
        let procs_text = r.pick_opt("procedures", flags.procedures.clone(), file_procs);
        let file_u = file.u.map(|u| match u {
            NumberOrList::One(v) => vec![v],
            NumberOrList::Many(v) => v,
        });
        let flag_u = flags.u.as_deref().map(parse_u_list).transpose()?;
        let u = r.pick_opt("u", flag_u, file_u);
        let m = r.pick_opt("m", flags.m, file.m);
        let h_x = r.pick_opt("h_x", flags.h_x, file.h_x);
        let h_sigma = r.pick_opt("h_sigma", flags.h_sigma, file.h_sigma);
        let solver = r.pick("solver", None, file.solver, SolverOptions::default());

        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::input(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if grid_size < 1 {
            return Err(CliError::input("grid size must be at least 1"));
        }
        if num_basis < 1 {
            return Err(CliError::input("number of basis functions must be at least 1"));
        }
        if reps < 1 {
            return Err(CliError::input("reps must be at least 1"));
        }
        if m == Some(0) {
            return Err(CliError::input("m must be at least 1"));
        }
        for (name, h) in [("h-x", h_x), ("h-sigma", h_sigma)] {
            if let Some(h) = h {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(CliError::input(format!("{name} must be positive and finite, got {h}")));
                }
            }
        }
        let region = region_text.as_deref().map(parse_region).transpose()?;
        let procedures = procs_text.as_deref().map(Procedure::parse_list).transpose()?;
        Ok(Settings {
            alpha,
            alpha_given,
            region,
            grid_size,
            num_basis,
            reps,
            seed,
            out,
            procedures,
            u,
            m,
            h_x,
            h_sigma,
            solver,
            provenance: r.provenance,
        })
    }

    /// Bandwidths when both are given; one alone is an error.
    pub fn bandwidths(&self) -> CliResult<Option<Bandwidths>> {
        match (self.h_x, self.h_sigma) {
            (Some(a), Some(b)) => Ok(Some(Bandwidths::new(a, b)?)),
            (None, None) => Ok(None),
            _ => Err(CliError::input("give both --h-x and --h-sigma, or neither")),
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            grid_size: self.grid_size,
            num_basis: self.num_basis,
            solver: self.solver,
            ..ExperimentConfig::default()
        }
    }

    /// `{key: {value, source}}` for the summary.
    pub fn provenance(&self) -> Value {
        let map: serde_json::Map<String, Value> = self
            .provenance
            .iter()
            .map(|(k, (v, s))| (k.to_string(), json!({ "value": v, "source": s })))
            .collect();
        Value::Object(map)
    }
}
