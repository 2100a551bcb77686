use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hamt_core::{
    builtin_scenario, clfdr_hat_batch, default_grid, fit_prior, generate, marginal_hat, oracle_threshold, prior_mass,
    run_experiment, step_up, write_aggregate_csv, write_replicate_csv, z_oracle_threshold, AggregateRow, BasisConfig,
    HamtError, IndifferenceRegion, Observation, OracleOptions, PilotEstimate, PriorModel, Procedure, QpReport, Scenario,
};
use serde_json::{json, Value};

use crate::config::{format_region, Settings};
use crate::error::{CliError, CliResult};
use crate::input::read_input;

/// Points per axis of the `deconv` density grid.
const DENSITY_X_POINTS: usize = 201;
const DENSITY_SIGMA_POINTS: usize = 25;

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

fn create_file(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let mut f = create_file(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

/// Input problems stay exit 2; anything else from the fit is numerical.
fn fit_error(e: HamtError) -> CliError {
    match e {
        HamtError::Domain(_) | HamtError::LengthMismatch { .. } | HamtError::DegenerateGrid(_) => {
            CliError::Input(e.to_string())
        }
        _ => CliError::Numerical(e.to_string()),
    }
}

fn fit(s: &Settings, data: &[Observation]) -> CliResult<(PriorModel, QpReport)> {
    let pilot = match s.bandwidths()? {
        Some(bw) => PilotEstimate::new(data.to_vec(), bw)?,
        None => PilotEstimate::with_silverman(data.to_vec()).map_err(fit_error)?.0,
    };
    let grid = default_grid(data, s.grid_size).map_err(fit_error)?;
    let basis = BasisConfig::new(s.num_basis)?;
    fit_prior(data, &pilot, &grid, basis, &s.solver).map_err(fit_error)
}

fn required_region(s: &Settings) -> CliResult<IndifferenceRegion> {
    s.region
        .ok_or_else(|| CliError::input("an indifference region is required (--region or `region` in the config)"))
}

pub fn test(s: &Settings, input: &Path, model_path: Option<&Path>) -> CliResult<()> {
    let region = required_region(s)?;
    let inp = read_input(input)?;
    let data = &inp.observations;
    let (model, status) = match model_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?;
            let model = PriorModel::from_json(&text)?;
            let status = model.report().map_or("loaded".to_string(), |r| r.status.to_string());
            (model, status)
        }
        None => {
            let (model, report) = fit(s, data)?;
            (model, report.status.to_string())
        }
    };
    let t = clfdr_hat_batch(&model, data, &region).map_err(fit_error)?;
    let res = step_up(&t.values, s.alpha)?;

    let summary = json!({
        "m": data.len(),
        "rejected": res.r,
        "threshold": res.realized_threshold,
        "alpha": s.alpha,
        "S": model.grid().len(),
        "K": model.basis().k(),
        "qp_status": status,
        "region": format_region(&region),
        "replicate_level": inp.replicates.is_some(),
        "underflows": t.underflows,
        "config": s.provenance(),
    });
    let write = |out: &mut dyn Write| -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "x", "sigma", "clfdr", "rejected"])?;
        for (i, o) in data.iter().enumerate() {
            let rejected = if res.decisions.decisions()[i] { "1" } else { "0" };
            w.write_record([
                inp.ids[i].clone(),
                o.x().to_string(),
                o.sigma().to_string(),
                t.values[i].to_string(),
                rejected.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    match &s.out {
        Some(dir) => {
            create_dir(dir)?;
            write(&mut create_file(&dir.join("decisions.csv"))?)?;
            write_json(&dir.join("summary.json"), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        None => {
            write(&mut std::io::stdout().lock())?;
            eprintln!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}

fn scenario(s: &Settings, name: &str, u: f64) -> CliResult<Scenario> {
    let mut sc = builtin_scenario(name, u)?;
    if let Some(m) = s.m {
        sc.m = m;
    }
    if s.alpha_given {
        sc.alpha = s.alpha;
    }
    if let Some(r) = s.region {
        sc.region = r;
    }
    sc.validate()?;
    Ok(sc)
}

fn default_procedures(region: &IndifferenceRegion) -> Vec<Procedure> {
    match region {
        IndifferenceRegion::LeftRay { .. } => Procedure::ALL.to_vec(),
        IndifferenceRegion::Interval { .. } => vec![
            Procedure::Hamt,
            Procedure::Deconv,
            Procedure::Npmle,
            Procedure::Or,
            Procedure::Zor,
        ],
    }
}

fn print_table(rows: &[AggregateRow]) {
    println!(
        "{:<12} {:>6} {:>9} {:>9} {:>9} {:>9} {:>5} {:>8}",
        "procedure", "u", "mean_fdp", "se_fdp", "mean_ptp", "se_ptp", "reps", "failures"
    );
    for a in rows {
        let u = a.u.map(|u| u.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{:<12} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>5} {:>8}",
            a.procedure.name(),
            u,
            a.mean_fdp,
            a.se_fdp,
            a.mean_ptp,
            a.se_ptp,
            a.replicates,
            a.failures
        );
    }
}

pub fn simulate(s: &Settings, name: &str) -> CliResult<()> {
    let sweep: Vec<Option<f64>> = match &s.u {
        Some(u) if !u.is_empty() => u.iter().map(|&v| Some(v)).collect(),
        _ => {
            let d = Scenario::default_sweep(name);
            if d.is_empty() {
                vec![None]
            } else {
                d.into_iter().map(Some).collect()
            }
        }
    };
    // validates the name before any work
    let first = scenario(s, name, sweep[0].unwrap_or(0.0))?;
    let procs = s.procedures.clone().unwrap_or_else(|| default_procedures(&first.region));
    if let Some(dir) = &s.out {
        create_dir(dir)?;
    }
    let mut all = Vec::new();
    for u in &sweep {
        let sc = scenario(s, name, u.unwrap_or(0.0))?;
        let report = run_experiment(&sc, &procs, s.reps, s.seed, &s.experiment())?;
        let agg = report.aggregate();
        if let Some(dir) = &s.out {
            let file = match u {
                Some(u) if sweep.len() > 1 => format!("replicates-u{u}.csv"),
                _ => "replicates.csv".to_string(),
            };
            write_replicate_csv(&report, create_file(&dir.join(file))?)?;
        }
        all.extend(agg);
    }
    if let Some(dir) = &s.out {
        write_aggregate_csv(&all, create_file(&dir.join("aggregate.csv"))?)?;
        let summary = json!({
            "scenario": name,
            "u": sweep,
            "procedures": procs.iter().map(|p| p.name()).collect::<Vec<_>>(),
            "reps": s.reps,
            "seed": s.seed,
            "m": first.m,
            "alpha": first.alpha,
            "region": format_region(&first.region),
            "config": s.provenance(),
        });
        write_json(&dir.join("summary.json"), &summary)?;
    }
    print_table(&all);
    Ok(())
}

/// Infinite interval ends serialize as `null`.
fn bound(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn oracle(s: &Settings, name: &str) -> CliResult<()> {
    let u = s.u.as_ref().and_then(|u| u.first().copied()).unwrap_or(0.0);
    let sc = scenario(s, name, u)?;
    let opts = OracleOptions::default();
    let or = oracle_threshold(&sc.prior, &sc.sigma_law, &sc.region, sc.alpha, &opts)?;
    let zor = z_oracle_threshold(&sc.prior, &sc.sigma_law, &sc.region, sc.alpha, &opts)?;
    let out = json!({
        "scenario": name,
        "alpha": sc.alpha,
        "t_star": or.t_star,
        "t_z": zor.t_z,
        "power_or": or.power,
        "power_zor": zor.threshold.power,
        "mfdr_or": or.mfdr,
        "mfdr_zor": zor.threshold.mfdr,
        "regime_or": or.regime,
        "zor_rejection": zor.rejection.iter().map(|&(a, b)| json!([bound(a), bound(b)])).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&out)?;
    if let Some(path) = &s.out {
        let mut f = create_file(path)?;
        writeln!(f, "{text}")?;
    }
    println!("{text}");
    Ok(())
}

fn span(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || hi <= lo {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn deconv(s: &Settings, input: &Path) -> CliResult<()> {
    let dir: PathBuf = s.out.clone().ok_or_else(|| CliError::input("deconv needs --out DIR"))?;
    let inp = read_input(input)?;
    let data = &inp.observations;
    let (model, report) = fit(s, data)?;
    create_dir(&dir)?;
    let mut f = create_file(&dir.join("model.json"))?;
    writeln!(f, "{}", model.to_json()?)?;

    let (xlo, xhi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), o| (a.min(o.x()), b.max(o.x())));
    let (slo, shi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), o| (a.min(o.sigma()), b.max(o.sigma())));
    let xs = span(xlo, xhi, DENSITY_X_POINTS);
    let sigmas = span(slo, shi, DENSITY_SIGMA_POINTS);
    let everything = IndifferenceRegion::everything();

    let mut w = csv::Writer::from_writer(create_file(&dir.join("density.csv"))?);
    w.write_record(["sigma", "x", "density"])?;
    for &sg in &sigmas {
        for &x in &xs {
            let f = marginal_hat(&model, x, sg, &everything).map_err(fit_error)?.f;
            w.write_record([sg.to_string(), x.to_string(), f.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create_file(&dir.join("prior.csv"))?);
    w.write_record(["sigma", "u", "mass"])?;
    for &sg in &sigmas {
        let g = prior_mass(&model, sg).map_err(fit_error)?;
        for (u, p) in model.grid().points().iter().zip(&g.masses) {
            w.write_record([sg.to_string(), u.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;

    let summary = json!({
        "m": data.len(),
        "S": model.grid().len(),
        "K": model.basis().k(),
        "qp_status": report.status.to_string(),
        "objective": report.objective,
        "iterations": report.iterations,
        "primal_infeasibility": report.primal_infeasibility,
        "replicate_level": inp.replicates.is_some(),
        "files": ["model.json", "density.csv", "prior.csv"],
        "config": s.provenance(),
    });
    write_json(&dir.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn generate_data(s: &Settings, name: &str) -> CliResult<()> {
    let u = s.u.as_ref().and_then(|u| u.first().copied());
    let u = u.or_else(|| {
        let d = Scenario::default_sweep(name);
        (!d.is_empty()).then(|| d[d.len() / 2])
    });
    let sc = scenario(s, name, u.unwrap_or(0.0))?;
    let rep = generate(&sc, s.seed)?;
    let write = |out: &mut dyn Write| -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "x", "sigma", "mu", "nonnull"])?;
        for (i, (o, t)) in rep.observations.iter().zip(&rep.truth).enumerate() {
            w.write_record([
                (i + 1).to_string(),
                o.x().to_string(),
                o.sigma().to_string(),
                t.mu.to_string(),
                (t.is_nonnull as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    match &s.out {
        Some(path) => write(&mut create_file(path)?),
        None => write(&mut std::io::stdout().lock()),
    }
}
