//! Acceptance run: one PASS/FAIL line per check, nonzero exit if any fails.
//!
//! `HAMT_ACCEPTANCE=quick` skips the Monte-Carlo criteria (2, 3, 4, 6, 8).

use std::io::Write;
use std::time::Instant;

use hamt_core::deconv::site_violation;
use hamt_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 0.1;
const BASE_SEED: u64 = 1;

// criterion 1
const T_Z_TOL: f64 = 0.005;
const POWER_ZOR_TOL_1: f64 = 0.001;
const T_STAR_TOL: f64 = 0.005;
const POWER_OR_TOL: f64 = 0.001;
const POWER_ZOR_TOL_2: f64 = 0.0005;
const ORACLE_SECONDS: f64 = 10.0;
// criterion 2
const DEMO_REPS: usize = 50;
const HAMT_MAX_FDP: f64 = 0.05;
const HAMT_MIN_PTP: f64 = 0.75;
const DECONV_MIN_FDP: f64 = 0.10;
const DECONV_MAX_PTP: f64 = 0.40;
const NPMLE_MIN_FDP: f64 = 0.08;
// criteria 3 and 4
const SWEEP_REPS: usize = 50;
const SWEEP_MAX_FDP: f64 = 0.13;
const POWER_GAP: f64 = 0.10;
// criterion 5
const THM_DRAWS: usize = 100_000;
const THM_RULES: usize = 500;
const THM_SE: f64 = 2.0;
const THM_SECONDS: f64 = 300.0;
// criterion 6
const L2_SIZES: [usize; 3] = [1000, 5000, 20_000];
const L2_SEEDS: u64 = 10;
// criterion 7
const FUZZ_CLFDR: usize = 1_000_000;
const FUZZ_STEP_UP: usize = 10_000;
const FUZZ_EM: usize = 100;
const FUZZ_ORACLE: usize = 10_000;
const ORACLE_SUM_TOL: f64 = 1e-12;
const SITE_TOL: f64 = 1e-6;
// criterion 8
const TWOSIDED_REPS: usize = 25;

struct Tally {
    failed: Vec<String>,
    passed: usize,
}

impl Tally {
    fn check(&mut self, id: &str, ok: bool, what: String) {
        println!("{} [{id}] {what}", if ok { "PASS" } else { "FAIL" });
        std::io::stdout().flush().ok();
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(format!("[{id}] {what}"));
        }
    }

    fn skip(&self, id: &str, what: &str) {
        println!("SKIP [{id}] {what}");
    }
}

fn near(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn oracle_constants(t: &mut Tally) {
    let opts = OracleOptions::default();
    for name in ["example-1", "example-2"] {
        let s = builtin_scenario(name, 0.0).unwrap();
        let start = Instant::now();
        let or = oracle_threshold(&s.prior, &s.sigma_law, &s.region, ALPHA, &opts).unwrap();
        let zor = z_oracle_threshold(&s.prior, &s.sigma_law, &s.region, ALPHA, &opts).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let t_z = zor.t_z.unwrap_or(f64::NAN);
        let pz = zor.threshold.power;
        if name == "example-1" {
            t.check("1", near(t_z, 3.273, T_Z_TOL), format!("{name} t_z = {t_z:.5} (3.273 ± {T_Z_TOL})"));
            t.check("1", near(pz, 0.0432, POWER_ZOR_TOL_1), format!("{name} power_zor = {pz:.5} (0.0432 ± {POWER_ZOR_TOL_1})"));
            t.check("1", near(or.t_star, 0.177, T_STAR_TOL), format!("{name} t* = {:.5} (0.177 ± {T_STAR_TOL})", or.t_star));
            t.check("1", near(or.power, 0.0611, POWER_OR_TOL), format!("{name} power_or = {:.5} (0.0611 ± {POWER_OR_TOL})", or.power));
        } else {
            t.check("1", near(t_z, 4.124, T_Z_TOL), format!("{name} t_z = {t_z:.5} (4.124 ± {T_Z_TOL})"));
            t.check("1", near(pz, 0.0015, POWER_ZOR_TOL_2), format!("{name} power_zor = {pz:.5} (0.0015 ± {POWER_ZOR_TOL_2})"));
            t.check("1", or.power == 1.0, format!("{name} power_or = {} (exactly 1)", or.power));
        }
        t.check("1", secs < ORACLE_SECONDS, format!("{name} runtime {secs:.2} s (< {ORACLE_SECONDS} s)"));
    }
}

fn run(name: &str, u: f64, procs: &[Procedure], reps: usize, fits: &mut Vec<QpReport>) -> ExperimentReport {
    let s = builtin_scenario(name, u).unwrap();
    let start = Instant::now();
    let report = run_experiment(&s, procs, reps, BASE_SEED, &ExperimentConfig::default()).unwrap();
    println!("     {name} u = {u}: {reps} replicates in {:.0} s", start.elapsed().as_secs_f64());
    for row in &report.rows {
        if let Some(q) = row.qp {
            fits.push(q);
        }
        if let Err(e) = &row.outcome {
            println!("     {} replicate {} failed: {e}", row.procedure, row.replicate);
        }
    }
    report
}

fn agg(report: &ExperimentReport, p: Procedure) -> AggregateRow {
    report.aggregate_for(p).unwrap()
}

fn fmt_agg(a: &AggregateRow) -> String {
    format!(
        "FDP {:.4} ± {:.4}, PTP {:.4} ± {:.4}, {} ok / {} failed",
        a.mean_fdp, a.se_fdp, a.mean_ptp, a.se_ptp, a.replicates, a.failures
    )
}

fn dependence_demo(t: &mut Tally, fits: &mut Vec<QpReport>) {
    let r = run(
        "dependence-demo",
        0.0,
        &[Procedure::Hamt, Procedure::Deconv, Procedure::Npmle],
        DEMO_REPS,
        fits,
    );
    let (h, d, n) = (agg(&r, Procedure::Hamt), agg(&r, Procedure::Deconv), agg(&r, Procedure::Npmle));
    t.check("2", h.mean_fdp <= HAMT_MAX_FDP, format!("HAMT mean FDP ≤ {HAMT_MAX_FDP}: {}", fmt_agg(&h)));
    t.check("2", h.mean_ptp >= HAMT_MIN_PTP, format!("HAMT mean PTP ≥ {HAMT_MIN_PTP}: {}", fmt_agg(&h)));
    t.check("2", d.mean_fdp >= DECONV_MIN_FDP, format!("DECONV mean FDP ≥ {DECONV_MIN_FDP}: {}", fmt_agg(&d)));
    t.check("2", d.mean_ptp <= DECONV_MAX_PTP, format!("DECONV mean PTP ≤ {DECONV_MAX_PTP}: {}", fmt_agg(&d)));
    t.check("2", n.mean_fdp >= NPMLE_MIN_FDP, format!("NPMLE mean FDP ≥ {NPMLE_MIN_FDP}: {}", fmt_agg(&n)));
}

fn one_sided(t: &mut Tally, fits: &mut Vec<QpReport>) {
    let cases = [
        ("onesided-1", 1.5),
        ("onesided-2", 2.0),
        ("onesided-3", 2.0),
        ("onesided-4", 2.0),
        ("onesided-5", 1.5),
    ];
    for (name, u) in cases {
        let with_deconv = matches!(name, "onesided-3" | "onesided-5");
        let procs: &[Procedure] = if with_deconv {
            &[Procedure::Hamt, Procedure::Deconv]
        } else {
            &[Procedure::Hamt]
        };
        let r = run(name, u, procs, SWEEP_REPS, fits);
        let h = agg(&r, Procedure::Hamt);
        t.check("3", h.mean_fdp <= SWEEP_MAX_FDP, format!("{name} u = {u} HAMT mean FDP ≤ {SWEEP_MAX_FDP}: {}", fmt_agg(&h)));
        if with_deconv {
            let d = agg(&r, Procedure::Deconv);
            t.check(
                "4",
                h.mean_ptp - d.mean_ptp >= POWER_GAP,
                format!(
                    "{name} u = {u} HAMT PTP − DECONV PTP = {:.4} ≥ {POWER_GAP} (HAMT {:.4}, DECONV {:.4})",
                    h.mean_ptp - d.mean_ptp,
                    h.mean_ptp,
                    d.mean_ptp
                ),
            );
        }
    }
}

/// Per-σ-level cutoff rules `z > λ + d_level` against the oracle on
/// onesided-2 (three σ values, point-mass prior). Competitors are calibrated
/// to mFDR ≤ α on one sample and scored on an independent one.
fn oracle_optimality(t: &mut Tally) {
    let start = Instant::now();
    let mut s = builtin_scenario("onesided-2", 3.0).unwrap();
    s.m = THM_DRAWS;
    let calib = generate(&s, 11).unwrap();
    let eval = generate(&s, 12).unwrap();
    let rule = OracleRule::new(s.prior.clone(), &s.sigma_law, s.region, ALPHA, &OracleOptions::default()).unwrap();
    let or = rule.decide(&eval.observations).unwrap();
    let level = |o: &Observation| [0.5, 1.0, 2.0].iter().position(|&v| v == o.sigma()).unwrap();
    let nonnull: Vec<bool> = eval.truth.iter().map(|r| r.is_nonnull).collect();
    let n = THM_DRAWS as f64;
    let or_tp: Vec<f64> = or
        .decisions()
        .iter()
        .zip(&nonnull)
        .map(|(&d, &h)| (d && h) as u8 as f64)
        .collect();
    let etp_or = or_tp.iter().sum::<f64>() / n;

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_gap = 0.0;
    for _ in 0..THM_RULES {
        let d: [f64; 3] = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let score = |o: &Observation| o.z() - d[level(o)];
        // largest calibration rejection set among the top scores with FDP ≤ α
        let mut scored: Vec<(f64, bool)> = calib
            .observations
            .iter()
            .zip(&calib.truth)
            .map(|(o, r)| (score(o), r.is_nonnull))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (mut false_rej, mut best) = (0usize, 0usize);
        for (k, &(_, h)) in scored.iter().enumerate() {
            false_rej += !h as usize;
            if false_rej as f64 <= ALPHA * (k + 1) as f64 {
                best = k + 1;
            }
        }
        let lambda = if best == 0 { f64::INFINITY } else { scored[best - 1].0 };
        let diff: Vec<f64> = eval
            .observations
            .iter()
            .zip(&nonnull)
            .zip(&or_tp)
            .map(|((o, &h), &tp)| ((score(o) >= lambda && h) as u8 as f64) - tp)
            .collect();
        let mean = diff.iter().sum::<f64>() / n;
        let var = diff.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let excess = if se > 0.0 { mean / se } else if mean > 0.0 { f64::INFINITY } else { 0.0 };
        if excess > worst {
            worst = excess;
            worst_gap = mean;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    t.check(
        "5",
        worst <= THM_SE,
        format!(
            "oracle ETP {etp_or:.5} not beaten by {THM_RULES} calibrated rules beyond {THM_SE} SE \
             (largest excess {:.5} = {worst:.2} SE)",
            worst_gap
        ),
    );
    t.check("5", secs < THM_SECONDS, format!("runtime {secs:.1} s (< {THM_SECONDS} s)"));
}

fn l2_error(model: &PriorModel, u: f64) -> f64 {
    let everything = IndifferenceRegion::everything();
    let (lo, hi, n) = (-8.0, u + 8.0, 4000);
    let h = (hi - lo) / n as f64;
    (0..=n)
        .map(|i| {
            let x = lo + i as f64 * h;
            let truth = 0.9 * gauss_pdf(x, 0.0, 1.0).unwrap() + 0.1 * gauss_pdf(x, u, 1.0).unwrap();
            let d = marginal_hat(model, x, 1.0, &everything).unwrap().f - truth;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * d * d * h
        })
        .sum()
}

fn consistency(t: &mut Tally, violations: &mut Vec<f64>) {
    let u = 3.0;
    let mut means = Vec::new();
    for m in L2_SIZES {
        let start = Instant::now();
        let mut total = 0.0;
        for seed in 0..L2_SEEDS {
            let mut s = builtin_scenario("onesided-2", u).unwrap();
            s.m = m;
            let data = generate(&s, seed).unwrap().observations;
            let (pilot, _) = PilotEstimate::with_silverman(data.clone()).unwrap();
            let grid = default_grid(&data, 50).unwrap();
            let (model, _) = fit_prior(&data, &pilot, &grid, BasisConfig::default(), &SolverOptions::default()).unwrap();
            violations.push(site_violation(&model));
            total += l2_error(&model, u);
        }
        let mean = total / L2_SEEDS as f64;
        println!("     m = {m}: mean L² error {mean:.4e} ({:.0} s)", start.elapsed().as_secs_f64());
        means.push(mean);
    }
    t.check(
        "6",
        means.windows(2).all(|w| w[1] < w[0]),
        format!("L² error of f̂(·|σ=1) decreases over m = {L2_SIZES:?}: {means:?}"),
    );
}

fn random_model(rng: &mut ChaCha8Rng) -> PriorModel {
    let s = rng.random_range(2..30);
    let k = rng.random_range(1..8);
    let lo = rng.random_range(-10.0..5.0);
    let hi = lo + rng.random_range(0.5..15.0);
    let grid = GridSupport::equispaced(lo, hi, s).unwrap();
    let weights = (0..s).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    PriorModel::new(grid, BasisConfig::new(k).unwrap(), weights, vec![1.0]).unwrap()
}

fn random_region(rng: &mut ChaCha8Rng) -> IndifferenceRegion {
    let a = rng.random_range(-8.0..8.0);
    match rng.random_range(0..3) {
        0 => IndifferenceRegion::left_ray(a).unwrap(),
        1 => IndifferenceRegion::interval(a, a + rng.random_range(0.0..6.0)).unwrap(),
        _ => IndifferenceRegion::everything(),
    }
}

fn property_suites(t: &mut Tally, fits: &[QpReport], violations: &[f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut bad = 0usize;
    let mut model = random_model(&mut rng);
    for i in 0..FUZZ_CLFDR {
        if i % 1000 == 0 {
            model = random_model(&mut rng);
        }
        let obs = Observation::new(rng.random_range(-60.0..60.0), 10f64.powf(rng.random_range(-2.0..1.5))).unwrap();
        let v = clfdr_hat(&model, &obs, &random_region(&mut rng)).unwrap();
        bad += !(0.0..=1.0).contains(&v) as usize;
    }
    t.check("7", bad == 0, format!("clfdr ∈ [0, 1] on {FUZZ_CLFDR} fuzzed inputs ({bad} violations)"));

    let mut bad = 0usize;
    for _ in 0..FUZZ_STEP_UP {
        let m = rng.random_range(0..200);
        let v: Vec<f64> = (0..m)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random::<f64>().powi(3),
            })
            .collect();
        let alpha = rng.random_range(0.01..0.5);
        let res = step_up(&v, alpha).unwrap();
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let mut sum = 0.0;
        let mut r = 0;
        let mut ok = true;
        for (j, x) in sorted.iter().enumerate() {
            sum += x;
            let mean = sum / (j + 1) as f64;
            ok &= res.running_means[j] == mean;
            if mean <= alpha {
                r = j + 1;
            }
        }
        let kept_min = (0..m).filter(|&i| !res.decisions.decisions()[i]).map(|i| v[i]).fold(f64::INFINITY, f64::min);
        ok &= res.r == r && res.decisions.rejected().all(|i| v[i] <= kept_min);
        bad += !ok as usize;
    }
    t.check("7", bad == 0, format!("step-up prefix-mean invariant on {FUZZ_STEP_UP} random vectors ({bad} violations)"));

    let worst_qp = fits.iter().map(|q| q.primal_infeasibility).fold(0.0, f64::max);
    let worst_l2 = violations.iter().cloned().fold(0.0, f64::max);
    let mut worst = worst_qp.max(worst_l2);
    let mut count = fits.len() + violations.len();
    if count == 0 {
        // quick mode: a handful of fits of each kind
        for (i, name) in ["onesided-1", "onesided-3", "dependence-demo", "twosided-1"].iter().enumerate() {
            let mut s = builtin_scenario(name, 2.0).unwrap();
            s.m = 2000;
            let data = generate(&s, i as u64).unwrap().observations;
            let (pilot, _) = PilotEstimate::with_silverman(data.clone()).unwrap();
            let grid = default_grid(&data, 50).unwrap();
            for basis in [BasisConfig::default(), BasisConfig::constant()] {
                let (model, _) = fit_prior(&data, &pilot, &grid, basis, &SolverOptions::default()).unwrap();
                worst = worst.max(site_violation(&model));
                count += 1;
            }
        }
    }
    t.check("7", worst <= SITE_TOL, format!("site simplex violation of {count} fitted models ≤ {SITE_TOL}: max {worst:.3e}"));

    let mut bad = 0usize;
    for i in 0..FUZZ_EM {
        let mut s = builtin_scenario(["onesided-1", "onesided-4", "twosided-1"][i % 3], 2.0).unwrap();
        s.m = rng.random_range(20..500);
        let data = generate(&s, rng.random()).unwrap().observations;
        let grid = default_grid(&data, rng.random_range(2..40)).unwrap();
        let fit = fit_npmle(&data, &grid, 300, 0.0).unwrap();
        bad += fit.loglik_trace.windows(2).any(|w| w[1] < w[0]) as usize;
    }
    t.check("7", bad == 0, format!("EM log-likelihood nondecreasing on {FUZZ_EM} fuzzed datasets ({bad} violations)"));

    let mut worst = 0.0f64;
    for _ in 0..FUZZ_ORACLE {
        let n = rng.random_range(1..8);
        let locs: Vec<f64> = (0..n).map(|_| rng.random_range(-6.0..6.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        w[n - 1] = 1.0 - w[..n - 1].iter().sum::<f64>();
        let prior = KnownPrior::new(
            locs.iter()
                .zip(&w)
                .map(|(&l, &p)| PriorComponent::point(p, SigmaFn::constant(l)))
                .collect(),
        )
        .unwrap();
        let region = random_region(&mut rng);
        let (x, sigma) = (rng.random_range(-8.0..8.0), rng.random_range(0.2..4.0));
        let (mut num, mut den) = (0.0, 0.0);
        for (&l, &p) in locs.iter().zip(&w) {
            let f = p * gauss_pdf(x, l, sigma).unwrap();
            den += f;
            if region.contains(l) {
                num += f;
            }
        }
        let v = clfdr_oracle(&prior, &Observation::new(x, sigma).unwrap(), &region);
        worst = worst.max((v - num / den).abs());
    }
    t.check(
        "7",
        worst <= ORACLE_SUM_TOL,
        format!("point-mass oracle equals the finite sum on {FUZZ_ORACLE} cases: max error {worst:.2e}"),
    );
}

fn two_sided(t: &mut Tally, fits: &mut Vec<QpReport>) {
    let r = run("twosided-1", 2.0, &[Procedure::Hamt, Procedure::Deconv], TWOSIDED_REPS, fits);
    let (h, d) = (agg(&r, Procedure::Hamt), agg(&r, Procedure::Deconv));
    t.check("8", h.mean_fdp <= SWEEP_MAX_FDP, format!("twosided-1 u = 2 HAMT mean FDP ≤ {SWEEP_MAX_FDP}: {}", fmt_agg(&h)));
    t.check(
        "8",
        h.mean_ptp > d.mean_ptp,
        format!("twosided-1 u = 2 HAMT PTP {:.4} > DECONV PTP {:.4}", h.mean_ptp, d.mean_ptp),
    );
}

fn main() {
    let quick = std::env::var("HAMT_ACCEPTANCE").is_ok_and(|v| v == "quick");
    let start = Instant::now();
    let mut t = Tally {
        failed: Vec::new(),
        passed: 0,
    };
    let mut fits = Vec::new();
    let mut violations = Vec::new();

    oracle_constants(&mut t);
    if quick {
        t.skip("2", "dependence demo (Monte Carlo)");
        t.skip("3", "one-sided FDR sweep (Monte Carlo)");
        t.skip("4", "power ordering (Monte Carlo)");
    } else {
        dependence_demo(&mut t, &mut fits);
        one_sided(&mut t, &mut fits);
    }
    oracle_optimality(&mut t);
    if quick {
        t.skip("6", "deconvolution consistency trend (Monte Carlo)");
    } else {
        consistency(&mut t, &mut violations);
    }
    if quick {
        t.skip("8", "two-sided smoke (Monte Carlo)");
    } else {
        two_sided(&mut t, &mut fits);
    }
    property_suites(&mut t, &fits, &violations);

    println!(
        "acceptance: {} passed, {} failed in {:.0} s",
        t.passed,
        t.failed.len(),
        start.elapsed().as_secs_f64()
    );
    for f in &t.failed {
        println!("  failed {f}");
    }
    if !t.failed.is_empty() {
        std::process::exit(1);
    }
}
