//! Simulation scenarios, replicate generation and the Monte-Carlo runner.
//!
//! Random draws come from ChaCha8 streams keyed by (replicate seed,
//! scenario name, draw kind), so a replicate is reproducible on its own and
//! independent of how many threads run the experiment.

mod experiment;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use experiment::{
    run_experiment, write_aggregate_csv, write_replicate_csv, AggregateRow, ExperimentConfig, ExperimentReport,
    Procedure, ReplicateRow,
};

use crate::error::{domain, HamtError, Result};
use crate::prior::{KnownPrior, PriorComponent, PriorPiece, SigmaFn, SigmaLaw};
use crate::types::{IndifferenceRegion, Observation, TruthRecord};

/// Built-in scenario names.
pub const SCENARIOS: [&str; 11] = [
    "onesided-1",
    "onesided-2",
    "onesided-3",
    "onesided-4",
    "onesided-5",
    "twosided-1",
    "twosided-2",
    "twosided-3",
    "dependence-demo",
    "example-1",
    "example-2",
];

/// A data-generating process: `σ ~ sigma_law`, `μ | σ ~ prior`,
/// `x = μ + σ ε`.
///
/// When `replicates` is `Some(n)`, `sigma_law` and `prior` describe the
/// standard error of a mean of `n` draws. Each unit then draws `n` values
/// with standard deviation `σ√n` and reports their mean and `s/√n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub u: Option<f64>,
    pub m: usize,
    pub sigma_law: SigmaLaw,
    pub prior: KnownPrior,
    pub region: IndifferenceRegion,
    pub alpha: f64,
    pub replicates: Option<usize>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return domain("scenario needs m ≥ 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return domain(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let Some(n) = self.replicates {
            if n < 2 {
                return domain("replicate-level scenarios need n ≥ 2 draws per unit");
            }
        }
        self.sigma_law.validate()
    }

    /// Values of `u` swept by default for this scenario, or empty when `u`
    /// plays no role.
    pub fn default_sweep(name: &str) -> Vec<f64> {
        match name {
            "onesided-1" | "onesided-3" | "onesided-4" | "onesided-5" | "twosided-2" => {
                vec![1.0, 1.2, 1.4, 1.6, 1.8, 2.0]
            }
            "onesided-2" | "twosided-1" | "twosided-3" => vec![1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            _ => Vec::new(),
        }
    }
}

fn unknown(name: &str) -> HamtError {
    HamtError::UnknownScenario {
        name: name.to_string(),
        valid: SCENARIOS.join(", "),
    }
}

fn point(w: f64, f: SigmaFn) -> PriorComponent {
    PriorComponent::point(w, f)
}

fn zero(w: f64) -> PriorComponent {
    point(w, SigmaFn::constant(0.0))
}

fn left(mu0: f64) -> IndifferenceRegion {
    IndifferenceRegion::LeftRay { mu0 }
}

fn interval(lo: f64, hi: f64) -> IndifferenceRegion {
    IndifferenceRegion::Interval { lo, hi }
}

/// The scenario `name` at sweep value `u` (ignored by scenarios without one).
/// `N(a, b)` in the model descriptions has variance `b`.
pub fn builtin_scenario(name: &str, u: f64) -> Result<Scenario> {
    if !SCENARIOS.contains(&name) {
        return Err(unknown(name));
    }
    let uses_u = !Scenario::default_sweep(name).is_empty();
    if uses_u && !(u.is_finite() && u > 0.0) {
        return domain(format!("scenario {name} needs a positive u, got {u}"));
    }
    let uniform = |lo: f64, hi: f64| -> Result<SigmaLaw> {
        if !(hi > lo) {
            return domain(format!("scenario {name} needs u > {lo}, got {hi}"));
        }
        Ok(SigmaLaw::Uniform { lo, hi })
    };
    let discrete = |values: &[f64]| SigmaLaw::DiscreteUniform {
        values: values.to_vec(),
    };
    let symmetric = || {
        KnownPrior::new(vec![
            zero(0.9),
            point(0.05, SigmaFn::power(u, 1.0)),
            point(0.05, SigmaFn::power(-u, 1.0)),
        ])
    };
    let (sigma_law, prior, region, replicates) = match name {
        "onesided-1" => (
            uniform(0.5, u)?,
            KnownPrior::new(vec![
                zero(0.9),
                PriorComponent::gaussian(0.1, SigmaFn::constant(3.0), SigmaFn::constant(1.0)),
            ])?,
            left(2.0),
            None,
        ),
        "onesided-2" => (
            discrete(&[0.5, 1.0, 2.0]),
            KnownPrior::spike_and_point(0.1, SigmaFn::power(u, 1.0))?,
            left(2.0),
            None,
        ),
        "onesided-3" => {
            if !(u > 1.0) {
                return domain(format!("scenario {name} needs u > 1, got {u}"));
            }
            let law = SigmaLaw::MixtureUniform {
                weight: 0.9,
                first: (0.5, 1.0),
                second: (1.0, u),
            };
            let prior = KnownPrior::piecewise(vec![
                PriorPiece {
                    upper: 1.0,
                    components: vec![zero(1.0)],
                },
                PriorPiece {
                    upper: f64::INFINITY,
                    components: vec![point(1.0, SigmaFn::power(2.0, -1.0))],
                },
            ])?;
            (law, prior, left(1.0), None)
        }
        "onesided-4" => (
            uniform(0.5, u)?,
            KnownPrior::new(vec![
                PriorComponent::gaussian(0.9, SigmaFn::power(-1.0, 1.0), SigmaFn::constant(0.5f64.sqrt())),
                point(0.1, SigmaFn::power(2.0, 2.0)),
            ])?,
            left(1.0),
            None,
        ),
        "onesided-5" => (
            uniform(0.25, u)?,
            KnownPrior::new(vec![point(1.0, SigmaFn::power(3.0, 1.0))])?,
            left(4.0),
            None,
        ),
        "twosided-1" => (discrete(&[0.5, 1.0, 3.0]), symmetric()?, interval(-5.0, 5.0), None),
        "twosided-2" => (
            uniform(0.5, u)?,
            KnownPrior::new(vec![
                zero(0.9),
                PriorComponent::gaussian(0.05, SigmaFn::constant(3.0), SigmaFn::power(1.0, 0.5)),
                PriorComponent::gaussian(0.05, SigmaFn::constant(-3.0), SigmaFn::power(1.0, 0.5)),
            ])?,
            interval(-2.0, 2.0),
            None,
        ),
        "twosided-3" => (discrete(&[0.5, 1.0, 3.0]), symmetric()?, interval(-5.0, 5.0), Some(100)),
        "dependence-demo" => (
            SigmaLaw::Uniform { lo: 0.5, hi: 2.0 },
            KnownPrior::new(vec![point(1.0, SigmaFn::power(3.0, 1.0))])?,
            left(4.0),
            None,
        ),
        "example-1" => (
            SigmaLaw::Uniform { lo: 0.5, hi: 4.0 },
            KnownPrior::spike_and_point(0.1, SigmaFn::power(1.0, 1.5))?,
            left(0.0),
            None,
        ),
        "example-2" => (
            SigmaLaw::Uniform { lo: 0.5, hi: 4.0 },
            KnownPrior::piecewise(vec![
                PriorPiece {
                    upper: 3.65,
                    components: vec![zero(1.0)],
                },
                PriorPiece {
                    upper: f64::INFINITY,
                    components: vec![point(1.0, SigmaFn::power(1.0, 1.5))],
                },
            ])?,
            left(0.0),
            None,
        ),
        _ => return Err(unknown(name)),
    };
    let scenario = Scenario {
        name: name.to_string(),
        u: uses_u.then_some(u),
        m: 10_000,
        sigma_law,
        prior,
        region,
        alpha: 0.1,
        replicates,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// One simulated data set with its latent truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replicate {
    pub observations: Vec<Observation>,
    pub truth: Vec<TruthRecord>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
enum DrawKind {
    Sigma = 0,
    Mu = 1,
    Noise = 2,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// ChaCha8 keyed by `(seed, scenario, kind)`.
fn stream(seed: u64, scenario: &str, kind: DrawKind) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(scenario).to_le_bytes());
    key[16..24].copy_from_slice(&(kind as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Draws one replicate of `scenario`.
pub fn generate(scenario: &Scenario, seed: u64) -> Result<Replicate> {
    scenario.validate()?;
    let mut rs = stream(seed, &scenario.name, DrawKind::Sigma);
    let mut rm = stream(seed, &scenario.name, DrawKind::Mu);
    let mut rn = stream(seed, &scenario.name, DrawKind::Noise);
    let mut observations = Vec::with_capacity(scenario.m);
    let mut truth = Vec::with_capacity(scenario.m);
    for _ in 0..scenario.m {
        let sigma = scenario.sigma_law.sample(&mut rs);
        let mu = scenario.prior.sample_mu(sigma, &mut rm);
        let obs = match scenario.replicates {
            None => {
                let e: f64 = rn.sample(StandardNormal);
                Observation::new(mu + sigma * e, sigma)?
            }
            Some(n) => {
                let raw = sigma * (n as f64).sqrt();
                let values: Vec<f64> = (0..n)
                    .map(|_| mu + raw * rn.sample::<f64, _>(StandardNormal))
                    .collect();
                replicate_summary(&values)?
            }
        };
        observations.push(obs);
        truth.push(TruthRecord::new(mu, &scenario.region));
    }
    Ok(Replicate {
        observations,
        truth,
        seed,
    })
}

/// `(mean, s/√n)` of replicate-level values, with `s` the sample standard
/// deviation.
pub fn replicate_summary(values: &[f64]) -> Result<Observation> {
    let n = values.len();
    if n < 2 {
        return domain(format!("need at least 2 replicate values, got {n}"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    if !(se > 0.0) {
        return domain(format!("replicate values have zero spread (n = {n}), so sigma = 0"));
    }
    Observation::new(mean, se)
}

/// Player-level data in the style of a mobile game engagement study: for
/// each player, `n_i ∈ [5, 60]` daily log play durations with
/// player-specific spread, and a mean that shrinks as the spread grows.
/// Returns the per-player values.
pub fn game_replica(m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, "game-replica", DrawKind::Sigma);
    let mut noise = stream(seed, "game-replica", DrawKind::Noise);
    (0..m)
        .map(|_| {
            let n = rng.random_range(5..=60usize);
            let spread = 0.3 + 2.2 * rng.random::<f64>();
            let se = spread / (n as f64).sqrt();
            let centre = 3.6 - 1.5 * se;
            let mu = centre + 0.35 * rng.sample::<f64, _>(StandardNormal);
            (0..n)
                .map(|_| mu + spread * noise.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}
