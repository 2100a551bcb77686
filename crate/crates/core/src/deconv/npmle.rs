//! Grid EM for the nonparametric maximum-likelihood mixing distribution,
//! ignoring any dependence between μ and σ.

use serde::Serialize;

use super::{GridSupport, PriorModel};
use crate::error::{domain, Result};
use crate::gauss::normal_log_pdf;
use crate::types::Observation;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NpmleFit {
    pub masses: Vec<f64>,
    /// Log-likelihood at the start and after every accepted update.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl NpmleFit {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds the initial value")
    }

    pub fn into_model(self, grid: GridSupport) -> Result<PriorModel> {
        PriorModel::from_masses(grid, &self.masses)
    }
}

/// Row-rescaled likelihood matrix: `a[i*S + j] = φ_{σ_i}(x_i − u_j) / max_j`
/// together with the log of each row maximum.
struct Likelihood {
    a: Vec<f64>,
    log_max: Vec<f64>,
    s: usize,
}

impl Likelihood {
    fn new(data: &[Observation], grid: &GridSupport) -> Self {
        let u = grid.points();
        let s = u.len();
        let mut a = vec![0.0; data.len() * s];
        let mut log_max = Vec::with_capacity(data.len());
        for (i, o) in data.iter().enumerate() {
            let row = &mut a[i * s..(i + 1) * s];
            for (slot, &uj) in row.iter_mut().zip(u) {
                *slot = normal_log_pdf(o.x() - uj, o.sigma());
            }
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
            }
            log_max.push(mx);
        }
        Likelihood { a, log_max, s }
    }

    fn loglik(&self, pi: &[f64]) -> f64 {
        self.a
            .chunks(self.s)
            .zip(&self.log_max)
            .map(|(row, lm)| row.iter().zip(pi).map(|(a, p)| a * p).sum::<f64>().ln() + lm)
            .sum()
    }

    fn em_step(&self, pi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let m = self.log_max.len() as f64;
        for row in self.a.chunks(self.s) {
            let denom: f64 = row.iter().zip(pi).map(|(a, p)| a * p).sum();
            if denom > 0.0 {
                for ((o, a), p) in out.iter_mut().zip(row).zip(pi) {
                    *o += a * p / denom;
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= m);
    }
}

/// EM on grid masses from the uniform start. Stops when the log-likelihood
/// gain drops below `tol` or after `max_iter` updates. An update that would
/// lower the log-likelihood (floating-point noise at the fixed point) is
/// discarded and ends the run, so the trace is nondecreasing.
pub fn fit_npmle(data: &[Observation], grid: &GridSupport, max_iter: usize, tol: f64) -> Result<NpmleFit> {
    if data.is_empty() {
        return domain("cannot fit a mixing distribution to empty data");
    }
    if !(tol >= 0.0) {
        return domain(format!("tolerance must be nonnegative, got {tol}"));
    }
    let s = grid.len();
    let lik = Likelihood::new(data, grid);
    let mut pi = vec![1.0 / s as f64; s];
    let mut next = vec![0.0; s];
    let mut trace = vec![lik.loglik(&pi)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        lik.em_step(&pi, &mut next);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        iterations += 1;
        let ll = lik.loglik(&next);
        let prev = *trace.last().unwrap();
        if !(ll >= prev) {
            converged = true;
            break;
        }
        std::mem::swap(&mut pi, &mut next);
        trace.push(ll);
        if ll - prev < tol {
            converged = true;
            break;
        }
    }
    Ok(NpmleFit {
        masses: pi,
        loglik_trace: trace,
        iterations,
        converged,
    })
}
