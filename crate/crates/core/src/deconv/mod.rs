//! Deconvolution estimates of the σ-dependent prior `g_μ(·|σ)`.
//!
//! The prior is supported on a fixed grid `u_1 < … < u_S`, and the mass on
//! `u_j` at standard deviation σ is `g_j(σ) = w_jᵀ q(σ)` for a basis
//! `q(σ) = (1, cos σ, …, cos((K−1)σ))`. The weights minimise the squared
//! distance between the implied marginal `Σ_j φ_σ(x − u_j) g_j(σ)` and a
//! kernel pilot estimate, evaluated at the data, subject to `g(σ)` lying in
//! the simplex at a set of σ sites.
//!
//! A grid EM for the σ-independent maximum-likelihood prior lives in
//! [`npmle`].

pub mod npmle;
pub(crate) mod qp;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, HamtError, Result};
use crate::gauss::normal_pdf;
use crate::pilot::PilotEstimate;
use crate::types::Observation;

pub use npmle::{fit_npmle, NpmleFit};

/// Strictly increasing support points of the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GridSupport {
    points: Vec<f64>,
}

impl GridSupport {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return domain("grid needs at least one point");
        }
        if points.iter().any(|p| !p.is_finite()) {
            return domain("grid points must be finite");
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("grid points must be strictly increasing");
        }
        Ok(GridSupport { points })
    }

    /// `s` equally spaced points from `lo` to `hi` inclusive; a single
    /// point sits at the midpoint.
    pub fn equispaced(lo: f64, hi: f64, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(HamtError::InvalidConfig("grid size must be at least 1".into()));
        }
        if s == 1 {
            return GridSupport::new(vec![0.5 * (lo + hi)]);
        }
        if !(lo < hi) {
            return Err(HamtError::DegenerateGrid(lo));
        }
        let step = (hi - lo) / (s - 1) as f64;
        let mut pts: Vec<f64> = (0..s).map(|j| lo + step * j as f64).collect();
        pts[s - 1] = hi;
        GridSupport::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TryFrom<Vec<f64>> for GridSupport {
    type Error = HamtError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        GridSupport::new(v)
    }
}

impl From<GridSupport> for Vec<f64> {
    fn from(g: GridSupport) -> Vec<f64> {
        g.points
    }
}

/// `S` equally spaced points over `[min x_i, max x_i]`.
pub fn default_grid(data: &[Observation], s: usize) -> Result<GridSupport> {
    if data.is_empty() {
        return domain("cannot build a grid from empty data");
    }
    let lo = data.iter().map(|o| o.x()).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|o| o.x()).fold(f64::NEG_INFINITY, f64::max);
    if s >= 2 && lo == hi {
        return Err(HamtError::DegenerateGrid(lo));
    }
    GridSupport::equispaced(lo, hi, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    CosineWithConstant,
}

/// `q_1(σ) = 1`, `q_k(σ) = cos((k−1)σ)` for `k = 2..K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub kind: BasisKind,
    #[serde(rename = "K")]
    k: usize,
}

impl BasisConfig {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(HamtError::InvalidConfig("number of basis functions must be at least 1".into()));
        }
        Ok(BasisConfig {
            kind: BasisKind::CosineWithConstant,
            k,
        })
    }

    pub fn constant() -> Self {
        BasisConfig {
            kind: BasisKind::CosineWithConstant,
            k: 1,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eval_into(&self, sigma: f64, out: &mut [f64]) {
        out[0] = 1.0;
        for (k, slot) in out.iter_mut().enumerate().take(self.k).skip(1) {
            *slot = (k as f64 * sigma).cos();
        }
    }

    pub fn eval(&self, sigma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.eval_into(sigma, &mut out);
        out
    }
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            kind: BasisKind::CosineWithConstant,
            k: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Degenerate,
}

impl std::fmt::Display for QpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIter => "max_iter",
            QpStatus::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpReport {
    /// Attained least-squares objective.
    pub objective: f64,
    pub iterations: usize,
    /// Worst simplex violation over the enforced σ sites.
    pub primal_infeasibility: f64,
    pub status: QpStatus,
}

/// Solver and constraint-site settings for [`fit_prior`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Interior-point iteration cap.
    pub max_iter: usize,
    /// Feasibility tolerance inside the conic solver.
    pub feas_tol: f64,
    /// Absolute and relative duality gap tolerance.
    pub gap_tol: f64,
    /// Largest simplex violation at the sites accepted as optimal.
    pub primal_tol: f64,
    /// Upper bound on the number of σ quantile sites where the simplex
    /// constraints are enforced.
    pub max_sites: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 200,
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            primal_tol: 1e-6,
            max_sites: 128,
        }
    }
}

/// A fitted prior: support grid, basis and the `S × K` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    grid: GridSupport,
    basis: BasisConfig,
    /// Row-major `S × K`.
    weights: Vec<f64>,
    sigma_ref: Vec<f64>,
    report: Option<QpReport>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    grid: GridSupport,
    basis: BasisConfig,
    weights: Vec<Vec<f64>>,
    sigma_ref: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    report: Option<QpReport>,
}

impl PriorModel {
    pub fn new(grid: GridSupport, basis: BasisConfig, weights: Vec<Vec<f64>>, sigma_ref: Vec<f64>) -> Result<Self> {
        let s = grid.len();
        let k = basis.k();
        if weights.len() != s {
            return Err(HamtError::LengthMismatch {
                expected: s,
                found: weights.len(),
            });
        }
        let mut flat = Vec::with_capacity(s * k);
        for row in &weights {
            if row.len() != k {
                return Err(HamtError::LengthMismatch {
                    expected: k,
                    found: row.len(),
                });
            }
            if row.iter().any(|w| !w.is_finite()) {
                return domain("model weights must be finite");
            }
            flat.extend_from_slice(row);
        }
        if sigma_ref.iter().any(|s| !(*s > 0.0)) {
            return domain("constraint sites must be positive");
        }
        Ok(PriorModel {
            grid,
            basis,
            weights: flat,
            sigma_ref,
            report: None,
        })
    }

    /// A σ-independent prior with the given masses on the grid.
    pub fn from_masses(grid: GridSupport, masses: &[f64]) -> Result<Self> {
        let rows = masses.iter().map(|&p| vec![p]).collect();
        PriorModel::new(grid, BasisConfig::constant(), rows, Vec::new())
    }

    pub fn grid(&self) -> &GridSupport {
        &self.grid
    }

    pub fn basis(&self) -> BasisConfig {
        self.basis
    }

    pub fn weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.basis.k()).map(|c| c.to_vec()).collect()
    }

    pub fn sigma_ref(&self) -> &[f64] {
        &self.sigma_ref
    }

    pub fn report(&self) -> Option<&QpReport> {
        self.report.as_ref()
    }

    /// Unclipped `w_jᵀ q(σ)` for every grid point.
    pub fn raw_mass(&self, sigma: f64) -> Vec<f64> {
        let k = self.basis.k();
        let q = self.basis.eval(sigma);
        self.weights
            .chunks(k)
            .map(|w| w.iter().zip(&q).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            grid: self.grid.clone(),
            basis: self.basis,
            weights: self.weight_rows(),
            sigma_ref: self.sigma_ref.clone(),
            report: self.report,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        let mut model = PriorModel::new(file.grid, file.basis, file.weights, file.sigma_ref)?;
        model.report = file.report;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorMass {
    pub masses: Vec<f64>,
    /// Every entry was clipped and the uniform prior was substituted.
    pub fallback: bool,
}

/// `g(σ)` clipped at zero and renormalised onto the simplex.
pub fn prior_mass(model: &PriorModel, sigma: f64) -> Result<PriorMass> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return domain(format!("sigma must be positive and finite, got {sigma}"));
    }
    let mut g = model.raw_mass(sigma);
    for v in g.iter_mut() {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
    let total: f64 = g.iter().sum();
    if total > 0.0 && total.is_finite() {
        g.iter_mut().for_each(|v| *v /= total);
        Ok(PriorMass {
            masses: g,
            fallback: false,
        })
    } else {
        let s = g.len();
        Ok(PriorMass {
            masses: vec![1.0 / s as f64; s],
            fallback: true,
        })
    }
}

/// `Σ_i (y_i − Σ_j φ_{σ_i}(x_i − u_j) w_jᵀq(σ_i))²` for arbitrary weights
/// (clipping is not applied).
pub fn deconv_objective(model: &PriorModel, data: &[Observation], targets: &[f64]) -> Result<f64> {
    if data.len() != targets.len() {
        return Err(HamtError::LengthMismatch {
            expected: data.len(),
            found: targets.len(),
        });
    }
    let u = model.grid.points();
    Ok(data
        .iter()
        .zip(targets)
        .map(|(o, &y)| {
            let g = model.raw_mass(o.sigma());
            let fit: f64 = u
                .iter()
                .zip(&g)
                .map(|(&uj, &gj)| normal_pdf(o.x() - uj, o.sigma()) * gj)
                .sum();
            (y - fit) * (y - fit)
        })
        .sum())
}

/// Quantile sites of the data σ's where the simplex is enforced.
pub fn constraint_sites(data: &[Observation], max_sites: usize) -> Vec<f64> {
    let mut s: Vec<f64> = data.iter().map(|o| o.sigma()).collect();
    s.sort_by(f64::total_cmp);
    let l = data.len().min(max_sites.max(1));
    let n = s.len();
    let mut sites: Vec<f64> = if l == 1 {
        vec![s[n / 2]]
    } else {
        (0..l)
            .map(|i| {
                // linear interpolation between order statistics
                let h = (n - 1) as f64 * i as f64 / (l - 1) as f64;
                let lo = h.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                s[lo] + (h - lo as f64) * (s[hi] - s[lo])
            })
            .collect()
    };
    sites.dedup();
    sites
}

/// Inequality rows `Σ_k q_lk w_jk ≥ 0` for every site `l` and grid point
/// `j`, in the column-scaled variables.
fn site_rows(s: usize, k: usize, site_q: &[f64], scale: &[f64]) -> qp::Inequalities {
    let l = site_q.len() / k;
    let mut entries = Vec::with_capacity(l * s * k);
    for (li, q) in site_q.chunks(k).enumerate() {
        for j in 0..s {
            for kk in 0..k {
                entries.push((li * s + j, j * k + kk, q[kk] * scale[j * k + kk]));
            }
        }
    }
    qp::Inequalities { rows: l * s, entries }
}

/// Smallest design column norm, relative to the largest, used for scaling.
const COLUMN_NORM_FLOOR: f64 = 1e-6;

/// Fits the σ-dependent prior against the pilot estimate evaluated at the
/// data.
pub fn fit_prior(
    data: &[Observation],
    pilot: &PilotEstimate,
    grid: &GridSupport,
    basis: BasisConfig,
    opts: &SolverOptions,
) -> Result<(PriorModel, QpReport)> {
    if pilot.data().len() != data.len() {
        return Err(HamtError::LengthMismatch {
            expected: data.len(),
            found: pilot.data().len(),
        });
    }
    let targets = pilot.density_batch(data);
    fit_prior_targets(data, &targets, grid, basis, opts)
}

/// The σ-independent special case (`K = 1`).
pub fn fit_prior_sigma_independent(
    data: &[Observation],
    pilot: &PilotEstimate,
    grid: &GridSupport,
    opts: &SolverOptions,
) -> Result<(PriorModel, QpReport)> {
    fit_prior(data, pilot, grid, BasisConfig::constant(), opts)
}

/// [`fit_prior`] with explicit targets `y_i` in place of the pilot values.
pub fn fit_prior_targets(
    data: &[Observation],
    targets: &[f64],
    grid: &GridSupport,
    basis: BasisConfig,
    opts: &SolverOptions,
) -> Result<(PriorModel, QpReport)> {
    if data.is_empty() {
        return domain("cannot fit a prior to empty data");
    }
    if targets.len() != data.len() {
        return Err(HamtError::LengthMismatch {
            expected: data.len(),
            found: targets.len(),
        });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return domain("targets must be finite");
    }
    let s = grid.len();
    let k = basis.k();
    let n = s * k;
    let m = data.len();
    let sites = constraint_sites(data, opts.max_sites);

    let finish = |weights: Vec<f64>, iterations: usize, status: QpStatus| -> Result<(PriorModel, QpReport)> {
        let mut model = PriorModel {
            grid: grid.clone(),
            basis,
            weights,
            sigma_ref: sites.clone(),
            report: None,
        };
        let objective = deconv_objective(&model, data, targets)?;
        let primal_infeasibility = site_violation(&model);
        let status = if status == QpStatus::Optimal && primal_infeasibility > opts.primal_tol {
            QpStatus::MaxIter
        } else {
            status
        };
        let report = QpReport {
            objective,
            iterations,
            primal_infeasibility,
            status,
        };
        model.report = Some(report);
        Ok((model, report))
    };

    if s == 1 {
        let mut w = vec![0.0; k];
        w[0] = 1.0;
        return finish(w, 0, QpStatus::Optimal);
    }

    // design matrix, column (j, k) = φ_{σ_i}(x_i − u_j) q_k(σ_i)
    let u = grid.points();
    let qdata: Vec<Vec<f64>> = data.iter().map(|o| basis.eval(o.sigma())).collect();
    // a constant basis gives identical rows at every site
    let site_q: Vec<f64> = if k == 1 {
        vec![1.0]
    } else {
        sites.iter().flat_map(|&sg| basis.eval(sg)).collect()
    };
    let change = SiteBasis::new(&site_q, k);
    let qfit: Vec<Vec<f64>> = qdata.iter().map(|q| change.apply(q)).collect();
    // the targets ride along as a last column so the QR factor also yields Qᵀy
    let mut d = DMatrix::<f64>::zeros(m, n + 1);
    d.as_mut_slice().par_chunks_mut(m).enumerate().for_each(|(col, out)| {
        if col == n {
            out.copy_from_slice(targets);
            return;
        }
        let (j, kk) = (col / k, col % k);
        for (i, o) in data.iter().enumerate() {
            out[i] = normal_pdf(o.x() - u[j], o.sigma()) * qfit[i][kk];
        }
    });

    let mut degenerate = false;
    let norms: Vec<f64> = (0..n).map(|c| d.column(c).norm()).collect();
    // columns far below the largest (grid points no datum can reach) keep
    // a bounded scale so the constraint rows stay representable
    let floor = COLUMN_NORM_FLOOR * norms.iter().cloned().fold(0.0, f64::max);
    let scale: Vec<f64> = norms
        .iter()
        .map(|&norm| {
            if norm > 0.0 {
                1.0 / norm.max(floor)
            } else {
                degenerate = true;
                1.0 / floor.max(f64::MIN_POSITIVE)
            }
        })
        .collect();
    if basis_rank_deficient(&qdata, k) {
        degenerate = true;
    }
    for (c, sc) in scale.iter().enumerate() {
        d.column_mut(c).scale_mut(*sc);
    }
    let (factor, rhs) = reduced_factor(d, n)?;

    let cons = site_rows(s, k, &change.site_q, &scale);
    // Σ_j w_jk = δ_k1 in the fitted coordinates, row-normalised
    let mut a_eq = DMatrix::<f64>::zeros(k, n);
    let mut b_eq = vec![0.0; k];
    for kk in 0..k {
        let norm = (0..s).map(|j| scale[j * k + kk].powi(2)).sum::<f64>().sqrt();
        for j in 0..s {
            a_eq[(kk, j * k + kk)] = scale[j * k + kk] / norm;
        }
        b_eq[kk] = change.total[kk] / norm;
    }
    let settings = qp::ConicSettings {
        max_iter: opts.max_iter,
        feas_tol: opts.feas_tol,
        gap_tol: opts.gap_tol,
    };
    let res = qp::solve_lsq(&factor, &rhs, &a_eq, &b_eq, &cons, &settings)?;
    let mut w: Vec<f64> = if res.x.iter().all(|v| v.is_finite()) {
        let z: Vec<f64> = res.x.iter().zip(&scale).map(|(v, s)| v * s).collect();
        z.chunks(k).flat_map(|zj| change.restore(zj)).collect()
    } else {
        // solver breakdown: fall back to the uniform σ-free prior
        let mut w = vec![0.0; n];
        (0..s).for_each(|j| w[j * k] = 1.0 / s as f64);
        w
    };
    repair_feasibility(&mut w, s, k, &site_q);

    let status = if !res.converged {
        QpStatus::MaxIter
    } else if degenerate {
        QpStatus::Degenerate
    } else {
        QpStatus::Optimal
    };
    finish(w, res.iterations, status)
}

/// Per-grid-point change of coordinates `w_j = T z_j` with `T = V Σ⁻¹`
/// from the site matrix `Q_s = U Σ Vᵀ`, so the site rows become the
/// orthonormal `U`. Falls back to the identity when `Q_s` is too short or
/// numerically singular.
struct SiteBasis {
    k: usize,
    transform: Option<DMatrix<f64>>,
    /// Site rows in the fitted coordinates, row-major `L × K`.
    site_q: Vec<f64>,
    /// `T⁻¹ e₁`, the column sums the fitted coordinates must meet.
    total: Vec<f64>,
}

impl SiteBasis {
    fn new(site_q: &[f64], k: usize) -> Self {
        let l = site_q.len() / k;
        let mut total = vec![0.0; k];
        total[0] = 1.0;
        let identity = SiteBasis {
            k,
            transform: None,
            site_q: site_q.to_vec(),
            total: total.clone(),
        };
        if k == 1 || l < k {
            return identity;
        }
        let qs = DMatrix::from_row_slice(l, k, site_q);
        let svd = qs.svd(true, true);
        let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
            return identity;
        };
        let sv = svd.singular_values;
        if sv.min() <= sv.max() * 1e-12 {
            return identity;
        }
        let mut t = vt.transpose();
        for c in 0..k {
            t.column_mut(c).scale_mut(1.0 / sv[c]);
            total[c] = sv[c] * vt[(c, 0)];
        }
        let site_q = (0..l).flat_map(|r| (0..k).map(move |c| (r, c))).map(|(r, c)| u[(r, c)]).collect();
        SiteBasis {
            k,
            transform: Some(t),
            site_q,
            total,
        }
    }

    /// `Tᵀ q`.
    fn apply(&self, q: &[f64]) -> Vec<f64> {
        match &self.transform {
            None => q.to_vec(),
            Some(t) => (0..self.k).map(|c| (0..self.k).map(|r| t[(r, c)] * q[r]).sum()).collect(),
        }
    }

    /// `T z`.
    fn restore(&self, z: &[f64]) -> Vec<f64> {
        match &self.transform {
            None => z.to_vec(),
            Some(t) => (0..self.k).map(|r| (0..self.k).map(|c| t[(r, c)] * z[c]).sum()).collect(),
        }
    }
}

/// From the scaled design with the targets appended as column `n`, returns
/// `(F, c)` with `‖D v − y‖² = ‖F v − c‖² + const`, where `F` keeps only the
/// numerically nonzero singular directions of `D`.
fn reduced_factor(d: DMatrix<f64>, n: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let view = faer::MatRef::from_column_major_slice(d.as_slice(), d.nrows(), d.ncols());
    let qr = view.qr();
    let r = qr.thin_R();
    let rows = r.nrows().min(n);
    let svd = r
        .get(..rows, ..n)
        .svd()
        .map_err(|e| HamtError::InvalidConfig(format!("design factorization failed: {e:?}")))?;
    let (uu, sv, vv) = (svd.U(), svd.S().column_vector(), svd.V());
    let smax = (0..sv.nrows()).map(|i| sv[i]).fold(0.0, f64::max);
    let cut = smax * n as f64 * f64::EPSILON;
    let kept: Vec<usize> = (0..sv.nrows()).filter(|&i| sv[i] > cut).collect();
    let mut f = DMatrix::zeros(kept.len(), n);
    let mut rhs = Vec::with_capacity(kept.len());
    for (row, &i) in kept.iter().enumerate() {
        for col in 0..n {
            f[(row, col)] = sv[i] * vv[(col, i)];
        }
        rhs.push((0..rows).map(|t| uu[(t, i)] * r[(t, n)]).sum());
    }
    Ok((f, rhs))
}

/// Numerical rank of `{q(σ_i)}` below `K`.
fn basis_rank_deficient(qdata: &[Vec<f64>], k: usize) -> bool {
    if k == 1 {
        return false;
    }
    let mut g = DMatrix::<f64>::zeros(k, k);
    for q in qdata {
        for a in 0..k {
            for b in 0..k {
                g[(a, b)] += q[a] * q[b];
            }
        }
    }
    let eig = SymmetricEigen::new(g).eigenvalues;
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    min <= max * k as f64 * f64::EPSILON * 16.0
}

/// Projects onto `Σ_j w_j = e_1`, then mixes toward the uniform constant
/// prior just enough to make every site mass nonnegative.
fn repair_feasibility(w: &mut [f64], s: usize, k: usize, site_q: &[f64]) {
    for kk in 0..k {
        let target = if kk == 0 { 1.0 } else { 0.0 };
        let total: f64 = (0..s).map(|j| w[j * k + kk]).sum();
        let shift = (total - target) / s as f64;
        for j in 0..s {
            w[j * k + kk] -= shift;
        }
    }
    let uniform = 1.0 / s as f64;
    let mut lambda: f64 = 0.0;
    for q in site_q.chunks(k) {
        for j in 0..s {
            let g: f64 = (0..k).map(|kk| w[j * k + kk] * q[kk]).sum();
            if g < 0.0 {
                lambda = lambda.max(-g / (uniform - g));
            }
        }
    }
    if lambda > 0.0 {
        for j in 0..s {
            for kk in 0..k {
                let target = if kk == 0 { uniform } else { 0.0 };
                w[j * k + kk] = (1.0 - lambda) * w[j * k + kk] + lambda * target;
            }
        }
    }
}

/// Worst violation of the simplex constraints over `sigma_ref`.
pub fn site_violation(model: &PriorModel) -> f64 {
    let mut worst: f64 = 0.0;
    for &sg in model.sigma_ref() {
        let g = model.raw_mass(sg);
        let total: f64 = g.iter().sum();
        worst = worst.max((total - 1.0).abs());
        for v in g {
            worst = worst.max(-v);
        }
    }
    worst
}
