//! One-dimensional quadrature and bracketing root search.

use std::sync::OnceLock;

use crate::error::{HamtError, Result};

/// Order of the fixed Gauss–Legendre rule used by composite integration.
pub(crate) const GL_ORDER: usize = 12;

fn gauss_legendre_rule() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n {
            // Newton iteration on P_n from the Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Composite Gauss–Legendre nodes and weights on `[a, b]` with `panels`
/// equal panels.
pub(crate) fn gl_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let (nodes, weights) = gauss_legendre_rule();
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * GL_ORDER);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

pub(crate) fn gl_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    gl_nodes(a, b, panels).into_iter().map(|(x, w)| w * f(x)).sum()
}

/// Adaptive Simpson integration with a relative tolerance.
///
/// Panels are bisected until the Richardson-corrected change on every panel
/// is within its share of `rel_tol · |I|`. A panel that is still unresolved
/// at `max_depth` makes the whole call fail.
pub struct AdaptiveSimpson {
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub max_depth: u32,
}

impl Default for AdaptiveSimpson {
    fn default() -> Self {
        AdaptiveSimpson {
            rel_tol: 1e-8,
            abs_floor: 1e-300,
            max_depth: 40,
        }
    }
}

impl AdaptiveSimpson {
    pub fn integrate(&self, f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        if !(b > a) {
            return Ok(0.0);
        }
        // Coarse estimate on 16 panels fixes the absolute target.
        let panels = 16;
        let h = (b - a) / panels as f64;
        let mut coarse = Vec::with_capacity(panels);
        let mut estimate = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let hi = lo + h;
            let mid = 0.5 * (lo + hi);
            let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
            let s = h / 6.0 * (flo + 4.0 * fmid + fhi);
            estimate += s;
            coarse.push((lo, hi, flo, fmid, fhi, s));
        }
        let target = (self.rel_tol * estimate.abs()).max(self.abs_floor);
        let mut state = SimpsonState {
            evaluations: 3 * panels,
            worst: 0.0,
            failed: false,
        };
        let mut total = 0.0;
        for (lo, hi, flo, fmid, fhi, s) in coarse {
            total += self.recurse(f, lo, hi, flo, fmid, fhi, s, target / panels as f64, 0, &mut state);
        }
        if state.failed {
            return Err(HamtError::Quadrature {
                lo: a,
                hi: b,
                rel_change: state.worst / total.abs().max(self.abs_floor),
                evaluations: state.evaluations,
            });
        }
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        state: &mut SimpsonState,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        state.evaluations += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        if depth >= self.max_depth {
            state.failed = true;
            state.worst = state.worst.max(delta.abs());
            return left + right + delta / 15.0;
        }
        self.recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, state)
            + self.recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, state)
    }
}

struct SimpsonState {
    evaluations: usize,
    worst: f64,
    failed: bool,
}

/// Bisection for a sign change of `f` on `[lo, hi]`; returns the midpoint
/// of the final bracket.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> f64 {
    let flo_neg = f(lo) < 0.0;
    for _ in 0..max_iter {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == flo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
