use serde::Serialize;

use crate::basis::{bergman_function, GramMatrix, SectionBasis};
use crate::domain::{Point, WeightedDomain};
use crate::error::{Error, Result};
use crate::linalg::{lower_triangular_inverse, symmetric_eigenvalues};

use super::{evaluation, logdet, Configuration};

/// `(logdet(ref) - logdet(x)) / (p N_p)`, the gap between `x` and the best
/// known configuration. If `x` beats the reference it becomes the reference,
/// so the result is never negative; singular `x` gives `+inf`.
pub fn sigma(
    basis: &SectionBasis,
    domain: &WeightedDomain,
    config: &Configuration,
    fekete_ref: &Configuration,
) -> Result<f64> {
    if basis.p() == 0 {
        return Err(Error::InvalidArgument("sigma is undefined for p = 0".into()));
    }
    let (lx, _) = logdet(basis, domain, config)?;
    if lx == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    let (lr, _) = logdet(basis, domain, fekete_ref)?;
    let best = lr.max(lx);
    Ok((best - lx) / (basis.p() * basis.n_p()) as f64)
}

/// `B_p = sqrt(max_grid rho_p)`, the best constant in
/// `|s|_{L^inf} <= B_p |s|_{L^2}` restricted to the grid.
pub fn bm_constant(basis: &SectionBasis, domain: &WeightedDomain, grid: &[Point]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let mut max = 0.0f64;
    for x in grid {
        max = max.max(bergman_function(basis, domain, x)?);
    }
    Ok(max.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BmFit {
    /// Smallest `A` with `log B_p <= log A + A p^(1-delta)` at every degree.
    pub a: f64,
    /// RMS residual of the least-squares line `log B_p ~ a0 + a1 p^(1-delta)`.
    pub residual: f64,
    /// Per-degree solutions of `log A + A p^(1-delta) = log B_p`.
    pub per_degree_a: Vec<(usize, f64)>,
    /// Log-log slope of the per-degree `A` against `p`.
    pub growth_slope: f64,
    /// False when the per-degree `A` grows like a power of `p` (slope above `delta / 4`).
    pub conforming: bool,
}

/// Fits the `delta`-Bernstein–Markov bound to a sequence of `(p, B_p)`.
pub fn bm_fit(sequence: &[(usize, f64)], delta: f64) -> Result<BmFit> {
    if sequence.is_empty() {
        return Err(Error::InsufficientData("empty Bernstein-Markov sequence".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} outside (0, 1)")));
    }
    let mut per = Vec::with_capacity(sequence.len());
    for &(p, b) in sequence {
        if !(b > 0.0) || p == 0 {
            return Err(Error::InvalidArgument(format!("need p >= 1 and B_p > 0, got ({p}, {b})")));
        }
        per.push((p, solve_a((p as f64).powf(1.0 - delta), b.ln())));
    }
    let a = per.iter().map(|v| v.1).fold(0.0, f64::max);

    let xs: Vec<f64> = sequence.iter().map(|(p, _)| (*p as f64).powf(1.0 - delta)).collect();
    let ys: Vec<f64> = sequence.iter().map(|(_, b)| b.ln()).collect();
    let residual = match linear_fit(&xs, &ys) {
        Some((c0, c1, _)) => {
            let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c0 - c1 * x).powi(2)).sum();
            (ss / xs.len() as f64).sqrt()
        }
        None => 0.0,
    };
    let lp: Vec<f64> = per.iter().map(|(p, _)| (*p as f64).ln()).collect();
    let la: Vec<f64> = per.iter().map(|(_, a)| a.ln()).collect();
    let growth_slope = linear_fit(&lp, &la).map(|f| f.1).unwrap_or(0.0);
    Ok(BmFit {
        a,
        residual,
        per_degree_a: per,
        growth_slope,
        conforming: a.is_finite() && growth_slope < 0.25 * delta,
    })
}

/// Root of the increasing map `A -> log A + A t` at level `y`.
fn solve_a(t: f64, y: f64) -> f64 {
    let f = |la: f64| la + la.exp() * t - y;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) > 0.0 {
        lo *= 2.0;
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Least-squares line `y = c0 + c1 x`; also returns the slope standard error.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let c1 = sxy / sxx;
    let c0 = my - c1 * mx;
    let se = if xs.len() > 2 {
        let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - c0 - c1 * x).powi(2)).sum();
        (ss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((c0, c1, se))
}

/// `tau = sup_s |s|_{L^2(mu)} / |s|_{L^2(mu^x)}`, the square root of the
/// largest eigenvalue of `G_mu v = lambda G_x v` with `G_x = E^T E / N`.
pub fn tau2(basis: &SectionBasis, domain: &WeightedDomain, gram_mu: &GramMatrix, config: &Configuration) -> Result<f64> {
    if gram_mu.provenance().basis != basis.label() || gram_mu.n() != basis.n_p() {
        return Err(Error::Provenance(format!(
            "Gram computed for '{}', basis is '{}'",
            gram_mu.provenance().basis,
            basis.label()
        )));
    }
    let e = evaluation(basis, domain, config)?;
    let gx = e.transpose() * &e / basis.n_p() as f64;
    let l = gx.cholesky().ok_or(Error::SingularConfiguration)?.unpack();
    let linv = lower_triangular_inverse(&l).ok_or(Error::SingularConfiguration)?;
    let m = &linv * gram_mu.matrix() * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let ev = symmetric_eigenvalues(&m);
    Ok(ev[ev.len() - 1].max(0.0).sqrt())
}
