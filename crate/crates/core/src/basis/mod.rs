//! The section space `H^0(X, L^p)` of the ambient models realized as weighted
//! polynomial evaluations.
//!
//! Two realizations span the same space:
//!
//! * `Monomial`: monomials of total degree `<= p` in the ambient coordinates.
//!   On spheres the monomials are linearly dependent modulo `|x|^2 = 1`; a
//!   maximal independent subset is chosen by pivoted Gram–Schmidt on an
//!   evaluation matrix at pseudo-random sphere points.
//! * `Orthogonal`: tensor Chebyshev polynomials scaled to the box, real
//!   Fourier modes on S^1, real spherical harmonics on S^2. Better conditioned
//!   at high degree.
//!
//! Every quantity computed from a basis (log-determinants up to an additive
//! constant, Bergman functions, L_p differences, sigma, tau) is independent of
//! the realization.

mod gram;

pub use gram::{
    bergman_function, gram, lp_difference, orthonormalize, section_norm_ratios, write_gram_csv, GramMatrix,
    GramProvenance, NormRatios, CONDITION_LIMIT,
};

use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::domain::{AmbientModel, Region, WeightedDomain};
use crate::error::{Error, Result};
use crate::linalg::greedy_select_rows;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    Monomial,
    #[default]
    Orthogonal,
}

#[derive(Clone, Debug)]
enum RawBasis {
    Monomial {
        exps: Vec<Vec<u32>>,
    },
    Chebyshev {
        exps: Vec<Vec<u32>>,
        center: Vec<f64>,
        half: Vec<f64>,
    },
    Fourier,
    Harmonics,
}

/// A basis of the degree-`p` section space.
#[derive(Clone, Debug)]
pub struct SectionBasis {
    model: AmbientModel,
    p: usize,
    n_p: usize,
    realization: Realization,
    raw: RawBasis,
    transform: Option<Arc<DMatrix<f64>>>,
    orthonormal_for: Option<String>,
}

/// `dim H^0(X, L^p)` for the supported models.
pub fn dimension(model: AmbientModel, p: usize) -> usize {
    match model {
        AmbientModel::Euclidean(n) => binomial(p + n, n),
        AmbientModel::Sphere(1) => 2 * p + 1,
        AmbientModel::Sphere(2) => (p + 1) * (p + 1),
        AmbientModel::Sphere(n) => binomial(p + n + 1, n + 1) - if p >= 2 { binomial(p + n - 1, n + 1) } else { 0 },
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r as usize
}

/// Exponent vectors in `vars` variables with total degree `<= p`, graded then
/// reverse-lexicographic (`x_0` powers first).
pub fn graded_exponents(vars: usize, p: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=p {
        let mut cur = vec![0u32; vars];
        fill_exponents(&mut cur, 0, total as u32, &mut out);
    }
    out
}

fn fill_exponents(cur: &mut Vec<u32>, idx: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    if idx == cur.len() - 1 {
        cur[idx] = left;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[idx] = k;
        fill_exponents(cur, idx + 1, left - k, out);
    }
    cur[idx] = 0;
}

/// Seed of the point set used to choose sphere monomials.
const SPHERE_SELECTION_SEED: u64 = 0x5eed_0f5e_1ec7;

impl SectionBasis {
    /// Monomial realization of the degree-`p` section space.
    pub fn build(model: AmbientModel, p: usize) -> Result<Self> {
        match model {
            AmbientModel::Euclidean(n) => {
                if n == 0 {
                    return Err(Error::Unsupported("euclidean(0)".into()));
                }
                let exps = graded_exponents(n, p);
                Ok(Self::from_raw(model, p, Realization::Monomial, RawBasis::Monomial { exps }))
            }
            AmbientModel::Sphere(n) => {
                if !(1..=2).contains(&n) {
                    return Err(Error::Unsupported(format!("sphere({n})")));
                }
                let exps = select_sphere_monomials(n, p)?;
                Ok(Self::from_raw(model, p, Realization::Monomial, RawBasis::Monomial { exps }))
            }
        }
    }

    /// Basis adapted to `domain` in the requested realization.
    pub fn build_for(domain: &WeightedDomain, p: usize, realization: Realization) -> Result<Self> {
        let model = domain.model();
        match realization {
            Realization::Monomial => Self::build(model, p),
            Realization::Orthogonal => {
                let raw = match (model, domain.region()) {
                    (AmbientModel::Euclidean(n), Region::Box { lower, upper }) => RawBasis::Chebyshev {
                        exps: graded_exponents(n, p),
                        center: lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
                        half: lower.iter().zip(upper).map(|(l, u)| 0.5 * (u - l)).collect(),
                    },
                    (AmbientModel::Sphere(1), _) => RawBasis::Fourier,
                    (AmbientModel::Sphere(2), _) => RawBasis::Harmonics,
                    (m, r) => return Err(Error::Unsupported(format!("orthogonal realization for {m} on {r:?}"))),
                };
                Ok(Self::from_raw(model, p, Realization::Orthogonal, raw))
            }
        }
    }

    fn from_raw(model: AmbientModel, p: usize, realization: Realization, raw: RawBasis) -> Self {
        SectionBasis {
            model,
            p,
            n_p: dimension(model, p),
            realization,
            raw,
            transform: None,
            orthonormal_for: None,
        }
    }

    pub fn model(&self) -> AmbientModel {
        self.model
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn realization(&self) -> Realization {
        self.realization
    }

    /// Lower-triangular change of basis `T`: transformed rows are `T r(x)`.
    pub fn transform(&self) -> Option<&DMatrix<f64>> {
        self.transform.as_deref()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.transform.is_some()
    }

    /// `(measure, phi)` label of the Gram matrix the basis was orthonormalized against.
    pub fn orthonormal_for(&self) -> Option<&str> {
        self.orthonormal_for.as_deref()
    }

    pub(crate) fn with_transform(&self, t: DMatrix<f64>, tag: String) -> Self {
        let mut b = self.clone();
        b.transform = Some(Arc::new(t));
        b.orthonormal_for = Some(tag);
        b
    }

    /// Basis without any change-of-basis transform.
    pub fn raw_basis(&self) -> Self {
        let mut b = self.clone();
        b.transform = None;
        b.orthonormal_for = None;
        b
    }

    /// Exponent vectors of a monomial realization.
    pub fn monomial_exponents(&self) -> Option<&[Vec<u32>]> {
        match &self.raw {
            RawBasis::Monomial { exps } => Some(exps),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{}|p={}|{:?}|{}",
            self.model,
            self.p,
            self.realization,
            self.orthonormal_for.as_deref().unwrap_or("raw")
        )
    }

    /// Raw section values at `x`, without metric, weight, or transform.
    pub fn raw_row_into(&self, x: &[f64], out: &mut [f64]) {
        self.raw_row_generic(x, out)
    }

    pub(crate) fn raw_row_generic<T: Real>(&self, x: &[f64], out: &mut [T]) {
        let p = self.p;
        match &self.raw {
            RawBasis::Monomial { exps } => {
                let pows: Vec<Vec<T>> = x.iter().map(|v| powers(*v, p)).collect();
                for (o, e) in out.iter_mut().zip(exps) {
                    *o = e.iter().enumerate().fold(T::of(1.0), |acc, (k, &a)| acc * pows[k][a as usize]);
                }
            }
            RawBasis::Chebyshev { exps, center, half } => {
                let ts: Vec<Vec<T>> = x
                    .iter()
                    .enumerate()
                    .map(|(k, v)| chebyshev((T::of(*v) - T::of(center[k])) * (1.0 / half[k]), p))
                    .collect();
                for (o, e) in out.iter_mut().zip(exps) {
                    *o = e.iter().enumerate().fold(T::of(1.0), |acc, (k, &a)| acc * ts[k][a as usize]);
                }
            }
            RawBasis::Fourier => {
                out[0] = T::of(1.0);
                let (c1, s1) = (T::of(x[0]), T::of(x[1]));
                let (mut c, mut s) = (T::of(1.0), T::of(0.0));
                for k in 1..=p {
                    let cn = c * c1 - s * s1;
                    let sn = s * c1 + c * s1;
                    c = cn;
                    s = sn;
                    out[2 * k - 1] = c;
                    out[2 * k] = s;
                }
            }
            RawBasis::Harmonics => real_harmonics(x, p, out),
        }
    }

    pub fn raw_row(&self, x: &[f64]) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_p);
        self.raw_row_into(x, v.as_mut_slice());
        v
    }

    /// Weighted (and, if present, transformed) row without membership checks.
    pub fn weighted_row_unchecked(&self, domain: &WeightedDomain, x: &[f64]) -> DVector<f64> {
        let mut v = self.raw_row(x);
        v *= domain.log_weight(self.p, x).exp();
        match &self.transform {
            Some(t) => t.as_ref() * v,
            None => v,
        }
    }

    /// Component `j` is `|s_j(x)|_{p phi}` with sign: `s_j(x) exp(metric - p phi(x))`,
    /// then the change-of-basis transform when present.
    pub fn weighted_row(&self, domain: &WeightedDomain, x: &[f64]) -> Result<DVector<f64>> {
        self.check_domain(domain)?;
        if !domain.contains(x)? {
            return Err(Error::OutsideDomain);
        }
        Ok(self.weighted_row_unchecked(domain, x))
    }

    pub(crate) fn check_domain(&self, domain: &WeightedDomain) -> Result<()> {
        if domain.model() != self.model {
            return Err(Error::InvalidArgument(format!(
                "basis built for {} used with a {} domain",
                self.model,
                domain.model()
            )));
        }
        Ok(())
    }

    /// Matrix whose row `i` is the weighted row at `points[i]`.
    pub fn evaluation_matrix(&self, domain: &WeightedDomain, points: &[Vec<f64>]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(points.len(), self.n_p);
        for (i, x) in points.iter().enumerate() {
            let r = self.weighted_row_unchecked(domain, x);
            m.set_row(i, &r.transpose());
        }
        m
    }
}

/// Arithmetic used to evaluate raw rows, in `f64` or double-double.
pub(crate) trait Real: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Mul<f64, Output = Self> {
    fn of(v: f64) -> Self;
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
}

impl Real for TwoFloat {
    fn of(v: f64) -> Self {
        TwoFloat::from(v)
    }
}

fn powers<T: Real>(v: f64, p: usize) -> Vec<T> {
    let v = T::of(v);
    let mut out = Vec::with_capacity(p + 1);
    let mut acc = T::of(1.0);
    for _ in 0..=p {
        out.push(acc);
        acc = acc * v;
    }
    out
}

fn chebyshev<T: Real>(u: T, p: usize) -> Vec<T> {
    let mut t = vec![T::of(1.0); p + 1];
    if p >= 1 {
        t[1] = u;
    }
    for k in 2..=p {
        t[k] = u * t[k - 1] * 2.0 - t[k - 2];
    }
    t
}

/// Real spherical harmonics of degree `<= p` at `x in S^2`, orthonormal for
/// the normalized area measure. Ordered by `l`, then `m = 0, (cos 1, sin 1), ...`.
#[allow(clippy::needless_range_loop)]
pub(crate) fn real_harmonics<T: Real>(x: &[f64], p: usize, out: &mut [T]) {
    let (x0, x1, z) = (T::of(x[0]), T::of(x[1]), T::of(x[2]));
    // Re/Im of (x + i y)^m = s^m (cos m az, sin m az)
    let mut cm = vec![T::of(1.0); p + 1];
    let mut sm = vec![T::of(0.0); p + 1];
    for m in 1..=p {
        cm[m] = cm[m - 1] * x0 - sm[m - 1] * x1;
        sm[m] = sm[m - 1] * x0 + cm[m - 1] * x1;
    }
    // qt[l][m] = Q_l^m(z) / s^m with Q normalized so that int_{-1}^{1} Q^2 dz = 2
    let mut qt = vec![vec![T::of(0.0); p + 1]; p + 1];
    let mut diag = 1.0;
    for m in 0..=p {
        if m > 0 {
            diag *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        }
        qt[m][m] = T::of(diag);
        for l in (m + 1)..=p {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let prev2 = if l >= m + 2 {
                let l1 = lf - 1.0;
                let b = ((l1 * l1 - mf * mf) / (4.0 * l1 * l1 - 1.0)).sqrt();
                qt[l - 2][m] * b
            } else {
                T::of(0.0)
            };
            qt[l][m] = (z * qt[l - 1][m] - prev2) * a;
        }
    }
    let mut idx = 0;
    let r2 = std::f64::consts::SQRT_2;
    for l in 0..=p {
        out[idx] = qt[l][0];
        idx += 1;
        for m in 1..=l {
            out[idx] = qt[l][m] * cm[m] * r2;
            out[idx + 1] = qt[l][m] * sm[m] * r2;
            idx += 2;
        }
    }
}

fn select_sphere_monomials(n: usize, p: usize) -> Result<Vec<Vec<u32>>> {
    let all = graded_exponents(n + 1, p);
    let target = dimension(AmbientModel::Sphere(n), p);
    let m = 2 * all.len().max(target) + 8;
    let domain = WeightedDomain::full_sphere(n, crate::domain::Weight::Zero)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SPHERE_SELECTION_SEED);
    let pts: Vec<Vec<f64>> = (0..m).map(|_| domain.sample_uniform(&mut rng)).collect();
    let proto = SectionBasis::from_raw(
        AmbientModel::Sphere(n),
        p,
        Realization::Monomial,
        RawBasis::Monomial { exps: all.clone() },
    );
    let mut eval = DMatrix::zeros(m, all.len());
    for (i, x) in pts.iter().enumerate() {
        let mut row = vec![0.0; all.len()];
        proto.raw_row_into(x, &mut row);
        for (j, v) in row.iter().enumerate() {
            eval[(i, j)] = *v;
        }
    }
    // columns are monomials: select on the transpose
    let (cols, pivots) = greedy_select_rows(&eval.transpose(), all.len().min(target + 1));
    let lead = pivots[0];
    if pivots[target - 1] <= 1e-11 * lead {
        return Err(Error::Unsupported(format!(
            "sphere({n}) degree {p}: monomial rank below {target}"
        )));
    }
    if pivots.len() > target && pivots[target] > 1e-7 * lead {
        return Err(Error::Unsupported(format!(
            "sphere({n}) degree {p}: monomial rank above {target}"
        )));
    }
    let mut chosen: Vec<usize> = cols[..target].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|j| all[j].clone()).collect())
}
