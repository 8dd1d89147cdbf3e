//! Log-determinants of weighted evaluation matrices, rank-one updates, Fekete
//! search and the diagnostics built on them.

mod diagnostics;
mod fekete;
mod state;

pub use diagnostics::{bm_constant, bm_fit, sigma, tau2, BmFit};
pub(crate) use diagnostics::linear_fit;
pub use fekete::{candidate_pool, fekete_search, FeketeBudget, FeketeResult, EXCHANGE_TOL};
pub use state::{DetState, REFRESH_PERIOD};

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::basis::SectionBasis;
use crate::domain::{Point, WeightedDomain};
use crate::error::{Error, Result};
use crate::io::write_points_csv;
use twofloat::TwoFloat;

use crate::linalg::{condition_1, lu_logdet_dd, lu_logdet_inverse};

/// An ordered configuration `x = (x_1, ..., x_N)` for the degree-`p` space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Configuration {
    points: Vec<Point>,
    p: usize,
}

impl Configuration {
    pub fn new(points: Vec<Point>, p: usize) -> Self {
        Configuration { points, p }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks length, degree, coordinate dimension and membership.
    pub fn validate(&self, basis: &SectionBasis, domain: &WeightedDomain) -> Result<()> {
        basis.check_domain(domain)?;
        if self.points.len() != basis.n_p() {
            return Err(Error::DimensionMismatch {
                expected: basis.n_p(),
                got: self.points.len(),
            });
        }
        if self.p != basis.p() {
            return Err(Error::InvalidArgument(format!(
                "configuration of degree {} used with a degree {} basis",
                self.p,
                basis.p()
            )));
        }
        for x in &self.points {
            if !domain.contains(x)? {
                return Err(Error::OutsideDomain);
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, header: &str, w: W) -> Result<()> {
        write_points_csv(&self.points, header, w)
    }
}

/// Weighted evaluation matrix of a configuration (row `i` is the weighted row at `x_i`).
pub fn evaluation(basis: &SectionBasis, domain: &WeightedDomain, config: &Configuration) -> Result<DMatrix<f64>> {
    config.validate(basis, domain)?;
    Ok(basis.evaluation_matrix(domain, config.points()))
}

/// Estimated relative error of the `f64` determinant above which [`logdet`]
/// recomputes in double-double arithmetic.
pub const REFINE_TOL: f64 = 1e-12;

/// `log |det|` of the weighted evaluation matrix and the sign of the
/// determinant; `(-inf, 0)` for numerically singular configurations.
///
/// Ill-conditioned matrices (clustered points) are re-evaluated with raw rows
/// and LU in double-double arithmetic, the weights entering as exact row
/// scalings in the log domain.
pub fn logdet(basis: &SectionBasis, domain: &WeightedDomain, config: &Configuration) -> Result<(f64, f64)> {
    let e = evaluation(basis, domain, config)?;
    let n = e.nrows();
    let (ld, sign, inv) = lu_logdet_inverse(e.clone(), true);
    let Some(inv) = inv else {
        return Ok((ld, sign));
    };
    if condition_1(&e, &inv) * n as f64 * f64::EPSILON <= REFINE_TOL {
        return Ok((ld, sign));
    }
    Ok(logdet_dd(basis, domain, config))
}

fn logdet_dd(basis: &SectionBasis, domain: &WeightedDomain, config: &Configuration) -> (f64, f64) {
    let n = basis.n_p();
    let mut weights = 0.0;
    let rows = config
        .points()
        .iter()
        .map(|x| {
            weights += domain.log_weight(basis.p(), x);
            let mut raw = vec![TwoFloat::from(0.0); n];
            basis.raw_row_generic(x, &mut raw);
            match basis.transform() {
                Some(t) => (0..n)
                    .map(|i| (0..n).fold(TwoFloat::from(0.0), |acc, j| acc + raw[j] * t[(i, j)]))
                    .collect(),
                None => raw,
            }
        })
        .collect();
    let (ld, sign) = lu_logdet_dd(rows);
    (ld + weights, sign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Realization;
    use crate::domain::{AmbientModel, Weight};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval(phi: Weight) -> WeightedDomain {
        WeightedDomain::cube(1, -1.0, 1.0, phi).unwrap()
    }

    #[test]
    fn vandermonde_with_flat_weight() {
        let d = WeightedDomain::cube(1, 0.0, 2.0, Weight::FlatMetric).unwrap();
        let b = SectionBasis::build(AmbientModel::Euclidean(1), 2).unwrap();
        let c = Configuration::new(vec![vec![0.0], vec![1.0], vec![2.0]], 2);
        let (ld, s) = logdet(&b, &d, &c).unwrap();
        assert!((ld - 2f64.ln()).abs() < 1e-14);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn vandermonde_oracle_with_metric() {
        let d = interval(Weight::Quadratic(0.25));
        let b = SectionBasis::build(AmbientModel::Euclidean(1), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut want = 0.0;
        for i in 0..8 {
            for j in (i + 1)..8 {
                want += (xs[j] - xs[i]).abs().ln();
            }
            want += -3.5 * (1.0 + xs[i] * xs[i]).ln() - 7.0 * 0.25 * xs[i] * xs[i];
        }
        let c = Configuration::new(xs.iter().map(|x| vec![*x]).collect(), 7);
        let (ld, _) = logdet(&b, &d, &c).unwrap();
        assert!((ld - want).abs() < 1e-9, "{ld} {want}");
    }

    #[test]
    fn clustered_points_keep_full_accuracy() {
        let d = interval(Weight::Zero);
        for realization in [Realization::Monomial, Realization::Orthogonal] {
            let b = SectionBasis::build_for(&d, 10, realization).unwrap();
            let mut xs: Vec<f64> = (0..11).map(|k| -0.95 + 0.19 * k as f64).collect();
            xs[5] = xs[4] + 3e-7;
            xs[9] = xs[8] - 1e-6;
            let lead = match realization {
                Realization::Monomial => 0.0,
                Realization::Orthogonal => (1..=10).map(|k| (k - 1) as f64 * 2f64.ln()).sum(),
            };
            let mut want = lead;
            for i in 0..11 {
                for j in (i + 1)..11 {
                    want += (xs[j] - xs[i]).abs().ln();
                }
                want -= 5.0 * (1.0 + xs[i] * xs[i]).ln();
            }
            let c = Configuration::new(xs.iter().map(|x| vec![*x]).collect(), 10);
            let (ld, _) = logdet(&b, &d, &c).unwrap();
            assert!((ld - want).abs() < 1e-11, "{realization:?}: {ld} vs {want}");
        }
    }

    #[test]
    fn repeated_point_is_singular() {
        let d = interval(Weight::Zero);
        let b = SectionBasis::build(AmbientModel::Euclidean(1), 2).unwrap();
        let c = Configuration::new(vec![vec![0.3], vec![-0.5], vec![0.3]], 2);
        assert_eq!(logdet(&b, &d, &c).unwrap(), (f64::NEG_INFINITY, 0.0));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let d = interval(Weight::Zero);
        let b = SectionBasis::build(AmbientModel::Euclidean(1), 2).unwrap();
        let c = Configuration::new(vec![vec![0.3], vec![-0.5]], 2);
        assert!(matches!(logdet(&b, &d, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn realization_changes_logdet_by_a_constant() {
        let setups = [
            WeightedDomain::cube(2, -1.0, 1.0, Weight::Linear(vec![0.3, -0.2])).unwrap(),
            WeightedDomain::full_sphere(1, Weight::Zero).unwrap(),
            WeightedDomain::full_sphere(2, Weight::Quadratic(0.1)).unwrap(),
        ];
        for d in setups {
            let p = 3;
            let a = SectionBasis::build_for(&d, p, Realization::Monomial).unwrap();
            let o = SectionBasis::build_for(&d, p, Realization::Orthogonal).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let diffs: Vec<f64> = (0..50)
                .map(|_| {
                    let c = Configuration::new((0..a.n_p()).map(|_| d.sample_uniform(&mut rng)).collect(), p);
                    logdet(&a, &d, &c).unwrap().0 - logdet(&o, &d, &c).unwrap().0
                })
                .collect();
            let mean = diffs.iter().sum::<f64>() / 50.0;
            let var = diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(var <= 1e-8, "{:?} {var:e}", d.model());
        }
    }

    #[test]
    fn permutation_only_flips_sign() {
        let d = WeightedDomain::full_sphere(1, Weight::Zero).unwrap();
        let b = SectionBasis::build_for(&d, 2, Realization::Orthogonal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Point> = (0..5).map(|_| d.sample_uniform(&mut rng)).collect();
        let (l0, s0) = logdet(&b, &d, &Configuration::new(pts.clone(), 2)).unwrap();
        let mut swapped = pts.clone();
        swapped.swap(0, 3);
        let (l1, s1) = logdet(&b, &d, &Configuration::new(swapped, 2)).unwrap();
        assert!((l0 - l1).abs() < 1e-12);
        assert_eq!(s0, -s1);
    }
}
