use nalgebra::{DMatrix, DVector};

use crate::basis::SectionBasis;
use crate::domain::{Point, WeightedDomain};
use crate::error::{Error, Result};
use crate::linalg::{lu_logdet_inverse, SINGULAR_RTOL};

use super::Configuration;

/// Number of rank-one updates between forced refactorizations.
pub const REFRESH_PERIOD: usize = 64;

/// Below this `|det M' / det M|` the inverse is rebuilt from scratch.
const RATIO_FLOOR: f64 = 1e-6;

/// A configuration together with its evaluation matrix, inverse and
/// log-determinant, supporting O(N^2) single-row replacement.
#[derive(Clone, Debug)]
pub struct DetState {
    points: Vec<Point>,
    p: usize,
    matrix: DMatrix<f64>,
    inverse: Option<DMatrix<f64>>,
    logabsdet: f64,
    sign: f64,
    refresh_counter: usize,
}

impl DetState {
    pub fn new(basis: &SectionBasis, domain: &WeightedDomain, config: &Configuration) -> Result<Self> {
        let m = super::evaluation(basis, domain, config)?;
        let mut s = Self::from_matrix(m);
        s.points = config.points().to_vec();
        s.p = config.p();
        Ok(s)
    }

    /// State over a bare square matrix (no points attached).
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        assert!(matrix.is_square(), "determinant state needs a square matrix");
        let mut s = DetState {
            points: Vec::new(),
            p: 0,
            matrix,
            inverse: None,
            logabsdet: f64::NEG_INFINITY,
            sign: 0.0,
            refresh_counter: 0,
        };
        s.refactor();
        s
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn logabsdet(&self) -> f64 {
        self.logabsdet
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn config(&self) -> Configuration {
        Configuration::new(self.points.clone(), self.p)
    }

    pub(crate) fn inverse(&self) -> Option<&DMatrix<f64>> {
        self.inverse.as_ref()
    }

    /// Recomputes determinant and inverse from the current matrix.
    pub fn refactor(&mut self) {
        let (ld, sign, inv) = lu_logdet_inverse(self.matrix.clone(), true);
        self.logabsdet = ld;
        self.sign = sign;
        self.inverse = if ld.is_finite() { inv } else { None };
        self.refresh_counter = 0;
    }

    /// Signed ratio `det M' / det M` where `M'` has row `i` replaced by `row`.
    /// `None` when the current matrix is singular.
    pub fn row_ratio(&self, i: usize, row: &DVector<f64>) -> Option<f64> {
        self.inverse.as_ref().map(|inv| row.dot(&inv.column(i)))
    }

    /// `log|det M'| - log|det M|` for replacing row `i`, without changing the state.
    pub fn row_delta(&self, i: usize, row: &DVector<f64>) -> f64 {
        match self.row_ratio(i, row) {
            Some(r) if r.abs() < SINGULAR_RTOL => f64::NEG_INFINITY,
            Some(r) => r.abs().ln(),
            None => {
                let mut m = self.matrix.clone();
                m.set_row(i, &row.transpose());
                let (ld, _, _) = lu_logdet_inverse(m, false);
                ld - self.logabsdet
            }
        }
    }

    /// Replaces row `i` and returns the change in `log|det|`.
    pub fn replace_row(&mut self, i: usize, row: &DVector<f64>) -> f64 {
        let before = self.logabsdet;
        let ratio = self.row_ratio(i, row);
        self.matrix.set_row(i, &row.transpose());
        self.refresh_counter += 1;
        match (ratio, self.inverse.take()) {
            (Some(r), Some(inv)) if r.abs() >= RATIO_FLOOR && self.refresh_counter < REFRESH_PERIOD => {
                // Sherman-Morrison with v = row - old row: M'^{-1} = M^{-1} - c (v^T M^{-1}) / r
                // and v^T M^{-1} = row^T M^{-1} - e_i^T because M M^{-1} = I
                let c = inv.column(i).clone_owned();
                let mut vt_inv = row.transpose() * &inv;
                vt_inv[i] -= 1.0;
                self.inverse = Some(inv - (c * vt_inv) / r);
                self.logabsdet += r.abs().ln();
                if r < 0.0 {
                    self.sign = -self.sign;
                }
            }
            _ => self.refactor(),
        }
        self.logabsdet - before
    }

    /// Moves point `i` to `x_new` and returns the change in `log|det|`.
    pub fn update_point(
        &mut self,
        basis: &SectionBasis,
        domain: &WeightedDomain,
        i: usize,
        x_new: Point,
    ) -> Result<f64> {
        if !domain.contains(&x_new)? {
            return Err(Error::OutsideDomain);
        }
        let row = basis.weighted_row_unchecked(domain, &x_new);
        let delta = self.replace_row(i, &row);
        if i < self.points.len() {
            self.points[i] = x_new;
        }
        Ok(delta)
    }

    /// Replaces row `i` with a precomputed row and records the point.
    pub(crate) fn set_point_row(&mut self, i: usize, x_new: Point, row: &DVector<f64>) -> f64 {
        let delta = self.replace_row(i, row);
        self.points[i] = x_new;
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_logdet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_replace_gives_log_two() {
        let mut s = DetState::from_matrix(DMatrix::identity(3, 3));
        let d = s.replace_row(1, &DVector::from_vec(vec![2.0, 0.0, 0.0]));
        assert_eq!(d, f64::NEG_INFINITY);
        let mut s = DetState::from_matrix(DMatrix::identity(3, 3));
        let d = s.replace_row(0, &DVector::from_vec(vec![2.0, 0.0, 0.0]));
        assert!((d - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn copy_of_another_row_is_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(5, 5, |_, _| rng.random::<f64>());
        let mut s = DetState::from_matrix(m.clone());
        let r = m.row(3).transpose();
        assert_eq!(s.row_delta(1, &r), f64::NEG_INFINITY);
        s.replace_row(1, &r);
        assert_eq!(s.logabsdet(), f64::NEG_INFINITY);
        assert_eq!(s.sign(), 0.0);
        // recovers once the row is restored
        let d = s.replace_row(1, &m.row(1).transpose());
        assert_eq!(d, f64::INFINITY);
        assert!((s.logabsdet() - lu_logdet(m).0).abs() < 1e-12);
    }

    fn drift(n: usize, updates: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let mut s = DetState::from_matrix(m);
        let mut cumulative = s.logabsdet();
        let mut worst: f64 = 0.0;
        for _ in 0..updates {
            let i = rng.random_range(0..n);
            let row = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            cumulative += s.replace_row(i, &row);
            let fresh = lu_logdet(s.matrix().clone());
            worst = worst.max((cumulative - fresh.0).abs());
            assert_eq!(s.sign(), fresh.1);
        }
        worst
    }

    #[test]
    fn cumulative_updates_track_fresh_factorization() {
        assert!(drift(10, 200, 3) < 1e-6);
    }

    #[test]
    fn peek_matches_replace() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>());
        let mut s = DetState::from_matrix(m);
        for _ in 0..50 {
            let i = rng.random_range(0..6);
            let row = DVector::from_fn(6, |_, _| rng.random::<f64>());
            let peek = s.row_delta(i, &row);
            let done = s.replace_row(i, &row);
            assert!((peek - done).abs() < 1e-9);
        }
    }
}
