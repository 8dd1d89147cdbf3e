//! Distances between empirical and reference measures, equilibrium
//! references, and the fits of distance decay and tail rates in `p`.

mod dictionary;
mod equilibrium;
mod ldp;
mod wasserstein;

pub use dictionary::{dist_gamma, DictionarySpec, TestDictionary};
pub use equilibrium::{equilibrium_ref, EquilibriumRef};
pub use ldp::{fit_tail_exponent, ldp_fit, write_ldp_csv, LdpFit, LdpRow, ThresholdRule};
pub use wasserstein::{w1_is_exact, wasserstein1, W1Target, SINKHORN_EPSILON};

use crate::detcore::Configuration;
use crate::domain::{BaseMeasure, Point};
use crate::error::{Error, Result};

/// A probability measure that integrates vector-valued functions.
pub trait Integrable {
    /// `int f dmu` componentwise, where `f(x, out)` fills `out` of length `len`.
    fn integrate_vec(&self, len: usize, f: &mut dyn FnMut(&[f64], &mut [f64])) -> Vec<f64>;
}

/// `mu^x = (1/N) sum_k delta_{x_k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Point>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empirical measure of no points".into()));
        }
        Ok(EmpiricalMeasure { points })
    }

    pub fn from_config(config: &Configuration) -> Result<Self> {
        Self::new(config.points().to_vec())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.points.len() as f64
    }
}

impl Integrable for EmpiricalMeasure {
    fn integrate_vec(&self, len: usize, f: &mut dyn FnMut(&[f64], &mut [f64])) -> Vec<f64> {
        let mut acc = vec![0.0; len];
        let mut buf = vec![0.0; len];
        for x in &self.points {
            f(x, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b;
            }
        }
        let w = self.weight();
        acc.iter_mut().for_each(|a| *a *= w);
        acc
    }
}

impl Integrable for BaseMeasure {
    fn integrate_vec(&self, len: usize, f: &mut dyn FnMut(&[f64], &mut [f64])) -> Vec<f64> {
        let rule = self.rule(80, 24);
        weighted_sum(&rule.nodes, &rule.weights, len, f)
    }
}

pub(crate) fn weighted_sum(
    nodes: &[Point],
    weights: &[f64],
    len: usize,
    f: &mut dyn FnMut(&[f64], &mut [f64]),
) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    let mut buf = vec![0.0; len];
    for (x, w) in nodes.iter().zip(weights) {
        f(x, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += w * b;
        }
    }
    acc
}

/// Sample quantile with linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
