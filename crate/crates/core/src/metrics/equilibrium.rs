use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::{Realization, SectionBasis};
use crate::detcore::{candidate_pool, fekete_search, FeketeBudget};
use crate::domain::{AmbientModel, BaseMeasure, Point, WeightedDomain};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;

use super::wasserstein::Cdf;
use super::{weighted_sum, Integrable};

/// Seed of the random part of the candidate pool used for Fekete references.
const REFERENCE_SEED: u64 = 0xeb_0001;

/// A reference for the equilibrium measure `mu_eq(K, phi)`.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquilibriumRef {
    /// Normalized Haar measure of a full sphere.
    ClosedForm {
        #[serde(skip)]
        domain: Arc<WeightedDomain>,
        /// Density with respect to arc length or area.
        density: f64,
    },
    /// Empirical measure of a Fekete configuration of degree `p_ref`; on
    /// one-dimensional sets it is binned into a piecewise-constant density.
    FeketeHistogram {
        #[serde(skip)]
        domain: Arc<WeightedDomain>,
        p_ref: usize,
        bins: usize,
        edges: Vec<f64>,
        masses: Vec<f64>,
        points: Vec<Point>,
    },
}

/// Haar measure for full spheres with constant `phi`; otherwise the binned
/// Fekete measure at degree `p_ref`.
pub fn equilibrium_ref(domain: Arc<WeightedDomain>, p_ref: usize) -> Result<EquilibriumRef> {
    if domain.is_full_sphere() && domain.phi().constant_value().is_some() {
        let density = match domain.model() {
            AmbientModel::Sphere(1) => 1.0 / (2.0 * PI),
            AmbientModel::Sphere(2) => 1.0 / (4.0 * PI),
            m => return Err(Error::Unsupported(format!("closed-form equilibrium on {m}"))),
        };
        return Ok(EquilibriumRef::ClosedForm { domain, density });
    }
    if p_ref == 0 {
        return Err(Error::InvalidArgument("reference degree must be positive".into()));
    }
    let basis = SectionBasis::build_for(&domain, p_ref, Realization::Orthogonal)?;
    let n = basis.n_p();
    let mu = BaseMeasure::uniform(domain.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(REFERENCE_SEED);
    let res = match domain.model().manifold_dim() {
        1 => (8 * n).max(256),
        2 => ((4 * n) as f64).sqrt().ceil() as usize + 16,
        _ => 16,
    };
    let pool = candidate_pool(&domain, &mu, n, res, &mut rng)?;
    let found = fekete_search(&basis, &domain, &pool, &FeketeBudget::default())?;
    let points = found.config.into_points();
    let bins = ((n as f64).sqrt().round() as usize).max(4);
    let (edges, masses) = match domain.chart1d_range() {
        Some((lo, hi, _)) => {
            let edges: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
            let mut masses = vec![0.0; bins];
            for x in &points {
                let t = domain.chart1d(x).expect("one-dimensional set");
                let k = (((t - lo) / (hi - lo)) * bins as f64).floor() as usize;
                masses[k.min(bins - 1)] += 1.0 / n as f64;
            }
            (edges, masses)
        }
        None => (vec![], vec![]),
    };
    Ok(EquilibriumRef::FeketeHistogram {
        domain,
        p_ref,
        bins: if edges.is_empty() { 0 } else { bins },
        edges,
        masses,
        points,
    })
}

impl EquilibriumRef {
    pub fn label(&self) -> String {
        match self {
            EquilibriumRef::ClosedForm { .. } => "haar".into(),
            EquilibriumRef::FeketeHistogram { p_ref, bins, .. } => format!("fekete_histogram(p_ref={p_ref},bins={bins})"),
        }
    }

    /// Constant density of a closed-form reference.
    pub fn density(&self) -> Option<f64> {
        match self {
            EquilibriumRef::ClosedForm { density, .. } => Some(*density),
            _ => None,
        }
    }

    pub(crate) fn cdf(&self, domain: &WeightedDomain) -> Result<Cdf> {
        match self {
            EquilibriumRef::ClosedForm { .. } => {
                let (lo, hi, _) = domain
                    .chart1d_range()
                    .ok_or_else(|| Error::Unsupported("exact transport needs a one-dimensional set".into()))?;
                Ok(Cdf {
                    atoms: vec![],
                    pieces: vec![(lo, hi, 1.0)],
                })
            }
            EquilibriumRef::FeketeHistogram { edges, masses, .. } => {
                if edges.is_empty() {
                    return Err(Error::Unsupported("exact transport needs a one-dimensional set".into()));
                }
                Ok(Cdf {
                    atoms: vec![],
                    pieces: edges.windows(2).zip(masses).map(|(w, m)| (w[0], w[1], *m)).collect(),
                })
            }
        }
    }

    /// Weighted atoms approximating the reference (for approximate transport).
    pub(crate) fn atoms(&self) -> (Vec<Point>, Vec<f64>) {
        match self {
            EquilibriumRef::ClosedForm { domain, .. } => {
                let rule = domain.product_rule(16, 0);
                (rule.nodes, rule.weights)
            }
            EquilibriumRef::FeketeHistogram { points, .. } => {
                let w = 1.0 / points.len() as f64;
                (points.clone(), vec![w; points.len()])
            }
        }
    }
}

impl Integrable for EquilibriumRef {
    fn integrate_vec(&self, len: usize, f: &mut dyn FnMut(&[f64], &mut [f64])) -> Vec<f64> {
        match self {
            EquilibriumRef::ClosedForm { domain, .. } => {
                let rule = domain.product_rule(80, 24);
                weighted_sum(&rule.nodes, &rule.weights, len, f)
            }
            EquilibriumRef::FeketeHistogram { domain, edges, masses, points, .. } => {
                if edges.is_empty() {
                    let w = vec![1.0 / points.len() as f64; points.len()];
                    return weighted_sum(points, &w, len, f);
                }
                let mut nodes = Vec::new();
                let mut weights = Vec::new();
                for (w, m) in edges.windows(2).zip(masses) {
                    let (t, q) = gauss_legendre_on(w[0], w[1], 16);
                    for (ti, qi) in t.iter().zip(&q) {
                        nodes.push(domain.from_chart1d(*ti).expect("one-dimensional set"));
                        weights.push(qi * m);
                    }
                }
                weighted_sum(&nodes, &weights, len, f)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Weight;

    #[test]
    fn full_spheres_are_haar() {
        let c = equilibrium_ref(Arc::new(WeightedDomain::full_sphere(1, Weight::Zero).unwrap()), 8).unwrap();
        assert!((c.density().unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let s = equilibrium_ref(Arc::new(WeightedDomain::full_sphere(2, Weight::Constant(0.4)).unwrap()), 8).unwrap();
        assert!((s.density().unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let mass = s.integrate_vec(1, &mut |_, o| o[0] = 1.0);
        assert!((mass[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interval_histogram_is_symmetric_and_edge_heavy() {
        let d = Arc::new(WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap());
        let r = equilibrium_ref(d, 32).unwrap();
        let EquilibriumRef::FeketeHistogram { masses, bins, .. } = &r else {
            panic!("expected a histogram")
        };
        assert_eq!(*bins, 6);
        assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..bins / 2 {
            assert!((masses[k] - masses[bins - 1 - k]).abs() <= 1.0 / 33.0 + 1e-12);
        }
        assert!(masses[0] > masses[bins / 2]);
        let mass = r.integrate_vec(1, &mut |_, o| o[0] = 1.0);
        assert!((mass[0] - 1.0).abs() < 1e-12);
    }
}
