use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::detcore::Configuration;
use crate::domain::REJECTION_BUDGET;
use crate::error::{Error, Result};
use crate::linalg::lu_logdet;

use super::EnsembleSpec;

const LBB_BATCH: usize = 8192;

/// Exact sampler for the `beta = 2` ensemble of an orthonormalized basis.
///
/// Points are drawn one at a time: given orthonormal vectors `e_1..e_k`
/// spanning the rows already chosen, the next point has density
/// `(|Phi(x)|^2 - sum_j (e_j . Phi(x))^2) / (N - k)` with respect to `mu`,
/// sampled by rejection from `mu` against a bound taken from a grid.
#[derive(Clone, Debug)]
pub struct DppSampler {
    spec: EnsembleSpec,
    grid_rows: DMatrix<f64>,
}

impl DppSampler {
    /// `grid_res` points per direction are used to bound the conditional densities.
    pub fn new(spec: &EnsembleSpec, grid_res: usize) -> Result<Self> {
        if spec.beta() != 2.0 {
            return Err(Error::InvalidArgument(format!(
                "projection sampling needs beta = 2, got {}",
                spec.beta()
            )));
        }
        if !spec.basis().is_orthonormal() {
            return Err(Error::InvalidArgument("projection sampling needs an orthonormalized basis".into()));
        }
        let grid = spec.domain().grid(grid_res);
        let grid_rows = spec.basis().evaluation_matrix(spec.domain(), &grid);
        Ok(DppSampler {
            spec: spec.clone(),
            grid_rows,
        })
    }

    /// Default grid: 512 points on one-dimensional sets, 48 per direction otherwise.
    pub fn with_default_grid(spec: &EnsembleSpec) -> Result<Self> {
        let res = if spec.domain().model().manifold_dim() == 1 { 512 } else { 48 };
        Self::new(spec, res)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Configuration> {
        let n = self.spec.n_p();
        let domain = self.spec.domain();
        let basis = self.spec.basis();
        let mut resid: Vec<f64> = self.grid_rows.row_iter().map(|r| r.norm_squared()).collect();
        let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n);
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let mut bound = 1.1 * resid.iter().cloned().fold(0.0, f64::max);
            let mut accepted = None;
            for _ in 0..REJECTION_BUDGET {
                let y = self.spec.measure().sample(rng)?;
                let phi = basis.weighted_row_unchecked(domain, &y);
                let mut v = phi.clone();
                for e in &frame {
                    let c = e.dot(&v);
                    v.axpy(-c, e, 1.0);
                }
                let c = v.norm_squared();
                if c > bound {
                    bound = 1.1 * c;
                    continue;
                }
                if rng.random::<f64>() * bound < c {
                    accepted = Some((y, v, c));
                    break;
                }
            }
            let (y, v, c) = accepted.ok_or(Error::RejectionBudget(REJECTION_BUDGET))?;
            let e = v / c.sqrt();
            let proj = &self.grid_rows * &e;
            for (r, s) in resid.iter_mut().zip(proj.iter()) {
                *r = (*r - s * s).max(0.0);
            }
            frame.push(e);
            points.push(y);
        }
        Ok(Configuration::new(points, self.spec.p()))
    }
}

/// One exact draw from the `beta = 2` ensemble.
pub fn dpp_sample<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> Result<Configuration> {
    DppSampler::with_default_grid(spec)?.sample(rng)
}

/// Monte-Carlo estimate of `int |det E|^2 d mu^{(x) N}` (which equals `N_p!`
/// for an orthonormal basis) and its standard error. Batches use independent
/// streams derived from one draw of `rng`, so the result does not depend on
/// the thread count.
pub fn lbb_check<R: Rng + ?Sized>(spec: &EnsembleSpec, samples: usize, rng: &mut R) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::InsufficientData("lbb_check needs at least 2 samples".into()));
    }
    let seed: u64 = rng.random();
    let n = spec.n_p();
    let batches = samples.div_ceil(LBB_BATCH);
    let logs: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(b as u64);
            let count = LBB_BATCH.min(samples - b * LBB_BATCH);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let pts = (0..n).map(|_| spec.measure().sample(&mut r)).collect::<Result<Vec<_>>>()?;
                let e = spec.basis().evaluation_matrix(spec.domain(), &pts);
                out.push(2.0 * lu_logdet(e).0);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let all: Vec<f64> = logs.into_iter().flatten().collect();
    let m = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok((0.0, 0.0));
    }
    let k = all.len() as f64;
    let s1: f64 = all.iter().map(|v| (v - m).exp()).sum::<f64>() / k;
    let s2: f64 = all.iter().map(|v| (2.0 * (v - m)).exp()).sum::<f64>() / k;
    let var = (s2 - s1 * s1).max(0.0) * k / (k - 1.0);
    Ok((m.exp() * s1, m.exp() * (var / k).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{gram, orthonormalize, SectionBasis};
    use crate::domain::{BaseMeasure, WeightedDomain, Weight};
    use crate::quadrature::QuadratureSpec;
    use crate::sampler::tests::circle_spec;
    use std::sync::Arc;

    fn spec_for(domain: WeightedDomain, p: usize) -> EnsembleSpec {
        let d = Arc::new(domain);
        let mu = Arc::new(BaseMeasure::uniform(d.clone()));
        let b = SectionBasis::build_for(&d, p, Default::default()).unwrap();
        let on = orthonormalize(&b, &gram(&b, &d, &mu, &QuadratureSpec::default()).unwrap()).unwrap();
        EnsembleSpec::new(2.0, mu, Arc::new(on)).unwrap()
    }

    /// Three-sigma multinomial check of 16-bin counts against expected probabilities.
    pub(crate) fn within_bands(counts: &[usize], probs: &[f64]) -> bool {
        let total: usize = counts.iter().sum();
        counts.iter().zip(probs).all(|(c, q)| {
            let mean = total as f64 * q;
            let sd = (total as f64 * q * (1.0 - q)).sqrt();
            (*c as f64 - mean).abs() <= 3.0 * sd
        })
    }

    #[test]
    fn single_section_matches_bergman_density() {
        // p = 0 on the interval: N = 1, density rho_0 = 1 times the weight, here uniform
        let spec = spec_for(WeightedDomain::cube(1, -1.0, 1.0, Weight::Quadratic(1.0)).unwrap(), 0);
        let s = DppSampler::with_default_grid(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = vec![0usize; 16];
        for _ in 0..4000 {
            let x = s.sample(&mut rng).unwrap().points()[0][0];
            counts[(((x + 1.0) / 2.0 * 16.0) as usize).min(15)] += 1;
        }
        // p = 0 weights are trivial, so the law is uniform
        assert!(within_bands(&counts, &[1.0 / 16.0; 16]));

        let spec = spec_for(WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap(), 1);
        let basis = spec.basis().clone();
        let d = spec.domain().clone();
        let probs: Vec<f64> = (0..16)
            .map(|k| {
                let (a, b) = (-1.0 + k as f64 / 8.0, -1.0 + (k + 1) as f64 / 8.0);
                let (nodes, w) = crate::quadrature::gauss_legendre_on(a, b, 16);
                let mass: f64 = nodes
                    .iter()
                    .zip(&w)
                    .map(|(x, w)| w * basis.weighted_row(&d, &[*x]).unwrap().norm_squared())
                    .sum();
                mass * (b - a) / 2.0 / 2.0
            })
            .collect();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let s = DppSampler::with_default_grid(&spec).unwrap();
        let mut counts = vec![0usize; 16];
        for _ in 0..3000 {
            for x in s.sample(&mut rng).unwrap().points() {
                counts[(((x[0] + 1.0) / 2.0 * 16.0) as usize).min(15)] += 1;
            }
        }
        assert!(within_bands(&counts, &probs), "{counts:?}");
    }

    #[test]
    fn circle_intensity_is_uniform_and_points_distinct() {
        let spec = circle_spec(2, 2.0);
        let s = DppSampler::with_default_grid(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0usize; 16];
        let mut slot0 = vec![0usize; 16];
        let mut slot4 = vec![0usize; 16];
        let bin = |x: &[f64]| ((spec.domain().chart1d(x).unwrap() / (2.0 * std::f64::consts::PI) * 16.0) as usize).min(15);
        for _ in 0..10_000 {
            let c = s.sample(&mut rng).unwrap();
            let pts = c.points();
            for (k, x) in pts.iter().enumerate() {
                counts[bin(x)] += 1;
                for y in &pts[k + 1..] {
                    assert!(spec.domain().distance(x, y) > 0.0);
                }
            }
            slot0[bin(&pts[0])] += 1;
            slot4[bin(&pts[4])] += 1;
        }
        assert!(within_bands(&counts, &[1.0 / 16.0; 16]));
        assert!(within_bands(&slot0, &[1.0 / 16.0; 16]));
        assert!(within_bands(&slot4, &[1.0 / 16.0; 16]));
    }

    #[test]
    fn refuses_wrong_beta_or_raw_basis() {
        let spec = circle_spec(2, 1.0);
        assert!(DppSampler::with_default_grid(&spec).is_err());
        let raw = EnsembleSpec::new(
            2.0,
            spec.measure().clone(),
            Arc::new(spec.basis().raw_basis()),
        )
        .unwrap();
        assert!(DppSampler::with_default_grid(&raw).is_err());
    }

    #[test]
    fn lbb_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let one = spec_for(WeightedDomain::full_sphere(1, Weight::Zero).unwrap(), 0);
        let (e, se) = lbb_check(&one, 1000, &mut rng).unwrap();
        assert!((e - 1.0).abs() < 1e-12 && se < 1e-12);
        let spec = spec_for(WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap(), 1);
        let (e, se) = lbb_check(&spec, 200_000, &mut rng).unwrap();
        assert!((e - 2.0).abs() < 0.05 * 2.0 && (e - 2.0).abs() < 4.0 * se, "{e} {se}");
    }
}
