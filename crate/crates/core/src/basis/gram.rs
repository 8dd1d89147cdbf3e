//! Gram matrices of the weighted L^2 norm `int |s|^2_{p phi} d mu`, Cholesky
//! orthonormalization, Bergman functions and L_p differences.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::SectionBasis;
use crate::domain::{BaseMeasure, Point, WeightedDomain};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::{lower_triangular_inverse, symmetric_eigenvalues};
use crate::quadrature::QuadratureSpec;

/// Grams with a larger eigenvalue ratio are refused.
pub const CONDITION_LIMIT: f64 = 1e12;

const MC_BATCH: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GramProvenance {
    /// Measure and weighted domain the norm is taken against.
    pub measure: String,
    pub p: usize,
    /// Basis realization (and transform tag) the entries refer to.
    pub basis: String,
    pub quadrature: String,
}

#[derive(Clone, Debug)]
pub struct GramMatrix {
    g: DMatrix<f64>,
    provenance: GramProvenance,
    condition: f64,
}

impl GramMatrix {
    /// Validates symmetry and positive definiteness of `g`.
    pub fn from_matrix(g: DMatrix<f64>, provenance: GramProvenance) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::InvalidArgument("Gram matrix must be square".into()));
        }
        let scale = g.amax();
        let asym = (&g - g.transpose()).amax();
        if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!("Gram matrix asymmetric by {asym:e}")));
        }
        let g = (&g + g.transpose()) * 0.5;
        let ev = symmetric_eigenvalues(&g);
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::SingularGram(condition));
        }
        if g.clone().cholesky().is_none() {
            return Err(Error::Cholesky);
        }
        Ok(GramMatrix { g, provenance, condition })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn provenance(&self) -> &GramProvenance {
        &self.provenance
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// Ratio of extreme eigenvalues.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `log det G` from the Cholesky factor.
    pub fn log_det(&self) -> f64 {
        let l = self.g.clone().cholesky().expect("validated at construction").unpack();
        2.0 * (0..l.nrows()).map(|k| l[(k, k)].ln()).sum::<f64>()
    }

    /// `c G` with the same provenance.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_matrix(&self.g * c, self.provenance.clone())
    }
}

/// Gram matrix of `basis` (including its transform, if any) for the norm
/// `||s||^2 = int |s|^2_{p phi} d mu`.
pub fn gram(
    basis: &SectionBasis,
    domain: &WeightedDomain,
    measure: &BaseMeasure,
    quadrature: &QuadratureSpec,
) -> Result<GramMatrix> {
    basis.check_domain(domain)?;
    if measure.domain().model() != domain.model() {
        return Err(Error::InvalidArgument("measure and domain live in different models".into()));
    }
    let n = basis.n_p();
    let g = match quadrature {
        QuadratureSpec::Product { extra_nodes } => {
            let rule = measure.rule(2 * basis.p(), *extra_nodes);
            weighted_outer(basis, domain, &rule.nodes, &rule.weights)
        }
        QuadratureSpec::MonteCarlo { samples, seed } => {
            if *samples == 0 {
                return Err(Error::InvalidArgument("Monte-Carlo Gram needs samples > 0".into()));
            }
            let batches = samples.div_ceil(MC_BATCH);
            let parts: Vec<Result<DMatrix<f64>>> = (0..batches)
                .into_par_iter()
                .map(|b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    rng.set_stream(b as u64 + 1);
                    let count = MC_BATCH.min(samples - b * MC_BATCH);
                    let pts = (0..count)
                        .map(|_| measure.sample(&mut rng))
                        .collect::<Result<Vec<Point>>>()?;
                    let w = vec![1.0 / *samples as f64; count];
                    Ok(weighted_outer(basis, domain, &pts, &w))
                })
                .collect();
            let mut g = DMatrix::zeros(n, n);
            for part in parts {
                g += part?;
            }
            g
        }
    };
    GramMatrix::from_matrix(
        g,
        GramProvenance {
            measure: measure_tag(measure, domain),
            p: basis.p(),
            basis: basis.label(),
            quadrature: quadrature.label(),
        },
    )
}

fn measure_tag(measure: &BaseMeasure, domain: &WeightedDomain) -> String {
    format!("{}|phi={}", measure.density().label(), domain.label())
}

fn weighted_outer(basis: &SectionBasis, domain: &WeightedDomain, nodes: &[Point], weights: &[f64]) -> DMatrix<f64> {
    let mut e = basis.evaluation_matrix(domain, nodes);
    for (i, w) in weights.iter().enumerate() {
        let s = w.max(0.0).sqrt();
        e.row_mut(i).scale_mut(s);
    }
    e.transpose() * e
}

/// Returns a basis orthonormal for the norm `gram` was computed with: the new
/// transform is `L^{-1} T` where `G = L L^T` and `T` is the previous transform.
pub fn orthonormalize(basis: &SectionBasis, gram: &GramMatrix) -> Result<SectionBasis> {
    let prov = gram.provenance();
    if prov.p != basis.p() || prov.basis != basis.label() || gram.n() != basis.n_p() {
        return Err(Error::Provenance(format!(
            "Gram computed for '{}', basis is '{}'",
            prov.basis,
            basis.label()
        )));
    }
    let l = gram.matrix().clone().cholesky().ok_or(Error::Cholesky)?.unpack();
    let linv = lower_triangular_inverse(&l).ok_or(Error::Cholesky)?;
    let t = match basis.transform() {
        Some(t0) => &linv * t0,
        None => linv,
    };
    Ok(basis.with_transform(t, prov.measure.clone()))
}

/// `rho_p(mu, phi)(x) = sum_j |s_j(x)|^2_{p phi}` for an orthonormal basis.
pub fn bergman_function(basis: &SectionBasis, domain: &WeightedDomain, x: &[f64]) -> Result<f64> {
    if !basis.is_orthonormal() {
        return Err(Error::InvalidArgument("Bergman function needs an orthonormalized basis".into()));
    }
    Ok(basis.weighted_row(domain, x)?.norm_squared())
}

/// `L_p(mu1, phi1) - L_p(mu2, phi2) = (log det G2 - log det G1) / (4 p N_p)`.
///
/// The unit ball of a Gram norm has volume `c det(G)^{-1/2}`; the reference
/// constant cancels in the difference.
pub fn lp_difference(basis: &SectionBasis, gram_1: &GramMatrix, gram_2: &GramMatrix) -> Result<f64> {
    let (a, b) = (gram_1.provenance(), gram_2.provenance());
    if a.p != b.p || a.p != basis.p() {
        return Err(Error::Provenance(format!("degrees {} and {} (basis p = {})", a.p, b.p, basis.p())));
    }
    if a.basis != b.basis || gram_1.n() != gram_2.n() {
        return Err(Error::Provenance(format!("Grams over different bases: '{}' vs '{}'", a.basis, b.basis)));
    }
    if basis.p() == 0 {
        return Err(Error::InvalidArgument("L_p is undefined for p = 0".into()));
    }
    let scale = 4.0 * basis.p() as f64 * basis.n_p() as f64;
    Ok((gram_2.log_det() - gram_1.log_det()) / scale)
}

/// Writes the Gram matrix row-major with 17 significant digits.
pub fn write_gram_csv<W: Write>(gram: &GramMatrix, mut w: W) -> Result<()> {
    let p = gram.provenance();
    writeln!(w, "# basis={} measure={} quadrature={}", p.basis, p.measure, p.quadrature)?;
    for i in 0..gram.n() {
        let row: Vec<String> = (0..gram.n()).map(|j| fmt_f64(gram.matrix()[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Norm ratios of a random section with unit `L^2(mu, p phi)` norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormRatios {
    pub l4_over_l2: f64,
    pub linf_over_l2: f64,
}

/// `L^4 / L^2` and `L^inf / L^2` ratios of `count` random sections of an
/// orthonormal basis, with `L^inf` taken over `grid` and the quadrature nodes.
pub fn section_norm_ratios<R: Rng + ?Sized>(
    basis: &SectionBasis,
    domain: &WeightedDomain,
    measure: &BaseMeasure,
    grid: &[Point],
    count: usize,
    rng: &mut R,
) -> Result<Vec<NormRatios>> {
    if !basis.is_orthonormal() {
        return Err(Error::InvalidArgument("norm ratios need an orthonormalized basis".into()));
    }
    let rule = measure.rule(4 * basis.p(), 8);
    let eq = basis.evaluation_matrix(domain, &rule.nodes);
    let eg = basis.evaluation_matrix(domain, grid);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let c = DVector::from_fn(basis.n_p(), |_, _| rng.random::<f64>() - 0.5);
        let c = &c / c.norm();
        let vq = &eq * &c;
        let vg = &eg * &c;
        let l2 = vq.iter().zip(&rule.weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
        let l4 = vq.iter().zip(&rule.weights).map(|(v, w)| w * v.powi(4)).sum::<f64>().powf(0.25);
        let linf = vq.iter().chain(vg.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        out.push(NormRatios {
            l4_over_l2: l4 / l2,
            linf_over_l2: linf / l2,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Realization;
    use crate::domain::{AmbientModel, Weight};
    use std::sync::Arc;

    fn circle(phi: Weight) -> Arc<WeightedDomain> {
        Arc::new(WeightedDomain::full_sphere(1, phi).unwrap())
    }

    fn exact() -> QuadratureSpec {
        QuadratureSpec::Product { extra_nodes: 24 }
    }

    #[test]
    fn circle_fourier_gram_has_half_pattern() {
        let d = circle(Weight::Zero);
        let mu = BaseMeasure::uniform(d.clone());
        let b = SectionBasis::build_for(&d, 3, Realization::Orthogonal).unwrap();
        let g = gram(&b, &d, &mu, &exact()).unwrap();
        for i in 0..b.n_p() {
            for j in 0..b.n_p() {
                let want = if i != j { 0.0 } else if i == 0 { 1.0 } else { 0.5 };
                assert!((g.matrix()[(i, j)] - want).abs() < 1e-14, "{i} {j}");
            }
        }
    }

    #[test]
    fn interval_metric_weighted_entry_is_arctan_integral() {
        let d = Arc::new(WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap());
        let mu = BaseMeasure::uniform(d.clone());
        let b = SectionBasis::build(AmbientModel::Euclidean(1), 1).unwrap();
        let g = gram(&b, &d, &mu, &exact()).unwrap();
        assert!((g.matrix()[(0, 0)] - std::f64::consts::FRAC_PI_4).abs() < 1e-13);
        // int x^2/(1+x^2) dx/2 = 1 - pi/4
        assert!((g.matrix()[(1, 1)] - (1.0 - std::f64::consts::FRAC_PI_4)).abs() < 1e-13);
    }

    #[test]
    fn orthonormalized_gram_is_identity() {
        let cases: Vec<(Arc<WeightedDomain>, usize)> = vec![
            (Arc::new(WeightedDomain::cube(1, -1.0, 2.0, Weight::Quadratic(0.1)).unwrap()), 6),
            (Arc::new(WeightedDomain::cube(2, -1.0, 1.0, Weight::Zero).unwrap()), 4),
            (circle(Weight::Linear(vec![0.2, -0.1])), 5),
            (Arc::new(WeightedDomain::full_sphere(2, Weight::Zero).unwrap()), 3),
        ];
        for (d, p) in cases {
            let mu = BaseMeasure::uniform(d.clone());
            for real in [Realization::Monomial, Realization::Orthogonal] {
                let b = SectionBasis::build_for(&d, p, real).unwrap();
                let g = gram(&b, &d, &mu, &exact()).unwrap();
                let on = orthonormalize(&b, &g).unwrap();
                let g2 = gram(&on, &d, &mu, &exact()).unwrap();
                let id = DMatrix::<f64>::identity(b.n_p(), b.n_p());
                let err = (g2.matrix() - id).amax();
                assert!(err < 1e-10, "{:?} {real:?} {err:e}", d.model());
            }
        }
    }

    #[test]
    fn orthonormalize_examples() {
        let prov = GramProvenance {
            measure: "m".into(),
            p: 1,
            basis: SectionBasis::build(AmbientModel::Euclidean(1), 1).unwrap().label(),
            quadrature: "q".into(),
        };
        let b = SectionBasis::build(AmbientModel::Euclidean(1), 1).unwrap();
        let id = GramMatrix::from_matrix(DMatrix::identity(2, 2), prov.clone()).unwrap();
        let t = orthonormalize(&b, &id).unwrap();
        assert_eq!(t.transform().unwrap(), &DMatrix::<f64>::identity(2, 2));
        let g = GramMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])), prov).unwrap();
        let t = orthonormalize(&b, &g).unwrap();
        let tr = t.transform().unwrap();
        assert!((tr[(0, 0)] - 0.5).abs() < 1e-15 && (tr[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_transform_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>() - 0.5);
        let g = &a * a.transpose() + DMatrix::identity(6, 6) * 0.1;
        let b = SectionBasis::build(AmbientModel::Euclidean(5), 1).unwrap();
        let prov = GramProvenance {
            measure: "m".into(),
            p: 1,
            basis: b.label(),
            quadrature: "q".into(),
        };
        let gm = GramMatrix::from_matrix(g.clone(), prov).unwrap();
        let t = orthonormalize(&b, &gm).unwrap();
        let tr = t.transform().unwrap();
        let check = tr * &g * tr.transpose();
        assert!((check - DMatrix::<f64>::identity(6, 6)).amax() < 1e-10);
        for i in 0..6 {
            for j in (i + 1)..6 {
                assert_eq!(tr[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn singular_gram_is_refused() {
        let b = SectionBasis::build(AmbientModel::Euclidean(1), 1).unwrap();
        let prov = GramProvenance {
            measure: "m".into(),
            p: 1,
            basis: b.label(),
            quadrature: "q".into(),
        };
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(GramMatrix::from_matrix(g, prov), Err(Error::SingularGram(_))));
    }

    #[test]
    fn bergman_on_circle_is_constant() {
        let d = circle(Weight::Zero);
        let mu = BaseMeasure::uniform(d.clone());
        for real in [Realization::Monomial, Realization::Orthogonal] {
            let b = SectionBasis::build_for(&d, 4, real).unwrap();
            let on = orthonormalize(&b, &gram(&b, &d, &mu, &exact()).unwrap()).unwrap();
            for x in d.grid(37) {
                let rho = bergman_function(&on, &d, &x).unwrap();
                assert!((rho - 9.0).abs() < 1e-8, "{rho}");
            }
        }
    }

    #[test]
    fn bergman_integrates_to_dimension_and_peaks_at_edge() {
        let d = Arc::new(WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap());
        let mu = BaseMeasure::uniform(d.clone());
        let b = SectionBasis::build_for(&d, 4, Realization::Orthogonal).unwrap();
        let on = orthonormalize(&b, &gram(&b, &d, &mu, &exact()).unwrap()).unwrap();
        let rule = mu.rule(8, 40);
        let total = rule.integrate(|x| bergman_function(&on, &d, x).unwrap());
        assert!((total - 5.0).abs() < 1e-6 * 5.0);
        let vals: Vec<f64> = d.grid(201).iter().map(|x| bergman_function(&on, &d, x).unwrap()).collect();
        let max = vals.iter().cloned().fold(0.0, f64::max);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(max > mean);
        assert!((vals[0] - max).abs() < 1e-12 || (vals[200] - max).abs() < 1e-12);
        assert!(bergman_function(&b, &d, &[0.0]).is_err());
    }

    #[test]
    fn lp_difference_examples() {
        let d = circle(Weight::Zero);
        let mu = BaseMeasure::uniform(d.clone());
        let b = SectionBasis::build_for(&d, 2, Realization::Orthogonal).unwrap();
        let g = gram(&b, &d, &mu, &exact()).unwrap();
        assert_eq!(lp_difference(&b, &g, &g).unwrap(), 0.0);
        let g4 = g.scaled(4.0).unwrap();
        let v = lp_difference(&b, &g4, &g).unwrap();
        assert!((v + 4f64.ln() / 8.0).abs() < 1e-14);

        // constant weight t multiplies the Gram by exp(-2 p t)
        let t = 0.37;
        let dt = circle(Weight::Constant(t));
        let gt = gram(&b, &dt, &BaseMeasure::uniform(dt.clone()), &exact()).unwrap();
        let direct = g.scaled((-2.0 * 2.0 * t).exp()).unwrap();
        assert!((gt.matrix() - direct.matrix()).amax() < 1e-14);
        // L_p(Haar, 0) - L_p(Haar, t) = (log det G_t - log det G_0) / (4 p N) = -t / 2
        let diff = lp_difference(&b, &g, &gt).unwrap();
        assert!((diff + 0.5 * t).abs() < 1e-12, "{diff}");
        assert!((diff - lp_difference(&b, &g, &direct).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn lp_difference_rejects_mismatched_degree() {
        let d = circle(Weight::Zero);
        let mu = BaseMeasure::uniform(d.clone());
        let b2 = SectionBasis::build_for(&d, 2, Realization::Orthogonal).unwrap();
        let b3 = SectionBasis::build_for(&d, 3, Realization::Orthogonal).unwrap();
        let g2 = gram(&b2, &d, &mu, &exact()).unwrap();
        let g3 = gram(&b3, &d, &mu, &exact()).unwrap();
        assert!(matches!(lp_difference(&b2, &g2, &g3), Err(Error::Provenance(_))));
    }

    #[test]
    fn monte_carlo_gram_is_scheduler_independent_and_close() {
        let d = Arc::new(WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap());
        let mu = BaseMeasure::uniform(d.clone());
        let b = SectionBasis::build_for(&d, 2, Realization::Orthogonal).unwrap();
        let q = QuadratureSpec::MonteCarlo { samples: 20_000, seed: 3 };
        let g1 = gram(&b, &d, &mu, &q).unwrap();
        let g2 = gram(&b, &d, &mu, &q).unwrap();
        assert_eq!(g1.matrix(), g2.matrix());
        let ge = gram(&b, &d, &mu, &exact()).unwrap();
        assert!((g1.matrix() - ge.matrix()).amax() < 0.03);
    }

    #[test]
    fn gram_csv_has_seventeen_digits() {
        let d = circle(Weight::Zero);
        let mu = BaseMeasure::uniform(d.clone());
        let b = SectionBasis::build_for(&d, 1, Realization::Orthogonal).unwrap();
        let g = gram(&b, &d, &mu, &exact()).unwrap();
        let mut buf = Vec::new();
        write_gram_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row.split(',').count(), 3);
        let first = row.split(',').next().unwrap();
        assert_eq!(first.parse::<f64>().unwrap(), g.matrix()[(0, 0)]);
        assert_eq!(first.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }

    #[test]
    fn norm_ratios_are_at_least_one() {
        let d = Arc::new(WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap());
        let mu = BaseMeasure::uniform(d.clone());
        let b = SectionBasis::build_for(&d, 5, Realization::Orthogonal).unwrap();
        let on = orthonormalize(&b, &gram(&b, &d, &mu, &exact()).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for r in section_norm_ratios(&on, &d, &mu, &d.grid(101), 20, &mut rng).unwrap() {
            assert!(r.l4_over_l2 >= 1.0 - 1e-12);
            assert!(r.linf_over_l2 >= r.l4_over_l2 - 1e-12);
            assert!(r.linf_over_l2 <= (6.0f64 * 6.0).sqrt() * 3.0);
        }
    }
}
