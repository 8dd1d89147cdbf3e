use std::f64::consts::PI;

use serde::Serialize;

use crate::basis::real_harmonics;
use crate::domain::{AmbientModel, Region, WeightedDomain};
use crate::error::{Error, Result};

use super::Integrable;

/// Truncation and smoothness of a test dictionary, recorded with every result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DictionarySpec {
    pub gamma: f64,
    pub family: &'static str,
    /// Frequencies per axis (trigonometric families) or maximal harmonic degree.
    pub truncation: usize,
    pub size: usize,
}

#[derive(Clone, Debug)]
enum Family {
    /// `cos/sin(omega_k (t - t0))` in a chart or box coordinate.
    Trig { axes: Vec<(usize, f64, f64)>, periodic_circle: bool, arc: bool },
    /// Real spherical harmonics of degree `1..=l_max`.
    Harmonics { l_max: usize },
}

/// A finite family of test functions whose `C^gamma` norms are at most one.
///
/// Trigonometric modes of frequency `w` have sup-norm one, Lipschitz constant
/// `w` and `C^gamma` norm at most `1 + 2 w^gamma` (`gamma <= 1`) or
/// `1 + w + 2 w^gamma` (`gamma > 1`), with `w` replaced by `max(w, 1)`; each
/// mode is divided by that bound. Harmonics of degree `l` are divided by
/// `sqrt(2l + 1)` (their sup-norm) and by the same factor with `w = l`.
/// The scalings grow with `gamma`, so estimates are monotone in `gamma`.
#[derive(Clone, Debug)]
pub struct TestDictionary {
    gamma: f64,
    family: Family,
    scales: Vec<f64>,
    freqs: Vec<f64>,
    truncation: usize,
}

fn hoelder_bound(w: f64, gamma: f64) -> f64 {
    let w = w.max(1.0);
    if gamma <= 1.0 {
        1.0 + 2.0 * w.powf(gamma)
    } else {
        1.0 + w + 2.0 * w.powf(gamma)
    }
}

impl TestDictionary {
    /// `modes` frequencies per coordinate on intervals, arcs, the circle and
    /// boxes; harmonics up to degree `harmonic_degree` on S^2.
    pub fn new(domain: &WeightedDomain, gamma: f64, modes: usize, harmonic_degree: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 2.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} outside (0, 2]")));
        }
        let (family, freqs, scales, truncation) = match (domain.model(), domain.region()) {
            (AmbientModel::Sphere(2), _) => {
                let l_max = harmonic_degree.max(1);
                let mut freqs = Vec::new();
                let mut scales = Vec::new();
                for l in 1..=l_max {
                    for _ in 0..(2 * l + 1) {
                        freqs.push(l as f64);
                        scales.push(1.0 / (((2 * l + 1) as f64).sqrt() * hoelder_bound(l as f64, gamma)));
                    }
                }
                (Family::Harmonics { l_max }, freqs, scales, l_max)
            }
            (model, region) => {
                let axes: Vec<(usize, f64, f64)> = match (model, region) {
                    (AmbientModel::Euclidean(_), Region::Box { lower, upper }) => {
                        (0..lower.len()).map(|j| (j, lower[j], upper[j] - lower[j])).collect()
                    }
                    (AmbientModel::Sphere(1), Region::FullSphere) => vec![(0, 0.0, 2.0 * PI)],
                    (AmbientModel::Sphere(1), Region::Cap { angle }) => vec![(0, -angle, 2.0 * angle)],
                    (m, r) => return Err(Error::Unsupported(format!("test dictionary on {m} / {r:?}"))),
                };
                let periodic = matches!(region, Region::FullSphere);
                let mut freqs = Vec::new();
                let mut scales = Vec::new();
                for &(_, _, len) in &axes {
                    for k in 1..=modes.max(1) {
                        // periodic modes need integer frequencies; others use half waves
                        let w = if periodic { k as f64 } else { k as f64 * PI / len };
                        for _ in 0..2 {
                            freqs.push(w);
                            scales.push(1.0 / hoelder_bound(w, gamma));
                        }
                    }
                }
                let fam = Family::Trig {
                    axes,
                    periodic_circle: periodic,
                    arc: matches!(model, AmbientModel::Sphere(1)),
                };
                (fam, freqs, scales, modes.max(1))
            }
        };
        let dict = TestDictionary {
            gamma,
            family,
            scales,
            freqs,
            truncation,
        };
        dict.verify(domain)?;
        Ok(dict)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn spec(&self) -> DictionarySpec {
        DictionarySpec {
            gamma: self.gamma,
            family: match self.family {
                Family::Trig { .. } => "trigonometric",
                Family::Harmonics { .. } => "spherical_harmonics",
            },
            truncation: self.truncation,
            size: self.len(),
        }
    }

    /// Values of all (scaled) members at `x`.
    pub fn eval_all(&self, x: &[f64], out: &mut [f64]) {
        self.eval_unscaled(x, out);
        for (o, s) in out.iter_mut().zip(&self.scales) {
            *o *= s;
        }
    }

    fn eval_unscaled(&self, x: &[f64], out: &mut [f64]) {
        match &self.family {
            Family::Harmonics { l_max } => {
                let mut all = vec![0.0; (l_max + 1) * (l_max + 1)];
                real_harmonics(x, *l_max, &mut all);
                out.copy_from_slice(&all[1..]);
            }
            Family::Trig { axes, periodic_circle, arc } => {
                let mut k = 0;
                for &(axis, start, _) in axes {
                    let t = if *periodic_circle {
                        let a = x[1].atan2(x[0]);
                        if a < 0.0 {
                            a + 2.0 * PI
                        } else {
                            a
                        }
                    } else if *arc {
                        x[0].atan2(x[1])
                    } else {
                        x[axis]
                    };
                    let u = t - start;
                    let per_axis = self.freqs.len() / axes.len();
                    for j in 0..per_axis / 2 {
                        let w = self.freqs[k + 2 * j];
                        out[k + 2 * j] = (w * u).cos();
                        out[k + 2 * j + 1] = (w * u).sin();
                    }
                    k += per_axis;
                }
            }
        }
    }

    /// Checks sup-norm and Hoelder quotients of every scaled member on a grid.
    fn verify(&self, domain: &WeightedDomain) -> Result<()> {
        let grid = match &self.family {
            Family::Harmonics { .. } => domain.grid(24),
            Family::Trig { axes, .. } if axes.len() == 1 => domain.grid(4096),
            Family::Trig { axes, .. } => domain.grid((4096f64.powf(1.0 / axes.len() as f64)) as usize),
        };
        let vals: Vec<Vec<f64>> = grid
            .iter()
            .map(|x| {
                let mut v = vec![0.0; self.len()];
                self.eval_all(x, &mut v);
                v
            })
            .collect();
        let g = self.gamma.min(1.0);
        for (i, v) in vals.iter().enumerate() {
            if v.iter().any(|f| f.abs() > 1.0 + 1e-12) {
                return Err(Error::InvalidArgument("dictionary member exceeds sup-norm 1".into()));
            }
            for off in [1usize, 7, 61, 509] {
                let j = (i + off) % vals.len();
                let d = domain.distance(&grid[i], &grid[j]);
                if d == 0.0 {
                    continue;
                }
                for (a, b) in v.iter().zip(&vals[j]) {
                    if (a - b).abs() > d.powf(g) * (1.0 + 1e-9) {
                        return Err(Error::InvalidArgument("dictionary member exceeds Hoelder bound".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `max_v |<mu1 - mu2, v>|` over the dictionary: a lower bound for
/// `dist_gamma` that is exact on the span of the dictionary.
pub fn dist_gamma(dict: &TestDictionary, mu1: &dyn Integrable, mu2: &dyn Integrable) -> f64 {
    let mut f = |x: &[f64], out: &mut [f64]| dict.eval_all(x, out);
    let a = mu1.integrate_vec(dict.len(), &mut f);
    let b = mu2.integrate_vec(dict.len(), &mut f);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BaseMeasure, Weight};
    use crate::metrics::EmpiricalMeasure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn circle() -> Arc<WeightedDomain> {
        Arc::new(WeightedDomain::full_sphere(1, Weight::Zero).unwrap())
    }

    fn random_empirical(d: &WeightedDomain, n: usize, rng: &mut ChaCha8Rng) -> EmpiricalMeasure {
        EmpiricalMeasure::new((0..n).map(|_| d.sample_uniform(rng)).collect()).unwrap()
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let d = circle();
        let dict = TestDictionary::new(&d, 1.0, 32, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = random_empirical(&d, 10, &mut rng);
        assert_eq!(dist_gamma(&dict, &e, &e), 0.0);
    }

    #[test]
    fn dirac_versus_haar_closed_form() {
        let d = circle();
        let haar = BaseMeasure::uniform(d.clone());
        let dirac = EmpiricalMeasure::new(vec![d.from_chart1d(0.0).unwrap()]).unwrap();
        let dict = TestDictionary::new(&d, 1.0, 32, 8).unwrap();
        // every mode has zero Haar mean; the largest value at angle 0 is cos(t)/(1 + 2)
        let v = dist_gamma(&dict, &dirac, &haar);
        assert!((v - 1.0 / 3.0).abs() < 1e-12, "{v}");
        assert!(v > 0.0 && v <= 2.0);
    }

    #[test]
    fn estimator_is_monotone_in_gamma_and_a_pseudometric() {
        let d = circle();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dicts: Vec<TestDictionary> =
            [0.25, 0.5, 1.0, 1.5, 2.0].iter().map(|g| TestDictionary::new(&d, *g, 32, 8).unwrap()).collect();
        for _ in 0..100 {
            let a = random_empirical(&d, 7, &mut rng);
            let b = random_empirical(&d, 7, &mut rng);
            let c = random_empirical(&d, 7, &mut rng);
            let vals: Vec<f64> = dicts.iter().map(|k| dist_gamma(k, &a, &b)).collect();
            for w in vals.windows(2) {
                assert!(w[1] <= w[0] + 1e-15);
            }
            let k = &dicts[2];
            assert_eq!(dist_gamma(k, &a, &b), dist_gamma(k, &b, &a));
            assert!(dist_gamma(k, &a, &c) <= dist_gamma(k, &a, &b) + dist_gamma(k, &b, &c) + 1e-15);
        }
    }

    #[test]
    fn other_geometries_build_and_certify() {
        let iv = WeightedDomain::cube(1, -1.0, 1.0, Weight::Zero).unwrap();
        assert_eq!(TestDictionary::new(&iv, 0.5, 32, 8).unwrap().len(), 64);
        let arc = WeightedDomain::new(
            AmbientModel::Sphere(1),
            Region::Cap { angle: 1.0 },
            Weight::Zero,
            1.0,
        )
        .unwrap();
        TestDictionary::new(&arc, 1.0, 32, 8).unwrap();
        let bx = WeightedDomain::cube(2, 0.0, 1.0, Weight::Zero).unwrap();
        assert_eq!(TestDictionary::new(&bx, 1.0, 8, 8).unwrap().len(), 32);
        let s2 = WeightedDomain::full_sphere(2, Weight::Zero).unwrap();
        for g in [0.5, 1.0, 2.0] {
            assert_eq!(TestDictionary::new(&s2, g, 32, 8).unwrap().len(), 80);
        }
        assert!(TestDictionary::new(&s2, 0.0, 32, 8).is_err());
    }
}
