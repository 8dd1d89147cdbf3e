use crate::domain::{Point, WeightedDomain};
use crate::error::{Error, Result};

use super::{EmpiricalMeasure, EquilibriumRef};

/// Entropic regularization of the approximate transport on multi-dimensional
/// sets, relative to the diameter.
pub const SINKHORN_EPSILON: f64 = 0.005;

const SINKHORN_ITERS: usize = 5000;

pub enum W1Target<'a> {
    Empirical(&'a EmpiricalMeasure),
    Reference(&'a EquilibriumRef),
}

/// Whether [`wasserstein1`] is exact on this set (intervals, arcs and the
/// circle) or an entropic approximation.
pub fn w1_is_exact(domain: &WeightedDomain) -> bool {
    domain.chart1d_range().is_some()
}

/// Kantorovich–Wasserstein distance in the intrinsic metric.
///
/// On one-dimensional sets this is `int |F - G|` over the chart; on the circle
/// the minimum over the cut, `min_c int |F - G - c|`, attained at a median of
/// `F - G`. Elsewhere an entropic (Sinkhorn) plan is used and the transport
/// cost of that plan is returned.
pub fn wasserstein1(domain: &WeightedDomain, mu: &EmpiricalMeasure, target: W1Target<'_>) -> Result<f64> {
    if let Some((lo, hi, periodic)) = domain.chart1d_range() {
        let a = Cdf::from_atoms(domain, mu.points(), mu.weight())?;
        let b = match target {
            W1Target::Empirical(e) => Cdf::from_atoms(domain, e.points(), e.weight())?,
            W1Target::Reference(r) => r.cdf(domain)?,
        };
        return Ok(cdf_distance(&a, &b, lo, hi, periodic));
    }
    let (pts, w): (Vec<Point>, Vec<f64>) = match target {
        W1Target::Empirical(e) => (e.points().to_vec(), vec![e.weight(); e.len()]),
        W1Target::Reference(r) => r.atoms(),
    };
    let mut a: Vec<(Point, f64)> = mu.points().iter().map(|x| (x.clone(), mu.weight())).collect();
    let mut b: Vec<(Point, f64)> = pts.into_iter().zip(w).collect();
    for (x, wx) in a.iter_mut() {
        for (y, wy) in b.iter_mut() {
            if *wx > 0.0 && *wy > 0.0 && x == y {
                let t = wx.min(*wy);
                *wx -= t;
                *wy -= t;
            }
        }
    }
    a.retain(|(_, v)| *v > RESIDUAL_FLOOR);
    b.retain(|(_, v)| *v > RESIDUAL_FLOOR);
    let mass: f64 = a.iter().map(|(_, v)| v).sum();
    if a.is_empty() || b.is_empty() || mass <= RESIDUAL_FLOOR {
        return Ok(0.0);
    }
    let mass_b: f64 = b.iter().map(|(_, v)| v).sum();
    let (xs, wa): (Vec<Point>, Vec<f64>) = a.into_iter().map(|(x, v)| (x, v / mass)).unzip();
    let (ys, wb): (Vec<Point>, Vec<f64>) = b.into_iter().map(|(y, v)| (y, v / mass_b)).unzip();
    Ok(mass * sinkhorn_cost(domain, &xs, &wa, &ys, &wb))
}

/// Atom weights below this are rounding residue of the cancellation.
const RESIDUAL_FLOOR: f64 = 1e-14;

/// A distribution on a chart interval: atoms plus uniform pieces.
#[derive(Clone, Debug, Default)]
pub(crate) struct Cdf {
    pub atoms: Vec<(f64, f64)>,
    pub pieces: Vec<(f64, f64, f64)>,
}

impl Cdf {
    pub(crate) fn from_atoms(domain: &WeightedDomain, pts: &[Point], w: f64) -> Result<Self> {
        let atoms = pts
            .iter()
            .map(|x| domain.chart1d(x).map(|t| (t, w)))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Unsupported("exact transport needs a one-dimensional set".into()))?;
        Ok(Cdf { atoms, pieces: vec![] })
    }

    /// `(F(t+), dF/dt)` on the open interval to the right of `t`.
    fn value_and_slope(&self, t: f64, next: f64) -> (f64, f64) {
        let mut v: f64 = self.atoms.iter().filter(|(s, _)| *s <= t).map(|(_, m)| m).sum();
        let mut slope = 0.0;
        for &(a, b, m) in &self.pieces {
            if b <= t {
                v += m;
            } else if a < next && t < b {
                let dens = m / (b - a);
                v += dens * (t - a).max(0.0);
                slope += dens;
            }
        }
        (v, slope)
    }
}

fn cdf_distance(a: &Cdf, b: &Cdf, lo: f64, hi: f64, periodic: bool) -> f64 {
    let mut cuts = vec![lo, hi];
    for c in [a, b] {
        cuts.extend(c.atoms.iter().map(|(t, _)| *t));
        for (x, y, _) in &c.pieces {
            cuts.push(*x);
            cuts.push(*y);
        }
    }
    cuts.retain(|t| *t >= lo && *t <= hi);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    // D = F - G is linear on each cell: (start value, end value, length)
    let segs: Vec<(f64, f64, f64)> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let len = w[1] - w[0];
            let (fa, sa) = a.value_and_slope(w[0], w[1]);
            let (fb, sb) = b.value_and_slope(w[0], w[1]);
            let d0 = fa - fb;
            (d0, d0 + (sa - sb) * len, len)
        })
        .collect();
    let shift = if periodic { median_level(&segs) } else { 0.0 };
    segs.iter().map(|&(u, v, len)| abs_integral(u - shift, v - shift, len)).sum()
}

/// `int_0^len |u + (v - u) s / len| ds`.
fn abs_integral(u: f64, v: f64, len: f64) -> f64 {
    if u * v >= 0.0 {
        0.5 * len * (u + v).abs()
    } else {
        0.5 * len * (u * u + v * v) / (u - v).abs()
    }
}

/// A level `c` splitting the total length of `{D < c}` and `{D > c}` evenly.
fn median_level(segs: &[(f64, f64, f64)]) -> f64 {
    let total: f64 = segs.iter().map(|s| s.2).sum();
    let below = |c: f64| -> f64 {
        segs.iter()
            .map(|&(u, v, len)| {
                let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
                if hi == lo {
                    if lo < c {
                        len
                    } else {
                        0.0
                    }
                } else {
                    len * ((c - lo) / (hi - lo)).clamp(0.0, 1.0)
                }
            })
            .sum()
    };
    let mut lo = segs.iter().map(|s| s.0.min(s.1)).fold(f64::INFINITY, f64::min);
    let mut hi = segs.iter().map(|s| s.0.max(s.1)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if below(mid) <= 0.5 * total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Transport cost of the entropic plan between uniform weights on `xs` and
/// weights `w` on `ys` (log-domain Sinkhorn iterations).
fn sinkhorn_cost(domain: &WeightedDomain, xs: &[Point], wa: &[f64], ys: &[Point], wb: &[f64]) -> f64 {
    let eps = SINKHORN_EPSILON * domain.diameter();
    let (n, m) = (xs.len(), ys.len());
    let cost: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| domain.distance(x, y)).collect()).collect();
    let la: Vec<f64> = wa.iter().map(|v| v.ln()).collect();
    let lb: Vec<f64> = wb.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let lse = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mx + v.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
    };
    for _ in 0..SINKHORN_ITERS {
        for i in 0..n {
            f[i] = -eps * lse(&mut (0..m).map(|j| (g[j] - cost[i][j]) / eps + lb[j]));
        }
        let mut err: f64 = 0.0;
        for j in 0..m {
            let gj = -eps * lse(&mut (0..n).map(|i| (f[i] - cost[i][j]) / eps + la[i]));
            err = err.max((gj - g[j]).abs());
            g[j] = gj;
        }
        if err < 1e-12 {
            break;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            total += ((f[i] + g[j] - cost[i][j]) / eps + la[i] + lb[j]).exp() * cost[i][j];
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Weight;
    use crate::metrics::equilibrium_ref;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn circle() -> Arc<WeightedDomain> {
        Arc::new(WeightedDomain::full_sphere(1, Weight::Zero).unwrap())
    }

    #[test]
    fn equispaced_versus_haar() {
        let d = circle();
        let haar = equilibrium_ref(d.clone(), 4).unwrap();
        for n in [3usize, 5, 8, 13] {
            for shift in [0.0, 0.37] {
                let pts = (0..n).map(|k| d.from_chart1d(shift + 2.0 * PI * k as f64 / n as f64).unwrap()).collect();
                let e = EmpiricalMeasure::new(pts).unwrap();
                let w = wasserstein1(&d, &e, W1Target::Reference(&haar)).unwrap();
                assert!((w - PI / (2.0 * n as f64)).abs() < 1e-10, "{n} {w}");
            }
        }
    }

    #[test]
    fn simple_cases() {
        let d = Arc::new(WeightedDomain::cube(1, -1.0, 2.0, Weight::Zero).unwrap());
        let a = EmpiricalMeasure::new(vec![vec![-0.5]]).unwrap();
        let b = EmpiricalMeasure::new(vec![vec![1.25]]).unwrap();
        assert!((wasserstein1(&d, &a, W1Target::Empirical(&b)).unwrap() - 1.75).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point> = (0..20).map(|_| d.sample_uniform(&mut rng)).collect();
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut rng);
        let x = EmpiricalMeasure::new(pts).unwrap();
        let y = EmpiricalMeasure::new(shuffled).unwrap();
        assert_eq!(wasserstein1(&d, &x, W1Target::Empirical(&y)).unwrap(), 0.0);
    }

    #[test]
    fn circle_uses_shorter_way_round() {
        // atoms at angles 0.1 and 2 pi - 0.1 are 0.2 apart on the circle
        let d = circle();
        let a = EmpiricalMeasure::new(vec![d.from_chart1d(0.1).unwrap()]).unwrap();
        let b = EmpiricalMeasure::new(vec![d.from_chart1d(2.0 * PI - 0.1).unwrap()]).unwrap();
        assert!((wasserstein1(&d, &a, W1Target::Empirical(&b)).unwrap() - 0.2).abs() < 1e-12);
        assert!(w1_is_exact(&d));
    }

    #[test]
    fn sinkhorn_on_the_sphere_is_close_for_point_masses() {
        let d = WeightedDomain::full_sphere(2, Weight::Zero).unwrap();
        assert!(!w1_is_exact(&d));
        let x = vec![0.0, 0.0, 1.0];
        let y = vec![1.0, 0.0, 0.0];
        let a = EmpiricalMeasure::new(vec![x.clone(), y.clone()]).unwrap();
        let b = EmpiricalMeasure::new(vec![y, x]).unwrap();
        assert_eq!(wasserstein1(&d, &a, W1Target::Empirical(&b)).unwrap(), 0.0);
        let c = EmpiricalMeasure::new(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, -1.0]]).unwrap();
        let v = wasserstein1(&d, &a, W1Target::Empirical(&c)).unwrap();
        assert!((v - PI / 2.0).abs() < 1e-3, "{v}");
        // one shared atom out of two: only half the mass moves
        let e = EmpiricalMeasure::new(vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]]).unwrap();
        let v = wasserstein1(&d, &a, W1Target::Empirical(&e)).unwrap();
        assert!((v - PI / 4.0).abs() < 1e-3, "{v}");
    }
}
