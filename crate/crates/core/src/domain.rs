//! Weighted compact sets `(K, phi)` inside the two ambient models, and base
//! probability measures on them.
//!
//! `Euclidean(n)` is a box in R^n sitting in the affine chart of P^n with the
//! line bundle O(1); `Sphere(n)` is a polar cap (or the whole sphere) of S^n
//! sitting in the real part of the quadric in P^{n+1}.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_on, QuadratureRule};

pub type Point = Vec<f64>;

/// Slack allowed on `|x| = 1` for points of a sphere model.
const SPHERE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "snake_case")]
pub enum AmbientModel {
    Euclidean(usize),
    Sphere(usize),
}

impl AmbientModel {
    pub fn euclidean(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Unsupported("euclidean dimension must be >= 1".into()));
        }
        Ok(AmbientModel::Euclidean(n))
    }

    /// Spheres are limited to S^1 and S^2, where exact product quadrature exists.
    pub fn sphere(n: usize) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::Unsupported(format!(
                "sphere dimension {n} (only S^1 and S^2 are supported)"
            )));
        }
        Ok(AmbientModel::Sphere(n))
    }

    /// Number of ambient coordinates of a point.
    pub fn coord_dim(&self) -> usize {
        match *self {
            AmbientModel::Euclidean(n) => n,
            AmbientModel::Sphere(n) => n + 1,
        }
    }

    /// Real dimension of the manifold carrying `K`.
    pub fn manifold_dim(&self) -> usize {
        match *self {
            AmbientModel::Euclidean(n) | AmbientModel::Sphere(n) => n,
        }
    }

    /// Log of the pointwise norm factor of the standard Hermitian metric on
    /// `O(p)`: `-(p/2) log(1 + |x|^2)` on R^n, zero on the sphere (where
    /// `|x|^2` is constant and the factor is absorbed by normalization).
    pub fn metric_log_weight(&self, p: usize, x: &[f64]) -> f64 {
        match self {
            AmbientModel::Euclidean(_) => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                -0.5 * p as f64 * r2.ln_1p()
            }
            AmbientModel::Sphere(_) => 0.0,
        }
    }
}

impl fmt::Display for AmbientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AmbientModel::Euclidean(n) => write!(f, "euclidean({n})"),
            AmbientModel::Sphere(n) => write!(f, "sphere({n})"),
        }
    }
}

/// Free-function form of [`AmbientModel::metric_log_weight`].
pub fn metric_log_weight(model: AmbientModel, p: usize, x: &[f64]) -> f64 {
    model.metric_log_weight(p, x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Axis-aligned box `lower <= x <= upper` (euclidean models).
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{x in S^n : x_last >= cos(angle)}`, a cap around the north pole.
    Cap { angle: f64 },
    FullSphere,
}

/// A user-supplied real function of a point.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The weight `phi` of a weighted compact set.
#[derive(Clone)]
pub enum Weight {
    Zero,
    Constant(f64),
    /// `phi(x) = a . x`
    Linear(Vec<f64>),
    /// `phi(x) = a |x|^2`
    Quadratic(f64),
    /// `phi(x) = -1/2 log(1 + |x|^2)`; on R^n it cancels the metric factor.
    FlatMetric,
    Custom {
        name: String,
        f: ScalarFn,
    },
}

impl Weight {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Zero => 0.0,
            Weight::Constant(c) => *c,
            Weight::Linear(a) => a.iter().zip(x).map(|(a, x)| a * x).sum(),
            Weight::Quadratic(a) => a * x.iter().map(|v| v * v).sum::<f64>(),
            Weight::FlatMetric => -0.5 * x.iter().map(|v| v * v).sum::<f64>().ln_1p(),
            Weight::Custom { f, .. } => f(x),
        }
    }

    /// Constant value, when the weight does not depend on the point.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Weight::Zero => Some(0.0),
            Weight::Constant(c) => Some(*c),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Weight::Zero => "zero".into(),
            Weight::Constant(c) => format!("constant({c:e})"),
            Weight::Linear(a) => format!("linear({a:?})"),
            Weight::Quadratic(a) => format!("quadratic({a:e})"),
            Weight::FlatMetric => "flat_metric".into(),
            Weight::Custom { name, .. } => format!("custom({name})"),
        }
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A weighted compact set `(K, phi)` in one of the ambient models.
#[derive(Clone, Debug)]
pub struct WeightedDomain {
    model: AmbientModel,
    region: Region,
    phi: Weight,
    phi_hoelder_alpha: f64,
}

impl WeightedDomain {
    pub fn new(model: AmbientModel, region: Region, phi: Weight, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "Hoelder exponent {alpha} outside (0, 2]"
            )));
        }
        let region = match (&model, region) {
            (AmbientModel::Euclidean(n), Region::Box { lower, upper }) => {
                if lower.len() != *n || upper.len() != *n {
                    return Err(Error::DimensionMismatch {
                        expected: *n,
                        got: lower.len().min(upper.len()),
                    });
                }
                if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
                    return Err(Error::InvalidArgument("box needs lower < upper in every coordinate".into()));
                }
                Region::Box { lower, upper }
            }
            (AmbientModel::Sphere(_), Region::Cap { angle }) => {
                if !(angle > 0.0) {
                    return Err(Error::InvalidArgument(format!("cap angle {angle} must be positive")));
                }
                if angle >= PI {
                    Region::FullSphere
                } else {
                    Region::Cap { angle }
                }
            }
            (AmbientModel::Sphere(_), Region::FullSphere) => Region::FullSphere,
            (m, r) => {
                return Err(Error::Unsupported(format!("region {r:?} for model {m}")));
            }
        };
        if let Weight::Linear(a) = &phi {
            if a.len() != model.coord_dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.coord_dim(),
                    got: a.len(),
                });
            }
        }
        Ok(WeightedDomain {
            model,
            region,
            phi,
            phi_hoelder_alpha: alpha,
        })
    }

    /// `[lo, hi]^n` with the given weight.
    pub fn cube(n: usize, lo: f64, hi: f64, phi: Weight) -> Result<Self> {
        Self::new(
            AmbientModel::euclidean(n)?,
            Region::Box {
                lower: vec![lo; n],
                upper: vec![hi; n],
            },
            phi,
            1.0,
        )
    }

    pub fn full_sphere(n: usize, phi: Weight) -> Result<Self> {
        Self::new(AmbientModel::sphere(n)?, Region::FullSphere, phi, 1.0)
    }

    pub fn model(&self) -> AmbientModel {
        self.model
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn phi(&self) -> &Weight {
        &self.phi
    }

    pub fn phi_hoelder_alpha(&self) -> f64 {
        self.phi_hoelder_alpha
    }

    pub fn coord_dim(&self) -> usize {
        self.model.coord_dim()
    }

    pub fn is_full_sphere(&self) -> bool {
        matches!(self.region, Region::FullSphere)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.coord_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.coord_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Membership test, boundary inclusive.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        match &self.region {
            Region::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u),
            Region::FullSphere => on_unit_sphere(x),
            Region::Cap { angle } => on_unit_sphere(x) && x[x.len() - 1] >= angle.cos(),
        }
    }

    pub fn phi_at(&self, x: &[f64]) -> f64 {
        self.phi.eval(x)
    }

    /// `metric_log_weight - p phi(x)`: the log of the factor turning raw
    /// section values into pointwise norms `|s(x)|_{p phi}`.
    pub fn log_weight(&self, p: usize, x: &[f64]) -> f64 {
        self.model.metric_log_weight(p, x) - p as f64 * self.phi.eval(x)
    }

    /// Diameter in the intrinsic metric (euclidean distance for boxes,
    /// geodesic distance on spheres).
    pub fn diameter(&self) -> f64 {
        match &self.region {
            Region::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (u - l) * (u - l))
                .sum::<f64>()
                .sqrt(),
            Region::FullSphere => PI,
            Region::Cap { angle } => (2.0 * angle).min(PI),
        }
    }

    /// Intrinsic distance between two points of the model manifold.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.model {
            AmbientModel::Euclidean(_) => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            AmbientModel::Sphere(_) => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                dot.clamp(-1.0, 1.0).acos()
            }
        }
    }

    /// Uniform draw from the normalized volume (area) measure of `K`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match (&self.model, &self.region) {
            (_, Region::Box { lower, upper }) => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect(),
            (AmbientModel::Sphere(1), region) => {
                let half = cap_half_angle(region);
                let t = -half + 2.0 * half * rng.random::<f64>();
                circle_point(t)
            }
            (AmbientModel::Sphere(_), region) => {
                let zmin = cap_zmin(region);
                let z = zmin + (1.0 - zmin) * rng.random::<f64>();
                let az = 2.0 * PI * rng.random::<f64>();
                sphere2_point(z, az)
            }
            _ => unreachable!("validated in constructor"),
        }
    }

    /// Random-walk proposal on the model manifold: isotropic Gaussian step in
    /// the box, rotation by a Gaussian angle on S^1, and a geodesic step with
    /// isotropic Gaussian tangent on S^2. All three kernels are symmetric with
    /// respect to the volume measure. The result may lie outside `K`.
    pub fn gaussian_move<R: Rng + ?Sized>(&self, x: &[f64], sigma: f64, rng: &mut R) -> Point {
        match self.model {
            AmbientModel::Euclidean(_) => x.iter().map(|v| v + sigma * normal(rng)).collect(),
            AmbientModel::Sphere(1) => rotate_circle(x, sigma * normal(rng)),
            AmbientModel::Sphere(_) => {
                let (e1, e2) = tangent_frame(x);
                let a = sigma * normal(rng);
                let b = sigma * normal(rng);
                let v: Vec<f64> = (0..3).map(|k| a * e1[k] + b * e2[k]).collect();
                exp_map(x, &v)
            }
        }
    }

    /// Number of independent local directions used by coordinate search.
    pub fn local_directions(&self) -> usize {
        self.model.manifold_dim()
    }

    /// Moves `x` by `h` along local direction `dir`, projecting onto the box
    /// (coordinate clamp). On spheres the move is a rotation; `None` if the
    /// result leaves a cap.
    pub fn perturb(&self, x: &[f64], dir: usize, h: f64) -> Option<Point> {
        let y = match (&self.model, &self.region) {
            (_, Region::Box { lower, upper }) => {
                let mut y = x.to_vec();
                y[dir] = (y[dir] + h).clamp(lower[dir], upper[dir]);
                y
            }
            (AmbientModel::Sphere(1), _) => rotate_circle(x, h),
            (AmbientModel::Sphere(_), _) => {
                let (e1, e2) = tangent_frame(x);
                let e = if dir == 0 { e1 } else { e2 };
                let v: Vec<f64> = e.iter().map(|c| c * h).collect();
                exp_map(x, &v)
            }
            _ => unreachable!("validated in constructor"),
        };
        self.contains_unchecked(&y).then_some(y)
    }

    /// A deterministic covering grid with roughly `res` points per manifold
    /// direction, boundary included.
    pub fn grid(&self, res: usize) -> Vec<Point> {
        let res = res.max(2);
        match (&self.model, &self.region) {
            (_, Region::Box { lower, upper }) => {
                let axes: Vec<Vec<f64>> = lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| {
                        (0..res)
                            .map(|k| {
                                if k == res - 1 {
                                    *u
                                } else {
                                    l + (u - l) * k as f64 / (res - 1) as f64
                                }
                            })
                            .collect()
                    })
                    .collect();
                tensor(&axes)
            }
            (AmbientModel::Sphere(1), Region::FullSphere) => (0..res)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / res as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect(),
            (AmbientModel::Sphere(1), Region::Cap { angle }) => (0..res)
                .map(|k| circle_point(-angle + 2.0 * angle * k as f64 / (res - 1) as f64))
                .collect(),
            (AmbientModel::Sphere(_), region) => {
                let zmin = cap_zmin(region);
                let full = matches!(region, Region::FullSphere);
                let mut pts = vec![vec![0.0, 0.0, 1.0]];
                let levels = res;
                for i in 1..levels {
                    let z = if full {
                        1.0 - 2.0 * i as f64 / levels as f64
                    } else {
                        1.0 - (1.0 - zmin) * i as f64 / (levels - 1) as f64
                    };
                    let ring = (2 * res).max(3);
                    for j in 0..ring {
                        let az = 2.0 * PI * (j as f64 + 0.5 * (i % 2) as f64) / ring as f64;
                        pts.push(sphere2_point(z, az));
                    }
                }
                if full {
                    pts.push(vec![0.0, 0.0, -1.0]);
                }
                pts
            }
            _ => unreachable!("validated in constructor"),
        }
    }

    /// Product rule for the normalized uniform measure on `K`, exact for
    /// polynomial integrands of total degree `degree` (trigonometric degree on
    /// S^1), with `extra` nodes per direction on top.
    pub fn product_rule(&self, degree: usize, extra: usize) -> QuadratureRule {
        let gl_nodes = degree / 2 + 1 + extra;
        match (&self.model, &self.region) {
            (_, Region::Box { lower, upper }) => {
                let axes: Vec<(Vec<f64>, Vec<f64>)> = lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| gauss_legendre_on(*l, *u, gl_nodes))
                    .collect();
                let nodes_axes: Vec<Vec<f64>> = axes.iter().map(|a| a.0.clone()).collect();
                let weight_axes: Vec<Vec<f64>> = axes.iter().map(|a| a.1.clone()).collect();
                let nodes = tensor(&nodes_axes);
                let weights = tensor(&weight_axes)
                    .into_iter()
                    .map(|w| w.iter().product())
                    .collect();
                QuadratureRule { nodes, weights }
            }
            (AmbientModel::Sphere(1), Region::FullSphere) => {
                let m = degree + 2 + 2 * extra;
                let nodes = (0..m)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / m as f64;
                        vec![t.cos(), t.sin()]
                    })
                    .collect();
                QuadratureRule {
                    nodes,
                    weights: vec![1.0 / m as f64; m],
                }
            }
            (AmbientModel::Sphere(1), Region::Cap { angle }) => {
                // trigonometric integrands in the arc parameter are entire
                // functions; Gauss-Legendre converges geometrically.
                let (t, w) = gauss_legendre_on(-angle, *angle, degree + 16 + extra);
                QuadratureRule {
                    nodes: t.iter().map(|t| circle_point(*t)).collect(),
                    weights: w,
                }
            }
            (AmbientModel::Sphere(_), region) => {
                // after azimuthal averaging a polynomial in (x, y, z) becomes a
                // polynomial in z of the same degree.
                let zmin = cap_zmin(region);
                let (zs, wz) = gauss_legendre_on(zmin, 1.0, gl_nodes);
                let m = degree + 2 + 2 * extra;
                let mut nodes = Vec::with_capacity(zs.len() * m);
                let mut weights = Vec::with_capacity(zs.len() * m);
                for (z, w) in zs.iter().zip(&wz) {
                    for j in 0..m {
                        let az = 2.0 * PI * j as f64 / m as f64;
                        nodes.push(sphere2_point(*z, az));
                        weights.push(w / m as f64);
                    }
                }
                QuadratureRule { nodes, weights }
            }
            _ => unreachable!("validated in constructor"),
        }
    }

    /// One-dimensional chart coordinate for interval and circle models:
    /// `x` on an interval, the angle in `[0, 2pi)` on the full circle, and the
    /// signed angle from the north pole on an arc.
    pub fn chart1d(&self, x: &[f64]) -> Option<f64> {
        match (&self.model, &self.region) {
            (AmbientModel::Euclidean(1), _) => Some(x[0]),
            (AmbientModel::Sphere(1), Region::FullSphere) => {
                let t = x[1].atan2(x[0]);
                Some(if t < 0.0 { t + 2.0 * PI } else { t })
            }
            (AmbientModel::Sphere(1), Region::Cap { .. }) => Some(x[0].atan2(x[1])),
            _ => None,
        }
    }

    /// Range of [`chart1d`](Self::chart1d) and whether it wraps around.
    pub fn chart1d_range(&self) -> Option<(f64, f64, bool)> {
        match (&self.model, &self.region) {
            (AmbientModel::Euclidean(1), Region::Box { lower, upper }) => Some((lower[0], upper[0], false)),
            (AmbientModel::Sphere(1), Region::FullSphere) => Some((0.0, 2.0 * PI, true)),
            (AmbientModel::Sphere(1), Region::Cap { angle }) => Some((-angle, *angle, false)),
            _ => None,
        }
    }

    /// Inverse of [`chart1d`](Self::chart1d).
    pub fn from_chart1d(&self, t: f64) -> Option<Point> {
        match (&self.model, &self.region) {
            (AmbientModel::Euclidean(1), _) => Some(vec![t]),
            (AmbientModel::Sphere(1), Region::FullSphere) => Some(vec![t.cos(), t.sin()]),
            (AmbientModel::Sphere(1), Region::Cap { .. }) => Some(circle_point(t)),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        format!("{}|{:?}|{}|alpha={}", self.model, self.region, self.phi.label(), self.phi_hoelder_alpha)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn on_unit_sphere(x: &[f64]) -> bool {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (r2.sqrt() - 1.0).abs() <= SPHERE_TOL
}

fn cap_half_angle(region: &Region) -> f64 {
    match region {
        Region::Cap { angle } => *angle,
        _ => PI,
    }
}

fn cap_zmin(region: &Region) -> f64 {
    match region {
        Region::Cap { angle } => angle.cos(),
        _ => -1.0,
    }
}

/// Point of S^1 at signed angle `t` from the north pole `(0, 1)`.
fn circle_point(t: f64) -> Point {
    vec![t.sin(), t.cos()]
}

fn sphere2_point(z: f64, az: f64) -> Point {
    let s = (1.0 - z * z).max(0.0).sqrt();
    vec![s * az.cos(), s * az.sin(), z]
}

fn rotate_circle(x: &[f64], t: f64) -> Point {
    let (s, c) = t.sin_cos();
    let y = vec![c * x[0] - s * x[1], s * x[0] + c * x[1]];
    normalize(y)
}

fn normalize(mut y: Vec<f64>) -> Vec<f64> {
    let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut y {
        *v /= r;
    }
    y
}

/// Orthonormal tangent frame at `x` on S^2.
fn tangent_frame(x: &[f64]) -> ([f64; 3], [f64; 3]) {
    let a = if x[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d: f64 = (0..3).map(|k| a[k] * x[k]).sum();
    let mut e1 = [a[0] - d * x[0], a[1] - d * x[1], a[2] - d * x[2]];
    let n1 = (e1.iter().map(|v| v * v).sum::<f64>()).sqrt();
    e1.iter_mut().for_each(|v| *v /= n1);
    let e2 = [
        x[1] * e1[2] - x[2] * e1[1],
        x[2] * e1[0] - x[0] * e1[2],
        x[0] * e1[1] - x[1] * e1[0],
    ];
    (e1, e2)
}

fn exp_map(x: &[f64], v: &[f64]) -> Point {
    let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if r == 0.0 {
        return x.to_vec();
    }
    let (s, c) = r.sin_cos();
    normalize((0..x.len()).map(|k| c * x[k] + s * v[k] / r).collect())
}

fn tensor(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for v in axis {
                let mut q = prefix.clone();
                q.push(*v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// A monomial term `coef * prod x_k^{powers_k}` in ambient coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Density of a base measure relative to the volume measure of `K`, up to a
/// constant factor (normalization happens in [`BaseMeasure::new`]).
#[derive(Clone)]
pub enum Density {
    Uniform,
    Polynomial(Vec<Term>),
    Custom {
        name: String,
        f: ScalarFn,
    },
}

impl Density {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Density::Uniform => 1.0,
            Density::Polynomial(terms) => terms
                .iter()
                .map(|t| {
                    t.coef
                        * t.powers
                            .iter()
                            .zip(x)
                            .map(|(k, v)| v.powi(*k as i32))
                            .product::<f64>()
                })
                .sum(),
            Density::Custom { f, .. } => f(x),
        }
    }

    /// Polynomial degree, `None` for non-polynomial densities.
    pub fn degree(&self) -> Option<usize> {
        match self {
            Density::Uniform => Some(0),
            Density::Polynomial(terms) => Some(
                terms
                    .iter()
                    .map(|t| t.powers.iter().sum::<u32>() as usize)
                    .max()
                    .unwrap_or(0),
            ),
            Density::Custom { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Density::Uniform => "uniform".into(),
            Density::Polynomial(terms) => {
                let parts: Vec<String> = terms.iter().map(|t| format!("{:e}{:?}", t.coef, t.powers)).collect();
                format!("poly[{}]", parts.join(","))
            }
            Density::Custom { name, .. } => format!("custom({name})"),
        }
    }
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parameters `(c, rho)` of the lower bound `mu(B(x, r)) >= c r^rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassDensity {
    pub c: f64,
    pub rho: f64,
}

/// Outcome of [`BaseMeasure::verify_mass_density`].
#[derive(Clone, Debug, PartialEq)]
pub struct MassDensityReport {
    /// Smallest observed `mu(B(x, r)) / (c r^rho)`.
    pub min_ratio: f64,
    pub radii: Vec<f64>,
    pub holds: bool,
}

/// A probability measure `mu = w . vol_K / vol(K)` on a weighted domain.
#[derive(Clone, Debug)]
pub struct BaseMeasure {
    domain: Arc<WeightedDomain>,
    density: Density,
    norm: f64,
    bound: f64,
    mass_density: Option<MassDensity>,
}

/// Maximum number of rejection proposals before [`BaseMeasure::sample`] gives up.
pub const REJECTION_BUDGET: usize = 1_000_000;

impl BaseMeasure {
    /// Normalized restriction of the volume measure.
    pub fn uniform(domain: Arc<WeightedDomain>) -> Self {
        BaseMeasure {
            domain,
            density: Density::Uniform,
            norm: 1.0,
            bound: 1.0,
            mass_density: None,
        }
    }

    /// Builds a measure from an unnormalized density. `bound` is an upper bound
    /// on the density relative to the uniform measure after normalization; when
    /// absent it is estimated on a grid (1.1 x grid maximum).
    pub fn new(domain: Arc<WeightedDomain>, density: Density, bound: Option<f64>) -> Result<Self> {
        let rule = match density.degree() {
            Some(d) => domain.product_rule(d, 4),
            None => domain.product_rule(16, 32),
        };
        let mut min = f64::INFINITY;
        let mass = rule.integrate(|x| {
            let v = density.eval(x);
            min = min.min(v);
            v
        });
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidArgument(format!("density has nonpositive mass {mass}")));
        }
        let grid = domain.grid(64);
        let mut grid_max = 0.0f64;
        for x in &grid {
            let v = density.eval(x);
            min = min.min(v);
            grid_max = grid_max.max(v / mass);
        }
        if min < 0.0 {
            return Err(Error::InvalidArgument(format!("density takes negative value {min:e}")));
        }
        let bound = bound.unwrap_or(1.1 * grid_max);
        if !(bound > 0.0) {
            return Err(Error::InvalidArgument("density bound must be positive".into()));
        }
        Ok(BaseMeasure {
            domain,
            density,
            norm: mass,
            bound,
            mass_density: None,
        })
    }

    pub fn with_mass_density(mut self, params: MassDensity) -> Self {
        self.mass_density = Some(params);
        self
    }

    pub fn domain(&self) -> &Arc<WeightedDomain> {
        &self.domain
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn mass_density(&self) -> Option<MassDensity> {
        self.mass_density
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.density, Density::Uniform)
    }

    /// Density with respect to the normalized uniform measure of `K`.
    pub fn density_at(&self, x: &[f64]) -> f64 {
        self.density.eval(x) / self.norm
    }

    pub fn density_bound(&self) -> f64 {
        self.bound
    }

    pub fn label(&self) -> String {
        format!("{}|{}", self.domain.label(), self.density.label())
    }

    /// Quadrature rule for integrals against `mu`: the product rule of
    /// `domain` with weights multiplied by the density.
    pub fn rule(&self, degree: usize, extra: usize) -> QuadratureRule {
        let d = self.density.degree().unwrap_or(16);
        let mut rule = self.domain.product_rule(degree + d, extra);
        if !self.is_uniform() {
            for (w, x) in rule.weights.iter_mut().zip(&rule.nodes) {
                *w *= self.density_at(x);
            }
        }
        rule
    }

    /// Total mass by quadrature; equals one up to rounding for polynomial densities.
    pub fn mass(&self) -> f64 {
        self.rule(0, 8).weights.iter().sum()
    }

    /// Draws a point distributed according to `mu`, by rejection against the
    /// uniform measure when the density is not constant.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        if self.is_uniform() {
            return Ok(self.domain.sample_uniform(rng));
        }
        for _ in 0..REJECTION_BUDGET {
            let x = self.domain.sample_uniform(rng);
            if rng.random::<f64>() * self.bound <= self.density_at(&x) {
                return Ok(x);
            }
        }
        Err(Error::RejectionBudget(REJECTION_BUDGET))
    }

    /// Checks `mu(B(x, r)) >= c r^rho` at grid points for dyadic radii
    /// `r = 2^-k` down to a few grid spacings. Ball masses are computed with a
    /// fine product rule, so the check is itself approximate at the finest radius.
    pub fn verify_mass_density(&self, grid_res: usize) -> Result<MassDensityReport> {
        let params = self
            .mass_density
            .ok_or_else(|| Error::InvalidArgument("measure declares no mass-density parameters".into()))?;
        let dim = self.domain.model().manifold_dim();
        let fine_per_dir = match dim {
            1 => 4096,
            2 => 256,
            _ => 48,
        };
        let fine = self.rule(fine_per_dir, 0);
        let centers = self.domain.grid(grid_res);
        let spacing = self.domain.diameter() / grid_res as f64;
        let mut radii = Vec::new();
        let mut r = 0.5;
        while r >= 2.0 * spacing.max(8.0 * self.domain.diameter() / fine_per_dir as f64) {
            radii.push(r);
            r *= 0.5;
        }
        let mut min_ratio = f64::INFINITY;
        for x in &centers {
            for &r in &radii {
                let ball: f64 = fine
                    .nodes
                    .iter()
                    .zip(&fine.weights)
                    .filter(|(y, _)| self.domain.distance(x, y) < r)
                    .map(|(_, w)| *w)
                    .sum();
                min_ratio = min_ratio.min(ball / (params.c * r.powf(params.rho)));
            }
        }
        Ok(MassDensityReport {
            min_ratio,
            holds: min_ratio >= 1.0,
            radii,
        })
    }
}
