//! Gauss–Legendre nodes and normalized product rules.

use crate::domain::Point;

/// Nodes and weights of a rule for the normalized uniform measure on a region.
/// Weights sum to one.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// How Gram-type integrals are discretized.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadratureSpec {
    /// Product rule exact for polynomial integrands of the required degree, with
    /// `extra_nodes` added per direction to resolve non-polynomial factors.
    Product { extra_nodes: usize },
    /// Plain Monte-Carlo over `samples` points drawn from the base measure.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::Product { extra_nodes: 24 }
    }
}

impl QuadratureSpec {
    pub fn label(&self) -> String {
        match self {
            QuadratureSpec::Product { extra_nodes } => format!("product+{extra_nodes}"),
            QuadratureSpec::MonteCarlo { samples, seed } => format!("mc:{samples}:{seed}"),
        }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m > 0, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(m: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [a, b] with weights normalized to sum to one.
pub fn gauss_legendre_on(a: f64, b: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(m);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let nodes = x.iter().map(|t| mid + half * t).collect();
    let weights = w.iter().map(|v| 0.5 * v).collect();
    (nodes, weights)
}
