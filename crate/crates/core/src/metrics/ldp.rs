use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detcore::linear_fit;
use crate::error::{Error, Result};
use crate::io::fmt_f64;

use super::quantile;

/// Shrinking threshold `c q(p)^gamma` with `q(p) = p^(-delta/4)` when
/// `delta/4 < alpha''` and `p^(-alpha'') (log p)^(3 alpha'')` otherwise,
/// where `alpha'' = alpha / (24 + 12 alpha)` for the Hoelder exponent `alpha`
/// of `phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub gamma: f64,
    pub delta: f64,
    pub alpha: f64,
}

impl ThresholdRule {
    pub fn alpha2(&self) -> f64 {
        self.alpha / (24.0 + 12.0 * self.alpha)
    }

    pub fn q(&self, p: usize) -> f64 {
        let p = p as f64;
        let a2 = self.alpha2();
        if self.delta / 4.0 < a2 {
            p.powf(-self.delta / 4.0)
        } else {
            p.powf(-a2) * p.ln().powf(3.0 * a2)
        }
    }

    /// `gamma min(delta/4, alpha'')`, the decay exponent of `q^gamma` up to logarithms.
    pub fn target_exponent(&self) -> f64 {
        -self.gamma * (self.delta / 4.0).min(self.alpha2())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LdpRow {
    pub p: usize,
    pub samples: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub threshold: f64,
    pub exceedance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LdpFit {
    /// Slope of `log median` against `log p`.
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Threshold constant, anchored so the largest degree's median sits on the threshold.
    pub c: f64,
    pub rule: ThresholdRule,
    pub target_exponent: f64,
    pub rows: Vec<LdpRow>,
    /// `k` in `exceedance ~ exp(-C p^k)` when at least two exceedances lie in `(0, 1)`.
    pub tail_exponent: Option<f64>,
    /// Whether the exceedance fractions are non-increasing in `p`.
    pub exceedance_monotone: bool,
}

/// Fits the decay of sample distances in `p` and the exceedance of the
/// median-anchored threshold. Needs at least 4 degrees with 50 samples each.
pub fn ldp_fit(records: &[(usize, Vec<f64>)], rule: ThresholdRule) -> Result<LdpFit> {
    if records.len() < 4 {
        return Err(Error::InsufficientData(format!("{} degrees, need at least 4", records.len())));
    }
    let mut recs: Vec<(usize, Vec<f64>)> = records.to_vec();
    recs.sort_by_key(|r| r.0);
    for (p, d) in &recs {
        if d.len() < 50 {
            return Err(Error::InsufficientData(format!("{} samples at p = {p}, need at least 50", d.len())));
        }
        if *p < 2 {
            return Err(Error::InvalidArgument("degrees must be at least 2".into()));
        }
        if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!("non-finite or negative distance at p = {p}")));
        }
    }
    let sorted: Vec<(usize, Vec<f64>)> = recs
        .into_iter()
        .map(|(p, mut d)| {
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (p, d)
        })
        .collect();
    let medians: Vec<f64> = sorted.iter().map(|(_, d)| quantile(d, 0.5)).collect();
    if medians.iter().any(|m| *m <= 0.0) {
        return Err(Error::InvalidArgument("zero median distance".into()));
    }
    let lp: Vec<f64> = sorted.iter().map(|(p, _)| (*p as f64).ln()).collect();
    let lm: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let (intercept, exponent, stderr) =
        linear_fit(&lp, &lm).ok_or_else(|| Error::InsufficientData("degrees must be distinct".into()))?;
    let (p_max, _) = sorted[sorted.len() - 1];
    let c = medians[medians.len() - 1] / rule.q(p_max).powf(rule.gamma);
    let rows: Vec<LdpRow> = sorted
        .iter()
        .zip(&medians)
        .map(|((p, d), m)| {
            let threshold = c * rule.q(*p).powf(rule.gamma);
            LdpRow {
                p: *p,
                samples: d.len(),
                median: *m,
                q25: quantile(d, 0.25),
                q75: quantile(d, 0.75),
                threshold,
                exceedance: d.iter().filter(|v| **v > threshold).count() as f64 / d.len() as f64,
            }
        })
        .collect();
    let ps: Vec<usize> = rows.iter().map(|r| r.p).collect();
    let ex: Vec<f64> = rows.iter().map(|r| r.exceedance).collect();
    Ok(LdpFit {
        exponent,
        stderr,
        intercept,
        c,
        rule,
        target_exponent: rule.target_exponent(),
        exceedance_monotone: ex.windows(2).all(|w| w[1] <= w[0]),
        tail_exponent: fit_tail_exponent(&ps, &ex),
        rows,
    })
}

/// Slope `k` of `log(-log E)` against `log p`, so that `E ~ exp(-C p^k)`.
/// Only exceedances strictly between 0 and 1 enter the fit.
pub fn fit_tail_exponent(ps: &[usize], exceedance: &[f64]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = ps
        .iter()
        .zip(exceedance)
        .filter(|(_, e)| **e > 0.0 && **e < 1.0)
        .map(|(p, e)| ((*p as f64).ln(), (-e.ln()).ln()))
        .unzip();
    linear_fit(&x, &y).map(|f| f.1)
}

/// `p,samples,median_dist,q25,q75,threshold,exceedance_fraction` rows.
pub fn write_ldp_csv<W: Write>(fit: &LdpFit, header: &str, mut w: W) -> Result<()> {
    if !header.is_empty() {
        writeln!(w, "# {header}")?;
    }
    writeln!(w, "p,samples,median_dist,q25,q75,threshold,exceedance_fraction")?;
    for r in &fit.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.p,
            r.samples,
            fmt_f64(r.median),
            fmt_f64(r.q25),
            fmt_f64(r.q75),
            fmt_f64(r.threshold),
            fmt_f64(r.exceedance)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const RULE: ThresholdRule = ThresholdRule {
        gamma: 1.0,
        delta: 0.5,
        alpha: 1.0,
    };

    #[test]
    fn exact_power_law_regression() {
        let recs: Vec<(usize, Vec<f64>)> = [4usize, 8, 16, 32].iter().map(|&p| (p, vec![(p as f64).powf(-0.5); 50])).collect();
        let f = ldp_fit(&recs, RULE).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-6);
        assert!(f.stderr < 1e-10);
    }

    #[test]
    fn synthetic_tail_exponent() {
        let ps = [2usize, 3, 4, 5];
        let e: Vec<f64> = ps.iter().map(|&p| (-((p * p) as f64) / 8.0).exp()).collect();
        let k = fit_tail_exponent(&ps, &e).unwrap();
        assert!((k - 2.0).abs() < 1e-9, "{k}");
    }

    #[test]
    fn threshold_branches() {
        let small = ThresholdRule { gamma: 1.0, delta: 0.1, alpha: 1.0 };
        assert!(small.delta / 4.0 < small.alpha2());
        assert!((small.q(16) - 16f64.powf(-0.025)).abs() < 1e-15);
        let a2 = RULE.alpha2();
        assert!((a2 - 1.0 / 36.0).abs() < 1e-15);
        assert!((RULE.q(16) - 16f64.powf(-a2) * 16f64.ln().powf(3.0 * a2)).abs() < 1e-15);
    }

    #[test]
    fn exceedance_decreases_for_fast_decay() {
        // distances decaying like 1/p with spread: threshold decays more slowly
        let recs: Vec<(usize, Vec<f64>)> = [4usize, 8, 16, 32]
            .iter()
            .map(|&p| (p, (0..60).map(|k| (1.0 + k as f64 / 30.0) / p as f64).collect()))
            .collect();
        let f = ldp_fit(&recs, RULE).unwrap();
        assert!(f.exponent < -0.9);
        assert!(f.exceedance_monotone);
        assert!((f.rows[3].exceedance - 0.5).abs() < 0.02);
        let mut buf = Vec::new();
        write_ldp_csv(&f, "h", &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }

    #[test]
    fn insufficient_data() {
        let three: Vec<(usize, Vec<f64>)> = [4usize, 8, 16].iter().map(|&p| (p, vec![1.0; 50])).collect();
        assert!(matches!(ldp_fit(&three, RULE), Err(Error::InsufficientData(_))));
        let short: Vec<(usize, Vec<f64>)> = [4usize, 8, 16, 32].iter().map(|&p| (p, vec![1.0; 49])).collect();
        assert!(matches!(ldp_fit(&short, RULE), Err(Error::InsufficientData(_))));
    }
}
