//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use twofloat::TwoFloat;

/// Pivots below this fraction of the largest entry of `U` count as zero.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// `log|det m|` and the sign of the determinant from a partially pivoted LU
/// factorization. Numerically singular matrices give `(-inf, 0)`.
pub fn lu_logdet(m: DMatrix<f64>) -> (f64, f64) {
    let (ld, sign, _) = lu_logdet_inverse(m, false);
    (ld, sign)
}

/// Like [`lu_logdet`], optionally also returning the inverse.
pub fn lu_logdet_inverse(m: DMatrix<f64>, want_inverse: bool) -> (f64, f64, Option<DMatrix<f64>>) {
    assert!(m.is_square(), "determinant of a non-square matrix");
    let lu = m.lu();
    let u = lu.u();
    let mut logabs = 0.0;
    let mut sign: f64 = lu.p().determinant();
    let umax = u.amax();
    for k in 0..u.nrows() {
        let d = u[(k, k)];
        if d.abs() <= SINGULAR_RTOL * umax || !d.is_finite() {
            return (f64::NEG_INFINITY, 0.0, None);
        }
        logabs += d.abs().ln();
        if d < 0.0 {
            sign = -sign;
        }
    }
    let inv = if want_inverse { lu.try_inverse() } else { None };
    (logabs, sign, inv)
}

/// `log|det m|` and sign by partially pivoted LU in double-double arithmetic.
/// Only exactly zero pivots count as singular.
pub fn lu_logdet_dd(mut m: Vec<Vec<TwoFloat>>) -> (f64, f64) {
    let n = m.len();
    let mut sign = 1.0;
    let mut logabs = 0.0;
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&a, &b| m[a][k].abs().hi().total_cmp(&m[b][k].abs().hi()))
            .unwrap_or(k);
        if m[piv][k].hi() == 0.0 {
            return (f64::NEG_INFINITY, 0.0);
        }
        if piv != k {
            m.swap(piv, k);
            sign = -sign;
        }
        let (hi, lo) = (m[k][k].hi(), m[k][k].lo());
        logabs += hi.abs().ln() + lo / hi;
        if hi < 0.0 {
            sign = -sign;
        }
        let pivot = m[k][k];
        let (top, rest) = m.split_at_mut(k + 1);
        let prow = &top[k];
        for row in rest.iter_mut() {
            let f = dd_div(row[k], pivot);
            if f.hi() == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                row[j] -= f * prow[j];
            }
        }
    }
    (logabs, sign)
}

/// Double-double quotient by two correction steps of long division.
fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::from(q1) + q2 + q3
}

/// `||m||_1 ||m^{-1}||_1`.
pub fn condition_1(m: &DMatrix<f64>, inverse: &DMatrix<f64>) -> f64 {
    let norm1 = |a: &DMatrix<f64>| {
        (0..a.ncols())
            .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    norm1(m) * norm1(inverse)
}

/// Greedy volume-maximizing row selection (pivoted Gram–Schmidt on rows).
///
/// Returns `k` row indices; at each step the row with the largest residual
/// norm after projecting out the already selected rows is taken, ties going to
/// the lowest index. Also returns the residual norms at selection time.
pub fn greedy_select_rows(mat: &DMatrix<f64>, k: usize) -> (Vec<usize>, Vec<f64>) {
    let (m, n) = mat.shape();
    assert!(k <= m, "cannot select {k} rows out of {m}");
    let mut resid = mat.clone();
    let mut norms: Vec<f64> = (0..m).map(|i| resid.row(i).norm_squared()).collect();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; m];
    let mut pivots = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = None;
        let mut best_norm = -1.0;
        for i in 0..m {
            if !taken[i] && norms[i] > best_norm {
                best_norm = norms[i];
                best = Some(i);
            }
        }
        let b = best.expect("k <= m");
        taken[b] = true;
        chosen.push(b);
        let nb = best_norm.max(0.0).sqrt();
        pivots.push(nb);
        if nb == 0.0 {
            continue;
        }
        let q: Vec<f64> = (0..n).map(|j| resid[(b, j)] / nb).collect();
        for i in 0..m {
            if taken[i] {
                continue;
            }
            let dot: f64 = (0..n).map(|j| resid[(i, j)] * q[j]).sum();
            for j in 0..n {
                resid[(i, j)] -= dot * q[j];
            }
            norms[i] = resid.row(i).norm_squared();
        }
    }
    (chosen, pivots)
}

/// Numerical rank: number of singular values above `rtol * sigma_max`.
pub fn numerical_rank(mat: &DMatrix<f64>, rtol: f64) -> usize {
    let sv = mat.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > rtol * max).count()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_triangular_inverse(l: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::identity(n, n);
    if l.solve_lower_triangular_mut(&mut inv) {
        Some(inv)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_of_permuted_diagonal() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        let (ld, s) = lu_logdet(m);
        assert!((ld - 6f64.ln()).abs() < 1e-15);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn singular_gives_neg_infinity() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let (ld, s) = lu_logdet(m);
        assert_eq!(ld, f64::NEG_INFINITY);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn double_double_matches_f64_on_benign_matrices() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, -1.0, 3.0, 0.25, 0.0, 1.0, -4.0]);
        let rows = (0..3).map(|i| (0..3).map(|j| TwoFloat::from(m[(i, j)])).collect()).collect();
        let (ld, s) = lu_logdet_dd(rows);
        let (ld64, s64) = lu_logdet(m);
        assert!((ld - ld64).abs() < 1e-14);
        assert_eq!(s, s64);
    }

    #[test]
    fn double_double_division() {
        let q = dd_div(TwoFloat::from(1.0), TwoFloat::from(3.0));
        let r = q * 3.0 - TwoFloat::from(1.0);
        assert!(r.hi().abs() < 1e-31, "{r:?}");
    }

    #[test]
    fn double_double_resolves_near_coincident_rows() {
        // rows (1, x, x^2) at x = 0, 1, 1 + h: det = h (1 + h)
        let h = 1e-9;
        let rows: Vec<Vec<TwoFloat>> = [0.0, 1.0, 1.0 + h]
            .iter()
            .map(|&x: &f64| {
                let t = TwoFloat::from(x);
                vec![TwoFloat::from(1.0), t, t * t]
            })
            .collect();
        let hx = (1.0 + h) - 1.0;
        let (ld, s) = lu_logdet_dd(rows);
        assert!((ld - (hx * (1.0 + hx)).ln()).abs() < 1e-15);
        assert_eq!(s, 1.0);
        let dup = vec![vec![TwoFloat::from(1.0), TwoFloat::from(2.0)]; 2];
        assert_eq!(lu_logdet_dd(dup), (f64::NEG_INFINITY, 0.0));
    }

    #[test]
    fn greedy_prefers_lowest_index_on_ties() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let (rows, piv) = greedy_select_rows(&m, 2);
        assert_eq!(rows, vec![0, 2]);
        assert!((piv[1] - 1.0).abs() < 1e-15);
    }
}
