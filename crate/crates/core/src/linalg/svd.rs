//! Singular values and numerical rank.
//!
//! `singular_values` reduces the matrix to upper bidiagonal form with
//! Householder reflections and then runs implicit-shift Golub–Kahan QR sweeps
//! on the bidiagonal. Only values are computed; no singular vectors are
//! accumulated.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Default relative threshold for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// QR sweeps allowed per singular value before giving up.
pub const MAX_SWEEPS_PER_VALUE: usize = 75;

/// Singular values of `m` in nonincreasing order; `min(rows, cols)` of them.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if !m.is_finite() {
        return Err(Error::Numeric("singular_values: non-finite entry".into()));
    }
    // work on the tall orientation
    let work = if m.rows() >= m.cols() {
        m.clone()
    } else {
        m.transpose()
    };
    let (diag, sup) = bidiagonalize(work);
    let mut values = bidiagonal_singular_values(diag, sup)?;
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Count of singular values strictly above `rel_tol · σ_max`.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    Ok(rank_from_values(&singular_values(m)?, rel_tol))
}

/// Rank of a nonincreasing singular-value list at a relative threshold.
pub fn rank_from_values(values: &[f64], rel_tol: f64) -> usize {
    let sigma_max = values.first().copied().unwrap_or(0.0);
    if sigma_max <= 0.0 {
        return 0;
    }
    let cutoff = rel_tol * sigma_max;
    values.iter().filter(|&&s| s > cutoff).count()
}

/// Singular values of the product `left · right` without forming it.
///
/// With `left = Q₁R₁` and `rightᵀ = Q₂R₂`, the product equals
/// `Q₁ (R₁R₂ᵀ) Q₂ᵀ`, so its nonzero singular values are those of the small
/// `k×k` core. The result is padded with zeros to `min(rows, cols)` entries.
/// Falls back to the dense route when the inner dimension is not the smallest.
pub fn product_singular_values(left: &Matrix, right: &Matrix) -> Result<Vec<f64>> {
    if left.cols() != right.rows() {
        return Err(Error::Shape {
            op: "product_singular_values",
            lhs: left.shape(),
            rhs: right.shape(),
        });
    }
    let k = left.cols();
    let (m, n) = (left.rows(), right.cols());
    if k >= m || k >= n {
        return singular_values(&left.matmul(right)?);
    }
    let r_left = householder_r(left.clone());
    let r_right = householder_r(right.transpose());
    let core = r_left.matmul_t(&r_right)?;
    let mut values = singular_values(&core)?;
    values.resize(m.min(n), 0.0);
    Ok(values)
}

struct Reflector {
    v: Vec<f64>,
    tau: f64,
    beta: f64,
}

/// Householder vector mapping `x` onto `beta·e₁`.
fn reflector(x: &[f64]) -> Reflector {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Reflector {
            v: vec![0.0; x.len()],
            tau: 0.0,
            beta: 0.0,
        };
    }
    let beta = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= beta;
    let vtv: f64 = v.iter().map(|a| a * a).sum();
    let tau = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
    Reflector { v, tau, beta }
}

/// Applies `I − τvvᵀ` from the left to rows `r0..` and columns `c0..`.
fn apply_left(a: &mut Matrix, r0: usize, c0: usize, h: &Reflector) {
    if h.tau == 0.0 {
        return;
    }
    let cols = a.cols();
    let mut w = vec![0.0; cols - c0];
    for (i, &vi) in h.v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let row = &a.row(r0 + i)[c0..];
        for (wj, &x) in w.iter_mut().zip(row) {
            *wj += vi * x;
        }
    }
    for (i, &vi) in h.v.iter().enumerate() {
        let f = h.tau * vi;
        if f == 0.0 {
            continue;
        }
        let row = &mut a.row_mut(r0 + i)[c0..];
        for (x, &wj) in row.iter_mut().zip(&w) {
            *x -= f * wj;
        }
    }
}

/// Applies `I − τvvᵀ` from the right to rows `r0..` and columns `c0..`.
fn apply_right(a: &mut Matrix, r0: usize, c0: usize, h: &Reflector) {
    if h.tau == 0.0 {
        return;
    }
    for i in r0..a.rows() {
        let row = &mut a.row_mut(i)[c0..];
        let d: f64 = row.iter().zip(&h.v).map(|(x, v)| x * v).sum();
        let f = h.tau * d;
        for (x, &v) in row.iter_mut().zip(&h.v) {
            *x -= f * v;
        }
    }
}

fn column_segment(a: &Matrix, col: usize, r0: usize) -> Vec<f64> {
    (r0..a.rows()).map(|i| a.get(i, col)).collect()
}

/// Upper-triangular `R` (cols×cols) from a Householder QR of a tall matrix.
fn householder_r(mut a: Matrix) -> Matrix {
    let n = a.cols();
    debug_assert!(a.rows() >= n);
    for k in 0..n {
        let h = reflector(&column_segment(&a, k, k));
        apply_left(&mut a, k, k, &h);
        a.set(k, k, h.beta);
        for i in k + 1..a.rows() {
            a.set(i, k, 0.0);
        }
    }
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r.set(i, j, a.get(i, j));
        }
    }
    r
}

/// Reduces a tall matrix to upper bidiagonal form: (diagonal, superdiagonal).
fn bidiagonalize(mut a: Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.cols();
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n.saturating_sub(1)];
    for k in 0..n {
        let h = reflector(&column_segment(&a, k, k));
        apply_left(&mut a, k, k, &h);
        diag[k] = h.beta;
        if k + 1 < n {
            let g = reflector(&a.row(k)[k + 1..]);
            apply_right(&mut a, k, k + 1, &g);
            sup[k] = g.beta;
        }
    }
    (diag, sup)
}

/// Returns `(c, s, r)` with `c·f + s·g = r` and `−s·f + c·g = 0`.
fn givens(f: f64, g: f64) -> (f64, f64, f64) {
    if g == 0.0 {
        return (1.0, 0.0, f);
    }
    let r = f.hypot(g);
    (f / r, g / r, r)
}

/// Singular values (unsorted, nonnegative) of the bidiagonal `(d, e)`.
fn bidiagonal_singular_values(mut d: Vec<f64>, mut e: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    if n == 0 {
        return Ok(d);
    }
    let eps = f64::EPSILON;
    let norm = d
        .iter()
        .chain(e.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let small = eps * norm;
    let max_iter = MAX_SWEEPS_PER_VALUE * n;
    let mut iter = 0;
    let mut hi = n - 1;

    while hi > 0 {
        // negligible couplings and diagonal entries
        for i in 0..hi {
            if e[i].abs() <= eps * (d[i].abs() + d[i + 1].abs()) || e[i].abs() <= small {
                e[i] = 0.0;
            }
        }
        for v in d.iter_mut().take(hi + 1) {
            if v.abs() <= small {
                *v = 0.0;
            }
        }
        if e[hi - 1] == 0.0 {
            hi -= 1;
            continue;
        }
        let mut lo = hi - 1;
        while lo > 0 && e[lo - 1] != 0.0 {
            lo -= 1;
        }

        iter += 1;
        if iter > max_iter {
            return Err(Error::Numeric(format!(
                "bidiagonal QR did not converge within {max_iter} sweeps"
            )));
        }

        if let Some(z) = (lo..hi).find(|&i| d[i] == 0.0) {
            chase_row(&mut d, &mut e, z, hi);
            continue;
        }
        if d[hi] == 0.0 {
            chase_column(&mut d, &mut e, lo, hi);
            continue;
        }
        golub_kahan_step(&mut d, &mut e, lo, hi);
    }
    Ok(d.into_iter().map(f64::abs).collect())
}

/// Zero diagonal at `z < hi`: rotate row `z` against the rows below to clear `e[z]`.
fn chase_row(d: &mut [f64], e: &mut [f64], z: usize, hi: usize) {
    let mut f = e[z];
    e[z] = 0.0;
    for j in z + 1..=hi {
        let (c, s, r) = givens(d[j], f);
        d[j] = r;
        if j < hi {
            f = -s * e[j];
            e[j] *= c;
        }
    }
}

/// Zero diagonal at `hi`: rotate column `hi` against the columns to its left.
fn chase_column(d: &mut [f64], e: &mut [f64], lo: usize, hi: usize) {
    let mut f = e[hi - 1];
    e[hi - 1] = 0.0;
    for j in (lo..hi).rev() {
        let (c, s, r) = givens(d[j], f);
        d[j] = r;
        if j > lo {
            f = -s * e[j - 1];
            e[j - 1] *= c;
        }
    }
}

/// One implicit Wilkinson-shifted QR sweep on the unreduced block `lo..=hi`.
fn golub_kahan_step(d: &mut [f64], e: &mut [f64], lo: usize, hi: usize) {
    // trailing 2x2 of BᵀB
    let t11 = d[hi - 1] * d[hi - 1] + if hi - 1 > lo { e[hi - 2] * e[hi - 2] } else { 0.0 };
    let t12 = d[hi - 1] * e[hi - 1];
    let t22 = d[hi] * d[hi] + e[hi - 1] * e[hi - 1];
    let delta = 0.5 * (t11 - t22);
    let mu = if t12 == 0.0 {
        t22
    } else {
        let sign = if delta >= 0.0 { 1.0 } else { -1.0 };
        t22 - t12 * t12 / (delta + sign * delta.hypot(t12))
    };

    let mut y = d[lo] * d[lo] - mu;
    let mut z = d[lo] * e[lo];
    for k in lo..hi {
        // right rotation on columns k, k+1
        let (c, s, r) = givens(y, z);
        if k > lo {
            e[k - 1] = r;
        }
        let (dk, ek, dk1) = (d[k], e[k], d[k + 1]);
        d[k] = c * dk + s * ek;
        e[k] = -s * dk + c * ek;
        let bulge = s * dk1;
        d[k + 1] = c * dk1;

        // left rotation on rows k, k+1
        let (c, s, r) = givens(d[k], bulge);
        d[k] = r;
        let (ek, dk1) = (e[k], d[k + 1]);
        e[k] = c * ek + s * dk1;
        d[k + 1] = -s * ek + c * dk1;
        if k + 1 < hi {
            y = e[k];
            z = s * e[k + 1];
            e[k + 1] *= c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RngStream;

    /// det(M) by partial-pivot LU; test-only oracle.
    fn lu_det(m: &Matrix) -> f64 {
        let n = m.rows();
        let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
        let mut det = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            if a[p][k] == 0.0 {
                return 0.0;
            }
            if p != k {
                a.swap(p, k);
                det = -det;
            }
            det *= a[k][k];
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        det
    }

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(singular_values(&Matrix::identity(3)).unwrap(), vec![1.0; 3]);
        let d = singular_values(&Matrix::diag(&[3.0, 2.0, 0.0])).unwrap();
        assert_eq!(d, vec![3.0, 2.0, 0.0]);
        let d = singular_values(&Matrix::diag(&[-1.0, 5.0, 2.0])).unwrap();
        assert_eq!(d, vec![5.0, 2.0, 1.0]);
    }

    #[test]
    fn product_of_squares_matches_gram_determinant() {
        let mut rng = RngStream::new(17);
        let m = Matrix::gaussian(6, 4, &mut rng);
        let s = singular_values(&m).unwrap();
        assert_eq!(s.len(), 4);
        let prod: f64 = s.iter().map(|v| v * v).product();
        let det = lu_det(&m.t_matmul(&m).unwrap());
        assert!(((prod - det) / det).abs() < 1e-8, "{prod} vs {det}");
    }

    #[test]
    fn wide_and_tall_agree() {
        let m = Matrix::gaussian(5, 9, &mut RngStream::new(3));
        let a = singular_values(&m).unwrap();
        let b = singular_values(&m.transpose()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&Matrix::zeros(4, 4), DEFAULT_RANK_TOL).unwrap(), 0);
        let u = Matrix::from_rows(&[[1.0], [2.0], [-1.0]]).unwrap();
        let v = Matrix::from_rows(&[[0.5, 3.0, 1.0, 2.0]]).unwrap();
        assert_eq!(numerical_rank(&u.matmul(&v).unwrap(), DEFAULT_RANK_TOL).unwrap(), 1);
        let mut rng = RngStream::new(8);
        let b = Matrix::gaussian(64, 8, &mut rng);
        let a = Matrix::gaussian(8, 64, &mut rng);
        assert_eq!(numerical_rank(&b.matmul(&a).unwrap(), DEFAULT_RANK_TOL).unwrap(), 8);
    }

    #[test]
    fn repeated_and_clustered_values() {
        // rank-deficient with repeated singular values
        let mut rng = RngStream::new(21);
        let q = Matrix::gaussian(10, 10, &mut rng);
        let diag = Matrix::diag(&[2.0, 2.0, 2.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let m = q.matmul(&diag).unwrap();
        assert_eq!(numerical_rank(&m, DEFAULT_RANK_TOL).unwrap(), 5);
    }

    #[test]
    fn product_route_matches_dense() {
        let mut rng = RngStream::new(4);
        let l = Matrix::gaussian(40, 6, &mut rng);
        let r = Matrix::gaussian(6, 30, &mut rng);
        let fast = product_singular_values(&l, &r).unwrap();
        let dense = singular_values(&l.matmul(&r).unwrap()).unwrap();
        assert_eq!(fast.len(), dense.len());
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-10 * dense[0], "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_non_finite() {
        let m = Matrix::from_rows(&[[f64::NAN, 1.0]]).unwrap();
        assert!(matches!(singular_values(&m), Err(Error::Numeric(_))));
    }
}
