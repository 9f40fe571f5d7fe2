//! Small dense helpers on row-major `k × k` slices and nalgebra matrices.

use nalgebra::{DMatrix, SymmetricEigen};

/// Symmetrize in place: `P ← (P + Pᵀ)/2`.
pub fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Symmetrize and clip the spectrum from below at `1e-12·trace/k`.
///
/// Matrices whose eigenvalues already clear the floor come back untouched
/// (up to symmetrization), so the map is idempotent on well-conditioned input.
pub fn stabilize(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = cov.clone();
    symmetrize(&mut p);
    let k = p.nrows();
    if k == 0 {
        return p;
    }
    let floor = (1e-12 * p.trace() / k as f64).max(0.0);
    let eig = SymmetricEigen::new(p.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return p;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

/// Cholesky factor `L` (lower) of a symmetric PSD matrix, tolerating zero
/// pivots: a pivot below `1e-12·a_jj` zeroes its column. Returns `None` if a
/// pivot is negative beyond rounding (`-1e-9·a_jj`) or a diagonal entry is
/// negative.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = vec![0.0; n * n];
    psd_factor(n, |i, j| a[(i, j)], &mut l).then(|| DMatrix::from_row_slice(n, n, &l))
}

/// [`psd_cholesky`] as a yes/no test on a packed upper triangle (row-major),
/// reusing `scratch` for the factor.
pub(crate) fn packed_is_psd(packed: &[f64], n: usize, scratch: &mut Vec<f64>) -> bool {
    scratch.clear();
    scratch.resize(n * n, 0.0);
    let at = |i: usize, j: usize| {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        packed[r * n - r * (r + 1) / 2 + c]
    };
    psd_factor(n, at, scratch)
}

/// Shared factorization; `l` is row-major `n × n`, zeroed on entry.
fn psd_factor(n: usize, a: impl Fn(usize, usize) -> f64, l: &mut [f64]) -> bool {
    for j in 0..n {
        let ajj = a(j, j);
        if ajj < 0.0 || !ajj.is_finite() {
            return false;
        }
        let lj = j * n;
        let d = ajj - l[lj..lj + j].iter().map(|v| v * v).sum::<f64>();
        if d < -1e-9 * ajj {
            return false;
        }
        let zero_pivot = d <= 1e-12 * ajj || d <= 0.0;
        let root = d.max(0.0).sqrt();
        if !zero_pivot {
            l[lj + j] = root;
        }
        for i in (j + 1)..n {
            let li = i * n;
            let s = a(i, j) - l[li..li + j].iter().zip(&l[lj..lj + j]).map(|(x, y)| x * y).sum::<f64>();
            if zero_pivot {
                // a zero pivot needs a zero residual column
                if s.abs() > 1e-6 * (ajj * a(i, i)).sqrt() + f64::MIN_POSITIVE {
                    return false;
                }
            } else {
                l[li + j] = s / root;
            }
        }
    }
    true
}

/// Cholesky of a covariance that should be positive definite, adding a
/// growing ridge until the factorization succeeds.
pub fn ridge_cholesky(a: &DMatrix<f64>, ridge: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let base = (a.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut extra = ridge.max(0.0);
    for _ in 0..20 {
        let m = a + DMatrix::<f64>::identity(n, n) * extra;
        if let Some(c) = m.clone().cholesky() {
            return Some(c.l());
        }
        extra = if extra == 0.0 { 1e-12 * base } else { extra * 10.0 };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stabilize_keeps_psd_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let s = stabilize(&a);
        assert!((s - a).abs().max() < 1e-12);
    }

    #[test]
    fn stabilize_clips_negative_eigenvalue() {
        // eigenvalues 1 and -1e-9
        let v = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let a = &v * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1e-9])) * v.transpose();
        let s = stabilize(&a);
        let min = SymmetricEigen::new(s).eigenvalues.min();
        assert!(min >= 0.0, "min eigenvalue {min}");
    }

    #[test]
    fn psd_cholesky_handles_singular() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 4.0]);
        let l = psd_cholesky(&a).unwrap();
        assert!((&l * l.transpose() - a).abs().max() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(psd_cholesky(&bad).is_none());
    }
}
