//! Dense least squares via Householder QR with column pivoting.
//!
//! Design matrices in this crate are tall and skinny (a few thousand rows,
//! rarely more than six columns), so the factorization works column by column
//! on owned copies and makes no attempt at blocking.

/// Failure of the pivoted factorization: the column (in original order) whose
/// pivot fell below the relative tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RankDeficiency {
    pub column: usize,
    pub pivot: f64,
    pub largest_pivot: f64,
}

/// Relative pivot tolerance for the rank check.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// Solve `min ||X b - y||` where `columns[j]` is the j-th column of X.
///
/// Column pivoting picks the remaining column with the largest residual norm
/// at each step; the factorization is rejected as soon as a pivot drops below
/// `RANK_TOL` times the first (largest) pivot.
pub(crate) fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>, RankDeficiency> {
    let p = columns.len();
    let n = y.len();
    debug_assert!(columns.iter().all(|c| c.len() == n));

    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut rhs = y.to_vec();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut rdiag = vec![0.0; p];
    let mut largest = 0.0_f64;

    for k in 0..p {
        // Pivot: remaining column with the largest trailing norm.
        let mut best = k;
        let mut best_norm = -1.0;
        for (j, col) in a.iter().enumerate().skip(k) {
            let norm: f64 = col[k..].iter().map(|v| v * v).sum();
            if norm > best_norm {
                best_norm = norm;
                best = j;
            }
        }
        a.swap(k, best);
        perm.swap(k, best);

        let norm = best_norm.sqrt();
        if k == 0 {
            largest = norm;
        }
        if norm == 0.0 || norm <= RANK_TOL * largest {
            return Err(RankDeficiency {
                column: perm[k],
                pivot: norm,
                largest_pivot: largest,
            });
        }

        let x0 = a[k][k];
        let alpha = if x0 > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        rdiag[k] = alpha;

        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k + 1) {
                reflect(&v, vnorm2, &mut col[k..]);
            }
            reflect(&v, vnorm2, &mut rhs[k..]);
        }
    }

    // Back substitution on R b = Q'y, then undo the permutation.
    let mut b_perm = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for (j, bj) in b_perm.iter().enumerate().skip(i + 1) {
            s -= a[j][i] * bj;
        }
        b_perm[i] = s / rdiag[i];
    }
    let mut beta = vec![0.0; p];
    for (k, &orig) in perm.iter().enumerate() {
        beta[orig] = b_perm[k];
    }
    Ok(beta)
}

fn reflect(v: &[f64], vnorm2: f64, target: &mut [f64]) {
    let s: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * s / vnorm2;
    for (t, vi) in target.iter_mut().zip(v) {
        *t -= f * vi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_system() {
        // y = 1 + 2x
        let cols = vec![vec![1.0; 4], vec![0.0, 1.0, 2.0, 3.0]];
        let y = vec![1.0, 3.0, 5.0, 7.0];
        let b = least_squares(&cols, &y).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!((b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_rejected() {
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let cols = vec![vec![1.0; 4], x.clone(), x.iter().map(|v| 2.0 * v).collect()];
        let err = least_squares(&cols, &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert!(err.column == 1 || err.column == 2);
    }

    #[test]
    fn pivoting_returns_original_order() {
        // Large-scale second column gets pivoted first.
        let cols = vec![vec![1.0; 5], vec![100.0, 200.0, 300.0, 400.0, 501.0]];
        let y: Vec<f64> = cols[1].iter().map(|x| 3.0 - 0.5 * x).collect();
        let b = least_squares(&cols, &y).unwrap();
        assert!((b[0] - 3.0).abs() < 1e-9);
        assert!((b[1] + 0.5).abs() < 1e-12);
    }
}
