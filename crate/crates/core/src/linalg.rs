//! Small dense linear algebra: singular values by one-sided Jacobi
//! rotations, and LU solves for Newton steps.

use nalgebra::{DMatrix, DVector};

const MAX_SWEEPS: usize = 60;

/// Singular values of `a` in descending order, by one-sided (Hestenes)
/// Jacobi rotations. Accurate to a few ulps relative to the largest
/// singular value for the small matrices used here.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut work = if a.nrows() >= a.ncols() {
        a.clone()
    } else {
        a.transpose()
    };
    let cols = work.ncols();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = {
                    let cp = work.column(p);
                    let cq = work.column(q);
                    (cp.dot(&cp), cq.dot(&cq), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..work.nrows() {
                    let (ap, aq) = (work[(r, p)], work[(r, q)]);
                    work[(r, p)] = c * ap - s * aq;
                    work[(r, q)] = s * ap + c * aq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..cols).map(|j| work.column(j).norm()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Extreme singular values `(sigma_min, sigma_max)`.
pub fn singular_value_range(a: &DMatrix<f64>) -> (f64, f64) {
    let sv = singular_values(a);
    match (sv.last(), sv.first()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    }
}

/// Numerical rank: singular values above `rel_tol * sigma_max` (and above zero).
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let cutoff = sv.first().copied().unwrap_or(0.0) * rel_tol;
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

/// Solves `a x = b` by LU with partial pivoting; `None` when a pivot vanishes.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}

/// Max-norm of a vector.
pub fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -5.0, 0.5]));
        let sv = singular_values(&a);
        assert_eq!(sv, vec![5.0, 3.0, 0.5]);
    }

    #[test]
    fn matches_nalgebra_svd_on_dense_matrices() {
        let a = DMatrix::from_fn(5, 4, |i, j| {
            ((i * 7 + j * 3) % 11) as f64 - 4.5 + 0.1 * (i as f64)
        });
        let mut oracle: Vec<f64> = a
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        let ours = singular_values(&a);
        for (s, o) in ours.iter().zip(&oracle) {
            assert!((s - o).abs() <= 1e-13 * oracle[0], "{ours:?} vs {oracle:?}");
        }
        let wide = singular_values(&a.transpose());
        for (s, o) in wide.iter().zip(&oracle) {
            assert!((s - o).abs() <= 1e-13 * oracle[0]);
        }
    }

    #[test]
    fn rank_deficient() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 0.0, 1.0]);
        assert_eq!(rank(&a, 1e-12), 2);
        let (lo, hi) = singular_value_range(&a);
        assert!(lo < 1e-14 * hi);
    }

    #[test]
    fn zero_matrix() {
        assert_eq!(singular_values(&DMatrix::zeros(2, 2)), vec![0.0, 0.0]);
        assert_eq!(rank(&DMatrix::zeros(2, 2), 1e-12), 0);
    }

    #[test]
    fn lu_solve_detects_exact_singularity() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]);
        assert!(lu_solve(&a, &DVector::from_vec(vec![1.0, 1.0])).is_none());
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, -1.0]);
        let x = lu_solve(&b, &DVector::from_vec(vec![3.0, 0.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }
}
