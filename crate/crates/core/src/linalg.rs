//! Dense linear-algebra primitives shared by every solver stage.
//!
//! The centering operator `H_n = I - 11ᵀ/n` is never formed; it is applied as
//! column-mean subtraction. Decompositions are backed by `nalgebra` and
//! re-packaged with the ordering and shape guarantees the solvers rely on.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dim_err, Error, Result};

/// Dense real matrix, column-major storage.
pub type Matrix = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Relative threshold under which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Up to this size the top eigenvalue is taken from a full symmetric eigendecomposition.
pub const EXACT_EIGEN_MAX_DIM: usize = 64;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 5000;
const SYMMETRY_TOL: f64 = 1e-8;

pub fn ensure_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains non-finite entries")))
    }
}

/// Returns `H_n X`: every column shifted to zero mean.
pub fn center_columns(x: &Matrix) -> Result<Matrix> {
    let n = x.nrows();
    if n < 2 {
        return dim_err(format!("centering needs at least 2 rows, got {n}"));
    }
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    Ok(out)
}

/// Thin singular value decomposition `A = L diag(sigma) Rᵀ` of an `n x d`
/// matrix with `d <= n`.
///
/// `L` is `n x d` with orthonormal columns, `R` is `d x d` orthogonal and the
/// singular values come back sorted in non-increasing order.
pub fn thin_svd(a: &Matrix) -> Result<(Matrix, Vector, Matrix)> {
    let (n, d) = a.shape();
    if d == 0 || n == 0 {
        return dim_err("thin_svd of an empty matrix");
    }
    if d > n {
        return dim_err(format!("thin_svd expects d <= n, got {n}x{d}"));
    }
    ensure_finite(a, "thin_svd input")?;
    let svd = a.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numeric("SVD did not return left vectors".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD did not return right vectors".into()))?;
    let sigma = svd.singular_values;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let mut l = Matrix::zeros(n, d);
    let mut r = Matrix::zeros(d, d);
    let mut s = Vector::zeros(d);
    for (dst, &src) in order.iter().enumerate() {
        l.set_column(dst, &u.column(src));
        r.set_column(dst, &v_t.row(src).transpose());
        s[dst] = sigma[src].max(0.0);
    }
    Ok((l, s, r))
}

/// Numerical rank of a sorted singular-value vector under [`RANK_TOL`].
pub fn numerical_rank(sigma: &Vector) -> usize {
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn top_eigenvalue_sym(c: &Matrix) -> Result<f64> {
    let (n, m) = c.shape();
    if n != m {
        return dim_err(format!("expected a square matrix, got {n}x{m}"));
    }
    if n == 0 {
        return dim_err("empty matrix");
    }
    ensure_finite(c, "eigenvalue input")?;
    let asym = max_asymmetry(c);
    if asym > SYMMETRY_TOL {
        return Err(Error::Contract(format!(
            "matrix is not symmetric (max |C - Cᵀ| = {asym:e})"
        )));
    }
    let top = if n <= EXACT_EIGEN_MAX_DIM {
        SymmetricEigen::new(c.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        power_iteration(c)
    };
    Ok(top.max(0.0))
}

fn max_asymmetry(c: &Matrix) -> f64 {
    let n = c.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    worst
}

fn power_iteration(c: &Matrix) -> f64 {
    let n = c.nrows();
    // Deterministic start with no exact symmetry so that no eigenvector is missed.
    let golden = 0.618_033_988_749_895_f64;
    let mut v = Vector::from_fn(n, |i, _| 1.0 + ((i as f64 + 1.0) * golden).fract());
    v /= v.norm();
    let mut theta = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = c * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        let done = (next - theta).abs() <= POWER_TOL * next.abs().max(1.0);
        theta = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient at the final iterate.
    v.dot(&(c * &v))
}

/// Largest absolute entry.
pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `max |AᵀA - I|`, the orthonormality defect of the columns of `a`.
pub fn orthonormality_defect(a: &Matrix) -> f64 {
    let gram = a.transpose() * a;
    max_abs(&(gram - Matrix::identity(a.ncols(), a.ncols())))
}

/// `max |Aᵀ1|`, the centering defect of the columns of `a`.
pub fn centering_defect(a: &Matrix) -> f64 {
    a.column_iter().fold(0.0_f64, |m, c| m.max(c.sum().abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lcg_matrix(n: usize, d: usize, mut state: u64) -> Matrix {
        Matrix::from_fn(n, d, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn centering_examples() {
        let x = Matrix::from_column_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 2.0, 3.0]);
        let c = center_columns(&x).unwrap();
        assert_eq!(c.column(0).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(c.column(1).as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn centering_is_idempotent() {
        let x = lcg_matrix(17, 5, 7);
        let once = center_columns(&x).unwrap();
        let twice = center_columns(&once).unwrap();
        assert!(max_abs(&(once.clone() - twice)) < 1e-14);
        assert!(centering_defect(&once) <= 1e-10 * 17.0);
    }

    #[test]
    fn centering_rejects_single_row() {
        let x = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(center_columns(&x), Err(Error::Dimension(_))));
    }

    #[test]
    fn svd_of_padded_diagonal() {
        let a = Matrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let (l, s, r) = thin_svd(&a).unwrap();
        assert_abs_diff_eq!(s[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[1], 2.0, epsilon = 1e-14);
        let back = &l * Matrix::from_diagonal(&s) * r.transpose();
        assert!(max_abs(&(back - a)) < 1e-14);
    }

    #[test]
    fn svd_of_isometry_has_unit_values() {
        let (q, _, _) = thin_svd(&lcg_matrix(8, 3, 3)).unwrap();
        let (_, s, _) = thin_svd(&q).unwrap();
        for v in s.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        let a = lcg_matrix(10, 2, 11);
        let (l, s, r) = thin_svd(&a).unwrap();
        let back = &l * Matrix::from_diagonal(&s) * r.transpose();
        assert!((back - &a).norm() / a.norm() < 1e-9);
        assert!(orthonormality_defect(&l) < 1e-10);
        assert!(orthonormality_defect(&r) < 1e-10);
        assert!(s[0] >= s[1] && s[1] >= 0.0);
    }

    #[test]
    fn svd_rejects_non_finite_and_wide() {
        let mut a = lcg_matrix(4, 2, 1);
        a[(0, 0)] = f64::NAN;
        assert!(matches!(thin_svd(&a), Err(Error::Numeric(_))));
        assert!(matches!(thin_svd(&lcg_matrix(2, 3, 1)), Err(Error::Dimension(_))));
    }

    fn complete_laplacian(n: usize, scale: f64) -> Matrix {
        Matrix::from_fn(n, n, |i, j| {
            if i == j {
                scale * (n - 1) as f64
            } else {
                -scale
            }
        })
    }

    #[test]
    fn top_eigenvalue_examples() {
        assert_abs_diff_eq!(
            top_eigenvalue_sym(&Matrix::identity(3, 3)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(top_eigenvalue_sym(&Matrix::zeros(4, 4)).unwrap(), 0.0);
        // (rho/2) * Laplacian(K_5) has spectrum {0, (rho/2)*5 (x4)}.
        let rho = 0.3;
        let c = complete_laplacian(5, rho / 2.0);
        assert_abs_diff_eq!(top_eigenvalue_sym(&c).unwrap(), rho / 2.0 * 5.0, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_matches_exact_on_large_laplacian() {
        let n = 80;
        let c = complete_laplacian(n, 0.5);
        let top = top_eigenvalue_sym(&c).unwrap();
        assert_abs_diff_eq!(top, 0.5 * n as f64, epsilon = 1e-6);
    }

    #[test]
    fn top_eigenvalue_rejects_asymmetric() {
        let mut c = Matrix::identity(3, 3);
        c[(0, 1)] = 1e-3;
        assert!(matches!(top_eigenvalue_sym(&c), Err(Error::Contract(_))));
    }

    #[test]
    fn top_eigenvalue_dominates_rayleigh_quotients() {
        let a = lcg_matrix(12, 12, 5);
        let c = &a * a.transpose();
        let top = top_eigenvalue_sym(&c).unwrap();
        for seed in 0..100 {
            let v = lcg_matrix(12, 1, 1000 + seed);
            let v = &v / v.norm();
            let rq = (v.transpose() * &c * &v)[(0, 0)];
            assert!(rq <= top + 1e-10);
        }
    }
}
