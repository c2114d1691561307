//! Coefficient update: proximal group-coordinate descent on the vectorized
//! regression `y* ≈ Z vec(B)` with a group-lasso penalty on the rows of `B`.
//!
//! Row `j` of `B` is the group `beta_j`. Each group step is a gradient step of
//! length `nu` on the smooth part followed by group soft-thresholding at
//! `nu * eta1`. The smooth part is `½|y* − Z vec(B)|²`, so fixed points of the
//! iteration minimize `½|Y − XcB|² + ½·eta2_stack·|B|² + eta1 Σ_j |beta_j|`
//! whatever the value of `nu`.

use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{Matrix, Vector};

/// Groups whose norm drops below this after shrinkage are snapped to zero.
pub const GROUP_ZERO_TOL: f64 = 1e-12;

/// Stacked regression design. `Z` is never materialized by the solver: the
/// block for variable `j` is column `j` of `Xc` repeated on the block diagonal
/// over the `d` components, over `sqrt(eta2) I` padding.
#[derive(Debug, Clone)]
pub struct StackedDesign {
    /// `(vec(Y)ᵀ, 0ᵀ)ᵀ`, length `(n + p) d`.
    pub y_star: Vector,
    xc: Matrix,
    sqrt_eta2: f64,
    col_sq_norms: Vec<f64>,
}

impl StackedDesign {
    pub fn n(&self) -> usize {
        self.xc.nrows()
    }

    pub fn p(&self) -> usize {
        self.xc.ncols()
    }

    /// Number of components `d = k - 1`.
    pub fn d(&self) -> usize {
        self.y_star.len() / (self.n() + self.p())
    }

    pub fn rows(&self) -> usize {
        self.y_star.len()
    }

    fn data_row(&self, c: usize, i: usize) -> usize {
        c * self.n() + i
    }

    fn pad_row(&self, c: usize, j: usize) -> usize {
        self.n() * self.d() + c * self.p() + j
    }

    /// Squared spectral norm of `Z_j` (`Z_jᵀZ_j` is a multiple of the identity).
    pub fn block_lipschitz(&self, j: usize) -> f64 {
        self.col_sq_norms[j] + self.sqrt_eta2 * self.sqrt_eta2
    }

    /// Explicit `Z_j`, shape `((n + p) d) x d`.
    pub fn block(&self, j: usize) -> Matrix {
        let d = self.d();
        let mut z = Matrix::zeros(self.rows(), d);
        for c in 0..d {
            for i in 0..self.n() {
                z[(self.data_row(c, i), c)] = self.xc[(i, j)];
            }
            z[(self.pad_row(c, j), c)] = self.sqrt_eta2;
        }
        z
    }

    /// Explicit `Z`, shape `((n + p) d) x (p d)`, columns ordered as `vec(B)`.
    pub fn dense(&self) -> Matrix {
        let (p, d) = (self.p(), self.d());
        let mut z = Matrix::zeros(self.rows(), p * d);
        for j in 0..p {
            let zj = self.block(j);
            for c in 0..d {
                z.set_column(c * p + j, &zj.column(c));
            }
        }
        z
    }

    /// `Z vec(B)`.
    pub fn apply(&self, b: &Matrix) -> Vector {
        let (n, d) = (self.n(), self.d());
        let fit = &self.xc * b;
        let mut out = Vector::zeros(self.rows());
        for c in 0..d {
            for i in 0..n {
                out[self.data_row(c, i)] = fit[(i, c)];
            }
            for j in 0..self.p() {
                out[self.pad_row(c, j)] = self.sqrt_eta2 * b[(j, c)];
            }
        }
        out
    }

    /// `Z_jᵀ e` for a residual `e` of length `(n + p) d`.
    fn block_t_mul(&self, j: usize, e: &Vector, out: &mut [f64]) {
        let n = self.n();
        for (c, slot) in out.iter_mut().enumerate() {
            let seg = e.rows(self.data_row(c, 0), n);
            *slot = self.xc.column(j).dot(&seg) + self.sqrt_eta2 * e[self.pad_row(c, j)];
        }
    }

    /// `e -= Z_j delta`.
    fn block_sub(&self, j: usize, delta: &[f64], e: &mut Vector) {
        let n = self.n();
        for (c, &dc) in delta.iter().enumerate() {
            if dc == 0.0 {
                continue;
            }
            let start = self.data_row(c, 0);
            for i in 0..n {
                e[start + i] -= self.xc[(i, j)] * dc;
            }
            let pr = self.pad_row(c, j);
            e[pr] -= self.sqrt_eta2 * dc;
        }
    }
}

/// Builds the stacked design from the scoring matrix `Y` (`n x d`) and the
/// column-centered data `Xc` (`n x p`).
pub fn build_stacked(y: &Matrix, xc: &Matrix, eta2: f64) -> Result<StackedDesign> {
    let (n, d) = y.shape();
    if xc.nrows() != n {
        return dim_err(format!("Y has {n} rows but Xc has {}", xc.nrows()));
    }
    if d == 0 || xc.ncols() == 0 {
        return dim_err("empty design");
    }
    if !(eta2.is_finite() && eta2 >= 0.0) {
        return param_err(format!("eta2 must be >= 0, got {eta2}"));
    }
    let p = xc.ncols();
    let mut y_star = Vector::zeros((n + p) * d);
    for c in 0..d {
        y_star.rows_mut(c * n, n).copy_from(&y.column(c));
    }
    let col_sq_norms = xc.column_iter().map(|c| c.norm_squared()).collect();
    Ok(StackedDesign { y_star, xc: xc.clone(), sqrt_eta2: eta2.sqrt(), col_sq_norms })
}

/// Group soft-thresholding: `0` if `|phi| <= t`, else `phi (1 - t/|phi|)`.
pub fn group_soft_threshold(phi: &[f64], t: f64) -> Vec<f64> {
    let norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        vec![0.0; phi.len()]
    } else {
        let scale = 1.0 - t / norm;
        phi.iter().map(|x| x * scale).collect()
    }
}

/// Coefficient matrix `B` (`p x d`); row `j` is the group of variable `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub b: Matrix,
}

impl Coefficients {
    pub fn new(b: Matrix) -> Self {
        Coefficients { b }
    }

    pub fn zeros(p: usize, d: usize) -> Self {
        Coefficients { b: Matrix::zeros(p, d) }
    }

    /// Indices of the nonzero groups.
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.b.nrows()).filter(|&j| self.b.row(j).norm() > 0.0).collect()
    }

    pub fn penalty(&self) -> f64 {
        self.b.row_iter().map(|r| r.norm()).sum()
    }
}

/// Settings of one coefficient update.
#[derive(Debug, Clone, Copy)]
pub struct BStep {
    pub eta1: f64,
    pub nu: f64,
    pub max_sweeps: usize,
    /// Stop once a sweep lowers the objective by less than this.
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct BUpdate {
    pub coefficients: Coefficients,
    pub sweeps: usize,
    /// Subproblem objective after each sweep.
    pub objective_trace: Vec<f64>,
    /// Step size actually used.
    pub nu: f64,
    /// Set when the requested step exceeded `1 / max_j |Z_j|²`.
    pub nu_clamped: bool,
}

/// `½|y* − Z vec(B)|² + eta1 Σ_j |beta_j|`.
pub fn subproblem_objective(design: &StackedDesign, b: &Matrix, eta1: f64) -> f64 {
    let e = &design.y_star - design.apply(b);
    0.5 * e.norm_squared() + eta1 * b.row_iter().map(|r| r.norm()).sum::<f64>()
}

/// Cyclic proximal group updates `j = 1..p`, repeated until a full sweep
/// changes the objective by less than `tol` or `max_sweeps` is reached.
pub fn update_b(state: &Coefficients, design: &StackedDesign, step: BStep) -> Result<BUpdate> {
    let (p, d) = (design.p(), design.d());
    if state.b.shape() != (p, d) {
        return dim_err(format!(
            "B is {:?} but the design expects {p}x{d}",
            state.b.shape()
        ));
    }
    if !(step.nu > 0.0 && step.nu.is_finite()) || !(step.eta1 >= 0.0 && step.eta1.is_finite()) {
        return param_err("nu must be > 0 and eta1 >= 0");
    }
    let max_lip = (0..p).map(|j| design.block_lipschitz(j)).fold(0.0_f64, f64::max);
    let (nu, nu_clamped) = if max_lip > 0.0 && step.nu > 1.0 / max_lip {
        (1.0 / max_lip, true)
    } else {
        (step.nu, false)
    };
    let threshold = nu * step.eta1;

    let mut b = state.b.clone();
    let mut resid = &design.y_star - design.apply(&b);
    let mut grad = vec![0.0; d];
    let mut phi = vec![0.0; d];
    let mut delta = vec![0.0; d];

    let mut prev = subproblem_objective(design, &b, step.eta1);
    let mut trace = Vec::new();
    let mut sweeps = 0;
    while sweeps < step.max_sweeps.max(1) {
        for j in 0..p {
            design.block_t_mul(j, &resid, &mut grad);
            for c in 0..d {
                phi[c] = b[(j, c)] + nu * grad[c];
            }
            if phi.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGroup { group: j });
            }
            let mut next = group_soft_threshold(&phi, threshold);
            if next.iter().map(|x| x * x).sum::<f64>().sqrt() < GROUP_ZERO_TOL {
                next.iter_mut().for_each(|x| *x = 0.0);
            }
            for c in 0..d {
                delta[c] = next[c] - b[(j, c)];
                b[(j, c)] = next[c];
            }
            design.block_sub(j, &delta, &mut resid);
        }
        sweeps += 1;
        let obj = 0.5 * resid.norm_squared()
            + step.eta1 * b.row_iter().map(|r| r.norm()).sum::<f64>();
        trace.push(obj);
        let change = (prev - obj).abs();
        prev = obj;
        if change < step.tol {
            break;
        }
    }
    Ok(BUpdate { coefficients: Coefficients { b }, sweeps, objective_trace: trace, nu, nu_clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{center_columns, max_abs};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pseudo(n: usize, d: usize, seed: u64) -> Matrix {
        let mut s = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        Matrix::from_fn(n, d, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(group_soft_threshold(&[0.3, 0.4], 0.5), vec![0.0, 0.0]);
        let out = group_soft_threshold(&[3.0, 4.0], 1.0);
        assert_abs_diff_eq!(out[0], 2.4, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 3.2, epsilon = 1e-15);
        assert_eq!(group_soft_threshold(&[3.0, -4.0], 0.0), vec![3.0, -4.0]);
    }

    #[test]
    fn stacked_shapes_and_identity() {
        let xc = center_columns(&pseudo(2, 1, 1)).unwrap();
        let y = pseudo(2, 2, 2);
        let s = build_stacked(&y, &xc, 0.0).unwrap();
        assert_eq!(s.rows(), 6);
        assert_eq!(s.block(0).shape(), (6, 2));

        let xc = center_columns(&pseudo(7, 4, 3)).unwrap();
        let y = pseudo(7, 3, 4);
        let s = build_stacked(&y, &xc, 0.3).unwrap();
        let b = pseudo(4, 3, 5);
        let vec_b = Vector::from_iterator(12, b.iter().cloned());
        let lhs = s.dense() * vec_b;
        let xb = &xc * &b;
        let mut rhs = Vector::zeros(s.rows());
        for c in 0..3 {
            for i in 0..7 {
                rhs[c * 7 + i] = xb[(i, c)];
            }
            for j in 0..4 {
                rhs[21 + c * 4 + j] = 0.3_f64.sqrt() * b[(j, c)];
            }
        }
        assert!((lhs - &rhs).norm() < 1e-10);
        assert!((s.apply(&b) - rhs).norm() < 1e-12);
        assert!(s.y_star.rows(21, 12).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn k2_design_is_the_data_itself() {
        let xc = center_columns(&pseudo(5, 3, 8)).unwrap();
        let y = pseudo(5, 1, 9);
        let s = build_stacked(&y, &xc, 0.0).unwrap();
        let z = s.dense();
        assert_eq!(z.rows(0, 5).into_owned(), xc);
        assert!(z.rows(5, 3).iter().all(|&v| v == 0.0));
        assert_eq!(s.y_star.rows(0, 5).into_owned(), y.column(0).into_owned());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(build_stacked(&pseudo(4, 2, 1), &pseudo(5, 2, 1), 0.0).is_err());
    }

    #[test]
    fn huge_penalty_zeroes_everything_in_one_sweep() {
        let xc = center_columns(&pseudo(10, 4, 1)).unwrap();
        let s = build_stacked(&pseudo(10, 2, 2), &xc, 0.0).unwrap();
        let up = update_b(
            &Coefficients::new(pseudo(4, 2, 3)),
            &s,
            BStep { eta1: 1e6, nu: 0.05, max_sweeps: 1, tol: 0.0 },
        )
        .unwrap();
        assert_eq!(up.sweeps, 1);
        assert!(up.coefficients.active_set().is_empty());
    }

    #[test]
    fn single_group_converges_to_least_squares() {
        let xc = center_columns(&pseudo(6, 1, 11)).unwrap();
        let y = pseudo(6, 1, 12);
        let s = build_stacked(&y, &xc, 0.0).unwrap();
        let up = update_b(
            &Coefficients::zeros(1, 1),
            &s,
            BStep { eta1: 0.0, nu: 1.0, max_sweeps: 10_000, tol: 1e-16 },
        )
        .unwrap();
        // Normal equations for a single column.
        let z = s.dense();
        let beta = (z.transpose() * &s.y_star)[0] / (z.transpose() * &z)[(0, 0)];
        assert_abs_diff_eq!(up.coefficients.b[(0, 0)], beta, epsilon = 1e-6);
    }

    #[test]
    fn step_is_clamped_to_block_lipschitz() {
        let xc = center_columns(&pseudo(8, 2, 1)).unwrap() * 10.0;
        let s = build_stacked(&pseudo(8, 1, 2), &xc, 0.0).unwrap();
        let up = update_b(
            &Coefficients::zeros(2, 1),
            &s,
            BStep { eta1: 0.1, nu: 1.0, max_sweeps: 3, tol: 0.0 },
        )
        .unwrap();
        assert!(up.nu_clamped);
        let lmax = s.block_lipschitz(0).max(s.block_lipschitz(1));
        assert_abs_diff_eq!(up.nu, 1.0 / lmax, epsilon = 1e-15);
    }

    #[test]
    fn converged_groups_satisfy_stationarity() {
        let xc = center_columns(&pseudo(12, 5, 21)).unwrap();
        let y = pseudo(12, 2, 22);
        let s = build_stacked(&y, &xc, 0.0).unwrap();
        let eta1 = 0.2;
        let lmax = (0..5).map(|j| s.block_lipschitz(j)).fold(0.0, f64::max);
        let nu = 1.0 / lmax;
        let up = update_b(
            &Coefficients::zeros(5, 2),
            &s,
            BStep { eta1, nu, max_sweeps: 200_000, tol: 1e-18 },
        )
        .unwrap();
        let b = &up.coefficients.b;
        let resid = &s.y_star - s.apply(b);
        for j in up.coefficients.active_set() {
            let zj = s.block(j);
            let beta = b.row(j).transpose();
            // phi computed with r_j - Z_j beta_j = full residual.
            let phi = &beta + (zj.transpose() * &resid) * nu;
            let lhs = &beta * (1.0 + nu * eta1 / beta.norm());
            assert!((lhs - phi).amax() < 1e-8);
        }
    }

    #[test]
    fn zero_is_fixed_above_the_critical_penalty() {
        let xc = center_columns(&pseudo(9, 4, 31)).unwrap();
        let s = build_stacked(&pseudo(9, 2, 32), &xc, 0.0).unwrap();
        let critical = (0..4)
            .map(|j| (s.block(j).transpose() * &s.y_star).norm())
            .fold(0.0, f64::max);
        let up = update_b(
            &Coefficients::zeros(4, 2),
            &s,
            BStep { eta1: critical * 1.001, nu: 0.01, max_sweeps: 5, tol: 0.0 },
        )
        .unwrap();
        assert_eq!(up.coefficients.b, Matrix::zeros(4, 2));
    }

    #[test]
    fn variable_order_does_not_change_the_optimum() {
        let x = pseudo(15, 4, 41);
        let xc = center_columns(&x).unwrap();
        let y = pseudo(15, 2, 42);
        let perm = [2, 0, 3, 1];
        let xcp = Matrix::from_fn(15, 4, |i, j| xc[(i, perm[j])]);
        let step = |s: &StackedDesign| {
            let lmax = (0..4).map(|j| s.block_lipschitz(j)).fold(0.0, f64::max);
            update_b(
                &Coefficients::zeros(4, 2),
                s,
                BStep { eta1: 0.3, nu: 1.0 / lmax, max_sweeps: 100_000, tol: 1e-16 },
            )
            .unwrap()
        };
        let a = step(&build_stacked(&y, &xc, 0.0).unwrap());
        let b = step(&build_stacked(&y, &xcp, 0.0).unwrap());
        let fa = *a.objective_trace.last().unwrap();
        let fb = *b.objective_trace.last().unwrap();
        assert_abs_diff_eq!(fa, fb, epsilon = 1e-8);
        let unperm = Matrix::from_fn(4, 2, |j, c| {
            let pos = perm.iter().position(|&q| q == j).unwrap();
            b.coefficients.b[(pos, c)]
        });
        assert!(max_abs(&(unperm - &a.coefficients.b)) < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn sweeps_never_increase_the_objective(seed in 0u64..10_000, eta1 in 0.0f64..2.0, eta2 in 0.0f64..1.0) {
            let xc = center_columns(&pseudo(10, 4, seed)).unwrap();
            let s = build_stacked(&pseudo(10, 2, seed + 1), &xc, eta2).unwrap();
            let start = Coefficients::new(pseudo(4, 2, seed + 2));
            let f0 = subproblem_objective(&s, &start.b, eta1);
            let up = update_b(&start, &s, BStep { eta1, nu: 10.0, max_sweeps: 25, tol: 0.0 }).unwrap();
            let mut prev = f0;
            for &f in &up.objective_trace {
                prop_assert!(f <= prev + 1e-10);
                prev = f;
            }
        }
    }
}
