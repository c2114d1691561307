//! Scoring-matrix update: ADMM over `(Y, V, Λ)` under `YᵀY = I`, `Yᵀ1 = 0`.
//!
//! The quadratic fusion term `tr(YᵀCY)` is majorized at the previous iterate
//! `Q` by a function linear in `Y`, which turns the `Y` step into an
//! orthogonal Procrustes problem `max tr(YᵀD)`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::fusion::{FusionGraph, Quadratic};
use crate::group_lasso::group_soft_threshold;
use crate::linalg::{numerical_rank, thin_svd, Matrix, Vector};
use crate::problem::VMode;

const COMPLEMENT_TOL: f64 = 1e-8;

/// ADMM state of the scoring block. Row `l` of `v` and `lambda` belongs to
/// edge `l` of the fusion graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringState {
    pub y: Matrix,
    pub v: Matrix,
    pub lambda: Matrix,
    /// Previous `Y`; the point where the fusion quadratic is majorized.
    pub q: Matrix,
    pub inner_objective: Vec<f64>,
    /// `max_l |v_l - y_i + y_j|` after the last multiplier update.
    pub primal_residual: f64,
}

impl ScoringState {
    /// `V` set to the current differences `y_i - y_j`, `Λ = 0`, `Q = Y`.
    pub fn new(y: Matrix, graph: &FusionGraph) -> Result<Self> {
        if y.nrows() != graph.n {
            return dim_err(format!("Y has {} rows, graph has {} nodes", y.nrows(), graph.n));
        }
        let d = y.ncols();
        let m = graph.len();
        let mut v = Matrix::zeros(m, d);
        for (l, e) in graph.edges.iter().enumerate() {
            for c in 0..d {
                v[(l, c)] = y[(e.i, c)] - y[(e.j, c)];
            }
        }
        Ok(ScoringState {
            q: y.clone(),
            y,
            v,
            lambda: Matrix::zeros(m, d),
            inner_objective: Vec::new(),
            primal_residual: 0.0,
        })
    }

    fn check(&self, graph: &FusionGraph) -> Result<()> {
        let m = graph.len();
        if self.v.nrows() != m || self.lambda.nrows() != m {
            return Err(Error::Contract(format!(
                "V/Λ have {}/{} rows but the graph has {m} edges",
                self.v.nrows(),
                self.lambda.nrows()
            )));
        }
        if self.y.nrows() != graph.n || self.q.shape() != self.y.shape() {
            return Err(Error::Contract("Y/Q shape does not match the graph".into()));
        }
        Ok(())
    }
}

/// Procrustes target `D = ½(W + Σ g_l λ_lᵀ + ρ Σ g_l v_lᵀ + 2(ωI − C)Q)`.
pub fn assemble_d(
    w: &Matrix,
    state: &ScoringState,
    graph: &FusionGraph,
    quad: &Quadratic,
) -> Result<Matrix> {
    state.check(graph)?;
    if w.shape() != state.y.shape() {
        return dim_err(format!("W is {:?}, Y is {:?}", w.shape(), state.y.shape()));
    }
    let d = w.ncols();
    let rho = quad.rho;
    let mut acc = w.clone();
    for (l, e) in graph.edges.iter().enumerate() {
        for c in 0..d {
            let t = state.lambda[(l, c)] + rho * state.v[(l, c)];
            acc[(e.i, c)] += t;
            acc[(e.j, c)] -= t;
        }
    }
    let cq = quad.apply(graph, &state.q);
    acc += (&state.q * quad.omega - cq) * 2.0;
    Ok(acc * 0.5)
}

/// Result of a Procrustes solve.
#[derive(Debug, Clone)]
pub struct Procrustes {
    pub y: Matrix,
    /// Set when `D` was rank deficient and the missing directions were filled
    /// from the fallback basis.
    pub repaired: bool,
}

/// `argmax tr(YᵀD)` over column-orthonormal `Y`, i.e. `Y = L Rᵀ` from the thin
/// SVD of `D`.
///
/// When `D` is rank deficient the left vectors of the deficient directions
/// are replaced by columns of `fallback`, centered and re-orthonormalized
/// against the retained ones.
pub fn orthogonal_procrustes(d: &Matrix, fallback: &Matrix) -> Result<Procrustes> {
    let n = d.nrows();
    let ones = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    procrustes_core(d, fallback, Some(&ones))
}

/// Householder reflection `H` with `H 1/sqrt(n) = e_1`. Rows `1..n` of `H A`
/// are the coordinates of `A` in an orthonormal basis of the complement of `1`.
struct CenteringReflector {
    u: Vector,
}

impl CenteringReflector {
    fn new(n: usize) -> Self {
        let mut u = Vector::from_element(n, 1.0 / (n as f64).sqrt());
        u[0] -= 1.0;
        let norm = u.norm();
        CenteringReflector { u: u / norm }
    }

    fn apply(&self, a: &Matrix) -> Matrix {
        let ut_a = self.u.transpose() * a;
        a - (&self.u * ut_a) * 2.0
    }
}

/// Procrustes restricted to matrices with `Yᵀ1 = 0`: the problem is solved in
/// coordinates of the complement of `1`, so the result is centered to
/// rounding error whatever the conditioning of `D`.
pub fn centered_procrustes(d: &Matrix, fallback: &Matrix) -> Result<Procrustes> {
    let (n, k) = d.shape();
    if n < 2 || k + 1 > n {
        return Err(Error::Degenerate(format!(
            "no {k}-dimensional centered orthonormal matrix exists for n = {n}"
        )));
    }
    if fallback.nrows() != n {
        return dim_err(format!("fallback has {} rows, expected {n}", fallback.nrows()));
    }
    let h = CenteringReflector::new(n);
    let reduced = h.apply(d).rows(1, n - 1).into_owned();
    let reduced_fallback = h.apply(fallback).rows(1, n - 1).into_owned();
    let sol = procrustes_core(&reduced, &reduced_fallback, None)?;
    let mut lifted = Matrix::zeros(n, k);
    lifted.rows_mut(1, n - 1).copy_from(&sol.y);
    Ok(Procrustes { y: h.apply(&lifted), repaired: sol.repaired })
}

fn procrustes_core(d: &Matrix, fallback: &Matrix, avoid: Option<&Vector>) -> Result<Procrustes> {
    let (n, k) = d.shape();
    let (l, s, r) = thin_svd(d)?;
    let rank = numerical_rank(&s);
    if rank == k {
        return Ok(Procrustes { y: l * r.transpose(), repaired: false });
    }
    let mut basis: Vec<Vector> = (0..rank).map(|c| l.column(c).into_owned()).collect();

    let fallback_cols = (rank..k).chain(0..rank).filter(|&c| c < fallback.ncols());
    let candidates = fallback_cols
        .map(|c| fallback.column(c).into_owned())
        .chain((0..n).map(|i| {
            let mut e = Vector::zeros(n);
            e[i] = 1.0;
            e
        }));
    for mut cand in candidates {
        if basis.len() == k {
            break;
        }
        // Two passes of Gram-Schmidt against the avoided direction and the
        // retained basis.
        for _ in 0..2 {
            if let Some(a_vec) = avoid {
                let a = a_vec.dot(&cand);
                cand.axpy(-a, a_vec, 1.0);
            }
            for b in &basis {
                let a = b.dot(&cand);
                cand.axpy(-a, b, 1.0);
            }
        }
        let norm = cand.norm();
        if norm > COMPLEMENT_TOL {
            basis.push(cand / norm);
        }
    }
    if basis.len() < k {
        return Err(Error::Degenerate(format!(
            "no {k}-dimensional orthonormal completion exists for n = {n}"
        )));
    }
    let lfull = Matrix::from_columns(&basis);
    Ok(Procrustes { y: lfull * r.transpose(), repaired: true })
}

/// Procrustes step on `D`; the new `Y` also becomes the next majorization point.
pub fn update_y(state: &mut ScoringState, d: &Matrix) -> Result<bool> {
    let sol = centered_procrustes(d, &state.q)?;
    state.y = sol.y;
    state.q = state.y.clone();
    Ok(sol.repaired)
}

/// Right-hand side of the majorization
/// `tr(YᵀCY) <= 2ωd − 2 tr(Yᵀ(ωI − C)Q) − tr(QᵀCQ)` for orthonormal `Y`, `Q`.
pub fn majorizer_value(y: &Matrix, q: &Matrix, c: &Matrix, omega: f64) -> f64 {
    let d = y.ncols() as f64;
    let shifted = q * omega - c * q;
    let cross = y.dot(&shifted);
    let qcq = q.dot(&(c * q));
    2.0 * omega * d - 2.0 * cross - qcq
}

fn edge_diff(y: &Matrix, i: usize, j: usize, c: usize) -> f64 {
    y[(i, c)] - y[(j, c)]
}

/// Fusion-difference update, edge by edge, with `q_l = y_i − y_j − λ_l/ρ` and
/// `ψ_l = γα_l/ρ`.
pub fn update_v(state: &mut ScoringState, graph: &FusionGraph, gamma: f64, rho: f64, mode: VMode) {
    let d = state.y.ncols();
    let mut q = vec![0.0; d];
    let mut cur = vec![0.0; d];
    for (l, e) in graph.edges.iter().enumerate() {
        let psi = gamma * graph.alpha[l] / rho;
        for c in 0..d {
            q[c] = edge_diff(&state.y, e.i, e.j, c) - state.lambda[(l, c)] / rho;
            cur[c] = state.v[(l, c)];
        }
        let next = update_edge(&cur, &q, psi, mode);
        for (c, &x) in next.iter().enumerate() {
            state.v[(l, c)] = x;
        }
    }
}

/// Single-edge form of [`update_v`].
pub fn update_edge(v: &[f64], q: &[f64], psi: f64, mode: VMode) -> Vec<f64> {
    match mode {
        VMode::Paper => {
            let s: Vec<f64> = v.iter().zip(q).map(|(vi, qi)| vi - psi * (vi - qi)).collect();
            group_soft_threshold(&s, psi)
        }
        VMode::Exact => group_soft_threshold(q, psi),
    }
}

/// Per-edge subproblem `½|v − q|² + ψ|v|`.
pub fn edge_objective(v: &[f64], q: &[f64], psi: f64) -> f64 {
    let fit: f64 = v.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    0.5 * fit + psi * norm
}

/// Dual ascent `λ_l += ρ(v_l − y_i + y_j)`. Returns the largest primal residual norm.
pub fn update_lambda(state: &mut ScoringState, graph: &FusionGraph, rho: f64) -> f64 {
    let d = state.y.ncols();
    let mut worst = 0.0_f64;
    for (l, e) in graph.edges.iter().enumerate() {
        let mut sq = 0.0;
        for c in 0..d {
            let r = state.v[(l, c)] - edge_diff(&state.y, e.i, e.j, c);
            state.lambda[(l, c)] += rho * r;
            sq += r * r;
        }
        worst = worst.max(sq.sqrt());
    }
    state.primal_residual = worst;
    worst
}

/// Terms of the augmented Lagrangian that involve `Y`:
/// `½|Y − W|² + Σ λ_lᵀ(v_l − y_i + y_j) + (ρ/2) Σ |v_l − y_i + y_j|²`.
pub fn y_terms(w: &Matrix, state: &ScoringState, graph: &FusionGraph, rho: f64) -> f64 {
    let d = state.y.ncols();
    let mut total = 0.5 * (&state.y - w).norm_squared();
    for (l, e) in graph.edges.iter().enumerate() {
        let mut sq = 0.0;
        for c in 0..d {
            let r = state.v[(l, c)] - edge_diff(&state.y, e.i, e.j, c);
            total += state.lambda[(l, c)] * r;
            sq += r * r;
        }
        total += 0.5 * rho * sq;
    }
    total
}

/// Augmented Lagrangian restricted to the scoring block (the `B` terms are
/// constant during the inner loop and left out).
pub fn augmented_lagrangian(
    w: &Matrix,
    state: &ScoringState,
    graph: &FusionGraph,
    gamma: f64,
    rho: f64,
) -> f64 {
    let fusion: f64 = state
        .v
        .row_iter()
        .zip(&graph.alpha)
        .map(|(v, a)| a * v.norm())
        .sum();
    y_terms(w, state, graph, rho) + gamma * fusion
}

#[derive(Debug, Clone, Copy)]
pub struct InnerSettings {
    pub gamma: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub max_inner: usize,
    pub v_mode: VMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerReport {
    pub iterations: usize,
    pub converged: bool,
    pub repaired_updates: usize,
    pub primal_residual: f64,
}

/// Inner ADMM loop: `Y` (majorize + Procrustes), then `V`, then `Λ`, until
/// the augmented Lagrangian moves by less than `epsilon`.
pub fn inner_admm(
    w: &Matrix,
    state: &mut ScoringState,
    graph: &FusionGraph,
    quad: &Quadratic,
    settings: InnerSettings,
) -> Result<InnerReport> {
    state.check(graph)?;
    let mut report = InnerReport::default();
    let mut prev = augmented_lagrangian(w, state, graph, settings.gamma, settings.rho);
    for t in 1..=settings.max_inner {
        let d = assemble_d(w, state, graph, quad)?;
        if update_y(state, &d)? {
            report.repaired_updates += 1;
        }
        update_v(state, graph, settings.gamma, settings.rho, settings.v_mode);
        update_lambda(state, graph, settings.rho);
        let cur = augmented_lagrangian(w, state, graph, settings.gamma, settings.rho);
        state.inner_objective.push(cur);
        report.iterations = t;
        if (prev - cur).abs() < settings.epsilon {
            report.converged = true;
            break;
        }
        prev = cur;
    }
    report.primal_residual = state.primal_residual;
    Ok(report)
}

/// Leading `d` left singular vectors of the centered data: column-orthonormal
/// and mean-zero whenever `Xc` has rank `>= d`.
pub fn initial_scores(xc: &Matrix, d: usize) -> Result<Matrix> {
    let n = xc.nrows();
    if d == 0 || d >= n {
        return dim_err(format!("need 1 <= d < n, got d = {d}, n = {n}"));
    }
    // thin_svd needs rows >= cols, so wide data goes through its transpose.
    let (l, s) = if xc.ncols() >= n {
        let (_lt, s, rt) = thin_svd(&xc.transpose())?;
        (rt, s)
    } else {
        let (l, s, _r) = thin_svd(xc)?;
        (l, s)
    };
    let rank = numerical_rank(&s);
    let mut target = Matrix::zeros(n, d);
    for c in 0..d.min(rank) {
        target.set_column(c, &l.column(c));
    }
    let fallback = Matrix::from_fn(n, d, |i, c| if i == c + 1 { 1.0 } else { 0.0 });
    Ok(centered_procrustes(&target, &fallback)?.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{build_quadratic, compute_weights, Edge};
    use crate::linalg::Vector;
    use crate::linalg::{center_columns, centering_defect, max_abs, orthonormality_defect};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
        Matrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
        gaussian(rng, n, d).qr().q()
    }

    fn centered_orthonormal(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
        center_columns(&gaussian(rng, n, d)).unwrap().qr().q()
    }

    fn setup(seed: u64, n: usize, d: usize) -> (Matrix, FusionGraph, Quadratic, ScoringState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, n, 3);
        let graph = compute_weights(&x, 0.1, 4.min(n - 1)).unwrap();
        let quad = build_quadratic(&graph, 0.5).unwrap();
        let y = centered_orthonormal(&mut rng, n, d);
        let mut state = ScoringState::new(y, &graph).unwrap();
        state.lambda = gaussian(&mut rng, graph.len(), d) * 0.1;
        state.v += gaussian(&mut rng, graph.len(), d) * 0.05;
        let w = center_columns(&gaussian(&mut rng, n, d)).unwrap();
        (w, graph, quad, state)
    }

    #[test]
    fn d_without_edges_is_a_shifted_fit_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = FusionGraph::empty(6);
        let quad = build_quadratic(&g, 1.0).unwrap();
        let q = centered_orthonormal(&mut rng, 6, 2);
        let w = gaussian(&mut rng, 6, 2);
        let state = ScoringState::new(q.clone(), &g).unwrap();
        let d = assemble_d(&w, &state, &g, &quad).unwrap();
        let expected = (&w + &q * (2.0 * quad.omega)) * 0.5;
        assert!(max_abs(&(d - expected)) < 1e-15);
    }

    #[test]
    fn single_edge_contribution() {
        // lambda = 0 and v = y0 - y1: the edge terms put rho (y0 - y1) on row 0
        // and its negative on row 1, while (omega I - C) Q contributes the rest.
        let y = Matrix::from_row_slice(3, 1, &[0.7, -0.2, -0.5]);
        let g = FusionGraph { n: 3, edges: vec![Edge { i: 0, j: 1 }], alpha: vec![1.0], tau: 0.0, delta: 1 };
        let rho = 0.4;
        let quad = build_quadratic(&g, rho).unwrap();
        let state = ScoringState::new(y.clone(), &g).unwrap();
        let w = Matrix::zeros(3, 1);
        let d = assemble_d(&w, &state, &g, &quad).unwrap();
        let edge_part = rho * (0.7 - -0.2);
        let cq = &quad.c * &y;
        let shift = (&y * quad.omega - cq) * 2.0;
        assert_abs_diff_eq!(d[(0, 0)], 0.5 * (edge_part + shift[(0, 0)]), epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 0)], 0.5 * (-edge_part + shift[(1, 0)]), epsilon = 1e-15);
        assert_abs_diff_eq!(d[(2, 0)], 0.5 * shift[(2, 0)], epsilon = 1e-15);
    }

    #[test]
    fn d_inherits_zero_column_sums() {
        for seed in 0..20 {
            let (w, g, quad, state) = setup(seed, 15, 2);
            let d = assemble_d(&w, &state, &g, &quad).unwrap();
            assert!(centering_defect(&d) < 1e-8);
        }
    }

    #[test]
    fn misaligned_state_is_rejected() {
        let (w, g, quad, mut state) = setup(3, 10, 2);
        state.v = Matrix::zeros(g.len() + 1, 2);
        assert!(matches!(assemble_d(&w, &state, &g, &quad), Err(Error::Contract(_))));
    }

    #[test]
    fn procrustes_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_orthonormal(&mut rng, 7, 3);
        let p = orthogonal_procrustes(&d, &d).unwrap();
        assert!(max_abs(&(p.y - &d)) < 1e-12);

        let d = Matrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let p = orthogonal_procrustes(&d, &d).unwrap();
        let expected = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(max_abs(&(p.y - expected)) < 1e-12);
    }

    #[test]
    fn procrustes_beats_random_competitors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = gaussian(&mut rng, 9, 3);
        let y = orthogonal_procrustes(&d, &d).unwrap().y;
        let best = y.dot(&d);
        for _ in 0..1000 {
            let p = random_orthonormal(&mut rng, 9, 3);
            assert!(p.dot(&d) <= best + 1e-12);
        }
    }

    #[test]
    fn rank_deficient_target_is_repaired() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = centered_orthonormal(&mut rng, 8, 3);
        // Rank one, centered.
        let u = center_columns(&gaussian(&mut rng, 8, 1)).unwrap();
        let d = &u * Matrix::from_row_slice(1, 3, &[1.0, 2.0, -1.0]);
        let p = orthogonal_procrustes(&d, &q).unwrap();
        assert!(p.repaired);
        assert!(orthonormality_defect(&p.y) < 1e-10);
        assert!(centering_defect(&p.y) < 1e-10);

        let zero = orthogonal_procrustes(&Matrix::zeros(8, 3), &q).unwrap();
        assert!(zero.repaired);
        assert!(orthonormality_defect(&zero.y) < 1e-10);
    }

    #[test]
    fn centered_procrustes_survives_ill_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = centered_orthonormal(&mut rng, 40, 2);
        let d = &u * Matrix::from_diagonal(&Vector::from_vec(vec![1e9, 1e-2]));
        let q = centered_orthonormal(&mut rng, 40, 2);
        let p = centered_procrustes(&d, &q).unwrap();
        assert!(centering_defect(&p.y) < 1e-12);
        assert!(orthonormality_defect(&p.y) < 1e-12);
        // On a centered target it agrees with the unconstrained solution.
        let d = center_columns(&gaussian(&mut rng, 40, 2)).unwrap();
        let a = centered_procrustes(&d, &q).unwrap().y;
        let b = orthogonal_procrustes(&d, &q).unwrap().y;
        assert!(max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn majorizer_touches_and_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (_, _, quad, _) = setup(8, 12, 2);
        for _ in 0..200 {
            let y = random_orthonormal(&mut rng, 12, 2);
            let q = random_orthonormal(&mut rng, 12, 2);
            let f = y.dot(&(&quad.c * &y));
            assert!(f <= majorizer_value(&y, &q, &quad.c, quad.omega) + 1e-12);
            let fq = q.dot(&(&quad.c * &q));
            assert_abs_diff_eq!(majorizer_value(&q, &q, &quad.c, quad.omega), fq, epsilon = 1e-12);
        }
        let y = random_orthonormal(&mut rng, 5, 2);
        let q = random_orthonormal(&mut rng, 5, 2);
        let zero = Matrix::zeros(5, 5);
        let v = majorizer_value(&y, &q, &zero, crate::fusion::OMEGA_FLOOR);
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn v_update_examples() {
        let out = update_edge(&[1.0, 0.0], &[3.0, 0.0], 0.5, VMode::Paper);
        assert_abs_diff_eq!(out[0], 1.5, epsilon = 1e-15);
        let out = update_edge(&[1.0, 0.0], &[3.0, 0.0], 0.5, VMode::Exact);
        assert_abs_diff_eq!(out[0], 2.5, epsilon = 1e-15);
        // |s| <= psi collapses to zero.
        assert_eq!(update_edge(&[0.1, 0.0], &[0.1, 0.0], 0.5, VMode::Paper), vec![0.0, 0.0]);
        // psi = 0.
        assert_eq!(update_edge(&[1.0, 2.0], &[3.0, -1.0], 0.0, VMode::Paper), vec![1.0, 2.0]);
        assert_eq!(update_edge(&[1.0, 2.0], &[3.0, -1.0], 0.0, VMode::Exact), vec![3.0, -1.0]);
    }

    #[test]
    fn lambda_update_examples() {
        let g = FusionGraph { n: 2, edges: vec![Edge { i: 0, j: 1 }], alpha: vec![1.0], tau: 0.0, delta: 1 };
        let y = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let mut state = ScoringState::new(y, &g).unwrap();
        // v = y0 - y1 exactly: no change.
        update_lambda(&mut state, &g, 0.1);
        assert_eq!(state.lambda, Matrix::zeros(1, 2));
        state.v = Matrix::zeros(1, 2);
        let r = update_lambda(&mut state, &g, 0.1);
        assert_abs_diff_eq!(state.lambda[(0, 0)], -0.1, epsilon = 1e-15);
        assert_eq!(state.lambda[(0, 1)], 0.0);
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-15);
        update_lambda(&mut state, &g, 0.1);
        assert_abs_diff_eq!(state.lambda[(0, 0)], -0.2, epsilon = 1e-15);
    }

    #[test]
    fn y_step_descends_through_the_surrogate() {
        for seed in 0..30 {
            let (w, g, quad, mut state) = setup(100 + seed, 14, 2);
            let before = y_terms(&w, &state, &g, quad.rho);
            let d = assemble_d(&w, &state, &g, &quad).unwrap();
            update_y(&mut state, &d).unwrap();
            let after = y_terms(&w, &state, &g, quad.rho);
            assert!(after <= before + 1e-9, "seed {seed}: {after} > {before}");
            assert!(centering_defect(&state.y) < 1e-10);
        }
    }

    #[test]
    fn inner_loop_without_edges_is_one_procrustes_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = FusionGraph::empty(10);
        let quad = build_quadratic(&g, 0.1).unwrap();
        let w = center_columns(&gaussian(&mut rng, 10, 2)).unwrap();
        let y0 = centered_orthonormal(&mut rng, 10, 2);
        let mut state = ScoringState::new(y0, &g).unwrap();
        let settings = InnerSettings { gamma: 0.0, rho: 0.1, epsilon: 1e-9, max_inner: 50, v_mode: VMode::Paper };
        let rep = inner_admm(&w, &mut state, &g, &quad, settings).unwrap();
        assert!(rep.converged && rep.iterations <= 2);
        let direct = orthogonal_procrustes(&w, &w).unwrap().y;
        assert!(max_abs(&(&state.y - direct)) < 1e-9);
    }

    #[test]
    fn inner_loop_keeps_constraints() {
        for (seed, mode) in [(1, VMode::Paper), (2, VMode::Exact), (3, VMode::Paper)] {
            let (w, g, quad, mut state) = setup(seed, 20, 3);
            let settings = InnerSettings { gamma: 0.2, rho: 0.5, epsilon: 1e-8, max_inner: 300, v_mode: mode };
            inner_admm(&w, &mut state, &g, &quad, settings).unwrap();
            assert!(orthonormality_defect(&state.y) <= 1e-8);
            assert!(centering_defect(&state.y) <= 1e-8);
        }
    }

    #[test]
    fn initial_scores_are_centered_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for (n, p) in [(12, 4), (6, 10), (8, 8)] {
            let xc = center_columns(&gaussian(&mut rng, n, p)).unwrap();
            let y = initial_scores(&xc, 3).unwrap();
            assert!(orthonormality_defect(&y) < 1e-10);
            assert!(centering_defect(&y) < 1e-10);
        }
        // Rank-one data still yields a valid start.
        let col = center_columns(&gaussian(&mut rng, 9, 1)).unwrap();
        let xc = Matrix::from_fn(9, 4, |i, j| col[(i, 0)] * (j + 1) as f64);
        let y = initial_scores(&xc, 2).unwrap();
        assert!(orthonormality_defect(&y) < 1e-10);
        assert!(centering_defect(&y) < 1e-10);
    }
}
