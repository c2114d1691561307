//! Outer alternating loop and the baselines built from the same pieces.
//!
//! One outer iteration updates `B` by group-coordinate descent with `Y`
//! fixed, then runs the scoring ADMM with `W = Xc B` fixed. The new `Y` is
//! accepted only if the full objective did not go up; otherwise the previous
//! `Y` is kept and the fit stops with [`FitStatus::Stalled`].

use std::time::Instant;

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::fusion::{build_quadratic, compute_weights, FusionGraph};
use crate::group_lasso::{build_stacked, update_b, BStep, Coefficients};
use crate::kmeans::{kmeans, CentroidSet};
use crate::linalg::{center_columns, thin_svd, Matrix};
use crate::problem::{BInit, ProblemInstance};
use crate::scoring::{
    centered_procrustes, initial_scores, inner_admm, InnerReport, InnerSettings, ScoringState,
};
use crate::seed;

/// Slack allowed before an objective increase counts as an increase.
pub const ACCEPT_SLACK: f64 = 1e-8;

const STREAM_B_INIT: u64 = 1;
const STREAM_KMEANS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rsodc,
    Sodc,
    Tandem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    /// The objective decrease fell below `epsilon`.
    Converged,
    /// `max_outer` was reached first.
    MaxIterations,
    /// A scoring update would have raised the objective and was rejected.
    Stalled,
}

/// Wall-clock seconds spent in each phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup: f64,
    pub b_update: f64,
    pub y_update: f64,
    pub kmeans: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    /// Coefficients, `p x (k-1)`.
    pub b_hat: Matrix,
    /// Scoring matrix, `n x (k-1)`.
    pub y_hat: Matrix,
    /// `Xc B_hat`, the data the clusters are read from.
    pub embedding: Matrix,
    /// Cluster of each subject, in `1..=k`.
    pub labels: Vec<usize>,
    pub centers: CentroidSet,
    /// Objective at the start and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    /// Inner iterations used by every outer iteration.
    pub inner_iters: Vec<usize>,
    pub b_sweeps: Vec<usize>,
    pub converged: bool,
    pub status: FitStatus,
    /// Number of scoring updates whose Procrustes target was rank deficient.
    pub repaired_updates: usize,
    pub graph_edges: usize,
    pub timings: Timings,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

fn fusion_penalty(y: &Matrix, graph: &FusionGraph) -> f64 {
    graph
        .edges
        .iter()
        .zip(&graph.alpha)
        .map(|(e, a)| a * (y.row(e.i) - y.row(e.j)).norm())
        .sum()
}

fn objective_centered(inst: &ProblemInstance, xc: &Matrix, b: &Matrix, y: &Matrix, graph: &FusionGraph) -> f64 {
    let p = &inst.params;
    let fit = 0.5 * (y - xc * b).norm_squared();
    let ridge = p.eta2 * b.norm_squared();
    let group: f64 = b.row_iter().map(|r| r.norm()).sum();
    let fusion = if p.gamma > 0.0 { fusion_penalty(y, graph) } else { 0.0 };
    fit + ridge + p.eta1 * group + p.gamma * fusion
}

/// `½|Y − Xc B|² + eta2 |B|² + eta1 Σ_j |beta_j| + gamma Σ_l alpha_l |y_i − y_j|`.
pub fn objective(inst: &ProblemInstance, b: &Matrix, y: &Matrix, graph: &FusionGraph) -> Result<f64> {
    let (n, p, d) = (inst.n(), inst.p(), inst.dim());
    if b.shape() != (p, d) || y.shape() != (n, d) {
        return dim_err(format!(
            "expected B {p}x{d} and Y {n}x{d}, got {:?} and {:?}",
            b.shape(),
            y.shape()
        ));
    }
    if graph.n != n {
        return dim_err(format!("graph has {} nodes, data has {n} rows", graph.n));
    }
    let xc = center_columns(&inst.data)?;
    Ok(objective_centered(inst, &xc, b, y, graph))
}

/// Fusion graph of the instance from its `tau` and (clamped) `delta`.
pub fn build_graph(inst: &ProblemInstance) -> Result<FusionGraph> {
    compute_weights(&inst.data, inst.params.tau, inst.effective_delta())
}

fn initial_b(inst: &ProblemInstance, seed_value: u64) -> Matrix {
    match inst.params.b_init {
        BInit::Zero => Matrix::zeros(inst.p(), inst.dim()),
        BInit::Gaussian => {
            let mut rng = seed::rng(seed::substream(seed_value, STREAM_B_INIT));
            Matrix::from_fn(inst.p(), inst.dim(), |_, _| rng.sample(StandardNormal))
        }
    }
}

enum ScoringStep<'a> {
    Admm { graph: &'a FusionGraph },
    Procrustes,
}

struct OuterOutput {
    b: Matrix,
    y: Matrix,
    trace: Vec<f64>,
    inner_iters: Vec<usize>,
    b_sweeps: Vec<usize>,
    status: FitStatus,
    repaired: usize,
    timings: Timings,
}

fn outer_loop(
    inst: &ProblemInstance,
    xc: &Matrix,
    step: ScoringStep<'_>,
    seed_value: u64,
) -> Result<OuterOutput> {
    let params = &inst.params;
    let d = inst.dim();
    let empty = FusionGraph::empty(inst.n());
    let graph = match step {
        ScoringStep::Admm { graph } => graph,
        ScoringStep::Procrustes => &empty,
    };
    let mut timings = Timings::default();
    let t0 = Instant::now();
    let quad = build_quadratic(graph, params.rho)?;
    let y0 = initial_scores(xc, d)?;
    let mut state = ScoringState::new(y0, graph)?;
    let mut coef = Coefficients::new(initial_b(inst, seed_value));
    let settings = InnerSettings {
        gamma: params.gamma,
        rho: params.rho,
        epsilon: params.epsilon,
        max_inner: params.max_inner,
        v_mode: params.v_mode,
    };
    let b_step = BStep { eta1: params.eta1, nu: params.nu, max_sweeps: params.max_b_sweeps, tol: params.epsilon };
    timings.setup = t0.elapsed().as_secs_f64();

    let mut trace = vec![objective_centered(inst, xc, &coef.b, &state.y, graph)];
    let mut inner_iters = Vec::new();
    let mut b_sweeps = Vec::new();
    let mut repaired = 0;
    let mut status = FitStatus::MaxIterations;

    for _ in 0..params.max_outer {
        let tb = Instant::now();
        // The stacked ridge enters as ½·(2 eta2)|B|², i.e. eta2 |B|².
        let design = build_stacked(&state.y, xc, 2.0 * params.eta2)?;
        let upd = update_b(&coef, &design, b_step)?;
        coef = upd.coefficients;
        b_sweeps.push(upd.sweeps);
        timings.b_update += tb.elapsed().as_secs_f64();

        let ty = Instant::now();
        let mid = objective_centered(inst, xc, &coef.b, &state.y, graph);
        let w = xc * &coef.b;
        let candidate = match step {
            ScoringStep::Admm { graph } => {
                let mut next = state.clone();
                next.inner_objective.clear();
                let report: InnerReport = inner_admm(&w, &mut next, graph, &quad, settings)?;
                inner_iters.push(report.iterations);
                repaired += report.repaired_updates;
                next
            }
            ScoringStep::Procrustes => {
                let sol = centered_procrustes(&w, &state.y)?;
                inner_iters.push(1);
                repaired += usize::from(sol.repaired);
                let mut next = state.clone();
                next.q = sol.y.clone();
                next.y = sol.y;
                next
            }
        };
        let new = objective_centered(inst, xc, &coef.b, &candidate.y, graph);
        timings.y_update += ty.elapsed().as_secs_f64();

        let prev = *trace.last().expect("trace starts non-empty");
        if new > mid + ACCEPT_SLACK {
            trace.push(mid);
            status = FitStatus::Stalled;
            break;
        }
        state = candidate;
        trace.push(new);
        if prev - new < params.epsilon {
            status = FitStatus::Converged;
            break;
        }
    }
    Ok(OuterOutput {
        b: coef.b,
        y: state.y,
        trace,
        inner_iters,
        b_sweeps,
        status,
        repaired,
        timings,
    })
}

fn finish(
    inst: &ProblemInstance,
    xc: &Matrix,
    out: OuterOutput,
    method: Method,
    graph_edges: usize,
    seed_value: u64,
    started: Instant,
) -> Result<FitResult> {
    let mut timings = out.timings;
    let tk = Instant::now();
    let embedding = xc * &out.b;
    let km = kmeans(&embedding, inst.k, inst.params.kmeans_restarts, seed::substream(seed_value, STREAM_KMEANS))?;
    timings.kmeans = tk.elapsed().as_secs_f64();
    timings.total = started.elapsed().as_secs_f64();
    Ok(FitResult {
        method,
        b_hat: out.b,
        y_hat: out.y,
        embedding,
        labels: km.labels.iter().map(|l| l + 1).collect(),
        centers: km.centers,
        outer_iters: out.inner_iters.len(),
        objective_trace: out.trace,
        inner_iters: out.inner_iters,
        b_sweeps: out.b_sweeps,
        converged: out.status == FitStatus::Converged,
        status: out.status,
        repaired_updates: out.repaired,
        graph_edges,
        timings,
    })
}

/// Regularized fit with fusion on the rows of `Y`. With `gamma = 0` the
/// fusion term vanishes and the graph is not used.
pub fn fit_rsodc(inst: &ProblemInstance, graph: &FusionGraph, seed_value: u64) -> Result<FitResult> {
    let started = Instant::now();
    inst.validate()?;
    if graph.n != inst.n() {
        return dim_err(format!("graph has {} nodes, data has {} rows", graph.n, inst.n()));
    }
    let xc = center_columns(&inst.data)?;
    let empty = FusionGraph::empty(inst.n());
    let active = if inst.params.gamma > 0.0 { graph } else { &empty };
    let out = outer_loop(inst, &xc, ScoringStep::Admm { graph: active }, seed_value)?;
    let method = if inst.params.gamma > 0.0 { Method::Rsodc } else { Method::Sodc };
    finish(inst, &xc, out, method, active.len(), seed_value, started)
}

/// Sparse fit without fusion: the scoring step is a single Procrustes solve.
pub fn fit_sodc(inst: &ProblemInstance, seed_value: u64) -> Result<FitResult> {
    let started = Instant::now();
    inst.validate()?;
    let xc = center_columns(&inst.data)?;
    let mut plain = inst.clone();
    plain.params.gamma = 0.0;
    let out = outer_loop(&plain, &xc, ScoringStep::Procrustes, seed_value)?;
    finish(&plain, &xc, out, Method::Sodc, 0, seed_value, started)
}

/// Builds the graph from the instance and runs [`fit_rsodc`].
pub fn fit(inst: &ProblemInstance, seed_value: u64) -> Result<FitResult> {
    inst.validate()?;
    let graph = if inst.params.gamma > 0.0 { build_graph(inst)? } else { FusionGraph::empty(inst.n()) };
    fit_rsodc(inst, &graph, seed_value)
}

/// Principal components of the centered data to `k - 1` dimensions followed
/// by k-means.
pub fn tandem_baseline(x: &Matrix, k: usize, restarts: usize, seed_value: u64) -> Result<FitResult> {
    let started = Instant::now();
    let (n, p) = x.shape();
    if k < 2 || k - 1 > n.min(p) || k > n {
        return param_err(format!("tandem needs 2 <= k, k - 1 <= min(n, p); got k = {k}, {n}x{p}"));
    }
    let xc = center_columns(x)?;
    let d = k - 1;
    // Right singular vectors of Xc are the left ones of Xcᵀ when p > n.
    let loadings = if p <= n {
        let (_, _, r) = thin_svd(&xc)?;
        r.columns(0, d).into_owned()
    } else {
        let (l, _, _) = thin_svd(&xc.transpose())?;
        l.columns(0, d).into_owned()
    };
    let scores = &xc * &loadings;
    let tk = Instant::now();
    let km = kmeans(&scores, k, restarts, seed::substream(seed_value, STREAM_KMEANS))?;
    let kmeans_secs = tk.elapsed().as_secs_f64();
    let y = centered_procrustes(&scores, &initial_scores(&xc, d)?)?.y;
    Ok(FitResult {
        method: Method::Tandem,
        b_hat: loadings,
        y_hat: y,
        embedding: scores,
        labels: km.labels.iter().map(|l| l + 1).collect(),
        centers: km.centers,
        objective_trace: Vec::new(),
        outer_iters: 0,
        inner_iters: Vec::new(),
        b_sweeps: Vec::new(),
        converged: true,
        status: FitStatus::Converged,
        repaired_updates: 0,
        graph_edges: 0,
        timings: Timings { kmeans: kmeans_secs, total: started.elapsed().as_secs_f64(), ..Timings::default() },
    })
}

/// Result of the convex-clustering baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexClustering {
    /// Fitted centroid of every subject, `n x p`.
    pub m: Matrix,
    /// Merged clusters, labels in `1..=k_found`.
    pub labels: Vec<usize>,
    /// One row per merged cluster.
    pub centers: CentroidSet,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexSettings {
    pub gamma: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Subjects merge when their centroids are within `merge_tol * scale`,
    /// `scale` being the root-mean-square row norm of the centered data.
    pub merge_tol: f64,
}

impl Default for ConvexSettings {
    fn default() -> Self {
        ConvexSettings { gamma: 0.1, rho: 1.0, epsilon: 1e-9, max_iter: 10_000, merge_tol: 1e-6 }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = i;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// ADMM for `½|X − M|² + gamma Σ_l alpha_l |m_i − m_j|` over the edges of
/// `graph`. The `M` step solves `(I + rho L) M = X + Σ_l g_l (λ_l + rho v_l)ᵀ`
/// with the unweighted Laplacian `L`, factored once.
pub fn convex_clustering(x: &Matrix, graph: &FusionGraph, settings: ConvexSettings) -> Result<ConvexClustering> {
    let (n, p) = x.shape();
    if graph.n != n {
        return dim_err(format!("graph has {} nodes, data has {n} rows", graph.n));
    }
    if !(settings.gamma >= 0.0 && settings.rho > 0.0 && settings.epsilon > 0.0) {
        return param_err("convex clustering needs gamma >= 0, rho > 0, epsilon > 0");
    }
    let rho = settings.rho;
    let mut system = Matrix::identity(n, n);
    for e in &graph.edges {
        system[(e.i, e.i)] += rho;
        system[(e.j, e.j)] += rho;
        system[(e.i, e.j)] -= rho;
        system[(e.j, e.i)] -= rho;
    }
    let chol = Cholesky::new(system).ok_or_else(|| Error::Numeric("I + rho L is not positive definite".into()))?;
    let m_edges = graph.len();
    let mut m = x.clone();
    let mut v = Matrix::zeros(m_edges, p);
    for (l, e) in graph.edges.iter().enumerate() {
        v.set_row(l, &(x.row(e.i) - x.row(e.j)));
    }
    let mut lambda = Matrix::zeros(m_edges, p);
    let mut converged = false;
    let mut iterations = 0;
    let mut q = vec![0.0; p];
    while iterations < settings.max_iter {
        iterations += 1;
        let mut rhs = x.clone();
        for (l, e) in graph.edges.iter().enumerate() {
            for f in 0..p {
                let t = lambda[(l, f)] + rho * v[(l, f)];
                rhs[(e.i, f)] += t;
                rhs[(e.j, f)] -= t;
            }
        }
        let m_new = chol.solve(&rhs);
        let mut v_change = 0.0_f64;
        let mut residual = 0.0_f64;
        for (l, e) in graph.edges.iter().enumerate() {
            let psi = settings.gamma * graph.alpha[l] / rho;
            for f in 0..p {
                q[f] = m_new[(e.i, f)] - m_new[(e.j, f)] - lambda[(l, f)] / rho;
            }
            let next = crate::group_lasso::group_soft_threshold(&q, psi);
            for f in 0..p {
                v_change = v_change.max((next[f] - v[(l, f)]).abs());
                v[(l, f)] = next[f];
                let r = next[f] - (m_new[(e.i, f)] - m_new[(e.j, f)]);
                lambda[(l, f)] += rho * r;
                residual = residual.max(r.abs());
            }
        }
        let m_change = (&m_new - &m).abs().max();
        m = m_new;
        if m_change < settings.epsilon && residual < settings.epsilon && v_change < settings.epsilon {
            converged = true;
            break;
        }
    }

    let xc = center_columns(x)?;
    let scale = (xc.norm_squared() / n as f64).sqrt().max(f64::MIN_POSITIVE);
    let tol = settings.merge_tol * scale;
    let mut uf = UnionFind((0..n).collect());
    for i in 0..n {
        for j in (i + 1)..n {
            if (m.row(i) - m.row(j)).norm() <= tol {
                uf.union(i, j);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    let partition = crate::metrics::Partition::new(&roots);
    let labels = partition.labels().to_vec();
    let k = partition.k();
    let sizes = partition.sizes();
    let mut centers = Matrix::zeros(k, p);
    for (i, &l) in labels.iter().enumerate() {
        let row = centers.row(l - 1) + m.row(i) / sizes[l - 1] as f64;
        centers.set_row(l - 1, &row);
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (x.row(i) - centers.row(l - 1)).norm_squared())
        .sum();
    Ok(ConvexClustering { m, labels, centers: CentroidSet { centroids: centers, inertia }, iterations, converged })
}
