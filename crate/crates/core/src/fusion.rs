//! Fusion graph over subjects: k-NN indicator, Gaussian-kernel weights,
//! incidence vectors and the quadratic form they induce on the scoring rows.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{top_eigenvalue_sym, Matrix, Vector};

/// Floor for `omega` when the edge set is empty.
pub const OMEGA_FLOOR: f64 = 1e-12;
const OMEGA_INFLATION: f64 = 1e-8;

/// A subject pair `(i, j)` with `i < j`, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
}

impl Edge {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::Contract(format!("edge endpoints must differ, got ({a}, {a})")));
        }
        Ok(Edge { i: a.min(b), j: a.max(b) })
    }
}

/// Weighted edge set `ε` with strictly positive weights `alpha_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionGraph {
    pub n: usize,
    pub edges: Vec<Edge>,
    pub alpha: Vec<f64>,
    pub tau: f64,
    pub delta: usize,
}

impl FusionGraph {
    /// Graph with no edges: the fusion penalty vanishes.
    pub fn empty(n: usize) -> Self {
        FusionGraph { n, edges: Vec::new(), alpha: Vec::new(), tau: 0.0, delta: 0 }
    }

    /// All pairs with unit weight.
    pub fn complete(n: usize) -> Self {
        let edges: Vec<Edge> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| Edge { i, j }))
            .collect();
        let alpha = vec![1.0; edges.len()];
        FusionGraph { n, edges, alpha, tau: 0.0, delta: n.saturating_sub(1) }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

fn squared_distances(x: &Matrix) -> Matrix {
    let n = x.nrows();
    let mut d2 = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (x.row(i) - x.row(j)).norm_squared();
            d2[(i, j)] = d;
            d2[(j, i)] = d;
        }
    }
    d2
}

fn knn_pairs(d2: &Matrix, delta: usize) -> Result<Vec<Edge>> {
    let n = d2.nrows();
    if delta == 0 {
        return param_err("delta must be >= 1");
    }
    if delta >= n {
        return param_err(format!("delta = {delta} must be < n = {n}"));
    }
    let mut flag = vec![false; n * n];
    let mut others: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        others.clear();
        others.extend((0..n).filter(|&j| j != i));
        // Ties broken by the smaller index.
        others.sort_by(|&a, &b| d2[(i, a)].total_cmp(&d2[(i, b)]).then(a.cmp(&b)));
        for &j in others.iter().take(delta) {
            let (a, b) = (i.min(j), i.max(j));
            flag[a * n + b] = true;
        }
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if flag[i * n + j] {
                pairs.push(Edge { i, j });
            }
        }
    }
    Ok(pairs)
}

/// Symmetrized `delta`-nearest-neighbour relation over the rows of `x`,
/// returned as the sorted list of indicated pairs.
pub fn knn_indicator(x: &Matrix, delta: usize) -> Result<Vec<Edge>> {
    knn_pairs(&squared_distances(x), delta)
}

/// Edge set and weights `alpha_ij = iota_ij * exp(-tau * |x_i - x_j|^2)`.
/// Pairs whose weight underflows to zero are dropped.
pub fn compute_weights(x: &Matrix, tau: f64, delta: usize) -> Result<FusionGraph> {
    if !(tau.is_finite() && tau >= 0.0) {
        return param_err(format!("tau must be finite and >= 0, got {tau}"));
    }
    let d2 = squared_distances(x);
    let pairs = knn_pairs(&d2, delta)?;
    let mut edges = Vec::with_capacity(pairs.len());
    let mut alpha = Vec::with_capacity(pairs.len());
    for e in pairs {
        let a = (-tau * d2[(e.i, e.j)]).exp();
        if a > 0.0 {
            edges.push(e);
            alpha.push(a);
        }
    }
    Ok(FusionGraph { n: x.nrows(), edges, alpha, tau, delta })
}

/// Incidence vector `g_l`: `+1` at `i`, `-1` at `j`, zero elsewhere.
pub fn incidence_vector(edge: Edge, n: usize) -> Result<Vector> {
    if edge.i == edge.j {
        return Err(Error::Contract("incidence vector of a self-loop".into()));
    }
    if edge.i.max(edge.j) >= n {
        return Err(Error::Dimension(format!("edge ({}, {}) outside n = {n}", edge.i, edge.j)));
    }
    let mut g = Vector::zeros(n);
    g[edge.i] = 1.0;
    g[edge.j] = -1.0;
    Ok(g)
}

/// The quadratic `C = (rho/2) sum_l g_l g_lᵀ` and its majorization constant.
///
/// `C` is the unweighted graph Laplacian scaled by `rho/2`; the weights
/// `alpha_l` act only through the fusion threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub c: Matrix,
    pub omega: f64,
    pub rho: f64,
}

pub fn build_quadratic(graph: &FusionGraph, rho: f64) -> Result<Quadratic> {
    if !(rho.is_finite() && rho > 0.0) {
        return param_err(format!("rho must be > 0, got {rho}"));
    }
    let n = graph.n;
    let mut c = Matrix::zeros(n, n);
    let h = rho / 2.0;
    for e in &graph.edges {
        c[(e.i, e.i)] += h;
        c[(e.j, e.j)] += h;
        c[(e.i, e.j)] -= h;
        c[(e.j, e.i)] -= h;
    }
    let omega = if graph.is_empty() {
        OMEGA_FLOOR
    } else {
        (top_eigenvalue_sym(&c)? * (1.0 + OMEGA_INFLATION)).max(OMEGA_FLOOR)
    };
    Ok(Quadratic { c, omega, rho })
}

impl Quadratic {
    /// `C Q`, accumulated edge-wise.
    pub fn apply(&self, graph: &FusionGraph, q: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(q.nrows(), q.ncols());
        let h = self.rho / 2.0;
        for e in &graph.edges {
            for c in 0..q.ncols() {
                let diff = h * (q[(e.i, c)] - q[(e.j, c)]);
                out[(e.i, c)] += diff;
                out[(e.j, c)] -= diff;
            }
        }
        out
    }
}
