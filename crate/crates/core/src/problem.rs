use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{ensure_finite, Matrix};

/// How the fusion-difference block `V` is updated inside the scoring ADMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VMode {
    /// One proximal-gradient step from the incoming `v_l`, threshold `psi_l`.
    #[default]
    Paper,
    /// Closed-form minimizer: group soft-threshold of `q_l` at `psi_l`.
    Exact,
}

impl std::str::FromStr for VMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(VMode::Paper),
            "exact" => Ok(VMode::Exact),
            other => param_err(format!("unknown v-mode `{other}` (expected paper|exact)")),
        }
    }
}

/// Starting point for the coefficient matrix `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BInit {
    /// Entries drawn i.i.d. from N(0, 1) using the fit seed.
    #[default]
    Gaussian,
    Zero,
}

/// Tuning parameters of one fit. Everything except the data and `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Group-lasso weight on the rows of `B`.
    pub eta1: f64,
    /// Ridge weight on `B`.
    pub eta2: f64,
    /// Fusion weight on the rows of `Y`.
    pub gamma: f64,
    /// Augmented-Lagrangian weight.
    pub rho: f64,
    /// Step size of the group update.
    pub nu: f64,
    /// Absolute convergence threshold used by every loop.
    pub epsilon: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Cap on coordinate sweeps per `B` update.
    pub max_b_sweeps: usize,
    /// Gaussian-kernel bandwidth of the fusion weights.
    pub tau: f64,
    /// Nearest-neighbour count of the fusion graph.
    pub delta: usize,
    pub v_mode: VMode,
    pub b_init: BInit,
    pub kmeans_restarts: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            eta1: 2.5,
            eta2: 0.0,
            gamma: 0.001,
            rho: 0.01,
            nu: 0.001,
            epsilon: 1e-6,
            max_outer: 100,
            max_inner: 1000,
            max_b_sweeps: 100,
            tau: 0.1,
            delta: 25,
            v_mode: VMode::Paper,
            b_init: BInit::Gaussian,
            kmeans_restarts: 20,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("eta1", self.eta1), ("eta2", self.eta2), ("gamma", self.gamma), ("tau", self.tau)];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return param_err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        let positive = [("rho", self.rho), ("nu", self.nu), ("epsilon", self.epsilon)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return param_err(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if self.gamma > 0.0 && self.gamma / self.rho >= 1.0 {
            return param_err(format!(
                "gamma / rho must be < 1 (got {} / {})",
                self.gamma, self.rho
            ));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.max_b_sweeps == 0 {
            return param_err("iteration caps must be >= 1");
        }
        if self.delta == 0 {
            return param_err("delta must be >= 1");
        }
        if self.kmeans_restarts == 0 {
            return param_err("kmeans_restarts must be >= 1");
        }
        Ok(())
    }
}

/// Data, target cluster count and tuning parameters for one fit.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    /// Raw `n x p` data; centering happens inside the solvers.
    pub data: Matrix,
    pub k: usize,
    pub params: Params,
}

impl ProblemInstance {
    pub fn new(data: Matrix, k: usize, params: Params) -> Result<Self> {
        let inst = ProblemInstance { data, k, params };
        inst.validate()?;
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    /// Embedding dimension `k - 1`.
    pub fn dim(&self) -> usize {
        self.k - 1
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.data.shape();
        if n < 2 || p < 1 {
            return Err(Error::Dimension(format!("data must be at least 2x1, got {n}x{p}")));
        }
        ensure_finite(&self.data, "data")?;
        if self.k < 2 {
            return param_err(format!("k must be >= 2, got {}", self.k));
        }
        if self.k - 1 > n.min(p) {
            return param_err(format!(
                "k - 1 = {} exceeds min(n, p) = {}",
                self.k - 1,
                n.min(p)
            ));
        }
        // Y must be orthonormal and orthogonal to 1, so k - 1 <= n - 1.
        if self.k > n {
            return param_err(format!("k = {} exceeds n = {n}", self.k));
        }
        self.params.validate()
    }

    /// Neighbour count actually usable on this data (at most `n - 1`).
    pub fn effective_delta(&self) -> usize {
        self.params.delta.min(self.n() - 1)
    }
}
