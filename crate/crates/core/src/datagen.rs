//! Synthetic Gaussian mixtures with block-structured covariance.
//!
//! The first `q` variables carry the cluster means, the next `c_star` are
//! equicorrelated noise, and the remaining ones are independent noise.

use nalgebra::{Cholesky, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::linalg::Matrix;
use crate::metrics::Partition;
use crate::seed;

/// Correlated-noise block size used for the standard covariate counts.
pub fn default_c_star(p: usize) -> Option<usize> {
    match p {
        20 => Some(12),
        50 => Some(24),
        80 => Some(36),
        100 => Some(48),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// Number of informative variables (even).
    pub q: usize,
    /// Size of the correlated-noise block; `None` uses [`default_c_star`].
    pub c_star: Option<usize>,
    /// Distance parameter of the cluster means.
    pub theta: f64,
    /// Within-block correlation of the informative variables.
    pub xi: f64,
    /// Within-block correlation of the correlated noise.
    pub xi_dagger: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(n: usize, p: usize, k: usize, theta: f64, xi: f64, seed: u64) -> Self {
        SimulationConfig { n, p, k, q: 2, c_star: None, theta, xi, xi_dagger: 0.6, seed }
    }

    pub fn resolved_c_star(&self) -> Result<usize> {
        match self.c_star.or_else(|| default_c_star(self.p)) {
            Some(c) => Ok(c),
            None => param_err(format!("c_star must be given for p = {}", self.p)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.k) {
            return param_err(format!("k must be 2, 3 or 4, got {}", self.k));
        }
        if self.q == 0 || self.q % 2 == 1 {
            return param_err(format!("q must be even and positive, got {}", self.q));
        }
        let c = self.resolved_c_star()?;
        if self.q + c > self.p {
            return param_err(format!("q + c_star = {} exceeds p = {}", self.q + c, self.p));
        }
        for (name, v) in [("xi", self.xi), ("xi_dagger", self.xi_dagger)] {
            if !(0.0..=1.0).contains(&v) {
                return param_err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !self.theta.is_finite() {
            return param_err("theta must be finite");
        }
        if self.n < self.k {
            return param_err(format!("n = {} is smaller than k = {}", self.n, self.k));
        }
        Ok(())
    }
}

fn fill_equicorrelated(s: &mut Matrix, start: usize, size: usize, xi: f64) {
    for a in 0..size {
        for b in 0..size {
            s[(start + a, start + b)] = if a == b { 1.0 } else { xi };
        }
    }
}

/// Block-diagonal covariance: equicorrelated informative block, equicorrelated
/// noise block, identity on the rest.
pub fn build_covariance(cfg: &SimulationConfig) -> Result<Matrix> {
    cfg.validate()?;
    let c = cfg.resolved_c_star()?;
    let mut s = Matrix::identity(cfg.p, cfg.p);
    fill_equicorrelated(&mut s, 0, cfg.q, cfg.xi);
    fill_equicorrelated(&mut s, cfg.q, c, cfg.xi_dagger);
    Ok(s)
}

/// `k x p` matrix of cluster means; only the first `q` columns are nonzero.
pub fn cluster_means(cfg: &SimulationConfig) -> Result<Matrix> {
    cfg.validate()?;
    let h = cfg.q / 2;
    let patterns: [(f64, f64); 4] = [(-1.0, 1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)];
    let mut m = Matrix::zeros(cfg.k, cfg.p);
    for (l, &(first, second)) in patterns.iter().take(cfg.k).enumerate() {
        for j in 0..cfg.q {
            m[(l, j)] = cfg.theta * if j < h { first } else { second };
        }
    }
    Ok(m)
}

/// Cluster sizes `floor(n/k)`, with the remainder given to the first clusters.
pub fn cluster_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|l| n / k + usize::from(l < n % k)).collect()
}

/// A factor `F` with `F Fᵀ = sigma`: Cholesky when positive definite, else
/// the symmetric square root with negative eigenvalues clipped.
pub fn sampling_factor(sigma: &Matrix) -> Matrix {
    if let Some(ch) = Cholesky::new(sigma.clone()) {
        return ch.l();
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let mut f = eig.eigenvectors.clone();
    for (c, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        f.column_mut(c).scale_mut(s);
    }
    f
}

/// Simulated data set; rows of cluster `l` are contiguous.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub x: Matrix,
    pub labels: Partition,
    /// 0-based indices of the informative variables.
    pub informative: Vec<usize>,
}

pub fn generate(cfg: &SimulationConfig) -> Result<SimulatedData> {
    let sigma = build_covariance(cfg)?;
    let means = cluster_means(cfg)?;
    let f = sampling_factor(&sigma);
    let mut rng = seed::rng(cfg.seed);
    let sizes = cluster_sizes(cfg.n, cfg.k);
    let mut x = Matrix::zeros(cfg.n, cfg.p);
    let mut labels = Vec::with_capacity(cfg.n);
    let mut row = 0;
    for (l, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let z = nalgebra::DVector::<f64>::from_fn(cfg.p, |_, _| rng.sample(StandardNormal));
            let draw = &f * z;
            for j in 0..cfg.p {
                x[(row, j)] = means[(l, j)] + draw[j];
            }
            labels.push(l + 1);
            row += 1;
        }
    }
    Ok(SimulatedData { x, labels: Partition::new(&labels), informative: (0..cfg.q).collect() })
}
