//! Clustering and variable-selection quality indices.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Result};
use crate::group_lasso::GROUP_ZERO_TOL;
use crate::linalg::Matrix;

/// A hard clustering with labels canonicalized to `1..=k` in order of first
/// appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Accepts arbitrary label values; they are renumbered densely.
    pub fn new<T: Eq + std::hash::Hash + Clone>(raw: &[T]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|v| {
                let next = map.len() + 1;
                *map.entry(v.clone()).or_insert(next)
            })
            .collect();
        Partition { labels, k: map.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct clusters.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        self.labels.iter().for_each(|&l| s[l - 1] += 1);
        s
    }
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Hubert-Arabie adjusted Rand index from the contingency table.
///
/// When the index is undefined (both partitions trivial in the same way,
/// so the maximum equals the expectation) the value is 1.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return dim_err(format!("partitions have lengths {n} and {}", b.len()));
    }
    if n < 2 {
        return dim_err("ARI needs at least 2 subjects");
    }
    let mut table = vec![vec![0usize; b.k()]; a.k()];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        table[x - 1][y - 1] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c as f64)).sum();
    let sa: f64 = a.sizes().iter().map(|&c| choose2(c as f64)).sum();
    let sb: f64 = b.sizes().iter().map(|&c| choose2(c as f64)).sum();
    let expected = sa * sb / choose2(n as f64);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Between-cluster over within-cluster scatter trace. Higher means better
/// separated clusters; zero within-cluster scatter gives `+inf`.
pub fn variance_ratio(points: &Matrix, labels: &Partition) -> Result<f64> {
    let (n, d) = points.shape();
    if n != labels.len() {
        return dim_err(format!("{n} points but {} labels", labels.len()));
    }
    if labels.k() < 2 {
        return param_err("variance ratio needs at least 2 clusters");
    }
    let k = labels.k();
    let sizes = labels.sizes();
    let mut means = Matrix::zeros(k, d);
    for (i, &l) in labels.labels().iter().enumerate() {
        for f in 0..d {
            means[(l - 1, f)] += points[(i, f)];
        }
    }
    for c in 0..k {
        for f in 0..d {
            means[(c, f)] /= sizes[c] as f64;
        }
    }
    let grand: Vec<f64> = (0..d).map(|f| points.column(f).mean()).collect();
    let mut between = 0.0;
    for c in 0..k {
        for f in 0..d {
            between += sizes[c] as f64 * (means[(c, f)] - grand[f]).powi(2);
        }
    }
    let mut within = 0.0;
    for (i, &l) in labels.labels().iter().enumerate() {
        for f in 0..d {
            within += (points[(i, f)] - means[(l - 1, f)]).powi(2);
        }
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(between / within)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionAccuracy {
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Entry-wise sensitivity and specificity of the sparsity pattern of `B`.
///
/// `informative` holds 0-based row indices. Sensitivity counts nonzero
/// entries in informative rows, specificity counts zero entries in the other
/// rows, both relative to their total entry counts.
pub fn sensitivity_specificity(b: &Matrix, informative: &[usize]) -> Result<SelectionAccuracy> {
    let (p, d) = b.shape();
    if informative.is_empty() {
        return param_err("sensitivity is undefined without informative variables");
    }
    let mut is_inf = vec![false; p];
    for &j in informative {
        if j >= p {
            return dim_err(format!("informative index {j} outside 0..{p}"));
        }
        is_inf[j] = true;
    }
    let n_inf = is_inf.iter().filter(|&&f| f).count();
    if n_inf == p {
        return param_err("specificity is undefined when every variable is informative");
    }
    let mut hits = 0usize;
    let mut zeros = 0usize;
    for j in 0..p {
        for c in 0..d {
            let nonzero = b[(j, c)].abs() > GROUP_ZERO_TOL;
            if is_inf[j] && nonzero {
                hits += 1;
            } else if !is_inf[j] && !nonzero {
                zeros += 1;
            }
        }
    }
    Ok(SelectionAccuracy {
        sensitivity: hits as f64 / (n_inf * d) as f64,
        specificity: zeros as f64 / ((p - n_inf) * d) as f64,
    })
}

/// One-way ANOVA F statistic per column with `(k - 1, n - k)` degrees of
/// freedom. Zero within-group variance gives `+inf`, or `0` when the column
/// is constant overall.
pub fn anova_f_scores(x: &Matrix, labels: &Partition) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if n != labels.len() {
        return dim_err(format!("{n} rows but {} labels", labels.len()));
    }
    let k = labels.k();
    if k < 2 || n <= k {
        return param_err(format!("ANOVA needs 2 <= k < n, got k = {k}, n = {n}"));
    }
    let sizes = labels.sizes();
    let mut out = Vec::with_capacity(p);
    for f in 0..p {
        let col = x.column(f);
        let grand = col.mean();
        let mut sums = vec![0.0; k];
        for (i, &l) in labels.labels().iter().enumerate() {
            sums[l - 1] += col[i];
        }
        let means: Vec<f64> = sums.iter().zip(&sizes).map(|(s, &m)| s / m as f64).collect();
        let ssb: f64 = means.iter().zip(&sizes).map(|(m, &c)| c as f64 * (m - grand).powi(2)).sum();
        let ssw: f64 = labels
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &l)| (col[i] - means[l - 1]).powi(2))
            .sum();
        let f_val = if ssw == 0.0 {
            if ssb == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (ssb / (k - 1) as f64) / (ssw / (n - k) as f64)
        };
        out.push(f_val);
    }
    Ok(out)
}
