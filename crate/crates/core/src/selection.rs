//! Tuning-parameter selection by selection stability across random halves,
//! and choice of the cluster count by the gap statistic.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::group_lasso::GROUP_ZERO_TOL;
use crate::kmeans::{kmeans, within_ss};
use crate::linalg::{center_columns, thin_svd, Matrix};
use crate::problem::{Params, ProblemInstance};
use crate::seed;
use crate::solver::{fit, FitResult};

/// Floor applied to a dispersion before taking its logarithm.
pub const DISPERSION_FLOOR: f64 = 1e-12;

const STREAM_SPLIT: u64 = 11;
const STREAM_HALF: u64 = 12;
const STREAM_GAP_FIT: u64 = 13;
const STREAM_GAP_REF: u64 = 14;

/// `1` for every row of `B` with an entry above the zero threshold.
pub fn selection_indicator(b: &Matrix) -> Vec<bool> {
    b.row_iter()
        .map(|r| r.iter().any(|v| v.abs() > GROUP_ZERO_TOL))
        .collect()
}

/// Cohen's kappa of two selection indicators.
///
/// Two indicators that are both all-unselected or both all-selected score
/// `-1`. When only one of them is constant the chance agreement is 1 and the
/// coefficient is reported as `0`.
pub fn kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return param_err(format!("kappa needs equal non-empty lengths, got {} and {}", a.len(), b.len()));
    }
    let all = |v: &[bool], x: bool| v.iter().all(|&t| t == x);
    if (all(a, false) && all(b, false)) || (all(a, true) && all(b, true)) {
        return Ok(-1.0);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if pe >= 1.0 {
        return Ok(0.0);
    }
    Ok((agree - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub eta1: f64,
    pub gamma: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub eta1: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    /// Number of random half splits per combination.
    pub repeats: usize,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            eta1: vec![0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            gamma: vec![0.001, 0.003, 0.005, 0.007, 0.01],
            rho: vec![0.01, 0.03, 0.05, 0.07, 0.1],
            repeats: 10,
        }
    }
}

impl ParamGrid {
    /// Cross product ordered by `eta1`, then `gamma`, then `rho`, keeping only
    /// pairs with `gamma / rho < 1`.
    pub fn combos(&self) -> Vec<Combo> {
        let mut out = Vec::new();
        for &eta1 in &self.eta1 {
            for &gamma in &self.gamma {
                for &rho in &self.rho {
                    if gamma / rho < 1.0 {
                        out.push(Combo { eta1, gamma, rho });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub combo: Combo,
    pub kappas: Vec<f64>,
    pub mean_kappa: f64,
    /// Replicates in which a fit failed (scored as `-1`).
    pub failures: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: Combo,
    pub table: Vec<CvRow>,
}

/// Random split of `0..n` into halves of sizes `floor(n/2)` and `ceil(n/2)`.
pub fn half_split<R: Rng>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (a, b) = idx.split_at(n / 2);
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

fn rows(x: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn half_indicator(x: &Matrix, k: usize, params: Params, seed_value: u64) -> Result<Vec<bool>> {
    let mut params = params;
    params.delta = params.delta.min(x.nrows() - 1);
    let inst = ProblemInstance::new(x.clone(), k, params)?;
    let f = fit(&inst, seed_value)?;
    Ok(selection_indicator(&f.b_hat))
}

fn better(a: &CvRow, b: &CvRow) -> bool {
    // True when `a` should replace `b` as the current best.
    if a.mean_kappa != b.mean_kappa {
        return a.mean_kappa > b.mean_kappa;
    }
    let ka = (a.combo.eta1, a.combo.gamma, a.combo.rho);
    let kb = (b.combo.eta1, b.combo.gamma, b.combo.rho);
    ka.partial_cmp(&kb) == Some(std::cmp::Ordering::Less)
}

/// Stability cross-validation. Every combination sees the same `repeats`
/// splits; each half is fitted with the combination and the kappa of the two
/// selection indicators is recorded. The combination with the highest mean
/// kappa wins; ties go to the smaller `eta1`, then `gamma`, then `rho`.
pub fn stability_cv(x: &Matrix, k: usize, grid: &ParamGrid, base: &Params, seed_value: u64) -> Result<CvOutcome> {
    let n = x.nrows();
    if n < 4 {
        return param_err(format!("stability CV needs n >= 4, got {n}"));
    }
    if grid.repeats == 0 {
        return param_err("repeats must be >= 1");
    }
    let combos = grid.combos();
    if combos.is_empty() {
        return param_err("the grid has no combination with gamma / rho < 1");
    }
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..grid.repeats)
        .map(|r| half_split(n, &mut seed::rng(seed::substream_path(seed_value, &[STREAM_SPLIT, r as u64]))))
        .collect();
    let halves: Vec<(Matrix, Matrix)> = splits.iter().map(|(a, b)| (rows(x, a), rows(x, b))).collect();

    let items: Vec<(usize, usize)> = (0..combos.len()).flat_map(|c| (0..grid.repeats).map(move |r| (c, r))).collect();
    let scored: Vec<(f64, Option<String>)> = items
        .par_iter()
        .map(|&(c, r)| {
            let combo = combos[c];
            let params = Params { eta1: combo.eta1, gamma: combo.gamma, rho: combo.rho, ..*base };
            let s1 = seed::substream_path(seed_value, &[STREAM_HALF, r as u64, 0]);
            let s2 = seed::substream_path(seed_value, &[STREAM_HALF, r as u64, 1]);
            let res = half_indicator(&halves[r].0, k, params, s1)
                .and_then(|a| half_indicator(&halves[r].1, k, params, s2).map(|b| (a, b)))
                .and_then(|(a, b)| kappa(&a, &b));
            match res {
                Ok(v) => (v, None),
                Err(e) => (-1.0, Some(format!("repeat {r}: {e}"))),
            }
        })
        .collect();

    let mut table = Vec::with_capacity(combos.len());
    for (c, combo) in combos.iter().enumerate() {
        let chunk = &scored[c * grid.repeats..(c + 1) * grid.repeats];
        let kappas: Vec<f64> = chunk.iter().map(|s| s.0).collect();
        let diagnostics: Vec<String> = chunk.iter().filter_map(|s| s.1.clone()).collect();
        table.push(CvRow {
            combo: *combo,
            mean_kappa: kappas.iter().sum::<f64>() / kappas.len() as f64,
            kappas,
            failures: diagnostics.len(),
            diagnostics,
        });
    }
    let mut best = &table[0];
    for row in &table[1..] {
        if better(row, best) {
            best = row;
        }
    }
    Ok(CvOutcome { best: best.combo, table })
}

/// Null distribution of the gap statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GapReference {
    /// Uniform over the coordinate-wise bounding box.
    #[default]
    BoundingBox,
    /// Uniform over the bounding box in the principal-component frame.
    PcaBox,
}

impl std::str::FromStr for GapReference {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" | "bounding_box" => Ok(GapReference::BoundingBox),
            "pca" | "pca_box" => Ok(GapReference::PcaBox),
            other => param_err(format!("unknown gap reference `{other}` (expected box|pca)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapOptions {
    pub mc_samples: usize,
    pub reference: GapReference,
    /// k-means restarts per clustering inside the gap computation.
    pub restarts: usize,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions { mc_samples: 100, reference: GapReference::BoundingBox, restarts: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCurve {
    pub k_candidates: Vec<usize>,
    pub gap: Vec<f64>,
    pub se: Vec<f64>,
    /// `log W_k` of the observed points.
    pub log_w: Vec<f64>,
    pub chosen_k: usize,
}

/// Smallest `k` with `gap(k) >= gap(k+1) - se(k+1)`; the largest gap when no
/// candidate satisfies the rule.
pub fn one_se_rule(k_candidates: &[usize], gap: &[f64], se: &[f64]) -> usize {
    for i in 0..k_candidates.len().saturating_sub(1) {
        if gap[i] >= gap[i + 1] - se[i + 1] {
            return k_candidates[i];
        }
    }
    let mut best = 0;
    for i in 1..gap.len() {
        if gap[i] > gap[best] {
            best = i;
        }
    }
    k_candidates[best]
}

fn log_dispersion(points: &Matrix, k: usize, restarts: usize, seed_value: u64) -> Result<f64> {
    let km = kmeans(points, k, restarts, seed_value)?;
    let w = within_ss(points, &km.labels, k);
    Ok(w.max(DISPERSION_FLOOR).ln())
}

/// Frame, offset row and per-axis ranges of a reference distribution.
type Sampler = (Matrix, Matrix, Vec<(f64, f64)>);

fn reference_sampler(points: &Matrix, reference: GapReference) -> Result<Sampler> {
    // Returns (frame, offset row, per-axis ranges): draws are offset + u * frameᵀ.
    let (n, d) = points.shape();
    let (frame, coords, offset) = match reference {
        GapReference::BoundingBox => (Matrix::identity(d, d), points.clone(), Matrix::zeros(1, d)),
        GapReference::PcaBox => {
            let xc = center_columns(points)?;
            let means = Matrix::from_fn(1, d, |_, j| points.column(j).mean());
            let r = if d <= n {
                thin_svd(&xc)?.2
            } else {
                return param_err("the PCA reference needs at least as many points as dimensions");
            };
            let coords = &xc * &r;
            (r, coords, means)
        }
    };
    let ranges = (0..d)
        .map(|j| {
            let c = coords.column(j);
            (c.min(), c.max())
        })
        .collect();
    Ok((frame, offset, ranges))
}

/// Gap statistic of `points` at every `k` in `k_range`.
pub fn gap_statistic(points: &Matrix, k_range: &[usize], opts: GapOptions, seed_value: u64) -> Result<GapCurve> {
    let mut ks = k_range.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let n = points.nrows();
    if ks.is_empty() || ks[0] == 0 || *ks.last().unwrap() > n - 1 {
        return param_err(format!("k candidates must lie in 1..={}", n - 1));
    }
    if opts.mc_samples < 2 {
        return param_err("mc_samples must be >= 2");
    }
    let mut gap = Vec::with_capacity(ks.len());
    let mut se = Vec::with_capacity(ks.len());
    let mut log_w = Vec::with_capacity(ks.len());
    for &k in &ks {
        let (g, s, lw) = gap_at(points, k, opts, seed::substream(seed_value, k as u64))?;
        gap.push(g);
        se.push(s);
        log_w.push(lw);
    }
    let chosen_k = one_se_rule(&ks, &gap, &se);
    Ok(GapCurve { k_candidates: ks, gap, se, log_w, chosen_k })
}

/// `(gap, se, log W)` of `points` at a single `k`.
pub fn gap_at(points: &Matrix, k: usize, opts: GapOptions, seed_value: u64) -> Result<(f64, f64, f64)> {
    let (n, d) = points.shape();
    let lw = log_dispersion(points, k, opts.restarts, seed::substream(seed_value, 0))?;
    let (frame, offset, ranges) = reference_sampler(points, opts.reference)?;
    let refs: Vec<f64> = (0..opts.mc_samples)
        .into_par_iter()
        .map(|b| {
            let s = seed::substream_path(seed_value, &[STREAM_GAP_REF, b as u64]);
            let mut rng = seed::rng(s);
            let u = Matrix::from_fn(n, d, |_, j| {
                let (lo, hi) = ranges[j];
                lo + (hi - lo) * rng.random::<f64>()
            });
            let mut draw = u * frame.transpose();
            for mut row in draw.row_iter_mut() {
                row += &offset;
            }
            log_dispersion(&draw, k, opts.restarts, seed::substream(s, 1))
        })
        .collect::<Result<Vec<f64>>>()?;
    let b = refs.len() as f64;
    let mean = refs.iter().sum::<f64>() / b;
    let sd = (refs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / b).sqrt();
    Ok((mean - lw, sd * (1.0 + 1.0 / b).sqrt(), lw))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub curve: GapCurve,
    /// Fit at each candidate that succeeded.
    pub fits: Vec<(usize, FitResult)>,
    /// Candidates excluded because the fit failed, with the reason.
    pub failed: Vec<(usize, String)>,
}

/// Fits at every candidate `k` (embedding dimension `k - 1`), computes the
/// gap of that fit's embedding at `k`, and applies [`one_se_rule`].
pub fn select_k_by_gap(x: &Matrix, k_range: &[usize], params: &Params, opts: GapOptions, seed_value: u64) -> Result<KSelection> {
    let mut ks = k_range.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return param_err("no k candidates");
    }
    type PerK = (usize, Result<(FitResult, (f64, f64, f64))>);
    let results: Vec<PerK> = ks
        .par_iter()
        .map(|&k| {
            let res = ProblemInstance::new(x.clone(), k, *params).and_then(|inst| {
                let s = seed::substream_path(seed_value, &[STREAM_GAP_FIT, k as u64]);
                let f = fit(&inst, s)?;
                let g = gap_at(&f.embedding, k, opts, seed::substream(s, 1))?;
                Ok((f, g))
            });
            (k, res)
        })
        .collect();
    let mut fits = Vec::new();
    let mut failed = Vec::new();
    let (mut kk, mut gap, mut se, mut log_w) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, r) in results {
        match r {
            Ok((f, (g, s, lw))) => {
                kk.push(k);
                gap.push(g);
                se.push(s);
                log_w.push(lw);
                fits.push((k, f));
            }
            Err(e) => failed.push((k, e.to_string())),
        }
    }
    if kk.is_empty() {
        return Err(crate::Error::Degenerate(format!("every candidate failed: {failed:?}")));
    }
    let chosen_k = one_se_rule(&kk, &gap, &se);
    Ok(KSelection { curve: GapCurve { k_candidates: kk, gap, se, log_w, chosen_k }, fits, failed })
}
