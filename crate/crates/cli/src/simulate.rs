//! The `simulate` subcommand: scaled replicate campaigns over the five designs.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use rsodc::datagen::{self, SimulationConfig};
use rsodc::metrics::{self, Partition};
use rsodc::seed::substream;
use rsodc::selection::{self, ParamGrid};
use rsodc::{BInit, FitStatus, Params, ProblemInstance};
use serde::Serialize;
use serde_json::json;

use crate::args::SimulateArgs;
use crate::commands::ensure_dir;
use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_f64};
use crate::output::{params_json, write_json, Manifest};

/// Fit seeds live in a tag range disjoint from the data seeds.
const FIT_TAG_OFFSET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Variant {
    Rsodc,
    Sodc,
    Tandem,
    SelectK,
}

#[derive(Debug, Clone)]
struct Job {
    cell: SimulationConfig,
    params: Params,
    variant: Variant,
    replicate: usize,
    data_seed: u64,
    fit_seed: u64,
}

impl Job {
    fn group(&self) -> String {
        let c = &self.cell;
        let p = &self.params;
        format!(
            "n={} p={} k={} theta={} xi={} eta1={} gamma={} rho={} tau={} delta={} method={:?}",
            c.n, c.p, c.k, c.theta, c.xi, p.eta1, p.gamma, p.rho, p.tau, p.delta, self.variant
        )
        .to_lowercase()
    }
}

#[derive(Debug, Clone, Default)]
struct Outcome {
    ari: Option<f64>,
    sensitivity: Option<f64>,
    specificity: Option<f64>,
    chosen_k: Option<usize>,
    outer_iters: Option<usize>,
    status: Option<FitStatus>,
    seconds: f64,
    error: Option<String>,
}

fn run_job(job: &Job, k_range: &[usize], gap: selection::GapOptions) -> Outcome {
    let start = Instant::now();
    let mut out = Outcome::default();
    let res = (|| -> rsodc::Result<()> {
        let cfg = SimulationConfig { seed: job.data_seed, ..job.cell.clone() };
        let data = datagen::generate(&cfg)?;
        let (fit, chosen) = match job.variant {
            Variant::Tandem => (
                rsodc::solver::tandem_baseline(&data.x, cfg.k, job.params.kmeans_restarts, job.fit_seed)?,
                None,
            ),
            Variant::SelectK => {
                let sel = selection::select_k_by_gap(&data.x, k_range, &job.params, gap, job.fit_seed)?;
                let k = sel.curve.chosen_k;
                let f = sel
                    .fits
                    .into_iter()
                    .find(|(kk, _)| *kk == k)
                    .map(|(_, f)| f)
                    .ok_or_else(|| rsodc::Error::Degenerate("chosen k has no fit".into()))?;
                (f, Some(k))
            }
            Variant::Rsodc | Variant::Sodc => {
                let inst = ProblemInstance::new(data.x.clone(), cfg.k, job.params)?;
                (rsodc::fit(&inst, job.fit_seed)?, None)
            }
        };
        out.ari = Some(metrics::adjusted_rand_index(&data.labels, &Partition::new(&fit.labels))?);
        if job.variant != Variant::Tandem {
            let acc = metrics::sensitivity_specificity(&fit.b_hat, &data.informative)?;
            out.sensitivity = Some(acc.sensitivity);
            out.specificity = Some(acc.specificity);
            out.outer_iters = Some(fit.outer_iters);
            out.status = Some(fit.status);
        }
        out.chosen_k = chosen;
        Ok(())
    })();
    if let Err(e) = res {
        out = Outcome { error: Some(e.to_string()), ..Outcome::default() };
    }
    out.seconds = start.elapsed().as_secs_f64();
    out
}

fn or_default<T: Clone>(given: &[T], default: &[T]) -> Vec<T> {
    if given.is_empty() {
        default.to_vec()
    } else {
        given.to_vec()
    }
}

fn cells(a: &SimulateArgs) -> Vec<SimulationConfig> {
    let d1 = a.design == 1;
    let ns = or_default(&a.n, if d1 { &[60, 96, 156] } else { &[60] });
    let ps = or_default(&a.p, if d1 { &[20, 50, 80, 100] } else { &[20] });
    let ks = or_default(
        &a.k,
        match a.design {
            1 => &[3, 4],
            3 => &[2, 3],
            _ => &[3],
        },
    );
    let thetas = or_default(&a.theta, if d1 { &[1.4, 2.0, 2.2] } else { &[2.2] });
    let xis = or_default(&a.xi, if d1 { &[0.0, 0.5] } else { &[0.5] });
    let mut out = Vec::new();
    for &n in &ns {
        for &p in &ps {
            for &k in &ks {
                for &theta in &thetas {
                    for &xi in &xis {
                        out.push(SimulationConfig::new(n, p, k, theta, xi, 0));
                    }
                }
            }
        }
    }
    out
}

fn jobs(a: &SimulateArgs, base: &Params) -> Vec<Job> {
    let mut out = Vec::new();
    for cell in cells(a) {
        let mut variants: Vec<(Params, Variant)> = Vec::new();
        match a.design {
            1 => {
                variants.push((*base, Variant::Rsodc));
                variants.push((Params { gamma: 0.0, ..*base }, Variant::Sodc));
                variants.push((*base, Variant::Tandem));
            }
            2 => {
                let grid = ParamGrid {
                    eta1: a.eta1_grid.clone(),
                    gamma: a.gamma_grid.clone(),
                    rho: a.rho_grid.clone(),
                    repeats: 1,
                };
                for c in grid.combos() {
                    variants.push((Params { eta1: c.eta1, gamma: c.gamma, rho: c.rho, ..*base }, Variant::Rsodc));
                }
            }
            3 => variants.push((*base, Variant::SelectK)),
            4 => {
                for &tau in &a.tau_grid {
                    for &delta in &a.delta_grid {
                        variants.push((Params { tau, delta, ..*base }, Variant::Rsodc));
                    }
                }
            }
            _ => variants.push((Params { b_init: BInit::Gaussian, ..*base }, Variant::Rsodc)),
        }
        for rep in 0..a.replicates {
            // Design 5 keeps one data set and varies only the random start of B.
            let data_seed = if a.design == 5 { substream(a.seed, 0) } else { substream(a.seed, rep as u64) };
            let fit_seed = substream(a.seed, FIT_TAG_OFFSET + rep as u64);
            for (params, variant) in &variants {
                out.push(Job { cell: cell.clone(), params: *params, variant: *variant, replicate: rep, data_seed, fit_seed });
            }
        }
    }
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Serialize)]
struct Stats {
    min: Option<f64>,
    q1: Option<f64>,
    median: Option<f64>,
    mean: Option<f64>,
    q3: Option<f64>,
    max: Option<f64>,
}

fn stats(values: impl Iterator<Item = f64>) -> Stats {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return Stats { min: None, q1: None, median: None, mean: None, q3: None, max: None };
    }
    Stats {
        min: Some(v[0]),
        q1: Some(quantile(&v, 0.25)),
        median: Some(quantile(&v, 0.5)),
        mean: Some(v.iter().sum::<f64>() / v.len() as f64),
        q3: Some(quantile(&v, 0.75)),
        max: Some(v[v.len() - 1]),
    }
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn status_str(s: Option<FitStatus>) -> String {
    match s {
        Some(FitStatus::Converged) => "converged".into(),
        Some(FitStatus::MaxIterations) => "max_iterations".into(),
        Some(FitStatus::Stalled) => "stalled".into(),
        None => String::new(),
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let start = Instant::now();
    if a.replicates == 0 {
        return Err(CliError::Input("replicates must be >= 1".into()));
    }
    if a.design == 3 && (a.k_min < 2 || a.k_max < a.k_min) {
        return Err(CliError::Input(format!("invalid k range {}..={}", a.k_min, a.k_max)));
    }
    let base = a.solver.params();
    base.validate()?;
    for cell in cells(a) {
        cell.validate()?;
    }
    let all = jobs(a, &base);
    if all.is_empty() {
        return Err(CliError::Input("the design has no work items (empty grid?)".into()));
    }
    ensure_dir(&a.out)?;
    let k_range: Vec<usize> = (a.k_min..=a.k_max).collect();
    let gap = a.gap.options();
    let outcomes: Vec<Outcome> = all.par_iter().map(|j| run_job(j, &k_range, gap)).collect();

    let config = json!({
        "design": a.design,
        "replicates": a.replicates,
        "params": params_json(&base),
        "eta1_grid": a.eta1_grid,
        "gamma_grid": a.gamma_grid,
        "rho_grid": a.rho_grid,
        "tau_grid": a.tau_grid,
        "delta_grid": a.delta_grid,
        "k_min": a.k_min,
        "k_max": a.k_max,
        "mc_samples": a.gap.mc_samples,
        "reference": selection::GapReference::from(a.gap.reference),
    });
    let mut m = Manifest::new("simulate", a.seed, config, &[]);

    let header: Vec<String> = [
        "n", "p", "k", "theta", "xi", "eta1", "gamma", "rho", "tau", "delta", "method", "replicate", "data_seed",
        "fit_seed", "ari", "sensitivity", "specificity", "chosen_k", "outer_iters", "status", "seconds", "error",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = all
        .iter()
        .zip(&outcomes)
        .map(|(j, o)| {
            vec![
                j.cell.n.to_string(),
                j.cell.p.to_string(),
                j.cell.k.to_string(),
                j.cell.theta.to_string(),
                j.cell.xi.to_string(),
                j.params.eta1.to_string(),
                j.params.gamma.to_string(),
                j.params.rho.to_string(),
                j.params.tau.to_string(),
                j.params.delta.to_string(),
                serde_json::to_value(j.variant).unwrap().as_str().unwrap_or_default().to_string(),
                j.replicate.to_string(),
                j.data_seed.to_string(),
                j.fit_seed.to_string(),
                opt_f64(o.ari),
                opt_f64(o.sensitivity),
                opt_f64(o.specificity),
                opt_str(o.chosen_k),
                opt_str(o.outer_iters),
                status_str(o.status),
                format!("{:.6}", o.seconds),
                o.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    io::write_rows(&m.output(&a.out.join("replicates.csv")), &header, &rows)?;

    // Groups in first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, j) in all.iter().enumerate() {
        let g = j.group();
        if !groups.contains_key(&g) {
            order.push(g.clone());
        }
        groups.entry(g).or_default().push(i);
    }
    let mut summary = Vec::new();
    let mut summary_rows = Vec::new();
    for g in &order {
        let idx = &groups[g];
        let j = &all[idx[0]];
        let ok: Vec<&Outcome> = idx.iter().map(|&i| &outcomes[i]).filter(|o| o.error.is_none()).collect();
        let failures = idx.len() - ok.len();
        let ari = stats(ok.iter().filter_map(|o| o.ari));
        let sens = stats(ok.iter().filter_map(|o| o.sensitivity));
        let spec = stats(ok.iter().filter_map(|o| o.specificity));
        let secs = stats(ok.iter().map(|o| o.seconds));
        let outer = stats(ok.iter().filter_map(|o| o.outer_iters.map(|v| v as f64)));
        let converged = ok.iter().filter(|o| o.status == Some(FitStatus::Converged)).count();
        let stalled = ok.iter().filter(|o| o.status == Some(FitStatus::Stalled)).count();
        let mut chosen: BTreeMap<usize, usize> = BTreeMap::new();
        for o in &ok {
            if let Some(k) = o.chosen_k {
                *chosen.entry(k).or_default() += 1;
            }
        }
        let chosen_str = chosen.iter().map(|(k, c)| format!("{k}:{c}")).collect::<Vec<_>>().join(";");
        summary_rows.push(vec![
            j.cell.n.to_string(),
            j.cell.p.to_string(),
            j.cell.k.to_string(),
            j.cell.theta.to_string(),
            j.cell.xi.to_string(),
            j.params.eta1.to_string(),
            j.params.gamma.to_string(),
            j.params.rho.to_string(),
            j.params.tau.to_string(),
            j.params.delta.to_string(),
            serde_json::to_value(j.variant).unwrap().as_str().unwrap_or_default().to_string(),
            ok.len().to_string(),
            failures.to_string(),
            opt_f64(ari.median),
            opt_f64(ari.mean),
            opt_f64(sens.median),
            opt_f64(spec.median),
            opt_f64(secs.median),
            opt_f64(outer.median),
            converged.to_string(),
            stalled.to_string(),
            chosen_str,
        ]);
        summary.push(json!({
            "n": j.cell.n,
            "p": j.cell.p,
            "k": j.cell.k,
            "theta": j.cell.theta,
            "xi": j.cell.xi,
            "eta1": j.params.eta1,
            "gamma": j.params.gamma,
            "rho": j.params.rho,
            "tau": j.params.tau,
            "delta": j.params.delta,
            "method": j.variant,
            "replicates_ok": ok.len(),
            "failures": failures,
            "ari": ari,
            "sensitivity": sens,
            "specificity": spec,
            "seconds": secs,
            "outer_iters": outer,
            "converged": converged,
            "stalled": stalled,
            "chosen_k_counts": chosen.iter().map(|(k, c)| json!({"k": k, "count": c})).collect::<Vec<_>>(),
        }));
    }
    let sheader: Vec<String> = [
        "n", "p", "k", "theta", "xi", "eta1", "gamma", "rho", "tau", "delta", "method", "replicates_ok", "failures",
        "ari_median", "ari_mean", "sensitivity_median", "specificity_median", "seconds_median",
        "outer_iters_median", "converged", "stalled", "chosen_k_counts",
    ]
    .map(String::from)
    .to_vec();
    io::write_rows(&m.output(&a.out.join("summary.csv")), &sheader, &summary_rows)?;
    let total_failures: usize = outcomes.iter().filter(|o| o.error.is_some()).count();
    let body = json!({
        "design": a.design,
        "replicates": a.replicates,
        "work_items": all.len(),
        "failures": total_failures,
        "groups": summary,
        "failure_messages": outcomes.iter().filter_map(|o| o.error.clone()).collect::<Vec<_>>(),
    });
    let path = m.output(&a.out.join("summary.json"));
    m.wall_seconds = start.elapsed().as_secs_f64();
    write_json(&path, body, &m)
}
