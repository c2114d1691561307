//! The `fit`, `tune`, `select-k`, `evaluate` and `generate` subcommands.

use std::path::Path;
use std::time::Instant;

use rsodc::datagen::{self, SimulationConfig};
use rsodc::metrics::{self, Partition};
use rsodc::selection::{self, ParamGrid};
use rsodc::{FitResult, Matrix, Params, ProblemInstance};
use serde_json::{json, Value};

use crate::args::{EvaluateArgs, FitArgs, GenerateArgs, SelectKArgs, TuneArgs};
use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_f64};
use crate::output::{matrix_json, number, params_json, write_json, Manifest};
use crate::plot::scatter_svg;

pub fn ensure_dir(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", out.display())))
}

/// 1-based indices of the variables with a nonzero row in `b`.
pub fn selected_variables(b: &Matrix) -> Vec<usize> {
    selection::selection_indicator(b)
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(j, _)| j + 1)
        .collect()
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| number(x)).collect())
}

/// JSON body describing one fit.
pub fn fit_json(f: &FitResult, k: usize) -> Value {
    json!({
        "method": f.method,
        "converged": f.converged,
        "status": f.status,
        "k": k,
        "n": f.y_hat.nrows(),
        "p": f.b_hat.nrows(),
        "labels": f.labels,
        "b_hat": matrix_json(&f.b_hat),
        "y_hat": matrix_json(&f.y_hat),
        "embedding": matrix_json(&f.embedding),
        "centers": matrix_json(&f.centers.centroids),
        "selected_variables": selected_variables(&f.b_hat),
        "objective_trace": floats(&f.objective_trace),
        "final_objective": number(f.final_objective()),
        "outer_iters": f.outer_iters,
        "inner_iters": f.inner_iters,
        "b_sweeps": f.b_sweeps,
        "repaired_updates": f.repaired_updates,
        "graph_edges": f.graph_edges,
        "timings": {
            "setup": f.timings.setup,
            "b_update": f.timings.b_update,
            "y_update": f.timings.y_update,
            "kmeans": f.timings.kmeans,
            "total": f.timings.total,
        },
    })
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let start = Instant::now();
    let (x, _) = io::read_matrix(&a.input.input, !a.input.no_header)?;
    let params = a.solver.params();
    let inst = ProblemInstance::new(x, a.k, params)?;
    ensure_dir(&a.out)?;
    let f = rsodc::fit(&inst, a.seed)?;

    let config = json!({ "k": a.k, "params": params_json(&params), "has_header": !a.input.no_header });
    let mut m = Manifest::new("fit", a.seed, config, &[&a.input.input]);
    let names = io::component_names(f.embedding.ncols());
    io::write_matrix(&m.output(&a.out.join("embedding.csv")), &names, &f.embedding, Some(&f.labels))?;
    std::fs::write(
        m.output(&a.out.join("embedding.svg")),
        scatter_svg(&f.embedding, &f.labels, "embedding X B"),
    )?;
    std::fs::write(m.output(&a.out.join("scoring.svg")), scatter_svg(&f.y_hat, &f.labels, "scores Y"))?;
    let path = m.output(&a.out.join("fit.json"));
    m.wall_seconds = start.elapsed().as_secs_f64();
    write_json(&path, fit_json(&f, a.k), &m)
}

pub fn cmd_tune(a: &TuneArgs) -> CliResult<()> {
    let start = Instant::now();
    let (x, _) = io::read_matrix(&a.input.input, !a.input.no_header)?;
    let base = a.solver.params();
    let grid = ParamGrid {
        eta1: a.eta1_grid.clone(),
        gamma: a.gamma_grid.clone(),
        rho: a.rho_grid.clone(),
        repeats: a.repeats,
    };
    if grid.combos().is_empty() {
        return Err(CliError::Input("grid has no (gamma, rho) pair with gamma / rho < 1".into()));
    }
    if a.repeats == 0 {
        return Err(CliError::Input("repeats must be >= 1".into()));
    }
    ProblemInstance::new(x.clone(), a.k, base)?;
    ensure_dir(&a.out)?;
    let cv = selection::stability_cv(&x, a.k, &grid, &base, a.seed)?;

    let config = json!({
        "k": a.k,
        "base_params": params_json(&base),
        "eta1_grid": a.eta1_grid,
        "gamma_grid": a.gamma_grid,
        "rho_grid": a.rho_grid,
        "repeats": a.repeats,
    });
    let mut m = Manifest::new("tune", a.seed, config, &[&a.input.input]);

    let mut header: Vec<String> = ["eta1", "gamma", "rho", "mean_kappa", "failures"].map(String::from).to_vec();
    header.extend((1..=a.repeats).map(|r| format!("kappa_{r}")));
    let rows: Vec<Vec<String>> = cv
        .table
        .iter()
        .map(|r| {
            let mut row = vec![
                r.combo.eta1.to_string(),
                r.combo.gamma.to_string(),
                r.combo.rho.to_string(),
                fmt_f64(r.mean_kappa),
                r.failures.to_string(),
            ];
            row.extend(r.kappas.iter().map(|&k| fmt_f64(k)));
            row
        })
        .collect();
    io::write_rows(&m.output(&a.out.join("cv_table.csv")), &header, &rows)?;

    let best_row = cv.table.iter().find(|r| r.combo == cv.best);
    let best_params = Params { eta1: cv.best.eta1, gamma: cv.best.gamma, rho: cv.best.rho, ..base };
    let body = json!({
        "eta1": cv.best.eta1,
        "gamma": cv.best.gamma,
        "rho": cv.best.rho,
        "mean_kappa": best_row.map(|r| number(r.mean_kappa)).unwrap_or(Value::Null),
        "combos_evaluated": cv.table.len(),
        "params": params_json(&best_params),
    });
    let path = m.output(&a.out.join("best_params.json"));
    m.wall_seconds = start.elapsed().as_secs_f64();
    write_json(&path, body, &m)
}

pub fn cmd_select_k(a: &SelectKArgs) -> CliResult<()> {
    let start = Instant::now();
    let (x, _) = io::read_matrix(&a.input.input, !a.input.no_header)?;
    if a.k_min < 2 || a.k_max < a.k_min {
        return Err(CliError::Input(format!("invalid k range {}..={}", a.k_min, a.k_max)));
    }
    if a.gap.mc_samples == 0 || a.gap.gap_restarts == 0 {
        return Err(CliError::Input("mc-samples and gap-restarts must be >= 1".into()));
    }
    let params = a.solver.params();
    params.validate()?;
    ensure_dir(&a.out)?;
    let ks: Vec<usize> = (a.k_min..=a.k_max).collect();
    let sel = selection::select_k_by_gap(&x, &ks, &params, a.gap.options(), a.seed)?;

    let config = json!({
        "k_min": a.k_min,
        "k_max": a.k_max,
        "mc_samples": a.gap.mc_samples,
        "reference": selection::GapReference::from(a.gap.reference),
        "gap_restarts": a.gap.gap_restarts,
        "params": params_json(&params),
    });
    let mut m = Manifest::new("select-k", a.seed, config, &[&a.input.input]);
    let c = &sel.curve;
    let header: Vec<String> = ["k", "gap", "se", "log_w"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = (0..c.k_candidates.len())
        .map(|i| vec![c.k_candidates[i].to_string(), fmt_f64(c.gap[i]), fmt_f64(c.se[i]), fmt_f64(c.log_w[i])])
        .collect();
    io::write_rows(&m.output(&a.out.join("gap_curve.csv")), &header, &rows)?;
    let body = json!({
        "chosen_k": c.chosen_k,
        "k_candidates": c.k_candidates,
        "gap": floats(&c.gap),
        "se": floats(&c.se),
        "log_w": floats(&c.log_w),
        "failed": sel.failed.iter().map(|(k, e)| json!({"k": k, "error": e})).collect::<Vec<_>>(),
    });
    let path = m.output(&a.out.join("chosen_k.json"));
    m.wall_seconds = start.elapsed().as_secs_f64();
    write_json(&path, body, &m)
}

fn json_matrix(v: &Value, what: &str) -> CliResult<Matrix> {
    let rows = v.as_array().ok_or_else(|| CliError::Input(format!("`{what}` is not an array")))?;
    let n = rows.len();
    let mut cols = None;
    let mut data = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_array().ok_or_else(|| CliError::Input(format!("`{what}` row {} is not an array", i + 1)))?;
        if *cols.get_or_insert(r.len()) != r.len() {
            return Err(CliError::Input(format!("`{what}` row {} has {} entries", i + 1, r.len())));
        }
        for x in r {
            data.push(x.as_f64().ok_or_else(|| CliError::Input(format!("`{what}` row {} has a non-number", i + 1)))?);
        }
    }
    Ok(Matrix::from_row_slice(n, cols.unwrap_or(0), &data))
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let start = Instant::now();
    let text = std::fs::read_to_string(&a.fit)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", a.fit.display())))?;
    let fit: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.fit.display())))?;
    let labels: Vec<u64> = fit["labels"]
        .as_array()
        .and_then(|l| l.iter().map(Value::as_u64).collect())
        .ok_or_else(|| CliError::Input("fit json has no integer `labels` array".into()))?;
    let b = json_matrix(&fit["b_hat"], "b_hat")?;
    let emb = json_matrix(&fit["embedding"], "embedding")?;
    let truth = io::read_labels(&a.truth, !a.no_header)?;
    let n = labels.len();
    if truth.len() != n {
        return Err(CliError::Input(format!("fit has {n} subjects but truth has {}", truth.len())));
    }
    if emb.nrows() != n {
        return Err(CliError::Input(format!("fit embedding has {} rows, labels {n}", emb.nrows())));
    }
    let est = Partition::new(&labels);
    let tru = Partition::new(&truth);

    let mut body = serde_json::Map::new();
    body.insert("n".into(), json!(n));
    body.insert("ari".into(), number(metrics::adjusted_rand_index(&tru, &est)?));
    body.insert("variance_ratio".into(), number(metrics::variance_ratio(&emb, &est)?));
    body.insert("selected_variables".into(), json!(selected_variables(&b)));
    if !a.informative.is_empty() {
        let p = b.nrows();
        let mut idx = Vec::with_capacity(a.informative.len());
        for &j in &a.informative {
            if j == 0 || j > p {
                return Err(CliError::Input(format!("informative index {j} outside 1..={p}")));
            }
            idx.push(j - 1);
        }
        let acc = metrics::sensitivity_specificity(&b, &idx)?;
        body.insert("sensitivity".into(), number(acc.sensitivity));
        body.insert("specificity".into(), number(acc.specificity));
    }
    let mut inputs: Vec<&Path> = vec![&a.fit, &a.truth];
    if let Some(data) = &a.data {
        let (x, _) = io::read_matrix(data, !a.no_header)?;
        if x.nrows() != n {
            return Err(CliError::Input(format!("data has {} rows, fit {n}", x.nrows())));
        }
        body.insert("f_scores".into(), floats(&metrics::anova_f_scores(&x, &est)?));
        inputs.push(data);
    }
    let config = json!({ "informative": a.informative, "has_header": !a.no_header });
    let mut m = Manifest::new("evaluate", 0, config, &inputs);
    let path = m.output(&a.out.join("metrics.json"));
    ensure_dir(&a.out)?;
    m.wall_seconds = start.elapsed().as_secs_f64();
    write_json(&path, Value::Object(body), &m)
}

pub fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let cfg = SimulationConfig {
        n: a.n,
        p: a.p,
        k: a.k,
        q: a.q,
        c_star: a.c_star,
        theta: a.theta,
        xi: a.xi,
        xi_dagger: a.xi_dagger,
        seed: a.seed,
    };
    let data = datagen::generate(&cfg)?;
    ensure_dir(&a.out)?;
    let names: Vec<String> = (1..=a.p).map(|j| format!("x{j}")).collect();
    io::write_matrix(&a.out.join("data.csv"), &names, &data.x, None)?;
    let rows: Vec<Vec<String>> = data.labels.labels().iter().map(|l| vec![l.to_string()]).collect();
    io::write_rows(&a.out.join("truth.csv"), &["label".to_string()], &rows)?;
    Ok(())
}
