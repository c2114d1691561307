use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rsodc"))
}

fn run(args: &[&str]) -> i32 {
    let out = bin().args(args).output().expect("spawn rsodc");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn assert_valid(doc: &Value, schema_file: &str) {
    let schema = read_json(&schema_dir().join(schema_file));
    let v = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{schema_file}: {errors:?}");
}

/// Writes a generated data set and returns `(data.csv, truth.csv)`.
fn dataset(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let d = dir.join("data");
    assert_eq!(run(&["generate", "--out", s(&d), "--seed", &seed.to_string()]), 0);
    (d.join("data.csv"), d.join("truth.csv"))
}

fn strip_volatile(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.remove("timings");
        if let Some(Value::Object(man)) = m.get_mut("manifest") {
            man.remove("wall_seconds");
            man.remove("outputs");
        }
    }
    v
}

fn fit_into(data: &Path, out: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["fit", "--input", s(data), "--k", "3", "--seed", "7", "--out", s(out)];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), 0);
    read_json(&out.join("fit.json"))
}

#[test]
fn fit_writes_valid_outputs() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = dataset(tmp.path(), 1);
    let out = tmp.path().join("fit");
    let fit = fit_into(&data, &out, &[]);
    assert_valid(&fit, "fit.schema.json");
    assert_eq!(fit["method"], "rsodc");
    assert_eq!(fit["manifest"]["command"], "fit");
    for f in ["embedding.csv", "embedding.svg", "scoring.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let svg = std::fs::read_to_string(out.join("embedding.svg")).unwrap();
    assert!(svg.contains("component 1") && svg.contains("component 2"));
    let labels: Vec<u64> = fit["labels"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let mut distinct = labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    assert_eq!(distinct, vec![1, 2, 3]);
}

#[test]
fn embedding_csv_round_trips() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = dataset(tmp.path(), 2);
    let out = tmp.path().join("fit");
    let fit = fit_into(&data, &out, &[]);
    let (m, header) = rsodc_cli::io::read_matrix(&out.join("embedding.csv"), true).unwrap();
    assert_eq!(header.unwrap(), vec!["component_1", "component_2", "label"]);
    let emb = fit["embedding"].as_array().unwrap();
    for (i, row) in emb.iter().enumerate() {
        for (j, v) in row.as_array().unwrap().iter().enumerate() {
            assert!((m[(i, j)] - v.as_f64().unwrap()).abs() <= 1e-12);
        }
        assert_eq!(m[(i, 2)] as u64, fit["labels"][i].as_u64().unwrap());
    }
}

#[test]
fn fit_is_deterministic_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = dataset(tmp.path(), 3);
    let a = fit_into(&data, &tmp.path().join("a"), &["--threads", "1"]);
    let b = fit_into(&data, &tmp.path().join("b"), &["--threads", "1"]);
    let c = fit_into(&data, &tmp.path().join("c"), &["--threads", "4"]);
    let (a, b, c) = (strip_volatile(a), strip_volatile(b), strip_volatile(c));
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn threads_env_var_is_accepted() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = dataset(tmp.path(), 3);
    let out = tmp.path().join("env");
    let status = bin()
        .env("RSODC_THREADS", "2")
        .args(["fit", "--input", s(&data), "--k", "3", "--out", s(&out)])
        .status()
        .unwrap();
    assert!(status.success());
    let bad = bin()
        .env("RSODC_THREADS", "zero")
        .args(["fit", "--input", s(&data), "--k", "3", "--out", s(&out)])
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
}

#[test]
fn zero_gamma_is_annotated_sodc() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = dataset(tmp.path(), 4);
    let fit = fit_into(&data, &tmp.path().join("f"), &["--gamma", "0"]);
    assert_eq!(fit["method"], "sodc");
    assert_eq!(fit["graph_edges"], 0);
    assert_valid(&fit, "fit.schema.json");
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n3,oops\n").unwrap();
    let out = bin().args(["fit", "--input", s(&bad), "--k", "2", "--out", s(&tmp.path().join("o"))]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("column 2"), "{err}");

    let ragged = tmp.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    assert_eq!(run(&["fit", "--no-header", "--input", s(&ragged), "--k", "2", "--out", s(tmp.path())]), 2);

    let missing = tmp.path().join("none.csv");
    assert_eq!(run(&["fit", "--input", s(&missing), "--k", "2", "--out", s(tmp.path())]), 2);
    assert_eq!(run(&["fit", "--bogus"]), 2);

    let (data, _) = dataset(tmp.path(), 5);
    // gamma / rho >= 1 is a parameter error.
    assert_eq!(run(&["fit", "--input", s(&data), "--k", "3", "--gamma", "0.5", "--rho", "0.1", "--out", s(tmp.path())]), 2);
    assert_eq!(run(&["fit", "--input", s(&data), "--k", "1", "--out", s(tmp.path())]), 2);
}

#[test]
fn non_convergence_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = dataset(tmp.path(), 6);
    let fit = fit_into(&data, &tmp.path().join("f"), &["--max-outer", "1", "--v-mode", "exact"]);
    assert_eq!(fit["converged"], false);
}

#[test]
fn tune_single_combo_echoes_it() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = dataset(tmp.path(), 7);
    let out = tmp.path().join("tune");
    let code = run(&[
        "tune", "--input", s(&data), "--k", "3", "--eta1-grid", "1.5", "--gamma-grid", "0.003", "--rho-grid", "0.05",
        "--repeats", "2", "--out", s(&out),
    ]);
    assert_eq!(code, 0);
    let best = read_json(&out.join("best_params.json"));
    assert_valid(&best, "best_params.schema.json");
    assert_eq!(best["eta1"], 1.5);
    assert_eq!(best["gamma"], 0.003);
    assert_eq!(best["rho"], 0.05);
    let table = std::fs::read_to_string(out.join("cv_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().next().unwrap().ends_with("kappa_1,kappa_2"));
}

#[test]
fn tune_rejects_empty_filtered_grid() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = dataset(tmp.path(), 7);
    let code = run(&[
        "tune", "--input", s(&data), "--k", "3", "--gamma-grid", "0.1", "--rho-grid", "0.05", "--out", s(tmp.path()),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn select_k_single_candidate() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = dataset(tmp.path(), 8);
    let out = tmp.path().join("sel");
    let code =
        run(&["select-k", "--input", s(&data), "--k-min", "3", "--k-max", "3", "--mc-samples", "5", "--out", s(&out)]);
    assert_eq!(code, 0);
    let chosen = read_json(&out.join("chosen_k.json"));
    assert_valid(&chosen, "chosen_k.schema.json");
    assert_eq!(chosen["chosen_k"], 3);
    let curve = std::fs::read_to_string(out.join("gap_curve.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), "k,gap,se,log_w");
    assert_eq!(curve.lines().count(), 2);
}

#[test]
fn evaluate_reports_metrics() {
    let tmp = TempDir::new().unwrap();
    let (data, truth) = dataset(tmp.path(), 9);
    let fit_dir = tmp.path().join("f");
    fit_into(&data, &fit_dir, &[]);
    let fit_json = fit_dir.join("fit.json");

    let full = tmp.path().join("full");
    assert_eq!(
        run(&[
            "evaluate", "--fit", s(&fit_json), "--truth", s(&truth), "--informative", "1,2", "--data", s(&data),
            "--out", s(&full),
        ]),
        0
    );
    let m = read_json(&full.join("metrics.json"));
    assert_valid(&m, "metrics.schema.json");
    for key in ["ari", "variance_ratio", "sensitivity", "specificity", "f_scores"] {
        assert!(m.get(key).is_some(), "{key} missing");
    }
    assert_eq!(m["f_scores"].as_array().unwrap().len(), 20);

    let partial = tmp.path().join("partial");
    assert_eq!(run(&["evaluate", "--fit", s(&fit_json), "--truth", s(&truth), "--out", s(&partial)]), 0);
    let m = read_json(&partial.join("metrics.json"));
    assert_valid(&m, "metrics.schema.json");
    assert!(m.get("sensitivity").is_none());
    assert!(m.get("ari").is_some());

    // Labels of the fit itself as truth give ARI 1.
    let own = tmp.path().join("own.csv");
    let labels = read_json(&fit_json)["labels"].as_array().unwrap().iter().map(|v| v.to_string()).collect::<Vec<_>>();
    std::fs::write(&own, format!("label\n{}\n", labels.join("\n"))).unwrap();
    let same = tmp.path().join("same");
    assert_eq!(run(&["evaluate", "--fit", s(&fit_json), "--truth", s(&own), "--out", s(&same)]), 0);
    assert_eq!(read_json(&same.join("metrics.json"))["ari"], 1.0);

    let short = tmp.path().join("short.csv");
    std::fs::write(&short, "label\n1\n2\n").unwrap();
    assert_eq!(run(&["evaluate", "--fit", s(&fit_json), "--truth", s(&short), "--out", s(&same)]), 2);
}

#[test]
fn simulate_single_replicate_designs() {
    let tmp = TempDir::new().unwrap();
    for (design, extra) in [
        ("1", vec!["--n", "60", "--p", "20", "--k", "3", "--theta", "2.2", "--xi", "0.5"]),
        ("2", vec!["--eta1-grid", "2.5", "--gamma-grid", "0.001", "--rho-grid", "0.01,0.03"]),
        ("3", vec!["--k", "3", "--k-min", "2", "--k-max", "4", "--mc-samples", "5"]),
        ("4", vec!["--tau-grid", "0.1", "--delta-grid", "5,25"]),
        ("5", vec![]),
    ] {
        let out = tmp.path().join(format!("d{design}"));
        let mut args = vec!["simulate", "--design", design, "--replicates", "1", "--out", s(&out)];
        args.extend(extra);
        assert_eq!(run(&args), 0, "design {design}");
        let summary = read_json(&out.join("summary.json"));
        assert_valid(&summary, "summary.schema.json");
        assert_eq!(summary["failures"], 0, "design {design}: {summary}");
        let groups = summary["groups"].as_array().unwrap();
        let expected = match design {
            "1" => 3,
            "2" | "4" => 2,
            _ => 1,
        };
        assert_eq!(groups.len(), expected, "design {design}");
        let reps = std::fs::read_to_string(out.join("replicates.csv")).unwrap();
        assert_eq!(reps.lines().count(), 1 + expected);
        if design == "3" {
            assert!(groups[0]["chosen_k_counts"].as_array().unwrap().len() == 1);
        }
    }
}

#[test]
fn simulate_aggregates_are_thread_invariant() {
    let tmp = TempDir::new().unwrap();
    let mut summaries = Vec::new();
    for t in ["1", "3"] {
        let out = tmp.path().join(format!("t{t}"));
        let code = run(&[
            "--threads", t, "simulate", "--design", "4", "--replicates", "3", "--tau-grid", "0.1", "--delta-grid",
            "5,25", "--out", s(&out),
        ]);
        assert_eq!(code, 0);
        let mut v = read_json(&out.join("summary.json"));
        v.as_object_mut().unwrap().remove("manifest");
        for g in v["groups"].as_array_mut().unwrap() {
            g.as_object_mut().unwrap().remove("seconds");
        }
        summaries.push(v);
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn simulate_rejects_bad_design() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&["simulate", "--design", "6", "--out", s(tmp.path())]), 2);
    assert_eq!(run(&["simulate", "--design", "1", "--k", "7", "--out", s(tmp.path())]), 2);
}
