//! JSON helpers and the run manifest embedded in every result file.

use std::path::{Path, PathBuf};

use rsodc::{Matrix, Params};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliResult;

/// Row-major nested array.
pub fn matrix_json(m: &Matrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| number(m[(i, j)])).collect()))
            .collect(),
    )
}

/// Finite numbers as JSON numbers, everything else as `null`.
pub fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

pub fn params_json(p: &Params) -> Value {
    json!({
        "eta1": p.eta1,
        "eta2": p.eta2,
        "gamma": p.gamma,
        "rho": p.rho,
        "nu": p.nu,
        "tau": p.tau,
        "delta": p.delta,
        "epsilon": p.epsilon,
        "max_outer": p.max_outer,
        "max_inner": p.max_inner,
        "max_b_sweeps": p.max_b_sweeps,
        "v_mode": p.v_mode,
        "b_init": p.b_init,
        "kmeans_restarts": p.kmeans_restarts,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: Value, inputs: &[&Path]) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn output(&mut self, path: &Path) -> PathBuf {
        self.outputs.push(path.display().to_string());
        path.to_path_buf()
    }
}

/// Adds the manifest under `"manifest"` and writes pretty-printed JSON.
pub fn write_json(path: &Path, mut body: Value, manifest: &Manifest) -> CliResult<()> {
    if let Value::Object(map) = &mut body {
        map.insert("manifest".into(), serde_json::to_value(manifest)?);
    }
    let mut text = serde_json::to_string_pretty(&body)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
