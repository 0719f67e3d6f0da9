//! Python bindings: dataset generation, training, evaluation, the
//! disentanglement metrics, and the identifiability checkers.
//!
//! Build with `cargo build -p mechdis-py --release`, then import the
//! produced cdylib as `mechdis` (see python/smoke_test.py).

use mechdis_core::bipartite::BipartiteGraph;
use mechdis_core::error::CoreError;
use mechdis_core::metrics;
use mechdis_core::model::{Architecture, Checkpoint};
use mechdis_core::rng::Rng;
use mechdis_core::synth;
use mechdis_core::tensor::Tensor;
use mechdis_core::theory;
use mechdis_core::train::{self, TrainConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::path::PathBuf;

fn err_to_py(e: CoreError) -> PyErr {
    match e {
        CoreError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)?)?;
            }
            dict.into_any()
        }
    })
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, name: &str) -> PyResult<Tensor> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if n == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!("{name} must be a non-empty rectangular matrix")));
    }
    Tensor::matrix(n, d, rows.into_iter().flatten().collect()).map_err(err_to_py)
}

/// Generate a synthetic dataset; optionally persist it to `out` and return
/// the (x, a, z) arrays as nested lists plus the metadata.
#[pyfunction]
#[pyo3(signature = (variant, d_z, d_x, n_seq, t_len, seed, out=None))]
fn generate(
    py: Python<'_>,
    variant: &str,
    d_z: usize,
    d_x: usize,
    n_seq: usize,
    t_len: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> PyResult<Py<PyDict>> {
    let var: synth::Variant = variant.parse().map_err(err_to_py)?;
    let (batch, meta, _) =
        synth::generate_dataset(var, d_z, d_x, n_seq, t_len, seed).map_err(err_to_py)?;
    if let Some(dir) = out {
        synth::save_dataset(&batch, &meta, &dir).map_err(err_to_py)?;
    }
    let dict = PyDict::new(py);
    let nest = |arr: &synth::SeqArray| -> Vec<Vec<Vec<f64>>> {
        (0..arr.n_seq)
            .map(|s| (0..arr.t_len).map(|t| arr.at(s, t).to_vec()).collect())
            .collect()
    };
    dict.set_item("x", nest(&batch.x))?;
    dict.set_item("a", nest(&batch.a))?;
    if let Some(z) = &batch.z {
        dict.set_item("z", nest(z))?;
    }
    let meta_v = serde_json::to_value(&meta).map_err(|e| PyValueError::new_err(e.to_string()))?;
    dict.set_item("meta", json_to_py(py, &meta_v)?)?;
    Ok(dict.into())
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    alpha_a: f64,
    alpha_z: f64,
    lr: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    enc_hidden: usize,
    enc_layers: usize,
    trans_hidden: usize,
    trans_layers: usize,
    holdout: f64,
) -> TrainConfig {
    TrainConfig {
        alpha_a,
        alpha_z,
        lr,
        epochs,
        batch_size,
        seed,
        holdout_frac: holdout,
        arch: Architecture {
            enc_hidden,
            enc_layers,
            trans_hidden,
            trans_layers,
            ..Architecture::default()
        },
        ..TrainConfig::default()
    }
}

/// Train the masked sequential VAE on a dataset directory and return the
/// evaluation report (checkpoint/log/report are written into `out`).
#[pyfunction]
#[pyo3(signature = (data, out, alpha_a=0.0, alpha_z=0.0, lr=0.0005, epochs=100,
    batch_size=256, seed=0, enc_hidden=128, enc_layers=3, trans_hidden=64,
    trans_layers=3, holdout=0.1, supervised=false))]
#[allow(clippy::too_many_arguments)]
fn train_model(
    py: Python<'_>,
    data: PathBuf,
    out: PathBuf,
    alpha_a: f64,
    alpha_z: f64,
    lr: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    enc_hidden: usize,
    enc_layers: usize,
    trans_hidden: usize,
    trans_layers: usize,
    holdout: f64,
    supervised: bool,
) -> PyResult<Py<PyAny>> {
    let (batch, meta) = synth::load_dataset(&data).map_err(err_to_py)?;
    let config = build_config(
        alpha_a, alpha_z, lr, epochs, batch_size, seed, enc_hidden, enc_layers, trans_hidden,
        trans_layers, holdout,
    );
    config.validate().map_err(err_to_py)?;
    std::fs::create_dir_all(&out)
        .map_err(|e| PyIOError::new_err(format!("{}: {e}", out.display())))?;
    let (params, log) = if supervised {
        (train::train_supervised(&batch, meta.sigma, &config).map_err(err_to_py)?, Default::default())
    } else {
        let outcome = train::train(&batch, meta.sigma, &config, Some(&out)).map_err(err_to_py)?;
        (outcome.params, outcome.log)
    };
    Checkpoint::from_params(&params, config.echo_json())
        .save(&out.join("checkpoint.json"))
        .map_err(err_to_py)?;
    log.write_csv(&out.join("log.csv")).map_err(err_to_py)?;
    let report = metrics::evaluate(&batch, &meta, &params, &config).map_err(err_to_py)?;
    std::fs::write(out.join("report.json"), report.to_json())
        .map_err(|e| PyIOError::new_err(e.to_string()))?;
    let v = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(json_to_py(py, &v)?.unbind())
}

/// Evaluate a saved checkpoint against a dataset directory.
#[pyfunction]
#[pyo3(signature = (checkpoint, data, holdout=None, seed=None))]
fn evaluate(
    py: Python<'_>,
    checkpoint: PathBuf,
    data: PathBuf,
    holdout: Option<f64>,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let ckpt = Checkpoint::load(&checkpoint).map_err(err_to_py)?;
    let (batch, meta) = synth::load_dataset(&data).map_err(err_to_py)?;
    let mut config: TrainConfig = serde_json::from_value(ckpt.config.clone()).unwrap_or_default();
    if let Some(h) = holdout {
        config.holdout_frac = h;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let params = ckpt.into_params().map_err(err_to_py)?;
    let report = metrics::evaluate(&batch, &meta, &params, &config).map_err(err_to_py)?;
    let v = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(json_to_py(py, &v)?.unbind())
}

/// Mean correlation coefficient between two `(n, d)` representations.
/// Returns `(score, permutation)`.
#[pyfunction]
fn mcc(learned: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<(f64, Vec<usize>)> {
    let l = matrix_from_rows(learned, "learned")?;
    let t = matrix_from_rows(truth, "truth")?;
    metrics::mcc(&l, &t).map_err(err_to_py)
}

/// Average R^2 of regressing the true latents on the learned ones.
#[pyfunction]
fn linear_score(learned: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    let l = matrix_from_rows(learned, "learned")?;
    let t = matrix_from_rows(truth, "truth")?;
    metrics::linear_score(&l, &t).map_err(err_to_py)
}

/// Graphical-criterion check on an adjacency matrix.
/// `mode` is "action" or "temporal".
#[pyfunction]
fn check_criterion(py: Python<'_>, adj: Vec<Vec<u8>>, mode: &str) -> PyResult<Py<PyAny>> {
    let graph = BipartiteGraph::new(adj).map_err(err_to_py)?;
    let report = match mode {
        "action" => theory::check_action_criterion(&graph),
        "temporal" => theory::check_temporal_criterion(&graph),
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be 'action' or 'temporal', got '{other}'"
            )))
        }
    };
    let v = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(json_to_py(py, &v)?.unbind())
}

/// Criterion plus sufficient-variability verdict for a named variant.
#[pyfunction]
#[pyo3(signature = (variant, d_z, seed=0, probes=60))]
fn check_variant(
    py: Python<'_>,
    variant: &str,
    d_z: usize,
    seed: u64,
    probes: usize,
) -> PyResult<Py<PyAny>> {
    let var: synth::Variant = variant.parse().map_err(err_to_py)?;
    let process = synth::GroundTruthProcess::generate(var, d_z, 2 * d_z, seed).map_err(err_to_py)?;
    let mut rng = Rng::new(seed.wrapping_add(1));
    let (criterion, variability) = if var.uses_actions() {
        let c = theory::check_action_criterion(&process.graph_a);
        let v = theory::check_action_variability_all(&process, &process.graph_a, probes, &mut rng)
            .map_err(err_to_py)?;
        (c, v)
    } else {
        let c = theory::check_temporal_criterion(&process.graph_z);
        let v = theory::check_temporal_variability(&process, &process.graph_z, probes, &mut rng)
            .map_err(err_to_py)?;
        (c, v)
    };
    let v = serde_json::json!({
        "variant": var.to_string(),
        "d_z": d_z,
        "satisfied": criterion.satisfied && variability.satisfied,
        "criterion": criterion,
        "variability": variability,
    });
    Ok(json_to_py(py, &v)?.unbind())
}

/// Randomized no-counterexample search for both sparsity lemmas.
#[pyfunction]
#[pyo3(signature = (dim=3, trials=100, seed=0))]
fn verify_lemmas(py: Python<'_>, dim: usize, trials: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let mut rng = Rng::new(seed);
    let action_pattern = if dim >= 3 {
        synth::adjacency(synth::Variant::NonTrivialAction, dim, dim).map_err(err_to_py)?.0
    } else {
        BipartiteGraph::identity(dim)
    };
    let temporal_pattern = if dim >= 2 {
        synth::adjacency(synth::Variant::NonTrivialTemporal, dim, dim).map_err(err_to_py)?.1
    } else {
        BipartiteGraph::identity(dim)
    };
    let action = theory::verify_lemma_action(&action_pattern, trials, &mut rng).map_err(err_to_py)?;
    let temporal =
        theory::verify_lemma_temporal(&temporal_pattern, trials, &mut rng).map_err(err_to_py)?;
    let v = serde_json::json!({
        "passed": action.passed() && temporal.passed(),
        "action": action,
        "temporal": temporal,
    });
    Ok(json_to_py(py, &v)?.unbind())
}

/// Closed-form KL between diagonal Gaussians, summed over dimensions.
#[pyfunction]
fn kl_diag_gaussians(qm: Vec<f64>, qlv: Vec<f64>, pm: Vec<f64>, plv: Vec<f64>) -> PyResult<f64> {
    if qm.len() != qlv.len() || qm.len() != pm.len() || qm.len() != plv.len() {
        return Err(PyValueError::new_err("all four parameter vectors must share a length"));
    }
    Ok(mechdis_core::model::kl_diag_gaussians(&qm, &qlv, &pm, &plv))
}

#[pymodule]
fn mechdis(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mcc, m)?)?;
    m.add_function(wrap_pyfunction!(linear_score, m)?)?;
    m.add_function(wrap_pyfunction!(check_criterion, m)?)?;
    m.add_function(wrap_pyfunction!(check_variant, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lemmas, m)?)?;
    m.add_function(wrap_pyfunction!(kl_diag_gaussians, m)?)?;
    Ok(())
}
