//! Python extension module exposing the decoding engine.
//!
//! Build with `cargo build -p sjd-python --release`, then rename/copy
//! `libsjd_engine.so` to `sjd_engine.so` somewhere on `sys.path` (the
//! `python/smoke_test.py` script does this automatically).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sjd_core::bench;
use sjd_core::decoder;
use sjd_core::model;
use sjd_core::oracle;
use sjd_core::spatial_init::GridGeom;

fn engine_err(err: sjd_core::EngineError) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn json_err(err: serde_json::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// Synthetic model specification.
#[pyclass(name = "ModelSpec", skip_from_py_object)]
#[derive(Clone)]
struct PyModelSpec {
    inner: model::ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    /// Named preset: "hash", "hash-sharp" or "ngram".
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        model::ModelSpec::preset(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: model::ModelSpec = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(engine_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn vocab_size(&self) -> u32 {
        self.inner.vocab_size()
    }

    fn __repr__(&self) -> String {
        format!("ModelSpec({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

/// Decoding knobs for a single run.
#[pyclass(name = "DecodeConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyDecodeConfig {
    inner: decoder::DecodeConfig,
}

#[pymethods]
impl PyDecodeConfig {
    #[new]
    #[pyo3(signature = (
        mode = "sjdpp",
        window = 16,
        top_k = 16,
        temperature = 1.0,
        cfg_weight = None,
        reuse_threshold = 0.5,
        init = "random",
        grid = (16, 16),
        prompt = Vec::new(),
        seed = 0,
        refine = true,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        mode: &str,
        window: usize,
        top_k: usize,
        temperature: f64,
        cfg_weight: Option<f64>,
        reuse_threshold: f64,
        init: &str,
        grid: (usize, usize),
        prompt: Vec<u32>,
        seed: u64,
        refine: bool,
    ) -> PyResult<Self> {
        let inner = decoder::DecodeConfig {
            mode: mode.parse().map_err(engine_err)?,
            window,
            top_k,
            temperature,
            cfg_weight,
            reuse_threshold,
            init: init.parse().map_err(engine_err)?,
            grid: GridGeom::new(grid.0, grid.1),
            prompt,
            seed,
            refine,
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(json_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn total_tokens(&self) -> usize {
        self.inner.total_tokens()
    }

    fn __repr__(&self) -> String {
        format!("DecodeConfig({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

/// Output of one decode run.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    inner: decoder::RunResult,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn tokens(&self) -> Vec<u32> {
        self.inner.tokens.clone()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    #[getter]
    fn step_compression(&self) -> f64 {
        self.inner.step_compression
    }

    #[getter]
    fn logprob_mean(&self) -> f64 {
        self.inner.logprob_mean
    }

    #[getter]
    fn logprob_std(&self) -> f64 {
        self.inner.logprob_std
    }

    /// Per-iteration trace as a JSON array (one object per iteration).
    fn trace_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.iteration_trace).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(steps={}, step_compression={:.3})",
            self.inner.steps, self.inner.step_compression
        )
    }
}

/// Run one decode; the result is fully determined by (model, config).
#[pyfunction]
fn decode(model: &PyModelSpec, config: &PyDecodeConfig) -> PyResult<PyRunResult> {
    let built = model::Model::build(model.inner.clone()).map_err(engine_err)?;
    let inner = decoder::decode(&built, &config.inner).map_err(engine_err)?;
    Ok(PyRunResult { inner })
}

/// Analytic accept-or-resample marginal; equals `d_new` for every pair.
#[pyfunction]
fn one_step_marginal(d_ref: Vec<f64>, d_new: Vec<f64>) -> PyResult<Vec<f64>> {
    if d_ref.len() != d_new.len() {
        return Err(PyValueError::new_err("distributions must share a length"));
    }
    let d_ref = model::Distribution::new(d_ref);
    let d_new = model::Distribution::new(d_new);
    Ok(oracle::one_step_marginal(&d_ref, &d_new).probs().to_vec())
}

/// Softmax at `temperature`, truncate to the `top_k` most probable entries,
/// renormalize.
#[pyfunction]
fn shape_distribution(logits: Vec<f64>, temperature: f64, top_k: usize) -> PyResult<Vec<f64>> {
    if logits.is_empty() || top_k == 0 || !temperature.is_finite() || temperature <= 0.0 {
        return Err(PyValueError::new_err(
            "need non-empty logits, top_k >= 1 and temperature > 0",
        ));
    }
    Ok(model::shape_distribution(&logits, temperature, top_k).probs().to_vec())
}

/// Run the verification suite; returns the verdict as a JSON string.
#[pyfunction]
#[pyo3(signature = (trials = 500_000, seed = 0))]
fn oracle_suite(trials: u64, seed: u64) -> PyResult<String> {
    let verdict = oracle::run_suite(trials, seed).map_err(engine_err)?;
    serde_json::to_string(&verdict).map_err(json_err)
}

/// Execute a benchmark described by a JSON config; returns the report as a
/// JSON string.
#[pyfunction]
fn run_bench_json(config_json: &str) -> PyResult<String> {
    let config: bench::BenchConfig = serde_json::from_str(config_json).map_err(json_err)?;
    let report = if config.sweep.as_ref().is_some_and(|axes| !axes.is_empty()) {
        bench::sweep(&config).map_err(engine_err)?
    } else {
        bench::run_bench(&config).map_err(engine_err)?
    };
    serde_json::to_string(&report).map_err(json_err)
}

#[pymodule]
fn sjd_engine(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyDecodeConfig>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(one_step_marginal, m)?)?;
    m.add_function(wrap_pyfunction!(shape_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_suite, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench_json, m)?)?;
    Ok(())
}
