//! Python bindings: parameter objects, simulation, filtering, the sampler
//! and the reduction primitives. Vectors and matrices cross the boundary
//! as nested lists.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use jmls_core::analysis::{frequency_response, log_grid};
use jmls_core::benchmarks::{three_state_three_mode, uninformative_prior, univariate_two_mode};
use jmls_core::dpf;
use jmls_core::filter::forward_filter;
use jmls_core::gibbs::{run_particle_gibbs, GibbsConfig};
use jmls_core::io::{params_from_json, params_to_json, simulate_dataset};
use jmls_core::model::{validate_params, Dataset, HybridPrior, JmlsParams};
use jmls_core::rng::stream;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn series(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

fn dataset(u: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<Dataset> {
    Dataset::new(
        u.iter().map(|v| DVector::from_column_slice(v)).collect(),
        y.iter().map(|v| DVector::from_column_slice(v)).collect(),
    )
    .map_err(value_err)
}

/// Parameter set of a jump Markov linear system.
#[pyclass(name = "Params", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: JmlsParams,
}

#[pymethods]
impl PyParams {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        params_from_json(text)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    fn to_json(&self) -> String {
        params_to_json(&self.inner)
    }

    /// Two-mode reference system with a scalar state.
    #[staticmethod]
    fn two_mode() -> Self {
        Self {
            inner: univariate_two_mode(),
        }
    }

    /// Three-mode reference system with a three-dimensional state.
    #[staticmethod]
    fn three_mode() -> Self {
        Self {
            inner: three_state_three_mode(),
        }
    }

    #[getter]
    fn num_models(&self) -> usize {
        self.inner.num_models()
    }

    #[getter]
    fn n_x(&self) -> usize {
        self.inner.n_x()
    }

    #[getter]
    fn n_u(&self) -> usize {
        self.inner.n_u()
    }

    #[getter]
    fn n_y(&self) -> usize {
        self.inner.n_y()
    }

    #[getter]
    fn transition(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.transition)
    }

    /// Matrix `name` (one of A, B, C, D, Q, R, S) of mode `model` (zero-based).
    fn matrix(&self, model: usize, name: &str) -> PyResult<Vec<Vec<f64>>> {
        let m = self
            .inner
            .models
            .get(model)
            .ok_or_else(|| value_err(format!("no model {model}")))?;
        let mat = match name {
            "A" => &m.a,
            "B" => &m.b,
            "C" => &m.c,
            "D" => &m.d,
            "Q" => &m.q,
            "R" => &m.r,
            "S" => &m.s,
            _ => return Err(value_err(format!("unknown matrix {name:?}"))),
        };
        Ok(rows(mat))
    }

    /// Validation problems; empty when the parameters are valid.
    fn validate(&self) -> Vec<String> {
        validate_params(&self.inner)
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(m={}, n_x={}, n_u={}, n_y={})",
            self.inner.num_models(),
            self.inner.n_x(),
            self.inner.n_u(),
            self.inner.n_y()
        )
    }
}

/// Simulates `n` steps with `u_k ~ N(0, I)`. Returns `(u, y, x, z)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn simulate(
    params: &PyParams,
    n: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<usize>)> {
    if n == 0 {
        return Err(value_err("n must be at least 1"));
    }
    let (data, x, z) = simulate_dataset(&params.inner, n, seed).map_err(value_err)?;
    Ok((series(&data.u), series(&data.y), series(&x), z))
}

/// Forward-filter estimate of `log p(y | u, θ)` with a diffuse state prior.
#[pyfunction]
#[pyo3(signature = (params, u, y, max_components = 64, seed = 0))]
fn log_likelihood(
    params: &PyParams,
    u: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    max_components: usize,
    seed: u64,
) -> PyResult<f64> {
    let data = dataset(u, y)?;
    let prior = HybridPrior::diffuse(params.inner.num_models(), params.inner.n_x());
    let mut rng = stream(seed, 0);
    forward_filter(&params.inner, &data, &prior, max_components, None, &mut rng)
        .map(|h| h.log_likelihood)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs the particle-Gibbs sampler with the broad default prior. Returns
/// the stored parameter samples and the per-iteration log-likelihood.
#[pyfunction]
#[pyo3(signature = (u, y, n_x, m, iterations, burn_in = None, thin = 1, max_components = 5, seed = 0, init = None))]
#[allow(clippy::too_many_arguments)]
fn identify(
    u: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    n_x: usize,
    m: usize,
    iterations: usize,
    burn_in: Option<usize>,
    thin: usize,
    max_components: usize,
    seed: u64,
    init: Option<PyParams>,
) -> PyResult<(Vec<PyParams>, Vec<f64>)> {
    let data = dataset(u, y)?;
    let prior = uninformative_prior(m, n_x, data.n_u(), data.n_y());
    let mut config = GibbsConfig::new(iterations, max_components, seed, prior, n_x);
    if let Some(b) = burn_in {
        config.burn_in = b;
    }
    config.thin = thin;
    config.init_theta = init.map(|p| p.inner);
    let chain =
        run_particle_gibbs(&config, &data).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((
        chain
            .samples
            .into_iter()
            .map(|s| PyParams { inner: s.theta })
            .collect(),
        chain.log_likelihood,
    ))
}

/// Number of components kept without resampling.
#[pyfunction]
fn dpf_threshold(sorted_weights: Vec<f64>, max_kept: usize) -> PyResult<usize> {
    dpf::dpf_threshold(&sorted_weights, max_kept).map_err(value_err)
}

/// Systematic sampling with a fixed offset `u` in (0, 1).
#[pyfunction]
fn systematic_sample(weights: Vec<f64>, draws: usize, u: f64) -> PyResult<Vec<usize>> {
    if !(u > 0.0 && u < 1.0) {
        return Err(value_err("u must lie in (0, 1)"));
    }
    Ok(dpf::systematic_sample(&weights, draws, u))
}

/// Magnitude of `H(e^{jω})` for one mode and channel on `grid`
/// (a 64-point logarithmic grid when omitted).
#[pyfunction]
#[pyo3(signature = (params, model, grid = None, output = 0, input = 0))]
fn magnitude_response(
    params: &PyParams,
    model: usize,
    grid: Option<Vec<f64>>,
    output: usize,
    input: usize,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let mm = params
        .inner
        .models
        .get(model)
        .ok_or_else(|| value_err(format!("no model {model}")))?;
    if output >= mm.n_y() || input >= mm.n_u() {
        return Err(value_err("channel out of range"));
    }
    let grid = grid.unwrap_or_else(|| log_grid(64));
    let r = frequency_response(mm, &grid).map_err(value_err)?;
    Ok((r.frequencies.clone(), r.magnitude(output, input)))
}

#[pymodule]
fn jmls(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(dpf_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(systematic_sample, m)?)?;
    m.add_function(wrap_pyfunction!(magnitude_response, m)?)?;
    Ok(())
}
