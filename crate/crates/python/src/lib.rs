//! Python bindings: STFT, KL-NMF, the three separation methods, metrics and
//! the synthetic mixture generator.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray1, PyReadonlyArray2};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use phasecnmf_core as core;
use phasecnmf_core::dataset::{synth_damped_mixture, GroundTruth, SynthConfig};
use phasecnmf_core::eval::{bss_eval as eval_fixed, bss_eval_best_permutation, EvalScores, DEFAULT_CAP_DB};
use phasecnmf_core::{ComplexSpectrogram, Method, OnsetDomain};

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        core::Error::Numerical { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// STFT settings: window length `N`, hop `S = N / 4`, sample rate.
#[pyclass(name = "StftConfig", module = "phasecnmf", from_py_object)]
#[derive(Clone, Copy)]
struct PyStftConfig {
    inner: core::StftConfig,
}

#[pymethods]
impl PyStftConfig {
    #[new]
    #[pyo3(signature = (window_length = 512, hop = 128, sample_rate = 11025))]
    fn new(window_length: usize, hop: usize, sample_rate: u32) -> PyResult<Self> {
        core::StftConfig::new(window_length, hop, sample_rate)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn window_length(&self) -> usize {
        self.inner.window_length
    }

    #[getter]
    fn hop(&self) -> usize {
        self.inner.hop
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate
    }

    #[getter]
    fn n_bins(&self) -> usize {
        self.inner.n_bins()
    }

    fn n_frames(&self, n_samples: usize) -> usize {
        self.inner.n_frames(n_samples)
    }

    fn __repr__(&self) -> String {
        format!(
            "StftConfig(window_length={}, hop={}, sample_rate={})",
            self.inner.window_length, self.inner.hop, self.inner.sample_rate
        )
    }
}

/// Separation settings. `sigma_s = None` derives the weight from the mixture.
#[pyclass(name = "SeparationConfig", module = "phasecnmf", from_py_object)]
#[derive(Clone)]
struct PySeparationConfig {
    inner: core::SeparationConfig,
}

#[pymethods]
impl PySeparationConfig {
    #[new]
    #[pyo3(signature = (
        n_sources = 2,
        sigma_u = 0.2,
        sigma_r = 0.2,
        sigma_s = None,
        p = 1.0,
        iterations = 10,
        init_iterations = 30,
        seed = 0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_sources: usize,
        sigma_u: f64,
        sigma_r: f64,
        sigma_s: Option<f64>,
        p: f64,
        iterations: usize,
        init_iterations: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let inner = core::SeparationConfig {
            n_sources,
            sigma_u,
            sigma_r,
            sigma_s,
            sparsity_exponent: p,
            outer_iterations: iterations,
            init_nmf_iterations: init_iterations,
            seed,
            ..Default::default()
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_sources(&self) -> usize {
        self.inner.n_sources
    }

    #[getter]
    fn sigma_u(&self) -> f64 {
        self.inner.sigma_u
    }

    #[getter]
    fn sigma_r(&self) -> f64 {
        self.inner.sigma_r
    }

    #[getter]
    fn sigma_s(&self) -> Option<f64> {
        self.inner.sigma_s
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.sparsity_exponent
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.outer_iterations
    }

    #[getter]
    fn init_iterations(&self) -> usize {
        self.inner.init_nmf_iterations
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SeparationConfig(n_sources={}, sigma_u={}, sigma_r={}, sigma_s={:?}, p={}, iterations={}, init_iterations={}, seed={})",
            c.n_sources, c.sigma_u, c.sigma_r, c.sigma_s, c.sparsity_exponent, c.outer_iterations, c.init_nmf_iterations, c.seed
        )
    }
}

/// A synthetic two-source mixture with its ground truth.
#[pyclass(name = "Mixture", module = "phasecnmf")]
struct PyMixture {
    truth: GroundTruth,
}

#[pymethods]
impl PyMixture {
    #[getter]
    fn mixture<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        self.truth.mixture.clone().into_pyarray(py)
    }

    #[getter]
    fn sources<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyArray1<f64>>> {
        self.truth.sources.iter().map(|s| s.clone().into_pyarray(py)).collect()
    }

    /// Per source, STFT frames where an event starts.
    #[getter]
    fn onsets(&self) -> Vec<Vec<usize>> {
        self.truth.spec.onset_frames.clone()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.truth.spec.sample_rate
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.truth.spec.seed
    }
}

fn stft_config(config: Option<PyStftConfig>) -> core::StftConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

/// Complex STFT of a 1-D signal as an `(n_bins, n_frames)` array.
#[pyfunction]
#[pyo3(signature = (signal, config = None))]
fn stft<'py>(
    py: Python<'py>,
    signal: PyReadonlyArray1<'py, f64>,
    config: Option<PyStftConfig>,
) -> PyResult<Bound<'py, PyArray2<Complex64>>> {
    let cfg = stft_config(config);
    let x = core::stft(&signal.as_array().to_vec(), &cfg).map_err(to_py)?;
    Ok(x.into_values().into_pyarray(py))
}

/// Inverse of `stft` by weighted overlap-add.
#[pyfunction]
#[pyo3(signature = (spectrogram, config = None))]
fn istft<'py>(
    py: Python<'py>,
    spectrogram: PyReadonlyArray2<'py, Complex64>,
    config: Option<PyStftConfig>,
) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let cfg = stft_config(config);
    let spec = ComplexSpectrogram::new(spectrogram.as_array().to_owned(), cfg).map_err(to_py)?;
    Ok(core::istft(&spec, &cfg).map_err(to_py)?.into_pyarray(py))
}

/// KL-divergence NMF `V ~ W H`. Returns `(W, H, cost_trace)`.
#[pyfunction]
#[pyo3(signature = (v, rank, iterations = 30, seed = 0))]
fn kl_nmf<'py>(
    py: Python<'py>,
    v: PyReadonlyArray2<'py, f64>,
    rank: usize,
    iterations: usize,
    seed: u64,
) -> PyResult<(Bound<'py, PyArray2<f64>>, Bound<'py, PyArray2<f64>>, Vec<f64>)> {
    let v: Array2<f64> = v.as_array().to_owned();
    let (model, trace) = core::nmf::kl_nmf_traced(&v, rank, iterations, seed).map_err(to_py)?;
    Ok((model.w.into_pyarray(py), model.h.into_pyarray(py), trace))
}

/// Separates a mixture signal. Returns `(stems, cost_trace)`.
///
/// `method` is one of `nmf-w`, `cnmf`, `cnmf-phi`; `onsets` lists STFT
/// frames per source and is required by `cnmf-phi`.
#[pyfunction]
#[pyo3(signature = (mixture, method = "cnmf-phi", onsets = None, config = None, stft_config = None))]
fn separate<'py>(
    py: Python<'py>,
    mixture: PyReadonlyArray1<'py, f64>,
    method: &str,
    onsets: Option<Vec<Vec<usize>>>,
    config: Option<PySeparationConfig>,
    stft_config: Option<PyStftConfig>,
) -> PyResult<(Vec<Bound<'py, PyArray1<f64>>>, Vec<f64>)> {
    let method: Method = method.parse().map_err(to_py)?;
    let config = config.map(|c| c.inner).unwrap_or_default();
    let cfg = self::stft_config(stft_config);
    let signal = mixture.as_array().to_vec();
    let n_frames = cfg.n_frames(signal.len());
    let domains = onsets
        .map(|lists| {
            lists
                .into_iter()
                .map(|frames| OnsetDomain::new(frames, n_frames))
                .collect::<core::Result<Vec<_>>>()
        })
        .transpose()
        .map_err(to_py)?;
    let out = py
        .detach(|| core::separate_signal(&signal, &cfg, method, &config, domains.as_deref()))
        .map_err(to_py)?;
    let stems = out.stems.into_iter().map(|s| Array1::from(s).into_pyarray(py)).collect();
    Ok((stems, out.cost_trace))
}

fn scores_dict<'py>(py: Python<'py>, scores: &EvalScores) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("sdr", scores.sources.iter().map(|s| s.sdr_db).collect::<Vec<_>>())?;
    d.set_item("sir", scores.sources.iter().map(|s| s.sir_db).collect::<Vec<_>>())?;
    d.set_item("sar", scores.sources.iter().map(|s| s.sar_db).collect::<Vec<_>>())?;
    d.set_item("permutation", scores.permutation.clone())?;
    Ok(d)
}

fn signals(arrays: &[PyReadonlyArray1<'_, f64>]) -> PyResult<Vec<Vec<f64>>> {
    arrays.iter().map(|a| Ok(a.as_array().to_vec())).collect()
}

/// SDR/SIR/SAR in dB (scalar-gain projections). With `best_permutation`,
/// estimates are matched to references to maximize the mean SIR.
#[pyfunction]
#[pyo3(signature = (estimates, references, cap_db = DEFAULT_CAP_DB, best_permutation = true))]
fn bss_eval<'py>(
    py: Python<'py>,
    estimates: Vec<PyReadonlyArray1<'py, f64>>,
    references: Vec<PyReadonlyArray1<'py, f64>>,
    cap_db: f64,
    best_permutation: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let (e, r) = (signals(&estimates)?, signals(&references)?);
    let scores = if best_permutation {
        bss_eval_best_permutation(&e, &r, cap_db)
    } else {
        eval_fixed(&e, &r, cap_db)
    }
    .map_err(to_py)?;
    scores_dict(py, &scores)
}

/// Random two-source damped harmonic mixture, reproducible from `seed`.
#[pyfunction]
fn synth_mixture(seed: u64) -> PyResult<PyMixture> {
    let truth = synth_damped_mixture(seed, &SynthConfig::default()).map_err(to_py)?;
    Ok(PyMixture { truth })
}

#[pymodule]
fn phasecnmf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStftConfig>()?;
    m.add_class::<PySeparationConfig>()?;
    m.add_class::<PyMixture>()?;
    m.add_function(wrap_pyfunction!(stft, m)?)?;
    m.add_function(wrap_pyfunction!(istft, m)?)?;
    m.add_function(wrap_pyfunction!(kl_nmf, m)?)?;
    m.add_function(wrap_pyfunction!(separate, m)?)?;
    m.add_function(wrap_pyfunction!(bss_eval, m)?)?;
    m.add_function(wrap_pyfunction!(synth_mixture, m)?)?;
    m.add("METHODS", Method::ALL.map(|m| m.label()).to_vec())?;
    Ok(())
}
