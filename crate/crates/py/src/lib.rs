//! Python bindings: atom models, regression-theorem correlations, detection
//! chain arithmetic, click synthesis and correlation.

use fluorcorr::analysis::theory_set;
use fluorcorr::atom::{build_two_level, AtomModel, Ba138Config};
use fluorcorr::config::RunConfig;
use fluorcorr::correlator;
use fluorcorr::homodyne::{self, DetectionChain};
use fluorcorr::liouville::{CorrelationCurve, CurveKind, PhaseReference, RegressionEngine};
use fluorcorr::trajectory::{self, Channel, ClickStream, SynthesisOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: fluorcorr::Error) -> PyErr {
    match e {
        fluorcorr::Error::InvalidParameter { .. } | fluorcorr::Error::Config(_) | fluorcorr::Error::DetectionBudget { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "AtomModel", frozen)]
struct PyAtomModel {
    inner: AtomModel,
}

#[pymethods]
impl PyAtomModel {
    /// Resonantly driven two-level atom; arguments are angular frequencies.
    #[staticmethod]
    #[pyo3(signature = (rabi, detuning, gamma))]
    fn two_level(rabi: f64, detuning: f64, gamma: f64) -> PyResult<Self> {
        Ok(PyAtomModel {
            inner: build_two_level(rabi, detuning, gamma).map_err(to_py)?,
        })
    }

    /// ¹³⁸Ba⁺ eight-level model from a JSON object of `Ba138Config` fields
    /// (frequencies in Hz). Without an argument the built-in example is used.
    #[staticmethod]
    #[pyo3(signature = (config_json=None))]
    fn ba138(config_json: Option<&str>) -> PyResult<Self> {
        let cfg = match config_json {
            Some(s) => serde_json::from_str::<Ba138Config>(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => Ba138Config::example(),
        };
        Ok(PyAtomModel {
            inner: cfg.build().map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn level_labels(&self) -> Vec<String> {
        self.inner.levels.iter().map(|l| l.label.clone()).collect()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}

#[pyclass(name = "DetectionChain", from_py_object)]
#[derive(Clone)]
struct PyDetectionChain {
    inner: DetectionChain,
}

#[pymethods]
impl PyDetectionChain {
    #[new]
    #[pyo3(signature = (gamma1, gamma2, lo_amplitude, lo_phase=0.0, dark_rate_start=0.0, dark_rate_stop=0.0, phase_jitter_sigma=0.0))]
    fn new(
        gamma1: f64,
        gamma2: f64,
        lo_amplitude: f64,
        lo_phase: f64,
        dark_rate_start: f64,
        dark_rate_stop: f64,
        phase_jitter_sigma: f64,
    ) -> PyResult<Self> {
        let inner = DetectionChain {
            lo_phase,
            dark_rate_start,
            dark_rate_stop,
            phase_jitter_sigma,
            ..DetectionChain::new(gamma1, gamma2, lo_amplitude)
        };
        inner.validate().map_err(to_py)?;
        Ok(PyDetectionChain { inner })
    }

    fn with_phase(&self, phi: f64) -> Self {
        PyDetectionChain {
            inner: self.inner.with_phase(phi),
        }
    }

    fn __repr__(&self) -> String {
        let d = &self.inner;
        format!(
            "DetectionChain(gamma1={}, gamma2={}, lo_amplitude={}, lo_phase={})",
            d.gamma1, d.gamma2, d.lo_amplitude, d.lo_phase
        )
    }
}

/// Steady state plus regression-theorem correlation functions.
#[pyclass(name = "Engine", frozen)]
struct PyEngine {
    inner: RegressionEngine,
}

#[pymethods]
impl PyEngine {
    #[new]
    fn new(model: &PyAtomModel) -> PyResult<Self> {
        Ok(PyEngine {
            inner: RegressionEngine::new(&model.inner).map_err(to_py)?,
        })
    }

    /// Diagonal of the steady-state density operator.
    fn populations(&self) -> Vec<f64> {
        self.inner.steady_state().populations()
    }

    fn excited_population(&self) -> f64 {
        self.inner.moments().excited
    }

    fn dipole_phase(&self) -> f64 {
        self.inner.dipole_phase()
    }

    fn g2(&self, taus: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.g2(&taus).map_err(to_py)?.values)
    }

    /// `g15_Φ(τ)` with `Φ` relative to the asymptotic dipole phase.
    fn g15(&self, phi: f64, taus: Vec<f64>) -> PyResult<Vec<f64>> {
        let curve = self
            .inner
            .g15(phi, &taus, Default::default(), PhaseReference::Dipole)
            .map_err(to_py)?;
        Ok(curve.values)
    }

    /// Total stop-channel correlation normalized by `F (1 - V)`,
    /// computed directly from the homodyne field operator.
    fn gtotal_direct(&self, detection: &PyDetectionChain, phi: f64, taus: Vec<f64>) -> PyResult<Vec<f64>> {
        let c = self.inner.gtotal_direct(&detection.inner, phi, &taus).map_err(to_py)?;
        let norm = c.normalizer.unwrap_or(1.0);
        Ok(c.values.iter().map(|v| v / norm).collect())
    }

    /// `(F, V, r)` of the stop channel.
    fn derive(&self, detection: &PyDetectionChain) -> PyResult<(f64, f64, f64)> {
        let m = self.inner.moments();
        let d = homodyne::derive_from_moments(&detection.inner, m.excited, m.quadrature_sum()).map_err(to_py)?;
        Ok((d.prefactor, d.visibility, d.ratio))
    }

    /// `{phase: (g15, gtotal)}` theory curves for several LO phases.
    fn theory(&self, detection: &PyDetectionChain, phases: Vec<f64>, taus: Vec<f64>) -> PyResult<Vec<(f64, Vec<f64>, Vec<f64>)>> {
        let set = theory_set(&self.inner, &detection.inner, &phases, &taus).map_err(to_py)?;
        Ok(set
            .phases
            .into_iter()
            .map(|(phi, g15, gt)| (phi, g15.values, gt.values))
            .collect())
    }
}

fn curve(kind: CurveKind, taus: &[f64], values: Vec<f64>) -> CorrelationCurve {
    CorrelationCurve::theory(kind, taus.to_vec(), values, None)
}

/// `(1 - r) + r g2 + V/(1 - V) g15` on a shared grid.
#[pyfunction]
fn compose_gtotal(taus: Vec<f64>, g2: Vec<f64>, g15: Vec<f64>, visibility: f64, ratio: f64) -> PyResult<Vec<f64>> {
    let a = curve(CurveKind::G2, &taus, g2);
    let b = curve(CurveKind::G15, &taus, g15);
    Ok(homodyne::compose_gtotal(&a, &b, visibility, ratio).map_err(to_py)?.values)
}

#[pyfunction]
fn extract_inphase(taus: Vec<f64>, gt0: Vec<f64>, gtpi: Vec<f64>, visibility: f64) -> PyResult<Vec<f64>> {
    let a = curve(CurveKind::GTotal, &taus, gt0);
    let b = curve(CurveKind::GTotal, &taus, gtpi);
    Ok(homodyne::extract_inphase(&a, &b, visibility).map_err(to_py)?.values)
}

#[pyfunction]
fn extract_quadrature(taus: Vec<f64>, gt0: Vec<f64>, gtpi2: Vec<f64>, gtpi: Vec<f64>, visibility: f64) -> PyResult<Vec<f64>> {
    let a = curve(CurveKind::GTotal, &taus, gt0);
    let b = curve(CurveKind::GTotal, &taus, gtpi2);
    let c = curve(CurveKind::GTotal, &taus, gtpi);
    Ok(homodyne::extract_quadrature(&a, &b, &c, visibility).map_err(to_py)?.values)
}

/// Quantum-jump synthesis; returns `(start_tags, stop_tags)` in units of
/// the 100 ps tag quantum.
#[pyfunction]
#[pyo3(signature = (model, detection, duration, seed, segment_seconds=0.01))]
fn synthesize(
    py: Python<'_>,
    model: &PyAtomModel,
    detection: &PyDetectionChain,
    duration: f64,
    seed: u64,
    segment_seconds: f64,
) -> PyResult<(Vec<u64>, Vec<u64>)> {
    let opts = SynthesisOptions {
        segment_seconds,
        ..Default::default()
    };
    let (a, b) = py
        .detach(|| trajectory::synthesize_with(&model.inner, &detection.inner, duration, seed, &opts))
        .map_err(to_py)?;
    Ok((a.tags, b.tags))
}

/// Multi-stop start–stop histogram of two tag lists (100 ps units);
/// returns `(counts, n_starts)`.
#[pyfunction]
fn cross_correlate(start: Vec<u64>, stop: Vec<u64>, duration_tags: u64, bin_width: f64, tau_max: f64) -> PyResult<(Vec<u64>, u64)> {
    let mk = |channel, tags| ClickStream {
        channel,
        quantization_ps: trajectory::DEFAULT_QUANTIZATION_PS,
        duration: duration_tags,
        seed: 0,
        tags,
    };
    let h = correlator::cross_correlate(&mk(Channel::Start, start), &mk(Channel::Stop, stop), bin_width, tau_max)
        .map_err(to_py)?;
    Ok((h.counts, h.n_starts))
}

#[pyfunction]
fn estimate_visibility(asymptote_0: f64, asymptote_pi: f64) -> PyResult<f64> {
    correlator::estimate_visibility(asymptote_0, asymptote_pi).map_err(to_py)
}

/// JSON text of a built-in run configuration (fig2, fig4, two_level).
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    Ok(RunConfig::preset(name).map_err(to_py)?.to_json())
}

#[pymodule]
#[pyo3(name = "fluorcorr")]
fn fluorcorr_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAtomModel>()?;
    m.add_class::<PyDetectionChain>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(compose_gtotal, m)?)?;
    m.add_function(wrap_pyfunction!(extract_inphase, m)?)?;
    m.add_function(wrap_pyfunction!(extract_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(cross_correlate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_visibility, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    Ok(())
}
