//! Python bindings for the chaos-uncertainty library.

use std::path::PathBuf;

use chaos_uncertainty::experiments::{emit_report, run_experiment as run, ExperimentConfig};
use chaos_uncertainty::integrate::propagate_coupled as coupled;
use chaos_uncertainty::models::{periapsis_state as periapsis, total_energy};
use chaos_uncertainty::stability::Classification;
use chaos_uncertainty::{
    apsis_events as apsides, detect_unstable_intervals, evaluate_potential, local_spectrum,
    poincare_section as section, propagate_deviation, propagate_phase as phase, stability_matrix,
    uncertainty_verdict as verdict, ApsisKind, DeviationState, EigenSample, Error, Indicator,
    ModelSpec, PhaseState, ThreeBodyParams, ToyParams,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(
    chaos_uncertainty_py,
    DomainError,
    PyException,
    "Trajectory left the model domain."
);
create_exception!(
    chaos_uncertainty_py,
    ConfigError,
    PyValueError,
    "Invalid experiment configuration."
);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Domain(_) | Error::Integration { .. } | Error::SectionInterrupted { .. } => {
            DomainError::new_err(msg)
        }
        Error::Config(_) => ConfigError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn parse_indicator(name: &str) -> PyResult<Indicator> {
    name.parse().map_err(|e: String| PyValueError::new_err(e))
}

/// A potential model: Toda, harmonic, Kepler, restricted three-body or the
/// time-dependent toy system.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: ModelSpec,
}

fn checked(inner: ModelSpec) -> PyResult<PyModel> {
    inner.validate().map_err(PyValueError::new_err)?;
    Ok(PyModel { inner })
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn toda() -> Self {
        Self {
            inner: ModelSpec::toda(),
        }
    }

    #[staticmethod]
    fn harmonic() -> Self {
        Self {
            inner: ModelSpec::harmonic(),
        }
    }

    #[staticmethod]
    fn kepler(m_e: f64) -> PyResult<Self> {
        checked(ModelSpec::kepler(m_e))
    }

    /// Sun, Earth and a perturber on a circular orbit; Jupiter by default.
    #[staticmethod]
    #[pyo3(signature = (m_e, m_j=None, r_j=None, omega_j=None))]
    fn three_body(
        m_e: f64,
        m_j: Option<f64>,
        r_j: Option<f64>,
        omega_j: Option<f64>,
    ) -> PyResult<Self> {
        let d = ThreeBodyParams::sun_jupiter(m_e);
        checked(ModelSpec::three_body(ThreeBodyParams {
            m_e,
            m_j: m_j.unwrap_or(d.m_j),
            r_j: r_j.unwrap_or(d.r_j),
            omega_j: omega_j.unwrap_or(d.omega_j),
        }))
    }

    #[staticmethod]
    #[pyo3(signature = (delta_t, rho=1.0, theta=0.0))]
    fn toy(delta_t: f64, rho: f64, theta: f64) -> PyResult<Self> {
        checked(ModelSpec::toy(ToyParams {
            delta_t,
            rho,
            theta,
        }))
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }

    /// `(V, grad V, Hessian)` at `q` and time `t`.
    #[pyo3(signature = (q, t=0.0))]
    fn potential(&self, q: [f64; 2], t: f64) -> PyResult<(f64, [f64; 2], [[f64; 2]; 2])> {
        let ev = evaluate_potential(&self.inner, q, t).map_err(|e| to_py(e.into()))?;
        Ok((ev.value, ev.gradient, ev.hessian))
    }

    #[pyo3(signature = (q, p, t=0.0))]
    fn energy(&self, q: [f64; 2], p: [f64; 2], t: f64) -> PyResult<f64> {
        total_energy(&self.inner, &PhaseState::new(q, p, t)).map_err(|e| to_py(e.into()))
    }

    /// `(N, valid)` for the Lyapunov or GEM indicator at `q`.
    #[pyo3(signature = (q, energy, indicator="gem", t=0.0))]
    fn stability_matrix(
        &self,
        q: [f64; 2],
        energy: f64,
        indicator: &str,
        t: f64,
    ) -> PyResult<([[f64; 2]; 2], bool)> {
        let n = stability_matrix(&self.inner, q, t, energy, parse_indicator(indicator)?)
            .map_err(|e| to_py(e.into()))?;
        Ok((n.entries, n.valid))
    }

    /// `(lambda_minus, lambda_plus, "stable" | "unstable")`.
    #[pyo3(signature = (q, energy, indicator="gem", t=0.0))]
    fn spectrum(
        &self,
        q: [f64; 2],
        energy: f64,
        indicator: &str,
        t: f64,
    ) -> PyResult<(f64, f64, &'static str)> {
        let n = stability_matrix(&self.inner, q, t, energy, parse_indicator(indicator)?)
            .map_err(|e| to_py(e.into()))?;
        let s = local_spectrum(&n).map_err(to_py)?;
        let class = match s.classification {
            Classification::Stable => "stable",
            Classification::Unstable => "unstable",
        };
        Ok((s.lambda_minus, s.lambda_plus, class))
    }

    fn __repr__(&self) -> String {
        format!("Model({}, mass={})", self.inner.name(), self.inner.mass)
    }
}

/// Phase-space state at periapsis of the ellipse `(a, e)`.
#[pyfunction]
fn periapsis_state(mass: f64, a: f64, e: f64) -> PyResult<([f64; 2], [f64; 2])> {
    let s = periapsis(mass, a, e).map_err(PyValueError::new_err)?;
    Ok((s.q, s.p))
}

/// RK4 orbit; returns columns `t, x, y, px, py, energy`.
#[pyfunction]
#[pyo3(signature = (model, q, p, h, t_final, t0=0.0))]
fn propagate_phase<'py>(
    py: Python<'py>,
    model: &PyModel,
    q: [f64; 2],
    p: [f64; 2],
    h: f64,
    t_final: f64,
    t0: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let rec = phase(&model.inner, PhaseState::new(q, p, t0), h, t_final).map_err(to_py)?;
    let out = PyDict::new(py);
    let col = |f: fn(&PhaseState) -> f64| rec.samples.iter().map(f).collect::<Vec<_>>();
    out.set_item("t", col(|s| s.t))?;
    out.set_item("x", col(|s| s.q[0]))?;
    out.set_item("y", col(|s| s.q[1]))?;
    out.set_item("px", col(|s| s.p[0]))?;
    out.set_item("py", col(|s| s.p[1]))?;
    out.set_item("energy", rec.energy_series.clone())?;
    Ok(out)
}

/// Orbit with the deviation driven by the chosen indicator.
#[pyfunction]
#[pyo3(signature = (model, q, p, h, t_final, indicator="gem", xi0=[1.0, 0.0], eta0=[0.0, 0.0], t0=0.0))]
#[allow(clippy::too_many_arguments)]
fn propagate_coupled<'py>(
    py: Python<'py>,
    model: &PyModel,
    q: [f64; 2],
    p: [f64; 2],
    h: f64,
    t_final: f64,
    indicator: &str,
    xi0: [f64; 2],
    eta0: [f64; 2],
    t0: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let rec = coupled(
        &model.inner,
        PhaseState::new(q, p, t0),
        DeviationState::new(xi0, eta0),
        parse_indicator(indicator)?,
        h,
        t_final,
    )
    .map_err(to_py)?;
    let out = PyDict::new(py);
    let s = &rec.trajectory.samples;
    let d = &rec.deviation.samples;
    out.set_item("t", s.iter().map(|s| s.t).collect::<Vec<_>>())?;
    out.set_item("x", s.iter().map(|s| s.q[0]).collect::<Vec<_>>())?;
    out.set_item("y", s.iter().map(|s| s.q[1]).collect::<Vec<_>>())?;
    out.set_item("px", s.iter().map(|s| s.p[0]).collect::<Vec<_>>())?;
    out.set_item("py", s.iter().map(|s| s.p[1]).collect::<Vec<_>>())?;
    out.set_item("xi1", d.iter().map(|d| d.1.xi[0]).collect::<Vec<_>>())?;
    out.set_item("xi2", d.iter().map(|d| d.1.xi[1]).collect::<Vec<_>>())?;
    out.set_item("eta1", d.iter().map(|d| d.1.eta[0]).collect::<Vec<_>>())?;
    out.set_item("eta2", d.iter().map(|d| d.1.eta[1]).collect::<Vec<_>>())?;
    out.set_item(
        "lambda_plus",
        rec.eigen.iter().map(|e| e.lambda_plus).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "lambda_minus",
        rec.eigen.iter().map(|e| e.lambda_minus).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "valid",
        rec.eigen.iter().map(|e| e.valid).collect::<Vec<_>>(),
    )?;
    out.set_item("energy", rec.energy)?;
    Ok(out)
}

/// Deviation under the toy matrix from `t = 0`.
#[pyfunction]
#[pyo3(signature = (delta_t, h, t_final, xi0=[1.0, 0.0], eta0=[0.0, 0.0], rho=1.0, theta=0.0))]
#[allow(clippy::too_many_arguments)]
fn toy_deviation<'py>(
    py: Python<'py>,
    delta_t: f64,
    h: f64,
    t_final: f64,
    xi0: [f64; 2],
    eta0: [f64; 2],
    rho: f64,
    theta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = ToyParams {
        delta_t,
        rho,
        theta,
    };
    params.validate().map_err(PyValueError::new_err)?;
    let mut rec =
        propagate_deviation(&params, DeviationState::new(xi0, eta0), h, t_final).map_err(to_py)?;
    rec.set_envelope_rate(rho);
    let out = PyDict::new(py);
    let s = &rec.samples;
    out.set_item("t", s.iter().map(|s| s.0).collect::<Vec<_>>())?;
    out.set_item("xi1", s.iter().map(|s| s.1.xi[0]).collect::<Vec<_>>())?;
    out.set_item("xi2", s.iter().map(|s| s.1.xi[1]).collect::<Vec<_>>())?;
    out.set_item("eta1", s.iter().map(|s| s.1.eta[0]).collect::<Vec<_>>())?;
    out.set_item("eta2", s.iter().map(|s| s.1.eta[1]).collect::<Vec<_>>())?;
    out.set_item("envelope", rec.envelope.clone())?;
    Ok(out)
}

fn eigen_samples(
    t: Vec<f64>,
    lambda_plus: Vec<f64>,
    valid: Option<Vec<bool>>,
) -> PyResult<Vec<EigenSample>> {
    if t.len() != lambda_plus.len() || valid.as_ref().is_some_and(|v| v.len() != t.len()) {
        return Err(PyValueError::new_err(
            "t, lambda_plus and valid must have equal length",
        ));
    }
    Ok(t.iter()
        .zip(&lambda_plus)
        .enumerate()
        .map(|(i, (&t, &l))| EigenSample {
            valid: valid.as_ref().is_none_or(|v| v[i]),
            ..EigenSample::new(t, l)
        })
        .collect())
}

/// Maximal runs with `lambda_plus > tol`, as dicts.
#[pyfunction]
#[pyo3(signature = (t, lambda_plus, valid=None, tol=1e-10))]
fn unstable_intervals<'py>(
    py: Python<'py>,
    t: Vec<f64>,
    lambda_plus: Vec<f64>,
    valid: Option<Vec<bool>>,
    tol: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let samples = eigen_samples(t, lambda_plus, valid)?;
    detect_unstable_intervals(&samples, tol)
        .iter()
        .map(|i| {
            let d = PyDict::new(py);
            d.set_item("t_start", i.t_start)?;
            d.set_item("t_end", i.t_end)?;
            d.set_item("delta_t", i.delta_t)?;
            d.set_item("lambda_max", i.lambda_max)?;
            d.set_item("product", i.product)?;
            d.set_item("mu_product", i.mu_product())?;
            Ok(d)
        })
        .collect()
}

/// Largest and summed `delta_t * lambda_max` over the unstable intervals.
#[pyfunction]
#[pyo3(signature = (t, lambda_plus, valid=None, tol=1e-10))]
fn uncertainty_verdict<'py>(
    py: Python<'py>,
    t: Vec<f64>,
    lambda_plus: Vec<f64>,
    valid: Option<Vec<bool>>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let v = verdict(detect_unstable_intervals(
        &eigen_samples(t, lambda_plus, valid)?,
        tol,
    ));
    let d = PyDict::new(py);
    d.set_item("max_product", v.max_product)?;
    d.set_item("chaos_possible", v.chaos_possible)?;
    d.set_item("cumulative_product", v.cumulative_product)?;
    d.set_item("max_mu_product", v.max_mu_product())?;
    d.set_item("n_intervals", v.intervals.len())?;
    Ok(d)
}

/// Crossings of `x = 0` with `p_x > 0` as `(y, p_y, t)` tuples.
#[pyfunction]
#[pyo3(signature = (model, q, p, h, t_final, t0=0.0))]
fn poincare_section(
    model: &PyModel,
    q: [f64; 2],
    p: [f64; 2],
    h: f64,
    t_final: f64,
    t0: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let points = section(&model.inner, PhaseState::new(q, p, t0), h, t_final).map_err(to_py)?;
    Ok(points.iter().map(|s| (s.y, s.p_y, s.t_cross)).collect())
}

/// Perihelion and aphelion passages as `(t, r, kind)` tuples.
#[pyfunction]
#[pyo3(signature = (model, q, p, h, t_final, t0=0.0))]
fn apsis_events(
    model: &PyModel,
    q: [f64; 2],
    p: [f64; 2],
    h: f64,
    t_final: f64,
    t0: f64,
) -> PyResult<Vec<(f64, f64, &'static str)>> {
    let rec = phase(&model.inner, PhaseState::new(q, p, t0), h, t_final).map_err(to_py)?;
    Ok(apsides(&rec)
        .iter()
        .map(|a| {
            let kind = match a.kind {
                ApsisKind::Perihelion => "perihelion",
                ApsisKind::Aphelion => "aphelion",
            };
            (a.t, a.r, kind)
        })
        .collect())
}

/// Runs an experiment from its JSON configuration. When `output_dir` is
/// given the CSV tables, plots and manifest are written there. Returns a
/// dict with `summary`, `runs`, `artifacts` and `wall_time_s`.
#[pyfunction]
#[pyo3(signature = (config, output_dir=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    output_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::from_json(config).map_err(to_py)?;
    let rec = py
        .detach(|| {
            let mut rec = run(&cfg)?;
            if let Some(dir) = &output_dir {
                emit_report(&mut rec, Some(dir))?;
            }
            Ok::<_, Error>(rec)
        })
        .map_err(to_py)?;
    let json = py.import("json")?;
    let loads = |v: serde_json::Value| json.call_method1("loads", (v.to_string(),));
    let out = PyDict::new(py);
    out.set_item(
        "summary",
        loads(serde_json::to_value(&rec.summary).map_err(|e| to_py(e.into()))?)?,
    )?;
    out.set_item(
        "runs",
        loads(serde_json::to_value(&rec.runs).map_err(|e| to_py(e.into()))?)?,
    )?;
    out.set_item(
        "artifacts",
        rec.artifacts
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>(),
    )?;
    out.set_item("wall_time_s", rec.wall_time_s)?;
    Ok(out)
}

#[pymodule]
fn chaos_uncertainty_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DomainError", m.py().get_type::<DomainError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("UNIT_SYSTEM", chaos_uncertainty::UNIT_SYSTEM)?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(periapsis_state, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_phase, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_coupled, m)?)?;
    m.add_function(wrap_pyfunction!(toy_deviation, m)?)?;
    m.add_function(wrap_pyfunction!(unstable_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(uncertainty_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(poincare_section, m)?)?;
    m.add_function(wrap_pyfunction!(apsis_events, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
