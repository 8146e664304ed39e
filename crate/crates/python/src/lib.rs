//! Python bindings. Matrices cross the boundary as lists of rows; reports
//! come back as plain dicts with non-finite values as Python floats.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use observability_ellipsoids::analytic::{analytic_volumes, evenness_factor, shape_factors, Complex64};
use observability_ellipsoids::bench::{run_containment_experiment, BenchConfig, SamplingMode};
use observability_ellipsoids::compare::{metric_report, rank_candidates, RankingPolicy};
use observability_ellipsoids::duality::verify_duality;
use observability_ellipsoids::ellipsoid::{
    error_ellipsoid_metrics, hypersphere_coefficient as core_hypersphere, image_ellipsoid_metrics,
    min_samples_for_error, sweep_directions, Ellipsoid,
};
use observability_ellipsoids::gramian::observability_bundle;
use observability_ellipsoids::model::{
    dualize, matrix_to_rows, normalize_rated, normalize_shared, parse_model, validate_system,
    NormalizationSpec, OutputDirection,
};
use observability_ellipsoids::{Error, GramianBundle, Horizon, LdtSystem};

create_exception!(pyobsell, AssumptionError, PyException, "A theoretical assumption does not hold.");
create_exception!(pyobsell, RankDeficientError, PyException, "The Gramian is not full rank.");

fn py_err(e: Error) -> PyErr {
    if e.is_assumption_violation() {
        AssumptionError::new_err(e.to_string())
    } else if matches!(e, Error::RankDeficient { .. } | Error::UnboundedDirection) {
        RankDeficientError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn value_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) if !n.is_f64() => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => match s.as_str() {
            "inf" => f64::INFINITY.into_pyobject(py)?.into_any(),
            "-inf" => f64::NEG_INFINITY.into_pyobject(py)?.into_any(),
            "nan" => f64::NAN.into_pyobject(py)?.into_any(),
            _ => s.into_pyobject(py)?.into_any(),
        },
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, value_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, report: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    value_to_py(py, &value)
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what} must be a non-empty rectangular list of rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

type Rows = Vec<Vec<f64>>;

fn horizon(steps: Option<usize>) -> Horizon {
    steps.map_or(Horizon::Infinite, Horizon::Finite)
}

fn direction(name: &str) -> PyResult<OutputDirection> {
    match name {
        "divide-output" => Ok(OutputDirection::DivideOutput),
        "paper-literal" => Ok(OutputDirection::PaperLiteral),
        other => Err(PyValueError::new_err(format!("unknown direction {other:?}"))),
    }
}

/// Linear discrete-time system `x(k+1) = A x(k)`, `y(k) = C x(k)`.
#[pyclass(name = "System", module = "pyobsell", from_py_object)]
#[derive(Clone)]
pub struct PySystem {
    inner: LdtSystem,
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (a, c, name = "system".to_string(), rated_states = None, rated_outputs = None, shared_ranges = None))]
    fn new(
        a: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        name: String,
        rated_states: Option<Vec<f64>>,
        rated_outputs: Option<Vec<f64>>,
        shared_ranges: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let mut sys = LdtSystem::new(name, matrix(&a, "A")?, matrix(&c, "C")?).map_err(py_err)?;
        if rated_states.is_some() || rated_outputs.is_some() {
            sys = sys.with_rated(rated_states, rated_outputs).map_err(py_err)?;
        }
        if let Some(r) = shared_ranges {
            sys = sys.with_shared_ranges(r).map_err(py_err)?;
        }
        Ok(Self { inner: sys })
    }

    /// Parses a JSON model document; unknown keys are ignored.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let loaded = parse_model(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner: loaded.system })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter(A)]
    fn a(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.a)
    }

    #[getter(C)]
    fn c(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.c)
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &validate_system(&self.inner))
    }

    /// Observability Gramian; `steps=None` means the infinite horizon.
    #[pyo3(signature = (steps = None))]
    fn gramian(&self, steps: Option<usize>) -> PyResult<PyGramian> {
        let bundle = observability_bundle(&self.inner, horizon(steps)).map_err(py_err)?;
        Ok(PyGramian { inner: bundle })
    }

    fn shape_factors<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &shape_factors(&self.inner).map_err(py_err)?)
    }

    fn analytic_volumes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &analytic_volumes(&self.inner).map_err(py_err)?)
    }

    #[pyo3(signature = (steps = None, tolerance = 1e-9))]
    fn duality<'py>(&self, py: Python<'py>, steps: Option<usize>, tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &verify_duality(&self.inner, horizon(steps), tolerance).map_err(py_err)?)
    }

    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (trials, seed, steps, sampling = "boundary", noise_bound = 1.0, records = false))]
    fn bench<'py>(
        &self,
        py: Python<'py>,
        trials: usize,
        seed: u64,
        steps: usize,
        sampling: &str,
        noise_bound: f64,
        records: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mut cfg = BenchConfig::new(trials, seed, steps);
        cfg.sampling = match sampling {
            "boundary" => SamplingMode::Boundary,
            "interior" => SamplingMode::Interior,
            other => return Err(PyValueError::new_err(format!("unknown sampling {other:?}"))),
        };
        cfg.noise.bound = noise_bound;
        cfg.keep_records = records;
        let result = py.detach(|| run_containment_experiment(&self.inner, &cfg)).map_err(py_err)?;
        to_py(py, &result)
    }

    /// Fewest samples whose error set excludes `target`, or None.
    #[pyo3(signature = (target, max_steps = 10_000))]
    fn min_samples(&self, target: Vec<f64>, max_steps: usize) -> PyResult<Option<usize>> {
        min_samples_for_error(&self.inner, &DVector::from_vec(target), max_steps).map_err(py_err)
    }

    #[pyo3(signature = (mode = "rated", direction = "divide-output"))]
    fn normalize(&self, mode: &str, direction: &str) -> PyResult<Self> {
        let dir = self::direction(direction)?;
        let sys = match mode {
            "rated" => normalize_rated(&self.inner, &NormalizationSpec::rated(&self.inner, dir)),
            "shared" => normalize_shared(&self.inner, &NormalizationSpec::shared(&self.inner, dir)),
            other => return Err(PyValueError::new_err(format!("unknown normalization {other:?}"))),
        };
        Ok(Self { inner: sys.map_err(py_err)? })
    }

    /// The dual pair `(Aᵀ, Cᵀ)` as a `(A_c, B_c)` tuple of row lists.
    fn dual(&self) -> PyResult<(Rows, Rows)> {
        let d = dualize(&self.inner).map_err(py_err)?;
        Ok((matrix_to_rows(&d.a_c), matrix_to_rows(&d.b_c)))
    }

    #[pyo3(signature = (steps = None, analytic = true))]
    fn metrics<'py>(&self, py: Python<'py>, steps: Option<usize>, analytic: bool) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &metric_report(&self.inner, horizon(steps), analytic).map_err(py_err)?)
    }

    fn __repr__(&self) -> String {
        format!("System(name={:?}, n={}, m={})", self.inner.name, self.inner.n(), self.inner.m())
    }
}

/// Observability Gramian with its error and image ellipsoids.
#[pyclass(name = "Gramian", module = "pyobsell")]
pub struct PyGramian {
    inner: GramianBundle,
}

#[pymethods]
impl PyGramian {
    #[getter]
    fn matrix(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.g)
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank
    }

    #[getter]
    fn determinant(&self) -> f64 {
        self.inner.determinant
    }

    #[getter]
    fn min_eig(&self) -> f64 {
        self.inner.min_eig
    }

    #[getter]
    fn max_eig(&self) -> f64 {
        self.inner.max_eig
    }

    #[getter]
    fn horizon(&self) -> String {
        self.inner.horizon.to_string()
    }

    fn error_metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &error_ellipsoid_metrics(&self.inner).map_err(py_err)?)
    }

    fn image_metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &image_ellipsoid_metrics(&self.inner).map_err(py_err)?)
    }

    /// `(inside, xᵀGx)` for the error ellipsoid.
    fn contains(&self, x: Vec<f64>) -> PyResult<(bool, f64)> {
        let m = Ellipsoid::error_set(&self.inner)
            .contains(&DVector::from_vec(x))
            .map_err(py_err)?;
        Ok((m.inside, m.value))
    }

    /// Boundary points of a 2-D error (or image) ellipsoid.
    #[pyo3(signature = (samples = 256, image = false))]
    fn boundary(&self, samples: usize, image: bool) -> PyResult<Vec<(f64, f64)>> {
        let set = if image {
            Ellipsoid::image_set(&self.inner)
        } else {
            Ellipsoid::error_set(&self.inner)
        };
        let pts = set.boundary_points(&sweep_directions(samples)).map_err(py_err)?;
        Ok(pts.iter().map(|p| (p[0], p[1])).collect())
    }
}

#[pyfunction]
fn hypersphere_coefficient(n: usize) -> PyResult<f64> {
    core_hypersphere(n).map_err(py_err)
}

/// `Π_{i<j} |λj − λi| / |1 − λi λj|`.
#[pyfunction(name = "evenness_factor")]
fn py_evenness_factor(eigenvalues: Vec<Complex64>) -> f64 {
    evenness_factor(&eigenvalues)
}

/// Ranks systems; `policy` is a JSON ranking policy.
#[pyfunction]
#[pyo3(signature = (systems, steps = None, policy = None, analytic = true))]
fn rank<'py>(
    py: Python<'py>,
    systems: Vec<PySystem>,
    steps: Option<usize>,
    policy: Option<&str>,
    analytic: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let policy: RankingPolicy = match policy {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => RankingPolicy::default(),
    };
    let rows = systems
        .iter()
        .map(|s| metric_report(&s.inner, horizon(steps), analytic))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    to_py(py, &rank_candidates(&rows, &policy).map_err(py_err)?)
}

#[pymodule]
fn pyobsell(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyGramian>()?;
    m.add_function(wrap_pyfunction!(hypersphere_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(py_evenness_factor, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add("AssumptionError", m.py().get_type::<AssumptionError>())?;
    m.add("RankDeficientError", m.py().get_type::<RankDeficientError>())?;
    Ok(())
}
