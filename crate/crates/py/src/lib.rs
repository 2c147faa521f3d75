//! Python module `hyperfoil`: configurations, scenario runs, the radial
//! solver, geometry helpers and snapshot reading.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hyperfoil::analysis;
use hyperfoil::bounds;
use hyperfoil::cli::{self, Overrides, RunConfig, Scenario};
use hyperfoil::geometry::{self, SpacetimePoint};
use hyperfoil::solver::snapshot::Snapshot;
use hyperfoil::solver::{evolve_to_time, GridSpec, History, InitialData, ModelParams, System};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scenario(name: &str) -> PyResult<Scenario> {
    Scenario::ALL
        .into_iter()
        .find(|s| s.id() == name)
        .ok_or_else(|| value_err(format!("unknown scenario {name:?}")))
}

/// Resolved run configuration.
#[pyclass(name = "Config", module = "hyperfoil")]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn defaults(scenario_id: &str) -> PyResult<Self> {
        Ok(PyConfig { inner: RunConfig::defaults(scenario(scenario_id)?) })
    }

    /// Parses TOML text; keyword arguments act like the command-line flags.
    #[staticmethod]
    #[pyo3(signature = (text, scenario_id=None, resolution=None, epsilon=None, until_s=None, deterministic=false, out=None))]
    fn from_toml(
        text: &str,
        scenario_id: Option<&str>,
        resolution: Option<f64>,
        epsilon: Option<f64>,
        until_s: Option<f64>,
        deterministic: bool,
        out: Option<PathBuf>,
    ) -> PyResult<Self> {
        let o = Overrides {
            scenario: scenario_id.map(scenario).transpose()?,
            resolution,
            epsilon,
            until_s,
            deterministic,
            out,
        };
        cli::parse_config_with(text, &o).map(|inner| PyConfig { inner }).map_err(value_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn scenario(&self) -> &'static str {
        self.inner.scenario.id()
    }

    #[getter]
    fn out(&self) -> PathBuf {
        self.inner.out.clone()
    }

    #[setter]
    fn set_out(&mut self, out: PathBuf) {
        self.inner.out = out;
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.inner.grid.dx
    }

    #[getter]
    fn deterministic(&self) -> bool {
        self.inner.deterministic
    }

    #[setter]
    fn set_deterministic(&mut self, on: bool) {
        self.inner.deterministic = on;
    }

    fn hash(&self) -> String {
        cli::config_hash(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Config(scenario={:?}, dx={}, out={:?})", self.inner.scenario.id(), self.inner.grid.dx, self.inner.out)
    }
}

/// Outcome of a scenario run.
#[pyclass(name = "Summary", module = "hyperfoil", get_all)]
struct PySummary {
    scenario: String,
    passed: bool,
    /// `(id, name, pass, measured, threshold)` per criterion.
    criteria: Vec<(u32, String, bool, Option<f64>, String)>,
    exponents: BTreeMap<String, f64>,
    errors: Vec<String>,
    wall_time_s: f64,
    config_hash: String,
    json: String,
}

#[pymethods]
impl PySummary {
    fn __repr__(&self) -> String {
        let ok = self.criteria.iter().filter(|c| c.2).count();
        format!("Summary({}, {}/{} criteria pass)", self.scenario, ok, self.criteria.len())
    }
}

/// Runs a scenario and writes its outputs under `config.out`.
#[pyfunction]
fn run(py: Python<'_>, config: PyRef<'_, PyConfig>) -> PyResult<PySummary> {
    let cfg = config.inner.clone();
    let rep = py.detach(move || cli::run_scenario(&cfg)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PySummary {
        scenario: rep.scenario.id().into(),
        passed: rep.pass,
        criteria: rep
            .criteria
            .iter()
            .map(|c| (c.id, c.name.to_string(), c.pass, c.measured, c.threshold.clone()))
            .collect(),
        exponents: rep.exponents.clone(),
        errors: rep.errors.clone(),
        wall_time_s: rep.wall_time_s,
        config_hash: rep.config_hash.clone(),
        json: rep.to_json(),
    })
}

/// Free or coupled radial evolution from bump data; returns the latest level.
#[pyfunction]
#[pyo3(signature = (t_init, until_t, dx, eps_u=0.01, eps_v=0.01, radius=1.0, courant=0.5, p=(0.0, 0.0), r=0.0, h=(0.0, 0.0), c=1.0))]
#[allow(clippy::too_many_arguments)]
fn evolve_radial<'py>(
    py: Python<'py>,
    t_init: f64,
    until_t: f64,
    dx: f64,
    eps_u: f64,
    eps_v: f64,
    radius: f64,
    courant: f64,
    p: (f64, f64),
    r: f64,
    h: (f64, f64),
    c: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = ModelParams::isotropic(p.0, p.1, r, h.0, h.1, c);
    params.validate().map_err(value_err)?;
    let data = InitialData::bumps(t_init, eps_u, eps_v, radius);
    let extent = radius + (until_t - t_init).max(0.0) / courant + 4.0 * dx;
    let grid = GridSpec::radial(extent, dx, courant);
    let mut last = None;
    let run = py.detach(|| {
        let mut obs = |hist: History<'_>| {
            if let History::Radial(rh) = hist {
                let l = rh.latest();
                last = Some((l.t, rh.grid.r.clone(), l.u.clone(), l.v.clone()));
            }
            Ok(())
        };
        evolve_to_time(System::model(params), &grid, &data, until_t, 4, &mut [&mut obs])
    });
    if let Some(f) = run.failure {
        return Err(PyRuntimeError::new_err(f.message));
    }
    let (t, rs, u, v) = last.ok_or_else(|| PyRuntimeError::new_err("no level recorded"))?;
    let d = PyDict::new(py);
    d.set_item("t", t)?;
    d.set_item("r", rs)?;
    d.set_item("u", u)?;
    d.set_item("v", v)?;
    d.set_item("steps", run.steps)?;
    Ok(d)
}

/// Reads an `HFOL` snapshot into a dict of its header and levels.
#[pyfunction]
fn read_snapshot<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let mut f = std::fs::File::open(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
    let s = Snapshot::read_from(&mut f).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
    let d = PyDict::new(py);
    d.set_item("mode", if s.mode == 0 { "radial-1d" } else { "full-3d" })?;
    d.set_item("dims", s.dims.to_vec())?;
    d.set_item("dx", s.dx)?;
    d.set_item("dt", s.dt)?;
    d.set_item("times", s.times)?;
    d.set_item("u", s.u)?;
    d.set_item("v", s.v)?;
    Ok(d)
}

/// `sqrt(t² − |x|²)`.
#[pyfunction]
fn hyperbolic_radius(t: f64, x: [f64; 3]) -> PyResult<f64> {
    geometry::hyperbolic_radius(&SpacetimePoint { t, x }).map_err(value_err)
}

/// `sqrt((t + r)/(t − r))`.
#[pyfunction]
fn ratio_s(t: f64, r: f64) -> PyResult<f64> {
    geometry::ratio_s(t, r).map_err(value_err)
}

#[pyfunction]
fn wave_bound_value(mu: f64, nu: f64, t: f64, r: f64) -> PyResult<f64> {
    bounds::wave_bound_value(mu, nu, t, r).map_err(value_err)
}

/// `(exponent, width, prefactor)` of a power law fitted over the last decade.
#[pyfunction]
fn fit_power_law(s: Vec<f64>, values: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if s.len() != values.len() {
        return Err(value_err(format!("{} abscissae, {} values", s.len(), values.len())));
    }
    let series: Vec<(f64, f64)> = s.into_iter().zip(values).collect();
    let fit = analysis::fit_power_law(&series).map_err(value_err)?;
    Ok((fit.exponent, fit.width, fit.prefactor))
}

#[pyfunction]
fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    analysis::log_spaced(a, b, n)
}

#[pymodule]
#[pyo3(name = "hyperfoil")]
pub fn hyperfoil_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SCENARIOS", Scenario::ALL.iter().map(|s| s.id()).collect::<Vec<_>>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PySummary>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_radial, m)?)?;
    m.add_function(wrap_pyfunction!(read_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(hyperbolic_radius, m)?)?;
    m.add_function(wrap_pyfunction!(ratio_s, m)?)?;
    m.add_function(wrap_pyfunction!(wave_bound_value, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(log_spaced, m)?)?;
    Ok(())
}
