//! Python bindings for `symqm`.
//!
//! Points are `(x, y)` tuples, grids are lists of rows (`y` outer). Errors
//! from the library surface as `ValueError`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use symqm::experiment::{run_experiment, validate_str, ExperimentConfig};
use symqm::fgword::{count_subwords, defect_estimate, kernel, CountingQM, Word, KERNEL_NAMES};
use symqm::ggqm::{self, Estimator, GGEstimate, GGSettings, Sampling};
use symqm::hamflow::{self, Domain, FlowMap, FlowSettings, Hamiltonian, Method, Point};
use symqm::moserfrag::{self, BoundaryMode, FragmentSettings, Grid2, GridDiffeo, GridForm, MoserSettings, Rect};
use symqm::punctured::{word_of_loop, CutSystem, PuncturedLoop, DEFAULT_DELTA_PUNCT};

fn err(e: symqm::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pt(p: Point) -> (f64, f64) {
    (p[0], p[1])
}

fn domain(name: &str) -> PyResult<Domain> {
    match name {
        "torus" => Ok(Domain::Torus),
        "disc" => Ok(Domain::Disc),
        _ => Err(PyValueError::new_err(format!("unknown domain {name:?}; expected torus or disc"))),
    }
}

#[pyclass(name = "Word", module = "symqm_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyWord(Word);

#[pymethods]
impl PyWord {
    /// Parses `a`, `b`, `A = a^-1`, `B = b^-1`; the result is freely reduced.
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Word::parse(text).map(PyWord).map_err(err)
    }

    #[staticmethod]
    fn commutator() -> Self {
        PyWord(Word::commutator())
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Word('{}')", self.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __mul__(&self, other: &PyWord) -> Self {
        PyWord(self.0.concat(&other.0))
    }

    fn inverse(&self) -> Self {
        PyWord(self.0.inverse())
    }

    fn pow(&self, n: i64) -> Self {
        PyWord(self.0.pow(n))
    }

    /// `(core, conjugator)` with `self = conjugator * core * conjugator^-1`.
    fn cyclic_reduce(&self) -> (Self, Self) {
        let (core, w) = self.0.cyclic_reduce();
        (PyWord(core), PyWord(w))
    }

    fn exponent_sums(&self) -> (i64, i64) {
        self.0.exponent_sums()
    }

    #[pyo3(signature = (pattern, cyclic = false))]
    fn count(&self, pattern: &PyWord, cyclic: bool) -> usize {
        count_subwords(&pattern.0, &self.0, cyclic)
    }
}

/// Homogeneous counting quasi-morphism `sum_i c_i (h_{w_i} - h_{w_i^-1})`.
#[pyclass(name = "Kernel", module = "symqm_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyKernel(CountingQM);

#[pymethods]
impl PyKernel {
    #[new]
    fn new(name: String, terms: Vec<(String, f64)>) -> PyResult<Self> {
        let terms: Vec<(&str, f64)> = terms.iter().map(|(w, c)| (w.as_str(), *c)).collect();
        CountingQM::from_strings(name, &terms).map(PyKernel).map_err(err)
    }

    #[staticmethod]
    fn library(name: &str) -> PyResult<Self> {
        kernel(name)
            .map(PyKernel)
            .ok_or_else(|| PyValueError::new_err(format!("unknown kernel {name:?}; known: {}", KERNEL_NAMES.join(", "))))
    }

    #[staticmethod]
    fn names() -> Vec<&'static str> {
        KERNEL_NAMES.to_vec()
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    fn terms(&self) -> Vec<(String, f64)> {
        self.0.terms().iter().map(|(w, c)| (w.to_string(), *c)).collect()
    }

    fn eval(&self, word: &PyWord) -> f64 {
        self.0.eval(&word.0)
    }

    fn __call__(&self, word: &PyWord) -> f64 {
        self.0.eval(&word.0)
    }

    #[pyo3(signature = (budget = 20000, max_len = 12, seed = 0))]
    fn defect_estimate(&self, py: Python<'_>, budget: usize, max_len: usize, seed: u64) -> f64 {
        py.detach(|| defect_estimate(&self.0, budget, max_len, seed))
    }
}

#[pyclass(name = "Hamiltonian", module = "symqm_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHamiltonian(Hamiltonian);

#[pymethods]
impl PyHamiltonian {
    /// Smooth plateau bump with `int F = mass`.
    #[staticmethod]
    #[pyo3(signature = (center, radius, mass, domain = "torus"))]
    fn bump(center: Point, radius: f64, mass: f64, domain: &str) -> PyResult<Self> {
        Hamiltonian::bump(self::domain(domain)?, center, radius, mass)
            .map(PyHamiltonian)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (center = [0.0, 0.0]))]
    fn rotation(center: Point) -> Self {
        PyHamiltonian(Hamiltonian::rotation(center))
    }

    #[staticmethod]
    #[pyo3(signature = (domain = "torus"))]
    fn zero(domain: &str) -> PyResult<Self> {
        Ok(PyHamiltonian(Hamiltonian::zero(self::domain(domain)?)))
    }

    fn scaled(&self, c: f64) -> Self {
        PyHamiltonian(self.0.clone().scaled(c))
    }

    #[getter]
    fn domain(&self) -> &'static str {
        match self.0.domain {
            Domain::Torus => "torus",
            Domain::Disc => "disc",
        }
    }

    #[pyo3(signature = (p, t = 0.0))]
    fn value(&self, p: Point, t: f64) -> f64 {
        self.0.value(p, t)
    }

    #[pyo3(signature = (p, t = 0.0))]
    fn sgrad(&self, p: Point, t: f64) -> (f64, f64) {
        pt(hamflow::sgrad(&self.0, p, t))
    }

    #[pyo3(signature = (n_quad = hamflow::DEFAULT_N_QUAD))]
    fn calabi(&self, n_quad: usize) -> PyResult<f64> {
        hamflow::calabi(&self.0, n_quad).map_err(err)
    }

    /// Time-`[t0, t1]` flow of `x0`; `steps = None` picks a step count.
    #[pyo3(signature = (x0, t0 = 0.0, t1 = 1.0, steps = None))]
    fn flow(&self, x0: Point, t0: f64, t1: f64, steps: Option<usize>) -> PyResult<(f64, f64)> {
        let settings = self.flow_settings();
        let steps = steps.unwrap_or_else(|| self.steps(&settings, (t1 - t0).abs()));
        hamflow::flow_with(&self.0, x0, t0, t1, steps, &settings).map(pt).map_err(err)
    }

    /// `sup_x d(phi(x), x)` of the time-one map over an `n x n` grid.
    #[pyo3(signature = (n = hamflow::DEFAULT_N_C0))]
    fn c0_distance(&self, py: Python<'_>, n: usize) -> PyResult<f64> {
        let settings = self.flow_settings();
        let steps = self.steps(&settings, 1.0);
        let map = FlowMap::new(self.0.clone(), 0.0, 1.0, steps).with_settings(settings);
        py.detach(|| hamflow::c0_distance(&map, None, n)).map_err(err)
    }
}

impl PyHamiltonian {
    fn flow_settings(&self) -> FlowSettings {
        let method = if self.0.is_radial() {
            Method::ExactRadial
        } else {
            Method::MidpointSymplectic
        };
        FlowSettings::default().with_method(method)
    }

    /// The closed-form rotation is exact in one step.
    fn steps(&self, settings: &FlowSettings, duration: f64) -> usize {
        if settings.method == Method::ExactRadial {
            1
        } else {
            settings.steps_for(&self.0, duration)
        }
    }
}

#[pyclass(name = "GGEstimate", module = "symqm_py", frozen)]
struct PyGGEstimate(GGEstimate);

#[pymethods]
impl PyGGEstimate {
    #[getter]
    fn value(&self) -> f64 {
        self.0.value
    }

    #[getter]
    fn std_error(&self) -> f64 {
        self.0.std_error
    }

    #[getter]
    fn p(&self) -> u32 {
        self.0.p
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.0.n_samples
    }

    #[getter]
    fn n_rejected(&self) -> usize {
        self.0.n_rejected
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn rejection_rate(&self) -> f64 {
        self.0.rejection_rate()
    }

    fn __repr__(&self) -> String {
        format!(
            "GGEstimate(value={:?}, std_error={:?}, p={}, n_samples={}, n_rejected={})",
            self.0.value, self.0.std_error, self.0.p, self.0.n_samples, self.0.n_rejected
        )
    }
}

fn gg_settings(sampling: &str, estimator: &str) -> PyResult<GGSettings> {
    let sampling = match sampling {
        "uniform" => Sampling::Uniform,
        "support-stratified" => Sampling::SupportStratified,
        _ => return Err(PyValueError::new_err(format!("unknown sampling {sampling:?}"))),
    };
    let estimator = match estimator {
        "plain" => Estimator::Plain,
        "increment" => Estimator::Increment,
        _ => return Err(PyValueError::new_err(format!("unknown estimator {estimator:?}"))),
    };
    Ok(GGSettings::default().with_sampling(sampling).with_estimator(estimator))
}

/// Monte Carlo estimate of the averaged quasi-morphism of the time-one map.
#[pyfunction]
#[pyo3(signature = (kernel, hamiltonian, p, n_samples, seed = 0, sampling = "uniform", estimator = "plain"))]
fn gg_estimate(
    py: Python<'_>,
    kernel: &PyKernel,
    hamiltonian: &PyHamiltonian,
    p: u32,
    n_samples: usize,
    seed: u64,
    sampling: &str,
    estimator: &str,
) -> PyResult<PyGGEstimate> {
    let settings = gg_settings(sampling, estimator)?;
    py.detach(|| ggqm::gg_estimate_with(&kernel.0, &hamiltonian.0, p, n_samples, seed, &settings))
        .map(PyGGEstimate)
        .map_err(err)
}

/// `u_{f^p}(x, y)` for one pair of points.
#[pyfunction]
fn u_value(kernel: &PyKernel, hamiltonian: &PyHamiltonian, x: Point, y: Point, p: u32) -> PyResult<f64> {
    ggqm::u_value(&kernel.0, &hamiltonian.0, x, y, p).map_err(err)
}

/// Word of a closed polyline in the punctured torus, points given mod 1.
#[pyfunction]
fn loop_word(points: Vec<Point>) -> PyResult<PyWord> {
    let l = PuncturedLoop::from_wrapped(&points, DEFAULT_DELTA_PUNCT).map_err(err)?;
    Ok(PyWord(word_of_loop(&l, &CutSystem::default())))
}

/// Grid diffeomorphism given by node images.
#[pyclass(name = "GridMap", module = "symqm_py", frozen)]
struct PyGridMap(GridDiffeo);

#[pymethods]
impl PyGridMap {
    fn apply(&self, p: Point) -> (f64, f64) {
        pt(self.0.apply(p))
    }

    fn apply_inverse(&self, p: Point) -> (f64, f64) {
        pt(self.0.apply_inverse(p))
    }

    fn c0_norm(&self) -> f64 {
        self.0.c0_norm()
    }

    fn roundtrip_error(&self) -> f64 {
        self.0.roundtrip_error()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.nx, self.0.ny)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.0.write_binary(&path).map_err(err)
    }
}

fn grid_form(rows: Vec<Vec<f64>>, rect: Rect) -> PyResult<GridForm> {
    let ny = rows.len();
    let nx = rows.first().map_or(0, Vec::len);
    if nx < 2 || ny < 2 || rows.iter().any(|r| r.len() != nx) {
        return Err(PyValueError::new_err("density must be a rectangular list of at least 2x2 rows"));
    }
    let mut g = Grid2::zeros(rect, nx, ny);
    g.data = rows.into_iter().flatten().collect();
    GridForm::new(g).map_err(err)
}

/// Moser map `f` with `f^* omega2 = omega1` on a rectangle.
///
/// Returns `(map, residual)` where `residual` is the interior pullback error.
/// With `rescale`, `omega2` is first scaled to the discrete mass of `omega1`.
#[pyfunction]
#[pyo3(signature = (omega1, omega2, rect = (0.0, 1.0, 0.0, 1.0), time_steps = 32, rescale = true))]
fn moser_equalize(
    py: Python<'_>,
    omega1: Vec<Vec<f64>>,
    omega2: Vec<Vec<f64>>,
    rect: (f64, f64, f64, f64),
    time_steps: usize,
    rescale: bool,
) -> PyResult<(PyGridMap, f64)> {
    let rect = Rect::new(rect.0, rect.1, rect.2, rect.3);
    let (w1, mut w2) = (grid_form(omega1, rect)?, grid_form(omega2, rect)?);
    if rescale {
        let mut d = w2.density.clone();
        let c = w1.total() / w2.total();
        d.data.iter_mut().for_each(|v| *v *= c);
        w2 = GridForm::new(d).map_err(err)?;
    }
    let settings = MoserSettings {
        time_steps,
        ..MoserSettings::default()
    };
    let m = py
        .detach(|| moserfrag::moser_equalize(&w1, &w2, &BoundaryMode::VanishNearBoundary, &settings))
        .map_err(err)?;
    let residual = moserfrag::pullback_residual(&m.diffeo, &w1, &w2);
    Ok((PyGridMap(m.diffeo), residual))
}

/// Splits the time-one map of a disc Hamiltonian into `theta, phi_+, phi_-`.
#[pyfunction]
#[pyo3(signature = (hamiltonian, eps, grid_n = 129))]
fn disc_fragment<'py>(py: Python<'py>, hamiltonian: &PyHamiltonian, eps: f64, grid_n: usize) -> PyResult<Bound<'py, PyDict>> {
    let settings = FragmentSettings {
        grid_n,
        ..FragmentSettings::default()
    };
    let d = py
        .detach(|| moserfrag::disc_fragment(&hamiltonian.0, eps, &settings))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("eps", d.eps)?;
    out.set_item("kappa", d.kappa)?;
    out.set_item("c_max", d.c_max)?;
    out.set_item("displacement", d.displacement)?;
    out.set_item("residual", d.residual)?;
    out.set_item("h1_error", d.h1_error)?;
    out.set_item("supports_ok", d.supports_ok())?;
    out.set_item("commute", d.commute)?;
    out.set_item("theta", PyGridMap(d.theta))?;
    out.set_item("phi_plus", PyGridMap(d.phi_plus))?;
    out.set_item("phi_minus", PyGridMap(d.phi_minus))?;
    Ok(out)
}

/// Area-preserving map taking the axis `y = 0` through the given vertices.
#[pyfunction]
#[pyo3(signature = (vertices, eps, grid_n = 65))]
fn curve_extend<'py>(py: Python<'py>, vertices: Vec<Point>, eps: f64, grid_n: usize) -> PyResult<Bound<'py, PyDict>> {
    let c = py
        .detach(|| moserfrag::curve_extend(&vertices, eps, grid_n))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("eps", c.eps)?;
    out.set_item("markers", c.markers)?;
    out.set_item("vertex_residual", c.vertex_residual)?;
    out.set_item("c_prime", c.c_prime)?;
    out.set_item("boundary_identity", c.boundary_identity)?;
    out.set_item("map", PyGridMap(c.diffeo))?;
    Ok(out)
}

/// Problems with a TOML config, one `field: message` string each.
#[pyfunction]
fn validate_config(text: &str) -> Vec<String> {
    validate_str(text).iter().map(ToString::to_string).collect()
}

/// Runs a TOML config; returns `passed`, `csv`, `report` and `predicates`.
#[pyfunction]
#[pyo3(signature = (text, output_dir = None))]
fn run_config<'py>(py: Python<'py>, text: &str, output_dir: Option<std::path::PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::parse(text).map_err(err)?;
    let report = py.detach(|| run_experiment(&cfg)).map_err(err)?;
    if let Some(dir) = output_dir {
        report.write(&dir).map_err(err)?;
    }
    let out = PyDict::new(py);
    out.set_item("passed", report.passed())?;
    out.set_item("csv", report.csv().map_err(err)?)?;
    out.set_item("report", report.text())?;
    let preds: Vec<(String, bool, String)> = report
        .predicates
        .into_iter()
        .map(|p| (p.name, p.passed, p.detail))
        .collect();
    out.set_item("predicates", preds)?;
    Ok(out)
}

#[pymodule]
fn symqm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWord>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyHamiltonian>()?;
    m.add_class::<PyGGEstimate>()?;
    m.add_class::<PyGridMap>()?;
    m.add_function(wrap_pyfunction!(gg_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(u_value, m)?)?;
    m.add_function(wrap_pyfunction!(loop_word, m)?)?;
    m.add_function(wrap_pyfunction!(moser_equalize, m)?)?;
    m.add_function(wrap_pyfunction!(disc_fragment, m)?)?;
    m.add_function(wrap_pyfunction!(curve_extend, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
