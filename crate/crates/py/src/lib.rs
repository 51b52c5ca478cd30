//! Python bindings for `semidpg`.
//!
//! Build the extension with `maturin develop --features extension-module`
//! from this directory; the module is importable as `semidpg_py`.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use semidpg::adaptivity::{self, compute_indicators, solve_on_mesh, RefinementMode, Termination};
use semidpg::mesh::{self, BisectionRule, MarkSet};
use semidpg::problems::{self, Example};
use semidpg::runner::{self, RunConfig};
use semidpg::semilinear::{self, DiscreteSolution, NewtonOptions};
use semidpg::Error;
use std::path::PathBuf;

/// Maps core errors onto Python exception types.
pub fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::InvalidArgument(_) | Error::InvalidMesh(_) | Error::InsufficientData(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn rule_from_str(s: &str) -> PyResult<BisectionRule> {
    match s {
        "refinement-edge" | "newest-vertex" => Ok(BisectionRule::RefinementEdge),
        "all-edges" => Ok(BisectionRule::AllEdges),
        _ => Err(PyValueError::new_err(format!(
            "unknown bisection rule {s:?}; expected 'refinement-edge' or 'all-edges'"
        ))),
    }
}

/// Conforming triangulation with newest-vertex refinement edges.
#[pyclass(name = "Mesh", module = "semidpg_py")]
#[derive(Clone)]
pub struct PyMesh {
    pub inner: mesh::Mesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> PyResult<Self> {
        mesh::Mesh::from_triangles(vertices, triangles)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    /// Unit square split into `2 n^2` triangles.
    #[staticmethod]
    fn unit_square(n: usize) -> PyResult<Self> {
        mesh::build_unit_square(n).map(|inner| Self { inner }).map_err(to_py_err)
    }

    /// L-shaped domain `(-1,1)^2 \ [0,1) x (-1,0]`.
    #[staticmethod]
    fn lshape(n: usize) -> PyResult<Self> {
        mesh::build_lshape(n).map(|inner| Self { inner }).map_err(to_py_err)
    }

    /// Reads a mesh written by `dump`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| to_py_err(e.into()))?;
        mesh::Mesh::read_dump(std::io::BufReader::new(file))
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    #[getter]
    fn n_triangles(&self) -> usize {
        self.inner.n_triangles()
    }

    #[getter]
    fn n_facets(&self) -> usize {
        self.inner.n_facets()
    }

    fn vertices(&self) -> Vec<[f64; 2]> {
        self.inner.vertices().to_vec()
    }

    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles().to_vec()
    }

    fn area(&self) -> f64 {
        self.inner.total_area()
    }

    fn min_angle(&self) -> f64 {
        self.inner.min_angle()
    }

    fn hanging_vertices(&self) -> Vec<usize> {
        self.inner.hanging_vertices()
    }

    /// Bisects the marked elements along their refinement edges and closes
    /// the mesh. Returns the new mesh and the child-to-parent map.
    #[pyo3(signature = (marked, rule = "refinement-edge"))]
    fn refine(&self, marked: Vec<usize>, rule: &str) -> PyResult<(PyMesh, Vec<usize>)> {
        let rule = rule_from_str(rule)?;
        let r = self.inner.refine(&MarkSet::new(marked), rule).map_err(to_py_err)?;
        Ok((PyMesh { inner: r.mesh }, r.parents))
    }

    /// Refines every element with three bisections.
    fn refine_uniform(&self) -> PyResult<PyMesh> {
        let r = self
            .inner
            .refine(&MarkSet::all(&self.inner), BisectionRule::AllEdges)
            .map_err(to_py_err)?;
        Ok(PyMesh { inner: r.mesh })
    }

    fn dump(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| to_py_err(e.into()))?;
        self.inner.write_dump(std::io::BufWriter::new(file)).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(vertices={}, triangles={}, facets={})",
            self.inner.n_vertices(),
            self.inner.n_triangles(),
            self.inner.n_facets()
        )
    }
}

/// Problem data: diffusion, convection, nonlinearities, load and boundary data.
#[pyclass(name = "Problem", module = "semidpg_py")]
#[derive(Clone)]
pub struct PyProblem {
    pub inner: semilinear::ProblemSpec,
    pub example: Option<Example>,
}

#[pymethods]
impl PyProblem {
    /// One of the built-in examples, `"ex1"` or `"ex2"`.
    #[staticmethod]
    fn example(name: &str) -> PyResult<Self> {
        let ex: Example = name.parse().map_err(to_py_err)?;
        Ok(Self {
            inner: ex.problem(),
            example: Some(ex),
        })
    }

    /// Linear problem with exact solution `c0 + c1 x + c2 y`.
    #[staticmethod]
    fn affine(c0: f64, c1: f64, c2: f64) -> Self {
        Self {
            inner: problems::affine_problem([c0, c1, c2]),
            example: None,
        }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn has_exact(&self) -> bool {
        self.inner.exact.is_some()
    }

    /// Initial mesh of a built-in example; `n0` defaults per example.
    #[pyo3(signature = (n0 = None))]
    fn initial_mesh(&self, n0: Option<usize>) -> PyResult<PyMesh> {
        let ex = self
            .example
            .ok_or_else(|| PyValueError::new_err("only built-in examples carry an initial mesh"))?;
        ex.initial_mesh(n0.unwrap_or_else(|| ex.default_n0()))
            .map(|inner| PyMesh { inner })
            .map_err(to_py_err)
    }

    fn exact_u(&self, x: f64, y: f64) -> PyResult<f64> {
        let exact = self
            .inner
            .exact
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("problem has no exact solution"))?;
        Ok((exact.u)([x, y]))
    }

    fn __repr__(&self) -> String {
        format!("Problem({:?})", self.inner.name)
    }
}

/// Discrete minimiser on one mesh with its residual decomposition.
#[pyclass(name = "Solution", module = "semidpg_py")]
pub struct PySolution {
    mesh: mesh::Mesh,
    x: DiscreteSolution,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    residual_history: Vec<f64>,
    #[pyo3(get)]
    res: f64,
    #[pyo3(get)]
    res_dual: f64,
    #[pyo3(get)]
    res_rho: f64,
    #[pyo3(get)]
    res_gamma: f64,
    #[pyo3(get)]
    indicators: Vec<f64>,
    errors: Option<semilinear::ErrorNorms>,
}

#[pymethods]
impl PySolution {
    /// Vertex values of the P1 component.
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.x.u.clone()
    }

    /// Facet fluxes, oriented from the lower to the higher vertex index.
    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.x.sigma.clone()
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.x.q.clone()
    }

    #[getter]
    fn r(&self) -> Vec<f64> {
        self.x.r.clone()
    }

    /// Errors against the exact solution as a dict, or `None`.
    fn errors(&self) -> Option<std::collections::HashMap<&'static str, f64>> {
        self.errors.map(|e| {
            [
                ("grad_u", e.grad_u),
                ("q", e.q),
                ("r", e.r),
                ("u_l2", e.u_l2),
                ("combined", e.combined()),
            ]
            .into_iter()
            .collect()
        })
    }

    /// Elements selected by Dörfler marking of the local indicators.
    fn mark(&self, theta: f64) -> PyResult<Vec<usize>> {
        let m = adaptivity::doerfler_mark(&self.indicators, theta).map_err(to_py_err)?;
        Ok(m.as_slice().to_vec())
    }

    /// Writes `prefix.mesh`, `prefix.vertices.txt` and `prefix.elements.txt`.
    fn export(&self, prefix: PathBuf) -> PyResult<Vec<PathBuf>> {
        let files = runner::export_fields(&self.mesh, &self.x, &prefix).map_err(to_py_err)?;
        Ok(vec![files.mesh, files.vertices, files.elements])
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(res={:.3e}, iterations={}, converged={})",
            self.res, self.iterations, self.converged
        )
    }
}

/// Solves the problem on a fixed mesh with Newton's method.
#[pyfunction]
#[pyo3(signature = (mesh, problem, tol = None, max_iter = None, damping = None))]
fn solve(
    py: Python<'_>,
    mesh: &PyMesh,
    problem: &PyProblem,
    tol: Option<f64>,
    max_iter: Option<usize>,
    damping: Option<bool>,
) -> PyResult<PySolution> {
    let defaults = NewtonOptions::default();
    let opts = NewtonOptions {
        tol: tol.unwrap_or(defaults.tol),
        max_iter: max_iter.unwrap_or(defaults.max_iter),
        damping: damping.unwrap_or(defaults.damping),
    };
    let mesh = mesh.inner.clone();
    let spec = problem.inner.clone();
    py.detach(move || -> semidpg::Result<PySolution> {
        let (_, linear, x, report) = solve_on_mesh(&mesh, &spec, &opts)?;
        let ind = compute_indicators(&mesh, &linear, &x, &spec)?;
        let errors = match spec.exact {
            Some(_) => Some(semilinear::error_norms(&mesh, &x, &spec)?),
            None => None,
        };
        Ok(PySolution {
            converged: report.converged,
            iterations: report.iterations,
            residual_history: report.residual_history.clone(),
            res: ind.global,
            res_dual: ind.dual,
            res_rho: ind.rho,
            res_gamma: ind.gamma,
            indicators: ind.local,
            errors,
            mesh,
            x,
        })
    })
    .map_err(to_py_err)
}

/// Convergence history of an adaptive or uniform experiment.
#[pyclass(name = "Run", module = "semidpg_py")]
pub struct PyRun {
    records: Vec<adaptivity::ConvergenceRecord>,
    rates: Option<runner::RateReport>,
    termination: Termination,
}

#[pymethods]
impl PyRun {
    /// Runs a built-in example. Keyword options mirror the CLI flags.
    #[new]
    #[pyo3(signature = (problem, mode = "uniform", **options))]
    fn new(
        py: Python<'_>,
        problem: &str,
        mode: &str,
        options: Option<&Bound<'_, pyo3::types::PyDict>>,
    ) -> PyResult<Self> {
        let ex: Example = problem.parse().map_err(to_py_err)?;
        let mode: RefinementMode = mode.parse().map_err(to_py_err)?;
        let mut config = RunConfig::new(ex, mode);
        if let Some(options) = options {
            for (k, v) in options.iter() {
                let key: String = k.extract()?;
                let value = v.str()?.to_string();
                let value = match value.as_str() {
                    "True" => "true".to_string(),
                    "False" => "false".to_string(),
                    _ => value,
                };
                config.set(&key, &value).map_err(to_py_err)?;
            }
        }
        let out = py.detach(|| runner::run(&config)).map_err(to_py_err)?;
        Ok(Self {
            records: out.result.records,
            rates: out.rates,
            termination: out.result.termination,
        })
    }

    /// One dict per step with the CSV columns.
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
        self.records
            .iter()
            .map(|r| {
                let d = pyo3::types::PyDict::new(py);
                d.set_item("step", r.step)?;
                d.set_item("n_elements", r.n_elements)?;
                d.set_item("n_dofs", r.n_dofs)?;
                d.set_item("newton_iterations", r.newton_iterations)?;
                d.set_item("res", r.res)?;
                d.set_item("res_dual", r.res_dual)?;
                d.set_item("res_rho", r.res_rho)?;
                d.set_item("res_gamma", r.res_gamma)?;
                d.set_item("u_min", r.u_min)?;
                d.set_item("u_max", r.u_max)?;
                d.set_item("elapsed_secs", r.elapsed_secs)?;
                if let Some(e) = r.errors {
                    d.set_item("err_grad_u", e.grad_u)?;
                    d.set_item("err_q", e.q)?;
                    d.set_item("err_r", e.r)?;
                    d.set_item("err_u_l2", e.u_l2)?;
                    d.set_item("err_combined", e.combined())?;
                }
                Ok(d)
            })
            .collect()
    }

    /// Fitted log-log slopes keyed by quantity, or `None` with too few steps.
    fn rates(&self) -> Option<std::collections::HashMap<&'static str, f64>> {
        self.rates.as_ref().map(|r| r.slopes.iter().copied().collect())
    }

    fn csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        runner::write_csv(&mut buf, &self.records).map_err(to_py_err)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// `"element-limit"`, `"step-limit"`, `"zero-residual"` or `"newton-failure"`.
    #[getter]
    fn termination(&self) -> &'static str {
        match self.termination {
            Termination::ElementLimit => "element-limit",
            Termination::StepLimit => "step-limit",
            Termination::ZeroResidual => "zero-residual",
            Termination::NewtonFailure { .. } => "newton-failure",
        }
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }
}

/// Minimal set of indices whose squared indicators reach `theta` of the total.
#[pyfunction]
fn doerfler_mark(indicators: Vec<f64>, theta: f64) -> PyResult<Vec<usize>> {
    adaptivity::doerfler_mark(&indicators, theta)
        .map(|m| m.as_slice().to_vec())
        .map_err(to_py_err)
}

/// Least-squares slope of `log(values)` against `log(n)`.
#[pyfunction]
fn loglog_slope(n: Vec<f64>, values: Vec<f64>) -> PyResult<f64> {
    runner::loglog_slope(&n, &values).map_err(to_py_err)
}

#[pymodule]
pub fn semidpg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(doerfler_mark, m)?)?;
    m.add_function(wrap_pyfunction!(loglog_slope, m)?)?;
    m.add("CSV_HEADER", runner::CSV_HEADER)?;
    Ok(())
}
