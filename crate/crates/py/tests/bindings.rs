use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use semidpg::Error;
use std::ffi::CString;

/// Runs `code` with the extension bound to `sd`; returns the globals.
fn exec<'py>(py: Python<'py>, code: &str) -> PyResult<Bound<'py, PyDict>> {
    let module = pyo3::wrap_pymodule!(semidpg_py::semidpg_py)(py);
    let globals = PyDict::new(py);
    globals.set_item("sd", module)?;
    py.run(&CString::new(code).unwrap(), Some(&globals), None)?;
    Ok(globals)
}

fn get<'py, T: pyo3::conversion::FromPyObjectOwned<'py>>(g: &Bound<'py, PyDict>, name: &str) -> T {
    g.get_item(name).unwrap().unwrap().extract::<T>().ok().unwrap_or_else(|| panic!("cannot extract {name}"))
}

#[test]
fn mesh_construction_and_refinement() {
    Python::attach(|py| {
        let g = exec(
            py,
            "m = sd.Mesh.unit_square(2)\n\
             fine, parents = m.refine([0, 5])\n\
             uni = m.refine_uniform()\n\
             n = (m.n_triangles, fine.n_triangles, len(parents), uni.n_triangles)\n\
             area = fine.area()\n\
             hanging = fine.hanging_vertices()\n\
             tris = m.triangles()\n\
             l = sd.Mesh.lshape(1).n_triangles\n",
        )
        .unwrap();
        let n: (usize, usize, usize, usize) = get(&g, "n");
        assert_eq!(n.0, 8);
        assert!(n.1 > 8);
        assert_eq!(n.1, n.2);
        assert_eq!(n.3, 32);
        assert!((get::<f64>(&g, "area") - 1.0).abs() < 1e-14);
        assert!(get::<Vec<usize>>(&g, "hanging").is_empty());
        assert_eq!(get::<Vec<[usize; 3]>>(&g, "tris").len(), 8);
        assert_eq!(get::<usize>(&g, "l"), 6);
    });
}

#[test]
fn affine_solution_is_exact() {
    Python::attach(|py| {
        let g = exec(
            py,
            "s = sd.solve(sd.Mesh.lshape(2), sd.Problem.affine(1.0, -2.0, 0.5))\n\
             res = s.res\n\
             err = s.errors()['grad_u']\n\
             ok = s.converged\n\
             nu = len(s.u)\n",
        )
        .unwrap();
        assert!(get::<bool>(&g, "ok"));
        assert!(get::<f64>(&g, "res") < 1e-10);
        assert!(get::<f64>(&g, "err") < 1e-10);
        assert!(get::<usize>(&g, "nu") > 0);
    });
}

#[test]
fn solution_indicators_and_marking() {
    Python::attach(|py| {
        let g = exec(
            py,
            "p = sd.Problem.example('ex2')\n\
             s = sd.solve(p.initial_mesh(2), p)\n\
             total = sum(v * v for v in s.indicators) ** 0.5\n\
             res = s.res\n\
             marked = s.mark(0.5)\n\
             direct = sd.doerfler_mark(s.indicators, 0.5)\n\
             its = s.iterations\n",
        )
        .unwrap();
        let (total, res): (f64, f64) = (get(&g, "total"), get(&g, "res"));
        assert!((total - res).abs() <= 1e-12 * res);
        assert_eq!(get::<Vec<usize>>(&g, "marked"), get::<Vec<usize>>(&g, "direct"));
        assert!(get::<usize>(&g, "its") <= 5);
    });
}

#[test]
fn run_reports_rates_and_csv() {
    Python::attach(|py| {
        let g = exec(
            py,
            "r = sd.Run('ex1', 'uniform', max_elements=600)\n\
             counts = [rec['n_elements'] for rec in r.records()]\n\
             slope = r.rates()['Res']\n\
             header = r.csv().splitlines()[0]\n\
             term = r.termination\n\
             same = header == sd.CSV_HEADER\n",
        )
        .unwrap();
        assert_eq!(get::<Vec<usize>>(&g, "counts"), vec![8, 32, 128, 512, 2048]);
        let slope: f64 = get(&g, "slope");
        assert!((-0.7..-0.3).contains(&slope), "slope {slope}");
        assert!(get::<bool>(&g, "same"));
        assert_eq!(get::<String>(&g, "term"), "element-limit");
    });
}

#[test]
fn field_export_and_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sol");
    Python::attach(|py| {
        let code = format!(
            "p = sd.Problem.example('ex1')\n\
             m = p.initial_mesh(3)\n\
             files = [str(f) for f in sd.solve(m, p).export({:?})]\n\
             back = sd.Mesh.load(files[0])\n\
             same = back.triangles() == m.triangles()\n",
            prefix.to_str().unwrap()
        );
        let g = exec(py, &code).unwrap();
        let files: Vec<String> = get(&g, "files");
        assert_eq!(files.len(), 3);
        assert!(files.iter().all(|f| std::path::Path::new(f).exists()));
        assert!(get::<bool>(&g, "same"));
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    Python::attach(|py| {
        for (code, expect_value) in [
            ("sd.Run('ex9')", true),
            ("sd.Run('ex1', theta=2.0)", true),
            ("sd.Mesh.unit_square(1).refine([0], rule='sideways')", true),
            ("sd.loglog_slope([1.0], [1.0])", true),
            ("sd.Problem.affine(0, 0, 0).initial_mesh()", true),
        ] {
            let err = exec(py, code).unwrap_err();
            assert_eq!(err.is_instance_of::<PyValueError>(py), expect_value, "{code}");
        }
        let err = exec(py, "sd.Mesh.load('/nonexistent/mesh.dump')").unwrap_err();
        assert!(err.is_instance_of::<PyOSError>(py));
        let err = exec(py, "sd.solve(sd.Mesh.unit_square(2), sd.Problem.example('ex1'), tol=0.0)").unwrap_err();
        assert!(err.is_instance_of::<PyValueError>(py) || err.is_instance_of::<PyRuntimeError>(py));
    });
}

#[test]
fn error_mapping_by_kind() {
    Python::attach(|py| {
        let e = semidpg_py::to_py_err(Error::Singular("pivot".into()));
        assert!(e.is_instance_of::<PyRuntimeError>(py));
        let e = semidpg_py::to_py_err(Error::InvalidMesh("bad".into()));
        assert!(e.is_instance_of::<PyValueError>(py));
        let e = semidpg_py::to_py_err(std::io::Error::other("disk").into());
        assert!(e.is_instance_of::<PyOSError>(py));
    });
}
