use std::process::Command;

use semidpg::adaptivity::{ConvergenceRecord, RefinementMode};
use semidpg::mesh::{build_lshape, Mesh};
use semidpg::problems::Example;
use semidpg::runner::{csv_row, estimate_rates, export_fields, run, write_csv, FieldFiles, RunConfig, CSV_HEADER};
use semidpg::semilinear::{DiscreteSolution, ErrorNorms};

fn record(n: usize, res: f64, errors: Option<ErrorNorms>) -> ConvergenceRecord {
    ConvergenceRecord {
        step: 0,
        n_elements: n,
        n_dofs: 4 * n,
        newton_iterations: 3,
        res_dual: res,
        res_rho: res,
        res_gamma: res,
        res,
        errors,
        elapsed_secs: 0.0,
        u_min: 0.0,
        u_max: 1.0,
    }
}

#[test]
fn csv_schema() {
    assert_eq!(
        CSV_HEADER,
        "step,N,dofs,newton_iters,res_dual,res_rho,res_gamma,Res,err_grad_u,err_q,err_r,err_u_L2,err_U"
    );
    let row = csv_row(&record(8, 0.125, None));
    assert!(row.ends_with(",,,,,"));
    assert_eq!(row.split(',').count(), 13);
    let e = ErrorNorms { grad_u: 3.0, q: 0.0, r: 4.0, u_l2: 1.0 };
    let row = csv_row(&record(8, 0.125, Some(e)));
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[4], "1.2500000000000000e-1");
    assert_eq!(cols[12].parse::<f64>().unwrap(), 5.0);
    let mut buf = Vec::new();
    write_csv(&mut buf, &[record(8, 1.0, None)]).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with(CSV_HEADER));
}

#[test]
fn rates_from_records() {
    let recs = vec![record(100, 1.0, None), record(400, 0.5, None)];
    let rates = estimate_rates(&recs, 4).unwrap();
    assert!((rates.get("Res").unwrap() + 0.5).abs() < 1e-14);
    assert!(rates.get("err_U").is_none());

    let recs: Vec<_> = (0..6).map(|k| record(8 << (2 * k), 0.3, None)).collect();
    assert!(estimate_rates(&recs, 4).unwrap().get("Res").unwrap().abs() < 1e-14);
    assert!(estimate_rates(&recs[..1], 4).is_err());
    assert!(estimate_rates(&recs, 1).is_err());

    let recs: Vec<_> = (0..5)
        .map(|k| {
            let n = 10usize << (2 * k);
            let v = 2.0 * (n as f64).powf(-0.5);
            record(n, v, Some(ErrorNorms { grad_u: v, q: v, r: v, u_l2: v * v }))
        })
        .collect();
    let rates = estimate_rates(&recs, 4).unwrap();
    assert_eq!(rates.window, 4);
    assert!((rates.get("err_U").unwrap() + 0.5).abs() < 1e-12);
    assert!((rates.get("err_u_L2").unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn export_zero_solution_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = build_lshape(2).unwrap();
    let x = DiscreteSolution::zeros(&mesh);
    let prefix = dir.path().join("zero");
    let files = export_fields(&mesh, &x, &prefix).unwrap();
    let rows = |p: &std::path::Path| -> Vec<Vec<f64>> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let vrows = rows(&files.vertices);
    let erows = rows(&files.elements);
    assert_eq!(vrows.len(), mesh.n_vertices());
    assert_eq!(erows.len(), mesh.n_triangles());
    assert!(vrows.iter().all(|r| r[2] == 0.0));
    assert!(erows.iter().all(|r| r[3] == 0.0 && r[4] == 0.0));

    let back = Mesh::read_dump(std::io::BufReader::new(std::fs::File::open(&files.mesh).unwrap())).unwrap();
    for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
        assert!((a[0] - b[0]).abs() <= 1e-15 && (a[1] - b[1]).abs() <= 1e-15);
    }
    let bad = DiscreteSolution::zeros(&build_lshape(1).unwrap());
    assert!(export_fields(&mesh, &bad, &prefix).is_err());
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    for (problem, mode, max) in [
        (Example::Smooth, RefinementMode::Uniform, 600),
        (Example::LShape, RefinementMode::Adaptive, 1000),
    ] {
        let mut bytes = Vec::new();
        for k in 0..2 {
            let mut c = RunConfig::new(problem, mode);
            c.max_elements = max;
            c.out = Some(dir.path().join(format!("{}-{k}.csv", problem.name())));
            run(&c).unwrap();
            bytes.push(std::fs::read(c.out.unwrap()).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semidpg"))
}

#[test]
fn cli_success_writes_csv_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex2.csv");
    let fields = dir.path().join("ex2");
    let status = cli()
        .args(["--problem", "ex2", "--mode", "adaptive", "--max-elements", "200"])
        .arg("--out")
        .arg(&out)
        .arg("--fields")
        .arg(&fields)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    assert!(last[1].parse::<usize>().unwrap() >= 200);
    let files = FieldFiles::for_prefix(&fields);
    assert!(files.mesh.exists() && files.vertices.exists() && files.elements.exists());
}

#[test]
fn cli_exit_codes() {
    let bad = cli().args(["--problem", "ex1", "--theta", "1.5"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(3));
    let bad = cli().args(["--problem", "ex9"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fail.csv");
    let failed = cli()
        .args(["--problem", "ex2", "--mode", "uniform", "--max-iter", "1"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(failed.status.code(), Some(2));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 2, "header plus the converged coarse step");
}

#[test]
fn cli_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "problem = ex2\nmode = adaptive\nmax_elements = 60\n").unwrap();
    let out = dir.path().join("cfg.csv");
    let status = cli()
        .arg("--config")
        .arg(&cfg)
        .args(["--max-elements", "20"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let counts: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(counts, vec![6, 20]);
}
