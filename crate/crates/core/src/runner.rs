//! Experiment driver: configuration, CSV tables, rate estimation and field export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::adaptivity::{adapt_loop, AdaptConfig, AdaptResult, ConvergenceRecord, RefinementMode};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::problems::Example;
use crate::semilinear::{DiscreteSolution, NewtonOptions};

pub const CSV_HEADER: &str =
    "step,N,dofs,newton_iters,res_dual,res_rho,res_gamma,Res,err_grad_u,err_q,err_r,err_u_L2,err_U";

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: Example,
    pub mode: RefinementMode,
    pub theta: f64,
    pub n0: usize,
    pub max_elements: usize,
    pub max_steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: bool,
    pub out: Option<PathBuf>,
    pub fields: Option<PathBuf>,
    pub rate_window: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(problem: Example, mode: RefinementMode) -> Self {
        RunConfig {
            problem,
            mode,
            theta: 0.5,
            n0: problem.default_n0(),
            max_elements: 100_000,
            max_steps: 100,
            tol: 1e-6,
            max_iter: 20,
            damping: false,
            out: None,
            fields: None,
            rate_window: 4,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.n0 == 0 || self.max_elements == 0 || self.max_steps == 0 || self.max_iter == 0 {
            return Err(Error::InvalidArgument("n0, limits and max_iter must be positive".into()));
        }
        if self.rate_window < 2 {
            return Err(Error::InvalidArgument("rate window needs at least 2 points".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting (keys as the CLI flags without dashes).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidArgument(format!("bad value `{value}` for {what}"));
        match key.trim().replace('_', "-").as_str() {
            "problem" => self.problem = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "theta" => self.theta = value.parse().map_err(|_| bad("theta"))?,
            "n0" => self.n0 = value.parse().map_err(|_| bad("n0"))?,
            "max-elements" => self.max_elements = value.parse().map_err(|_| bad("max-elements"))?,
            "max-steps" => self.max_steps = value.parse().map_err(|_| bad("max-steps"))?,
            "tol" => self.tol = value.parse().map_err(|_| bad("tol"))?,
            "max-iter" => self.max_iter = value.parse().map_err(|_| bad("max-iter"))?,
            "damping" => self.damping = value.parse().map_err(|_| bad("damping"))?,
            "out" => self.out = Some(PathBuf::from(value)),
            "fields" => self.fields = Some(PathBuf::from(value)),
            "rate-window" => self.rate_window = value.parse().map_err(|_| bad("rate-window"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a `key = value` file; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn adapt_config(&self) -> AdaptConfig {
        AdaptConfig {
            mode: self.mode,
            theta: self.theta,
            max_elements: self.max_elements,
            max_steps: self.max_steps,
            newton: NewtonOptions {
                tol: self.tol,
                max_iter: self.max_iter,
                damping: self.damping,
            },
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_row(r: &ConvergenceRecord) -> String {
    let mut cols = vec![
        r.step.to_string(),
        r.n_elements.to_string(),
        r.n_dofs.to_string(),
        r.newton_iterations.to_string(),
        fmt(r.res_dual),
        fmt(r.res_rho),
        fmt(r.res_gamma),
        fmt(r.res),
    ];
    match &r.errors {
        Some(e) => cols.extend([e.grad_u, e.q, e.r, e.u_l2, e.combined()].map(fmt)),
        None => cols.extend(std::iter::repeat_n(String::new(), 5)),
    }
    cols.join(",")
}

pub fn write_csv<W: Write>(mut w: W, records: &[ConvergenceRecord]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", csv_row(r))?;
    }
    Ok(())
}

/// Least-squares slope of `log(value)` against `log(n)`.
pub fn loglog_slope(n: &[f64], values: &[f64]) -> Result<f64> {
    if n.len() != values.len() || n.len() < 2 {
        return Err(Error::InsufficientData("need at least two points".into()));
    }
    if n.iter().chain(values).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InsufficientData("values must be positive and finite".into()));
    }
    let xs: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all N values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Fitted slopes over the trailing window of a run.
#[derive(Clone, Debug)]
pub struct RateReport {
    pub window: usize,
    pub slopes: Vec<(&'static str, f64)>,
}

impl RateReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.slopes.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
    }
}

impl std::fmt::Display for RateReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "slopes vs N over the last {} meshes:", self.window)?;
        for (name, s) in &self.slopes {
            writeln!(f, "  {name:<11} {s:+.4}")?;
        }
        Ok(())
    }
}

pub fn estimate_rates(records: &[ConvergenceRecord], window: usize) -> Result<RateReport> {
    if window < 2 || records.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "rate window {window} with {} records",
            records.len()
        )));
    }
    let tail = &records[records.len().saturating_sub(window)..];
    let n: Vec<f64> = tail.iter().map(|r| r.n_elements as f64).collect();
    let mut columns: Vec<(&'static str, Vec<f64>)> = vec![
        ("res_dual", tail.iter().map(|r| r.res_dual).collect()),
        ("res_rho", tail.iter().map(|r| r.res_rho).collect()),
        ("res_gamma", tail.iter().map(|r| r.res_gamma).collect()),
        ("Res", tail.iter().map(|r| r.res).collect()),
    ];
    if tail.iter().all(|r| r.errors.is_some()) {
        let e: Vec<_> = tail.iter().map(|r| r.errors.unwrap()).collect();
        columns.push(("err_grad_u", e.iter().map(|e| e.grad_u).collect()));
        columns.push(("err_q", e.iter().map(|e| e.q).collect()));
        columns.push(("err_r", e.iter().map(|e| e.r).collect()));
        columns.push(("err_u_L2", e.iter().map(|e| e.u_l2).collect()));
        columns.push(("err_U", e.iter().map(|e| e.combined()).collect()));
    }
    let slopes = columns
        .into_iter()
        .filter_map(|(name, v)| loglog_slope(&n, &v).ok().map(|s| (name, s)))
        .collect();
    Ok(RateReport {
        window: tail.len(),
        slopes,
    })
}

/// Paths written by [`export_fields`].
#[derive(Clone, Debug)]
pub struct FieldFiles {
    pub mesh: PathBuf,
    pub vertices: PathBuf,
    pub elements: PathBuf,
}

impl FieldFiles {
    pub fn for_prefix(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        FieldFiles {
            mesh: with(".mesh"),
            vertices: with(".vertices.txt"),
            elements: with(".elements.txt"),
        }
    }
}

/// Writes `<prefix>.mesh` (mesh dump), `<prefix>.vertices.txt` with columns
/// `x y u` and `<prefix>.elements.txt` with columns `v0 v1 v2 q r`.
pub fn export_fields(mesh: &Mesh, x: &DiscreteSolution, prefix: &Path) -> Result<FieldFiles> {
    x.check_sizes(mesh)?;
    let files = FieldFiles::for_prefix(prefix);
    mesh.write_dump(BufWriter::new(File::create(&files.mesh)?))?;

    let mut w = BufWriter::new(File::create(&files.vertices)?);
    writeln!(w, "# x y u")?;
    for (p, u) in mesh.vertices().iter().zip(&x.u) {
        writeln!(w, "{} {} {}", fmt(p[0]), fmt(p[1]), fmt(*u))?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(&files.elements)?);
    writeln!(w, "# v0 v1 v2 q r")?;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        writeln!(w, "{} {} {} {} {}", tri[0], tri[1], tri[2], fmt(x.q[t]), fmt(x.r[t]))?;
    }
    w.flush()?;
    Ok(files)
}

/// Result of [`run`]: the loop output and its rates (when enough records).
pub struct RunOutput {
    pub result: AdaptResult,
    pub rates: Option<RateReport>,
}

/// Runs one experiment, writing the CSV (flushed even when Newton fails) and
/// optionally the final fields.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let problem = config.problem.problem();
    let mesh = config.problem.initial_mesh(config.n0)?;
    let result = adapt_loop(&problem, mesh, &config.adapt_config(), config.fields.is_some())?;
    if let Some(path) = &config.out {
        let mut w = BufWriter::new(File::create(path)?);
        write_csv(&mut w, &result.records)?;
        w.flush()?;
    }
    if let (Some(prefix), Some(last)) = (&config.fields, result.steps.last()) {
        export_fields(&last.mesh, &last.solution, prefix)?;
    }
    let rates = estimate_rates(&result.records, config.rate_window).ok();
    Ok(RunOutput { result, rates })
}
