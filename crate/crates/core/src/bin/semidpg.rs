use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use semidpg::adaptivity::{RefinementMode, Termination};
use semidpg::problems::Example;
use semidpg::runner::{csv_row, run, RunConfig, CSV_HEADER};

/// Adaptive least-squares minimum-residual solver for the bundled semilinear examples.
#[derive(Parser, Debug)]
#[command(name = "semidpg", version)]
struct Cli {
    /// Problem: ex1 (unit square, smooth) or ex2 (L-shape, corner singularity).
    #[arg(long)]
    problem: Option<String>,
    /// Refinement: uniform or adaptive.
    #[arg(long)]
    mode: Option<String>,
    /// Bulk parameter for adaptive marking.
    #[arg(long)]
    theta: Option<f64>,
    /// Initial mesh resolution.
    #[arg(long)]
    n0: Option<usize>,
    /// Stop after the first mesh with at least this many elements.
    #[arg(long)]
    max_elements: Option<usize>,
    /// Maximum number of solved meshes.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Newton tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Maximum Newton iterations per mesh.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Step halving in Newton.
    #[arg(long)]
    damping: bool,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prefix for exporting the final mesh and fields.
    #[arg(long)]
    fields: Option<PathBuf>,
    /// Number of trailing meshes used for the rate fit.
    #[arg(long)]
    rate_window: Option<usize>,
    /// `key = value` configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> semidpg::Result<RunConfig> {
    let mut c = RunConfig::new(Example::Smooth, RefinementMode::Uniform);
    let mut n0_set = false;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        n0_set = text.lines().any(|l| l.trim_start().starts_with("n0"));
        c.apply_file(&text)?;
    }
    if let Some(p) = &cli.problem {
        c.problem = p.parse()?;
    }
    if !n0_set {
        c.n0 = c.problem.default_n0();
    }
    if let Some(m) = &cli.mode {
        c.mode = m.parse()?;
    }
    macro_rules! take {
        ($($f:ident),*) => { $(if let Some(v) = cli.$f.clone() { c.$f = v.into(); })* };
    }
    take!(theta, n0, max_elements, max_steps, tol, max_iter, rate_window);
    if cli.damping {
        c.damping = true;
    }
    if cli.out.is_some() {
        c.out = cli.out.clone();
    }
    if cli.fields.is_some() {
        c.fields = cli.fields.clone();
    }
    c.validate()?;
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let output = match run(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if config.out.is_none() {
        println!("{CSV_HEADER}");
        for r in &output.result.records {
            println!("{}", csv_row(r));
        }
    }
    if let Some(rates) = &output.rates {
        eprint!("{rates}");
    }
    match output.result.termination {
        Termination::NewtonFailure { step, n_elements } => {
            eprintln!("error: Newton failed on step {step} ({n_elements} elements)");
            ExitCode::from(2)
        }
        _ => ExitCode::SUCCESS,
    }
}
