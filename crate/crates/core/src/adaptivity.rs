//! Refinement indicators, bulk marking and the solve-estimate-mark-refine loop.

use std::time::Instant;

use crate::dpg::assemble_linear;
use crate::error::{Error, Result};
use crate::fespace::TrialDofMap;
use crate::mesh::{BisectionRule, MarkSet, Mesh};
use crate::semilinear::{
    error_norms, initial_guess, newton_solve, residual_parts, DiscreteSolution, ErrorNorms, NewtonOptions,
    NewtonReport, ProblemSpec, ResidualParts,
};
use crate::dpg::LinearNormalSystem;

/// Per-element indicators `Res(T)` and their global combination.
#[derive(Clone, Debug)]
pub struct Indicators {
    pub local: Vec<f64>,
    pub global: f64,
    pub dual: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl From<ResidualParts> for Indicators {
    fn from(p: ResidualParts) -> Self {
        Indicators {
            local: p.local,
            global: p.total,
            dual: p.dual,
            rho: p.rho,
            gamma: p.gamma,
        }
    }
}

pub fn compute_indicators(
    mesh: &Mesh,
    linear: &LinearNormalSystem,
    x: &DiscreteSolution,
    problem: &ProblemSpec,
) -> Result<Indicators> {
    Ok(residual_parts(mesh, linear, x, problem)?.into())
}

/// Smallest set of elements carrying at least `theta` of the squared
/// indicator sum. Elements are taken by decreasing indicator, ties by
/// increasing index. All-zero indicators give an empty set.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Result<MarkSet> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {theta}")));
    }
    if let Some(bad) = indicators.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("invalid indicator value {bad}")));
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&t| indicators[t].powi(2)).sum();
    if total == 0.0 {
        return Ok(MarkSet::default());
    }
    let target = theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for &t in &order {
        marked.push(t);
        acc += indicators[t].powi(2);
        if acc >= target {
            break;
        }
    }
    Ok(MarkSet::new(marked))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefinementMode {
    Uniform,
    Adaptive,
}

impl std::str::FromStr for RefinementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(RefinementMode::Uniform),
            "adaptive" => Ok(RefinementMode::Adaptive),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptConfig {
    pub mode: RefinementMode,
    pub theta: f64,
    /// Stop after the first mesh with at least this many elements.
    pub max_elements: usize,
    /// Upper bound on the number of solved meshes.
    pub max_steps: usize,
    pub newton: NewtonOptions,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            mode: RefinementMode::Adaptive,
            theta: 0.5,
            max_elements: 100_000,
            max_steps: 100,
            newton: NewtonOptions::default(),
        }
    }
}

/// One row of a convergence history.
#[derive(Clone, Debug)]
pub struct ConvergenceRecord {
    pub step: usize,
    pub n_elements: usize,
    pub n_dofs: usize,
    pub newton_iterations: usize,
    pub res_dual: f64,
    pub res_rho: f64,
    pub res_gamma: f64,
    pub res: f64,
    pub errors: Option<ErrorNorms>,
    pub elapsed_secs: f64,
    pub u_min: f64,
    pub u_max: f64,
}

/// Everything the loop produced for one mesh.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub mesh: Mesh,
    pub solution: DiscreteSolution,
    pub newton: NewtonReport,
    pub indicators: Indicators,
    /// Elements marked on this mesh (empty on the last step).
    pub marked: MarkSet,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    ElementLimit,
    StepLimit,
    /// All indicators vanished.
    ZeroResidual,
    NewtonFailure { step: usize, n_elements: usize },
}

#[derive(Clone, Debug)]
pub struct AdaptResult {
    pub records: Vec<ConvergenceRecord>,
    pub steps: Vec<StepOutcome>,
    pub termination: Termination,
}

/// Solves on a fixed mesh: assemble, start from the initial guess, Newton.
pub fn solve_on_mesh(
    mesh: &Mesh,
    problem: &ProblemSpec,
    newton: &NewtonOptions,
) -> Result<(TrialDofMap, LinearNormalSystem, DiscreteSolution, NewtonReport)> {
    let dofmap = TrialDofMap::with_boundary_dirichlet(mesh);
    let linear = assemble_linear(mesh, &dofmap, problem)?;
    let x0 = initial_guess(mesh, &dofmap, problem);
    let (x, report) = newton_solve(mesh, &dofmap, &linear, problem, &x0, newton)?;
    Ok((dofmap, linear, x, report))
}

/// Runs the loop starting from `initial`. Uniform steps mark every element;
/// marked elements are refined with three bisections (all edges).
///
/// `keep_steps` retains meshes and solutions of every step in the result.
pub fn adapt_loop(problem: &ProblemSpec, initial: Mesh, config: &AdaptConfig, keep_steps: bool) -> Result<AdaptResult> {
    if !(config.theta > 0.0 && config.theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {}", config.theta)));
    }
    if config.max_elements == 0 || config.max_steps == 0 {
        return Err(Error::InvalidArgument("limits must be positive".into()));
    }
    let start = Instant::now();
    let mut mesh = initial;
    let mut records = Vec::new();
    let mut steps = Vec::new();
    let termination = loop {
        let step = records.len();
        let (dofmap, linear, x, report) = solve_on_mesh(&mesh, problem, &config.newton)?;
        if !report.converged {
            log::error!(
                "Newton did not converge on step {step} ({} elements): last Res {:.3e}",
                mesh.n_triangles(),
                report.final_residual()
            );
            break Termination::NewtonFailure {
                step,
                n_elements: mesh.n_triangles(),
            };
        }
        let indicators = compute_indicators(&mesh, &linear, &x, problem)?;
        let errors = match problem.exact {
            Some(_) => Some(error_norms(&mesh, &x, problem)?),
            None => None,
        };
        let (u_min, u_max) = x.u_range();
        records.push(ConvergenceRecord {
            step,
            n_elements: mesh.n_triangles(),
            n_dofs: dofmap.n_dofs(),
            newton_iterations: report.iterations,
            res_dual: indicators.dual,
            res_rho: indicators.rho,
            res_gamma: indicators.gamma,
            res: indicators.global,
            errors,
            elapsed_secs: start.elapsed().as_secs_f64(),
            u_min,
            u_max,
        });
        log::info!(
            "step {step}: N = {}, dofs = {}, newton = {}, Res = {:.4e}",
            mesh.n_triangles(),
            dofmap.n_dofs(),
            report.iterations,
            indicators.global
        );

        let done = if mesh.n_triangles() >= config.max_elements {
            Some(Termination::ElementLimit)
        } else if records.len() >= config.max_steps {
            Some(Termination::StepLimit)
        } else {
            None
        };
        let marked = match (done.is_some(), config.mode) {
            (true, _) => MarkSet::default(),
            (false, RefinementMode::Uniform) => MarkSet::all(&mesh),
            (false, RefinementMode::Adaptive) => doerfler_mark(&indicators.local, config.theta)?,
        };
        let next = if marked.is_empty() {
            None
        } else {
            Some(mesh.refine(&marked, BisectionRule::AllEdges)?.mesh)
        };
        if keep_steps {
            steps.push(StepOutcome {
                mesh: mesh.clone(),
                solution: x,
                newton: report,
                indicators,
                marked,
            });
        }
        match (done, next) {
            (Some(reason), _) => break reason,
            (None, None) => break Termination::ZeroResidual,
            (None, Some(m)) => mesh = m,
        }
    };
    Ok(AdaptResult {
        records,
        steps,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mark_dominant() {
        let m = doerfler_mark(&[2.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(m.as_slice(), &[0]);
    }

    #[test]
    fn mark_near_one_takes_all() {
        let m = doerfler_mark(&[3.0, 1.0, 2.0, 0.5], 1.0 - 1e-12).unwrap();
        assert_eq!(m.len(), 4);
    }

    #[test]
    fn mark_ties_by_index() {
        for n in 1..12 {
            let m = doerfler_mark(&vec![1.0; n], 0.5).unwrap();
            assert_eq!(m.as_slice(), (0..n.div_ceil(2)).collect::<Vec<_>>().as_slice());
        }
    }

    #[test]
    fn mark_degenerate_inputs() {
        assert!(doerfler_mark(&[0.0, 0.0], 0.5).unwrap().is_empty());
        assert!(doerfler_mark(&[1.0], 0.0).is_err());
        assert!(doerfler_mark(&[1.0], 1.0).is_err());
        assert!(doerfler_mark(&[f64::NAN], 0.5).is_err());
    }
}
