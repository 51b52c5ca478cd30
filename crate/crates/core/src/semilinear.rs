//! Semilinear problems, the Euler-Lagrange system of the discrete
//! minimum-residual functional, and Newton's method.
//!
//! The functional minimised over `x = (u, s, q, r)` is
//!
//! ```text
//! Phi(x) = |B x - L|^2_{V_h^*} + |rho(u) - q|^2 + |gamma(u) - r|^2
//! ```
//!
//! The residual returned by [`el_residual`] is `grad Phi / 2` and the matrix
//! returned by [`el_jacobian`] is `Hess Phi / 2` (full Newton, including the
//! second-derivative terms of `rho` and `gamma`). The nonlinear L2 terms are
//! integrated with the 3-point edge-midpoint rule; the reported residual `Res`
//! and the error norms use the 7-point rule.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dpg::{local_coefficients, LinearNormalSystem};
use crate::error::{Error, Result};
use crate::fespace::{triangle_quadrature, Element, QuadRule, TriangleRule, TrialDofMap};
use crate::linsolve::{Analysis, SparseSymmetric};
use crate::mesh::{Mesh, Point};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type TensorField = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A twice differentiable scalar nonlinearity with its derivatives.
#[derive(Clone)]
pub struct Nonlinearity {
    pub value: ScalarFn,
    pub d1: ScalarFn,
    pub d2: ScalarFn,
}

impl Nonlinearity {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Nonlinearity {
            value: Arc::new(value),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| 0.0, |_| 0.0)
    }

    /// Checks the supplied derivatives against central differences with step
    /// `1e-6`; returns the worst mismatch `|fd - d| / max(1, |d|)` over the
    /// samples, for the first and second derivative.
    pub fn derivative_mismatch(&self, samples: &[f64]) -> (f64, f64) {
        let h = 1e-6;
        let mut worst = (0.0f64, 0.0f64);
        for &u in samples {
            let fd1 = ((self.value)(u + h) - (self.value)(u - h)) / (2.0 * h);
            let fd2 = ((self.d1)(u + h) - (self.d1)(u - h)) / (2.0 * h);
            let d1 = (self.d1)(u);
            let d2 = (self.d2)(u);
            worst.0 = worst.0.max((fd1 - d1).abs() / d1.abs().max(1.0));
            worst.1 = worst.1.max((fd2 - d2).abs() / d2.abs().max(1.0));
        }
        worst
    }
}

#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub grad: VectorField,
}

/// Data of `-div(kappa grad u + rho(u) beta) + gamma(u) = f`, `u = g` on the boundary.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub kappa: TensorField,
    pub beta: [f64; 2],
    pub rho: Nonlinearity,
    pub gamma: Nonlinearity,
    pub f: ScalarField,
    pub dirichlet: ScalarField,
    pub exact: Option<ExactSolution>,
}

impl ProblemSpec {
    /// Identity diffusion, no nonlinearities, zero data.
    pub fn linear(name: &str) -> Self {
        ProblemSpec {
            name: name.to_string(),
            kappa: Arc::new(|_| [[1.0, 0.0], [0.0, 1.0]]),
            beta: [0.0, 0.0],
            rho: Nonlinearity::zero(),
            gamma: Nonlinearity::zero(),
            f: Arc::new(|_| 0.0),
            dirichlet: Arc::new(|_| 0.0),
            exact: None,
        }
    }
}

/// Coefficients of a discrete function `(u_h, s_h, q_h, r_h)`.
///
/// `u` holds values at all vertices, Dirichlet vertices included.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSolution {
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

impl DiscreteSolution {
    pub fn zeros(mesh: &Mesh) -> Self {
        DiscreteSolution {
            u: vec![0.0; mesh.n_vertices()],
            sigma: vec![0.0; mesh.n_facets()],
            q: vec![0.0; mesh.n_triangles()],
            r: vec![0.0; mesh.n_triangles()],
        }
    }

    pub fn check_sizes(&self, mesh: &Mesh) -> Result<()> {
        if self.u.len() != mesh.n_vertices()
            || self.sigma.len() != mesh.n_facets()
            || self.q.len() != mesh.n_triangles()
            || self.r.len() != mesh.n_triangles()
        {
            return Err(Error::InvalidArgument("solution blocks do not match the mesh".into()));
        }
        Ok(())
    }

    /// Free coefficients in dofmap order.
    pub fn free_vector(&self, dofmap: &TrialDofMap) -> Vec<f64> {
        let mut x = vec![0.0; dofmap.n_dofs()];
        for (v, &u) in self.u.iter().enumerate() {
            if let Some(i) = dofmap.vertex_dof(v) {
                x[i] = u;
            }
        }
        let so = dofmap.sigma_offset();
        x[so..so + self.sigma.len()].copy_from_slice(&self.sigma);
        let qo = dofmap.q_offset();
        x[qo..qo + self.q.len()].copy_from_slice(&self.q);
        let ro = dofmap.r_offset();
        x[ro..ro + self.r.len()].copy_from_slice(&self.r);
        x
    }

    /// `x += scale * delta` on the free coefficients; Dirichlet values are untouched.
    pub fn add_free(&mut self, dofmap: &TrialDofMap, delta: &[f64], scale: f64) {
        for v in 0..self.u.len() {
            if let Some(i) = dofmap.vertex_dof(v) {
                self.u[v] += scale * delta[i];
            }
        }
        let so = dofmap.sigma_offset();
        for (f, s) in self.sigma.iter_mut().enumerate() {
            *s += scale * delta[so + f];
        }
        let (qo, ro) = (dofmap.q_offset(), dofmap.r_offset());
        for t in 0..self.q.len() {
            self.q[t] += scale * delta[qo + t];
            self.r[t] += scale * delta[ro + t];
        }
    }

    pub fn u_range(&self) -> (f64, f64) {
        self.u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| (lo.min(u), hi.max(u)))
    }
}

/// Zero flux, q and r; `u` is the nodal interpolant of the Dirichlet data on
/// Dirichlet vertices and zero elsewhere.
pub fn initial_guess(mesh: &Mesh, dofmap: &TrialDofMap, problem: &ProblemSpec) -> DiscreteSolution {
    let mut x = DiscreteSolution::zeros(mesh);
    for v in 0..mesh.n_vertices() {
        if dofmap.is_dirichlet(v) {
            x.u[v] = (problem.dirichlet)(mesh.vertex(v));
        }
    }
    x
}

/// Gradient and Hessian of the element's nonlinear least-squares terms with
/// respect to the local unknowns `(u0, u1, u2, q, r)`.
struct NonlinearLocal {
    grad: [f64; 5],
    hess: [[f64; 5]; 5],
}

const NL_SLOTS: [usize; 5] = [0, 1, 2, 6, 7];

fn eval_nl(n: &Nonlinearity, u: f64, t: usize) -> Result<(f64, f64, f64)> {
    let (v, d1, d2) = ((n.value)(u), (n.d1)(u), (n.d2)(u));
    if !(v.is_finite() && d1.is_finite() && d2.is_finite()) {
        return Err(Error::NonFinite { element: t, state: u });
    }
    Ok((v, d1, d2))
}

fn nonlinear_local(
    el: &Element,
    u: [f64; 3],
    q: f64,
    r: f64,
    problem: &ProblemSpec,
    rule: &QuadRule,
    t: usize,
    with_hessian: bool,
) -> Result<NonlinearLocal> {
    let mut grad = [0.0; 5];
    let mut hess = [[0.0; 5]; 5];
    for (lam, _, w) in el.quadrature(rule) {
        let uh = lam[0] * u[0] + lam[1] * u[1] + lam[2] * u[2];
        for (n, slot) in [(&problem.rho, 3), (&problem.gamma, 4)] {
            let (v, d1, d2) = eval_nl(n, uh, t)?;
            let c = if slot == 3 { q } else { r };
            let e = v - c;
            for i in 0..3 {
                grad[i] += w * e * d1 * lam[i];
            }
            grad[slot] -= w * e;
            if with_hessian {
                let uu = d1 * d1 + e * d2;
                for i in 0..3 {
                    for j in 0..3 {
                        hess[i][j] += w * uu * lam[i] * lam[j];
                    }
                    hess[i][slot] -= w * d1 * lam[i];
                    hess[slot][i] -= w * d1 * lam[i];
                }
                hess[slot][slot] += w;
            }
        }
    }
    Ok(NonlinearLocal { grad, hess })
}

fn element_values(mesh: &Mesh, x: &DiscreteSolution, t: usize) -> [f64; 3] {
    let tri = mesh.triangle(t);
    [x.u[tri[0]], x.u[tri[1]], x.u[tri[2]]]
}

/// `F(x) = grad Phi(x) / 2` on the free unknowns.
pub fn el_residual(
    mesh: &Mesh,
    dofmap: &TrialDofMap,
    linear: &LinearNormalSystem,
    x: &DiscreteSolution,
    problem: &ProblemSpec,
) -> Result<Vec<f64>> {
    let rule = triangle_quadrature(TriangleRule::Midpoint3);
    let locals: Vec<[f64; 8]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let sys = &linear.locals[t];
            let xt = local_coefficients(mesh, x, t);
            let lin = sys.normal_residual(&xt);
            let el = Element::of(mesh, t);
            let nl = nonlinear_local(&el, element_values(mesh, x, t), x.q[t], x.r[t], problem, &rule, t, false)?;
            let mut g: [f64; 8] = std::array::from_fn(|a| lin[a]);
            for (k, &a) in NL_SLOTS.iter().enumerate() {
                g[a] += nl.grad[k];
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let mut f = vec![0.0; dofmap.n_dofs()];
    for (t, g) in locals.iter().enumerate() {
        for (a, dof) in dofmap.local_dofs(mesh, t).iter().enumerate() {
            if let Some(i) = dof {
                f[*i] += g[a];
            }
        }
    }
    Ok(f)
}

/// `J(x) = Hess Phi(x) / 2` on the free unknowns: the normal matrix plus the
/// element couplings of `u`, `q` and `r` from the nonlinear terms.
pub fn el_jacobian(
    mesh: &Mesh,
    dofmap: &TrialDofMap,
    linear: &LinearNormalSystem,
    x: &DiscreteSolution,
    problem: &ProblemSpec,
) -> Result<SparseSymmetric> {
    let rule = triangle_quadrature(TriangleRule::Midpoint3);
    let blocks: Vec<[[f64; 5]; 5]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let el = Element::of(mesh, t);
            nonlinear_local(&el, element_values(mesh, x, t), x.q[t], x.r[t], problem, &rule, t, true).map(|nl| nl.hess)
        })
        .collect::<Result<_>>()?;
    let mut triplets = Vec::with_capacity(mesh.n_triangles() * 25);
    for (t, h) in blocks.iter().enumerate() {
        let dofs = dofmap.local_dofs(mesh, t);
        for (a, &sa) in NL_SLOTS.iter().enumerate() {
            let Some(ga) = dofs[sa] else { continue };
            for (b, &sb) in NL_SLOTS.iter().enumerate() {
                if let Some(gb) = dofs[sb] {
                    triplets.push((ga, gb, h[a][b]));
                }
            }
        }
    }
    linear.matrix.add_in_pattern(&triplets)
}

/// Residual split into its three components, globally and per element.
#[derive(Clone, Debug)]
pub struct ResidualParts {
    pub dual: f64,
    pub rho: f64,
    pub gamma: f64,
    pub total: f64,
    /// Per element `Res(T)`.
    pub local: Vec<f64>,
}

/// `|rho(u_h) - q_h|_T^2` and `|gamma(u_h) - r_h|_T^2` per element.
fn constraint_terms(
    mesh: &Mesh,
    x: &DiscreteSolution,
    problem: &ProblemSpec,
    rule: &QuadRule,
) -> Result<Vec<(f64, f64)>> {
    (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let el = Element::of(mesh, t);
            let u = element_values(mesh, x, t);
            let mut acc = (0.0, 0.0);
            for (lam, _, w) in el.quadrature(rule) {
                let uh = lam[0] * u[0] + lam[1] * u[1] + lam[2] * u[2];
                let rho = (problem.rho.value)(uh);
                let gamma = (problem.gamma.value)(uh);
                if !(rho.is_finite() && gamma.is_finite()) {
                    return Err(Error::NonFinite { element: t, state: uh });
                }
                acc.0 += w * (rho - x.q[t]).powi(2);
                acc.1 += w * (gamma - x.r[t]).powi(2);
            }
            Ok(acc)
        })
        .collect()
}

fn residual_parts_with(
    mesh: &Mesh,
    linear: &LinearNormalSystem,
    x: &DiscreteSolution,
    problem: &ProblemSpec,
    rule: TriangleRule,
) -> Result<ResidualParts> {
    let (_, dual_local) = crate::dpg::dual_residual(mesh, linear, x);
    let terms = constraint_terms(mesh, x, problem, &triangle_quadrature(rule))?;
    let local: Vec<f64> = dual_local
        .iter()
        .zip(&terms)
        .map(|(d, (a, b))| (d * d + a + b).sqrt())
        .collect();
    let dual = dual_local.iter().map(|d| d * d).sum::<f64>();
    let rho = terms.iter().map(|t| t.0).sum::<f64>();
    let gamma = terms.iter().map(|t| t.1).sum::<f64>();
    let total = local.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(ResidualParts {
        dual: dual.sqrt(),
        rho: rho.sqrt(),
        gamma: gamma.sqrt(),
        total,
        local,
    })
}

/// `Res` and its components, with the 7-point rule.
pub fn residual_parts(
    mesh: &Mesh,
    linear: &LinearNormalSystem,
    x: &DiscreteSolution,
    problem: &ProblemSpec,
) -> Result<ResidualParts> {
    residual_parts_with(mesh, linear, x, problem, TriangleRule::Radon7)
}

/// `Phi(x)` with the nonlinear terms integrated by the 3-point rule, i.e.
/// the functional whose stationary points solve the Euler-Lagrange system.
pub fn objective(mesh: &Mesh, linear: &LinearNormalSystem, x: &DiscreteSolution, problem: &ProblemSpec) -> Result<f64> {
    Ok(residual_parts_with(mesh, linear, x, problem, TriangleRule::Midpoint3)?
        .total
        .powi(2))
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// Stop once the Newton decrement `sqrt(dx^T J dx)` falls below `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Halve the step (up to 8 times) while the objective increases.
    pub damping: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-6,
            max_iter: 20,
            damping: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct NewtonReport {
    /// Number of Newton corrections applied.
    pub iterations: usize,
    /// `Res` (7-point rule) of the initial guess and of every iterate.
    pub residual_history: Vec<f64>,
    /// Objective `Phi` of the initial guess and of every iterate.
    pub objective_history: Vec<f64>,
    /// Newton decrement of every computed correction.
    pub decrements: Vec<f64>,
    pub converged: bool,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }
}

/// Full Newton iteration for the Euler-Lagrange system, started at `x0`.
///
/// Each step solves `J dx = -F`. The iteration stops when the Newton
/// decrement `sqrt(-F . dx)` (the predicted reduction of `Res`-squared, in
/// square-root form) is below `opts.tol`; that final correction is not
/// applied or counted.
pub fn newton_solve(
    mesh: &Mesh,
    dofmap: &TrialDofMap,
    linear: &LinearNormalSystem,
    problem: &ProblemSpec,
    x0: &DiscreteSolution,
    opts: &NewtonOptions,
) -> Result<(DiscreteSolution, NewtonReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("Newton tolerance must be positive".into()));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    x0.check_sizes(mesh)?;
    let analysis: Analysis = linear.matrix.analyze()?;
    let mut x = x0.clone();
    let mut report = NewtonReport::default();
    report.residual_history.push(residual_parts(mesh, linear, &x, problem)?.total);
    let mut phi = objective(mesh, linear, &x, problem)?;
    report.objective_history.push(phi);

    loop {
        let f = el_residual(mesh, dofmap, linear, &x, problem)?;
        let j = el_jacobian(mesh, dofmap, linear, &x, problem)?;
        let wrap = |e: Error| Error::NewtonSolve {
            iteration: report.iterations,
            source: Box::new(e),
        };
        let minus_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = analysis.factor(&j).and_then(|lu| lu.solve(&minus_f)).map_err(wrap)?;
        let decrement = f.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>().abs().sqrt();
        report.decrements.push(decrement);
        log::debug!(
            "newton {}: Res = {:.3e}, decrement = {:.3e}",
            report.iterations,
            report.final_residual(),
            decrement
        );
        if decrement < opts.tol {
            report.converged = true;
            break;
        }
        if report.iterations == opts.max_iter {
            break;
        }

        let mut scale = 1.0;
        let mut trial = x.clone();
        trial.add_free(dofmap, &dx, scale);
        let mut phi_new = objective(mesh, linear, &trial, problem)?;
        if opts.damping {
            let mut halvings = 0;
            while !(phi_new <= phi) && halvings < 8 {
                scale *= 0.5;
                halvings += 1;
                trial = x.clone();
                trial.add_free(dofmap, &dx, scale);
                phi_new = objective(mesh, linear, &trial, problem)?;
            }
        }
        if phi_new > phi && report.iterations > 0 {
            log::warn!(
                "objective increased at Newton step {}: {:.6e} -> {:.6e}",
                report.iterations + 1,
                phi,
                phi_new
            );
        }
        x = trial;
        phi = phi_new;
        report.iterations += 1;
        report.objective_history.push(phi);
        report.residual_history.push(residual_parts(mesh, linear, &x, problem)?.total);
    }
    let (lo, hi) = x.u_range();
    log::debug!("u_h range [{lo:.4e}, {hi:.4e}]");
    Ok((x, report))
}

/// Error components against the exact solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    /// `|grad(u - u_h)|`
    pub grad_u: f64,
    /// `|rho(u) - q_h|`
    pub q: f64,
    /// `|gamma(u) - r_h|`
    pub r: f64,
    /// `|u - u_h|`
    pub u_l2: f64,
}

impl ErrorNorms {
    /// `(|grad(u-u_h)|^2 + |rho(u)-q_h|^2 + |gamma(u)-r_h|^2)^(1/2)`.
    pub fn combined(&self) -> f64 {
        (self.grad_u.powi(2) + self.q.powi(2) + self.r.powi(2)).sqrt()
    }
}

/// Error norms with the 7-point rule.
pub fn error_norms(mesh: &Mesh, x: &DiscreteSolution, problem: &ProblemSpec) -> Result<ErrorNorms> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("problem `{}` has no exact solution", problem.name)))?;
    let rule = triangle_quadrature(TriangleRule::Radon7);
    let parts: Vec<[f64; 4]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let el = Element::of(mesh, t);
            let u = element_values(mesh, x, t);
            let gh = [
                u[0] * el.grad_lambda[0][0] + u[1] * el.grad_lambda[1][0] + u[2] * el.grad_lambda[2][0],
                u[0] * el.grad_lambda[0][1] + u[1] * el.grad_lambda[1][1] + u[2] * el.grad_lambda[2][1],
            ];
            let mut acc = [0.0; 4];
            for (lam, p, w) in el.quadrature(&rule) {
                let ue = (exact.u)(p);
                let ge = (exact.grad)(p);
                let uh = lam[0] * u[0] + lam[1] * u[1] + lam[2] * u[2];
                acc[0] += w * ((ge[0] - gh[0]).powi(2) + (ge[1] - gh[1]).powi(2));
                acc[1] += w * ((problem.rho.value)(ue) - x.q[t]).powi(2);
                acc[2] += w * ((problem.gamma.value)(ue) - x.r[t]).powi(2);
                acc[3] += w * (ue - uh).powi(2);
            }
            acc
        })
        .collect();
    let sum = |k: usize| parts.iter().map(|a| a[k]).sum::<f64>().sqrt();
    Ok(ErrorNorms {
        grad_u: sum(0),
        q: sum(1),
        r: sum(2),
        u_l2: sum(3),
    })
}
