//! Manufactured test problems (identity diffusion, `beta = (1, 2)`).

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{build_lshape, build_unit_square, Mesh, Point};
use crate::semilinear::{ExactSolution, Nonlinearity, ProblemSpec};

pub const BETA: [f64; 2] = [1.0, 2.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Example {
    /// Unit square, `rho = cos`, `gamma = arctan`, `u = sin(2 pi x) sin(pi y)`.
    Smooth,
    /// L-shape, `rho(u) = u^2`, `gamma(u) = u^3`, corner singularity `r^{2/3} cos(2 phi / 3)`.
    LShape,
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex1" => Ok(Example::Smooth),
            "ex2" => Ok(Example::LShape),
            other => Err(Error::InvalidArgument(format!("unknown problem `{other}` (expected ex1 or ex2)"))),
        }
    }
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::Smooth => "ex1",
            Example::LShape => "ex2",
        }
    }

    pub fn problem(self) -> ProblemSpec {
        match self {
            Example::Smooth => smooth_problem(),
            Example::LShape => lshape_problem(),
        }
    }

    pub fn default_n0(self) -> usize {
        match self {
            Example::Smooth => 2,
            Example::LShape => 1,
        }
    }

    pub fn initial_mesh(self, n0: usize) -> Result<Mesh> {
        match self {
            Example::Smooth => build_unit_square(n0),
            Example::LShape => build_lshape(n0),
        }
    }
}

fn identity(_: Point) -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

pub fn smooth_u(p: Point) -> f64 {
    (2.0 * PI * p[0]).sin() * (PI * p[1]).sin()
}

pub fn smooth_grad(p: Point) -> [f64; 2] {
    [
        2.0 * PI * (2.0 * PI * p[0]).cos() * (PI * p[1]).sin(),
        PI * (2.0 * PI * p[0]).sin() * (PI * p[1]).cos(),
    ]
}

/// `f = 5 pi^2 u + sin(u) beta.grad u + arctan(u)`.
pub fn smooth_f(p: Point) -> f64 {
    let u = smooth_u(p);
    let g = smooth_grad(p);
    5.0 * PI * PI * u + u.sin() * (BETA[0] * g[0] + BETA[1] * g[1]) + u.atan()
}

pub fn smooth_problem() -> ProblemSpec {
    ProblemSpec {
        name: "ex1".into(),
        kappa: Arc::new(identity),
        beta: BETA,
        rho: Nonlinearity::new(f64::cos, |u| -u.sin(), |u| -u.cos()),
        gamma: Nonlinearity::new(
            f64::atan,
            |u| 1.0 / (1.0 + u * u),
            |u| -2.0 * u / (1.0 + u * u).powi(2),
        ),
        f: Arc::new(smooth_f),
        // u vanishes on the boundary of the unit square
        dirichlet: Arc::new(|_| 0.0),
        exact: Some(ExactSolution {
            u: Arc::new(smooth_u),
            grad: Arc::new(smooth_grad),
        }),
    }
}

/// Polar angle measured from `3 pi / 4`: with `theta` in `[0, 3 pi / 2]` the
/// standard angle on the L-shape, returns `theta - 3 pi / 4`.
pub fn lshape_angle(p: Point) -> f64 {
    let mut theta = p[1].atan2(p[0]);
    if theta < 0.0 {
        theta += 2.0 * PI;
    }
    theta - 0.75 * PI
}

pub fn lshape_u(p: Point) -> f64 {
    let r = p[0].hypot(p[1]);
    if r == 0.0 {
        return 0.0;
    }
    r.powf(2.0 / 3.0) * (2.0 / 3.0 * lshape_angle(p)).cos()
}

pub fn lshape_grad(p: Point) -> [f64; 2] {
    let r = p[0].hypot(p[1]);
    let theta = lshape_angle(p) + 0.75 * PI;
    let phi = lshape_angle(p);
    let a = 2.0 / 3.0;
    let c = a * r.powf(a - 1.0);
    let (ur, ut) = (c * (a * phi).cos(), -c * (a * phi).sin());
    [ur * theta.cos() - ut * theta.sin(), ur * theta.sin() + ut * theta.cos()]
}

/// `f = -2 u beta.grad u + u^3` (u is harmonic).
pub fn lshape_f(p: Point) -> f64 {
    let u = lshape_u(p);
    let g = lshape_grad(p);
    -2.0 * u * (BETA[0] * g[0] + BETA[1] * g[1]) + u * u * u
}

pub fn lshape_problem() -> ProblemSpec {
    ProblemSpec {
        name: "ex2".into(),
        kappa: Arc::new(identity),
        beta: BETA,
        rho: Nonlinearity::new(|u| u * u, |u| 2.0 * u, |_| 2.0),
        gamma: Nonlinearity::new(|u| u * u * u, |u| 3.0 * u * u, |u| 6.0 * u),
        f: Arc::new(lshape_f),
        dirichlet: Arc::new(lshape_u),
        exact: Some(ExactSolution {
            u: Arc::new(lshape_u),
            grad: Arc::new(lshape_grad),
        }),
    }
}

/// Linear problem (`rho = gamma = 0`, `f = 0`) with the affine exact solution
/// `u = c0 + c1 x + c2 y` as Dirichlet data.
pub fn affine_problem(c: [f64; 3]) -> ProblemSpec {
    let u = move |p: Point| c[0] + c[1] * p[0] + c[2] * p[1];
    let mut problem = ProblemSpec::linear("affine");
    problem.dirichlet = Arc::new(u);
    problem.exact = Some(ExactSolution {
        u: Arc::new(u),
        grad: Arc::new(move |_| [c[1], c[2]]),
    });
    problem
}
