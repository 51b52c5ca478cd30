//! Element-local DPG machinery.
//!
//! On every element the test space `V_h(T)` (affine functions plus the cubic
//! bubble) carries the inner product `(v, w)_T + (grad v, grad w)_T` with Gram
//! matrix `G_T`. The bilinear form
//!
//! ```text
//! b(u, s, q, r; v) = (kappa grad u + q beta, grad v)_T - <s, v>_{dT} + (r, v)_T
//! ```
//!
//! is tested against the local basis to give the 4x8 matrix `B_T` with columns
//! `(u0, u1, u2, s0, s1, s2, q, r)`. The discrete dual norm of a local
//! functional `l` is `sqrt(l^T G_T^{-1} l)`, and the linear part of the
//! minimum-residual problem leads to the normal equations
//! `sum_T B_T^T G_T^{-1} B_T x = sum_T B_T^T G_T^{-1} L_T`.
//!
//! In the nodal basis `G_T` has condition number of order `h^-2`: the constant
//! function carries only `O(h^2)` mass while gradients are `O(1)`. All solves
//! with `G_T` therefore run in the hierarchical basis `(1, lambda_1, lambda_2,
//! bubble)`, whose Gram matrix and constant-test row are assembled directly.

use nalgebra::{Cholesky, Matrix4, SMatrix, SVector, Vector4, U4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::{edge_gauss, triangle_quadrature, Element, TestBasis, TriangleRule, TrialDofMap};
use crate::linsolve::SparseSymmetric;
use crate::mesh::{Mesh, Point};
use crate::semilinear::{DiscreteSolution, ProblemSpec};

pub type Matrix4x8 = SMatrix<f64, 4, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Vector8 = SVector<f64, 8>;

/// Cached per-element data: nodal Gram matrix, `B_T` and `L_T`, plus their
/// hierarchical counterparts used for every solve with `G_T`.
#[derive(Clone, Debug)]
pub struct LocalSystem {
    pub gram: Matrix4<f64>,
    pub b: Matrix4x8,
    pub load: Vector4<f64>,
    hier_chol: Cholesky<f64, U4>,
    b_hier: Matrix4x8,
    load_hier: Vector4<f64>,
}

/// Nodal test coefficients to hierarchical ones: `1 = lambda_0 + lambda_1 + lambda_2`.
fn to_hierarchical(l: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(l[0] + l[1] + l[2], l[1], l[2], l[3])
}

impl LocalSystem {
    pub fn new(mesh: &Mesh, t: usize, problem: &ProblemSpec) -> Result<Self> {
        let el = Element::of(mesh, t);
        let relabel = |e| match e {
            Error::DegenerateElement { reason, .. } => Error::DegenerateElement { element: t, reason },
            other => other,
        };
        let (gram, _) = local_gram(&el).map_err(relabel)?;
        let hier_chol = hierarchical_gram_chol(&el).map_err(relabel)?;
        let b = local_b(mesh, t, &|x| (problem.kappa)(x), problem.beta)?;
        let load = local_load(&el, &|x| (problem.f)(x));

        // The constant test function annihilates the gradient columns and
        // sees each facet with its full length.
        let mut b_hier = b;
        let facets = mesh.triangle_facets(t);
        for j in 0..8 {
            b_hier[(0, j)] = match j {
                3..=5 => -mesh.facet_sign(t, j - 3) * mesh.facet_length(facets[j - 3]),
                7 => el.area,
                _ => 0.0,
            };
        }
        let mut load_hier = load;
        load_hier[0] = local_mean_load(&el, &|x| (problem.f)(x));
        Ok(LocalSystem {
            gram,
            b,
            load,
            hier_chol,
            b_hier,
            load_hier,
        })
    }

    /// `l^T G^{-1} l` for a functional given on the nodal test basis.
    pub fn dual_norm_sq(&self, l: &Vector4<f64>) -> f64 {
        let h = to_hierarchical(l);
        h.dot(&self.hier_chol.solve(&h))
    }

    /// `G^{-1} l` in nodal coefficients.
    pub fn gram_solve(&self, l: &Vector4<f64>) -> Vector4<f64> {
        let y = self.hier_chol.solve(&to_hierarchical(l));
        Vector4::new(y[0], y[0] + y[1], y[0] + y[2], y[3])
    }

    /// Local residual functional `B_T x_T - L_T` on the nodal test basis.
    pub fn residual(&self, x: &Vector8) -> Vector4<f64> {
        self.b * x - self.load
    }

    /// `||B_T x_T - L_T||^2` in the discrete dual norm.
    pub fn residual_norm_sq(&self, x: &Vector8) -> f64 {
        let r = self.b_hier * x - self.load_hier;
        r.dot(&self.hier_chol.solve(&r))
    }

    /// `B_T^T G_T^{-1} (B_T x_T - L_T)`.
    pub fn normal_residual(&self, x: &Vector8) -> Vector8 {
        let r = self.b_hier * x - self.load_hier;
        self.b_hier.transpose() * self.hier_chol.solve(&r)
    }

    /// `(B_T^T G_T^{-1} B_T, B_T^T G_T^{-1} L_T)`.
    pub fn normal_parts(&self) -> (Matrix8, Vector8) {
        let ginv_b = self.hier_chol.solve(&self.b_hier);
        let ginv_l = self.hier_chol.solve(&self.load_hier);
        (self.b_hier.transpose() * ginv_b, self.b_hier.transpose() * ginv_l)
    }
}

/// Gram matrix of the local test space in the `H^1(T)` inner product.
pub fn local_gram(el: &Element) -> Result<(Matrix4<f64>, Cholesky<f64, U4>)> {
    if !(el.area > 0.0) {
        return Err(Error::DegenerateElement {
            element: usize::MAX,
            reason: format!("area {:e}", el.area),
        });
    }
    let rule = triangle_quadrature(TriangleRule::Dunavant12);
    let mut g = Matrix4::zeros();
    for (lam, _, w) in el.quadrature(&rule) {
        let tv = TestBasis::eval(el, lam);
        for i in 0..4 {
            for j in 0..4 {
                g[(i, j)] += w
                    * (tv.values[i] * tv.values[j]
                        + tv.grads[i][0] * tv.grads[j][0]
                        + tv.grads[i][1] * tv.grads[j][1]);
            }
        }
    }
    let chol = Cholesky::new(g).ok_or_else(|| Error::DegenerateElement {
        element: usize::MAX,
        reason: "Gram matrix is not positive definite".into(),
    })?;
    Ok((g, chol))
}

/// Cholesky factor of the Gram matrix in the basis `(1, lambda_1, lambda_2, bubble)`.
fn hierarchical_gram_chol(el: &Element) -> Result<Cholesky<f64, U4>> {
    let rule = triangle_quadrature(TriangleRule::Dunavant12);
    let mut g = Matrix4::zeros();
    for (lam, _, w) in el.quadrature(&rule) {
        let tv = TestBasis::eval(el, lam);
        let values = [1.0, tv.values[1], tv.values[2], tv.values[3]];
        let grads = [[0.0; 2], tv.grads[1], tv.grads[2], tv.grads[3]];
        for i in 0..4 {
            for j in 0..4 {
                g[(i, j)] += w * (values[i] * values[j] + grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
            }
        }
    }
    Cholesky::new(g).ok_or_else(|| Error::DegenerateElement {
        element: usize::MAX,
        reason: "Gram matrix is not positive definite".into(),
    })
}

fn check_spd(k: &[[f64; 2]; 2]) -> bool {
    let scale = k[0][0].abs().max(k[1][1].abs()).max(f64::MIN_POSITIVE);
    (k[0][1] - k[1][0]).abs() <= 1e-12 * scale && k[0][0] > 0.0 && k[0][0] * k[1][1] - k[0][1] * k[1][0] > 0.0
}

/// Local matrix of the bilinear form; orientation signs are folded into the
/// flux columns.
pub fn local_b(mesh: &Mesh, t: usize, kappa: &dyn Fn(Point) -> [[f64; 2]; 2], beta: [f64; 2]) -> Result<Matrix4x8> {
    let el = Element::of(mesh, t);
    let rule = triangle_quadrature(TriangleRule::Dunavant12);
    let mut b = Matrix4x8::zeros();
    for (lam, x, w) in el.quadrature(&rule) {
        let k = kappa(x);
        if !check_spd(&k) {
            return Err(Error::NotSpd { element: t, x: x[0], y: x[1] });
        }
        let tv = TestBasis::eval(&el, lam);
        for i in 0..4 {
            let gv = tv.grads[i];
            for j in 0..3 {
                let gu = el.grad_lambda[j];
                let flux = [k[0][0] * gu[0] + k[0][1] * gu[1], k[1][0] * gu[0] + k[1][1] * gu[1]];
                b[(i, j)] += w * (flux[0] * gv[0] + flux[1] * gv[1]);
            }
            b[(i, 6)] += w * (beta[0] * gv[0] + beta[1] * gv[1]);
            b[(i, 7)] += w * tv.values[i];
        }
    }

    // -<s, v>_{dT}: local facet k runs from vertex k+1 to vertex k+2.
    let edge = edge_gauss(4)?;
    let facets = mesh.triangle_facets(t);
    for k in 0..3 {
        let len = mesh.facet_length(facets[k]);
        let sign = mesh.facet_sign(t, k);
        for (&s, &w) in edge.points.iter().zip(&edge.weights) {
            let mut lam = [0.0; 3];
            lam[(k + 1) % 3] = 1.0 - s;
            lam[(k + 2) % 3] = s;
            let tv = TestBasis::eval(&el, lam);
            for i in 0..4 {
                b[(i, 3 + k)] -= sign * len * w * tv.values[i];
            }
        }
    }
    Ok(b)
}

/// `(f, v)_T` for the four local test functions (7-point rule).
pub fn local_load(el: &Element, f: &dyn Fn(Point) -> f64) -> Vector4<f64> {
    let rule = triangle_quadrature(TriangleRule::Radon7);
    let mut l = Vector4::zeros();
    for (lam, x, w) in el.quadrature(&rule) {
        let fx = f(x);
        let tv = TestBasis::eval(el, lam);
        for i in 0..4 {
            l[i] += w * fx * tv.values[i];
        }
    }
    l
}

/// `(f, 1)_T` with the same rule as [`local_load`].
fn local_mean_load(el: &Element, f: &dyn Fn(Point) -> f64) -> f64 {
    let rule = triangle_quadrature(TriangleRule::Radon7);
    el.quadrature(&rule).map(|(_, x, w)| w * f(x)).sum()
}

/// Normal equations of the linear part, restricted to the free unknowns.
#[derive(Clone, Debug)]
pub struct LinearNormalSystem {
    /// `A = sum_T B_T^T G_T^{-1} B_T` on the free unknowns.
    pub matrix: SparseSymmetric,
    /// `sum_T B_T^T G_T^{-1} L_T` minus the Dirichlet lift.
    pub rhs: Vec<f64>,
    pub locals: Vec<LocalSystem>,
    /// Values of `u` at all vertices used for the lift (zero at free vertices).
    pub dirichlet_values: Vec<f64>,
}

pub fn assemble_linear(mesh: &Mesh, dofmap: &TrialDofMap, problem: &ProblemSpec) -> Result<LinearNormalSystem> {
    let locals: Vec<LocalSystem> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| LocalSystem::new(mesh, t, problem))
        .collect::<Result<_>>()?;
    let normals: Vec<(Matrix8, Vector8)> = locals.par_iter().map(LocalSystem::normal_parts).collect();

    let dirichlet_values: Vec<f64> = (0..mesh.n_vertices())
        .map(|v| {
            if dofmap.is_dirichlet(v) {
                (problem.dirichlet)(mesh.vertex(v))
            } else {
                0.0
            }
        })
        .collect();

    let n = dofmap.n_dofs();
    let mut triplets = Vec::with_capacity(mesh.n_triangles() * 64);
    let mut rhs = vec![0.0; n];
    for (t, (k, l)) in normals.iter().enumerate() {
        let dofs = dofmap.local_dofs(mesh, t);
        let tri = mesh.triangle(t);
        let local_x: [f64; 8] =
            std::array::from_fn(|b| if b < 3 && dofs[b].is_none() { dirichlet_values[tri[b]] } else { 0.0 });
        for a in 0..8 {
            let Some(ga) = dofs[a] else { continue };
            rhs[ga] += l[a];
            for b in 0..8 {
                match dofs[b] {
                    Some(gb) => triplets.push((ga, gb, k[(a, b)])),
                    None => rhs[ga] -= k[(a, b)] * local_x[b],
                }
            }
        }
    }
    let matrix = SparseSymmetric::from_triplets(n, &triplets)?;
    Ok(LinearNormalSystem {
        matrix,
        rhs,
        locals,
        dirichlet_values,
    })
}

/// Local coefficient vector `(u0, u1, u2, s0, s1, s2, q, r)` of element `t`.
pub fn local_coefficients(mesh: &Mesh, x: &DiscreteSolution, t: usize) -> Vector8 {
    let tri = mesh.triangle(t);
    let fs = mesh.triangle_facets(t);
    Vector8::from([
        x.u[tri[0]],
        x.u[tri[1]],
        x.u[tri[2]],
        x.sigma[fs[0]],
        x.sigma[fs[1]],
        x.sigma[fs[2]],
        x.q[t],
        x.r[t],
    ])
}

/// Discrete dual norm `|B x - L|_{V_h^*}`: global value and per-element values.
pub fn dual_residual(mesh: &Mesh, linear: &LinearNormalSystem, x: &DiscreteSolution) -> (f64, Vec<f64>) {
    let local: Vec<f64> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let sys = &linear.locals[t];
            sys.residual_norm_sq(&local_coefficients(mesh, x, t)).max(0.0).sqrt()
        })
        .collect();
    let global = local.iter().map(|v| v * v).sum::<f64>().sqrt();
    (global, local)
}
