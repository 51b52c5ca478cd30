//! Lowest-order trial and test spaces, quadrature rules and DOF maps.
//!
//! Trial space per element: continuous P1 for `u`, one constant per facet for
//! the flux trace, one constant each for `q` and `r`. Test space per element:
//! the three barycentric coordinates plus the cubic bubble
//! `27 * l0 * l1 * l2` (value 1 at the centroid).

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Quadrature rule on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriangleRule {
    /// Edge-midpoint rule, exact for quadratics. Used for the nonlinear terms.
    Midpoint3,
    /// 7-point Radon rule, exact for quintics. Used for residuals and errors.
    Radon7,
    /// 12-point Dunavant rule, exact for degree 6. Used for Gram and `B`.
    Dunavant12,
}

impl FromStr for TriangleRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonlinear-3pt" | "3" => Ok(TriangleRule::Midpoint3),
            "residual-7pt" | "7" => Ok(TriangleRule::Radon7),
            "gram-12pt" | "12" => Ok(TriangleRule::Dunavant12),
            other => Err(Error::InvalidArgument(format!("unknown quadrature rule `{other}`"))),
        }
    }
}

fn symmetric_orbit(points: &mut Vec<[f64; 2]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a], [b, a], [a, b]] {
        points.push(p);
        weights.push(w);
    }
}

pub fn triangle_quadrature(rule: TriangleRule) -> QuadRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let degree = match rule {
        TriangleRule::Midpoint3 => {
            points = vec![[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];
            weights = vec![1.0 / 6.0; 3];
            2
        }
        TriangleRule::Radon7 => {
            let s15 = 15f64.sqrt();
            points.push([1.0 / 3.0, 1.0 / 3.0]);
            weights.push(9.0 / 80.0);
            symmetric_orbit(&mut points, &mut weights, (6.0 - s15) / 21.0, (155.0 - s15) / 2400.0);
            symmetric_orbit(&mut points, &mut weights, (6.0 + s15) / 21.0, (155.0 + s15) / 2400.0);
            5
        }
        TriangleRule::Dunavant12 => {
            symmetric_orbit(&mut points, &mut weights, 0.249_286_745_170_910_42, 0.5 * 0.116_786_275_726_379_37);
            symmetric_orbit(&mut points, &mut weights, 0.063_089_014_491_502_23, 0.5 * 0.050_844_906_370_206_82);
            let (a, b) = (0.053_145_049_844_816_95, 0.310_352_451_033_784_4);
            let c = 1.0 - a - b;
            for p in [[a, b], [b, a], [a, c], [c, a], [b, c], [c, b]] {
                points.push(p);
                weights.push(0.5 * 0.082_851_075_618_373_58);
            }
            6
        }
    };
    QuadRule { points, weights, degree }
}

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn edge_gauss(n_points: usize) -> Result<EdgeRule> {
    let (x, w): (Vec<f64>, Vec<f64>) = match n_points {
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        4 => (
            vec![
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            vec![
                0.347_854_845_137_453_9,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_9,
            ],
        ),
        n => return Err(Error::InvalidArgument(format!("no {n}-point edge rule"))),
    };
    Ok(EdgeRule {
        points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        weights: w.iter().map(|w| 0.5 * w).collect(),
    })
}

/// Affine geometry of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct Element {
    pub points: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates (constant on the element).
    pub grad_lambda: [[f64; 2]; 3],
}

impl Element {
    pub fn new(points: [Point; 3]) -> Self {
        let [p0, p1, p2] = points;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        // grad l_i = rot(p_{i+2} - p_{i+1}) / det, rotated by -90 degrees
        let grad = |a: Point, b: Point| [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
        Element {
            points,
            area: 0.5 * det,
            grad_lambda: [grad(p1, p2), grad(p2, p0), grad(p0, p1)],
        }
    }

    pub fn of(mesh: &Mesh, t: usize) -> Self {
        Element::new(mesh.triangle_points(t))
    }

    /// Barycentric coordinates of the reference point `(xi, eta)`.
    pub fn barycentric(xi: [f64; 2]) -> [f64; 3] {
        [1.0 - xi[0] - xi[1], xi[0], xi[1]]
    }

    pub fn map(&self, xi: [f64; 2]) -> Point {
        let [p0, p1, p2] = self.points;
        [
            p0[0] + xi[0] * (p1[0] - p0[0]) + xi[1] * (p2[0] - p0[0]),
            p0[1] + xi[0] * (p1[1] - p0[1]) + xi[1] * (p2[1] - p0[1]),
        ]
    }

    /// Physical quadrature points and weights of a reference rule.
    pub fn quadrature<'a>(&'a self, rule: &'a QuadRule) -> impl Iterator<Item = ([f64; 3], Point, f64)> + 'a {
        let scale = 2.0 * self.area;
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(move |(&xi, &w)| (Element::barycentric(xi), self.map(xi), w * scale))
    }
}

/// Values and gradients of the four local test functions
/// `(l0, l1, l2, bubble)` at a point with barycentric coordinates `lambda`.
#[derive(Clone, Copy, Debug)]
pub struct TestValues {
    pub values: [f64; 4],
    pub grads: [[f64; 2]; 4],
}

/// The local test space (three affine functions plus the cubic bubble).
pub struct TestBasis;

impl TestBasis {
    pub const DIM: usize = 4;

    pub fn eval(element: &Element, lambda: [f64; 3]) -> TestValues {
        let g = element.grad_lambda;
        let [l0, l1, l2] = lambda;
        let b = 27.0 * l0 * l1 * l2;
        let gb = [
            27.0 * (l1 * l2 * g[0][0] + l0 * l2 * g[1][0] + l0 * l1 * g[2][0]),
            27.0 * (l1 * l2 * g[0][1] + l0 * l2 * g[1][1] + l0 * l1 * g[2][1]),
        ];
        TestValues {
            values: [l0, l1, l2, b],
            grads: [g[0], g[1], g[2], gb],
        }
    }
}

/// Trial function values on one element at a point.
#[derive(Clone, Copy, Debug)]
pub struct TrialValues {
    pub hats: [f64; 3],
    pub hat_grads: [[f64; 2]; 3],
    /// Facet constants with the orientation sign folded in.
    pub facet: [f64; 3],
    /// The two element constants (q and r blocks).
    pub element: [f64; 2],
}

pub fn eval_trial(mesh: &Mesh, t: usize, xi: [f64; 2]) -> TrialValues {
    let el = Element::of(mesh, t);
    TrialValues {
        hats: Element::barycentric(xi),
        hat_grads: el.grad_lambda,
        facet: mesh.facet_signs(t),
        element: [1.0, 1.0],
    }
}

/// Block layout of the discrete trial space.
///
/// Free unknowns are ordered `[u (free vertices) | sigma (all facets) | q | r]`.
#[derive(Clone, Debug)]
pub struct TrialDofMap {
    vertex_dof: Vec<Option<usize>>,
    n_free_u: usize,
    n_facets: usize,
    n_triangles: usize,
}

impl TrialDofMap {
    /// Vertices for which `is_dirichlet` returns true are excluded from the
    /// free `u` block.
    pub fn new(mesh: &Mesh, is_dirichlet: impl Fn(usize) -> bool) -> Self {
        let mut next = 0;
        let vertex_dof = (0..mesh.n_vertices())
            .map(|v| {
                if is_dirichlet(v) {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        TrialDofMap {
            vertex_dof,
            n_free_u: next,
            n_facets: mesh.n_facets(),
            n_triangles: mesh.n_triangles(),
        }
    }

    /// Dirichlet data on every boundary vertex.
    pub fn with_boundary_dirichlet(mesh: &Mesh) -> Self {
        Self::new(mesh, |v| mesh.is_boundary_vertex(v))
    }

    pub fn n_free_u(&self) -> usize {
        self.n_free_u
    }

    pub fn n_sigma(&self) -> usize {
        self.n_facets
    }

    pub fn n_q(&self) -> usize {
        self.n_triangles
    }

    pub fn n_r(&self) -> usize {
        self.n_triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_dof.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_free_u + self.n_facets + 2 * self.n_triangles
    }

    pub fn sigma_offset(&self) -> usize {
        self.n_free_u
    }

    pub fn q_offset(&self) -> usize {
        self.n_free_u + self.n_facets
    }

    pub fn r_offset(&self) -> usize {
        self.n_free_u + self.n_facets + self.n_triangles
    }

    pub fn vertex_dof(&self, v: usize) -> Option<usize> {
        self.vertex_dof[v]
    }

    pub fn is_dirichlet(&self, v: usize) -> bool {
        self.vertex_dof[v].is_none()
    }

    pub fn sigma_dof(&self, f: usize) -> usize {
        self.n_free_u + f
    }

    pub fn q_dof(&self, t: usize) -> usize {
        self.q_offset() + t
    }

    pub fn r_dof(&self, t: usize) -> usize {
        self.r_offset() + t
    }

    /// Global indices of the 8 local trial functions of triangle `t` in the
    /// order `(u0, u1, u2, s0, s1, s2, q, r)`; `None` marks a Dirichlet vertex.
    pub fn local_dofs(&self, mesh: &Mesh, t: usize) -> [Option<usize>; 8] {
        let tri = mesh.triangle(t);
        let fs = mesh.triangle_facets(t);
        [
            self.vertex_dof[tri[0]],
            self.vertex_dof[tri[1]],
            self.vertex_dof[tri[2]],
            Some(self.sigma_dof(fs[0])),
            Some(self.sigma_dof(fs[1])),
            Some(self.sigma_dof(fs[2])),
            Some(self.q_dof(t)),
            Some(self.r_dof(t)),
        ]
    }
}
