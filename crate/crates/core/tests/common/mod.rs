//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the library's quadrature, basis or solver code: rules
//! are built from Golub-Welsch Gauss-Legendre nodes and a collapsed
//! (Duffy) map, linear systems are solved by plain Gaussian elimination.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use semidpg::mesh::{BisectionRule, MarkSet, Mesh, Point};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            ((eig.eigenvalues[i] + 1.0) / 2.0, v0 * v0)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Collapsed tensor rule on the reference triangle `{x, y >= 0, x + y <= 1}`
/// as `(x, y, weight)`; exact for polynomials of degree `<= 2n - 2`.
pub fn duffy_rule(n: usize) -> Vec<(f64, f64, f64)> {
    let g = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for &(a, wa) in &g {
        for &(b, wb) in &g {
            out.push((a, b * (1.0 - a), wa * wb * (1.0 - a)));
        }
    }
    out
}

/// Integral of `g` over the physical triangle `p`.
pub fn integrate(p: [Point; 3], n: usize, g: impl Fn(Point) -> f64) -> f64 {
    let area2 = ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
    duffy_rule(n)
        .into_iter()
        .map(|(x, y, w)| {
            let q = [
                p[0][0] + x * (p[1][0] - p[0][0]) + y * (p[2][0] - p[0][0]),
                p[0][1] + x * (p[1][1] - p[0][1]) + y * (p[2][1] - p[0][1]),
            ];
            w * area2 * g(q)
        })
        .sum()
}

/// Integral of `g` along the segment `a -> b`.
pub fn integrate_segment(a: Point, b: Point, n: usize, g: impl Fn(Point) -> f64) -> f64 {
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    gauss_legendre(n)
        .into_iter()
        .map(|(s, w)| w * len * g([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]))
        .sum()
}

/// Affine barycentric coordinates of a triangle, from Cramer's rule.
pub struct Bary {
    /// `lambda_i(x) = c[i][0] + c[i][1] (x - o_x) + c[i][2] (y - o_y)`.
    c: [[f64; 3]; 3],
    o: Point,
}

impl Bary {
    pub fn new(p: [Point; 3]) -> Self {
        let o = p[0];
        let p = p.map(|q| [q[0] - o[0], q[1] - o[1]]);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let c = std::array::from_fn(|i| {
            let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            [
                (a[0] * b[1] - b[0] * a[1]) / det,
                (a[1] - b[1]) / det,
                (b[0] - a[0]) / det,
            ]
        });
        Bary { c, o }
    }

    pub fn value(&self, i: usize, x: Point) -> f64 {
        self.c[i][0] + self.c[i][1] * (x[0] - self.o[0]) + self.c[i][2] * (x[1] - self.o[1])
    }

    pub fn grad(&self, i: usize) -> [f64; 2] {
        [self.c[i][1], self.c[i][2]]
    }

    /// Test function `i` (hats, then `27 l0 l1 l2`) and its gradient.
    pub fn test(&self, i: usize, x: Point) -> (f64, [f64; 2]) {
        if i < 3 {
            return (self.value(i, x), self.grad(i));
        }
        let l = [self.value(0, x), self.value(1, x), self.value(2, x)];
        let g = [self.grad(0), self.grad(1), self.grad(2)];
        let v = 27.0 * l[0] * l[1] * l[2];
        let d = |k: usize| 27.0 * (l[1] * l[2] * g[0][k] + l[0] * l[2] * g[1][k] + l[0] * l[1] * g[2][k]);
        (v, [d(0), d(1)])
    }
}

pub fn oracle_gram(p: [Point; 3]) -> DMatrix<f64> {
    let b = Bary::new(p);
    DMatrix::from_fn(4, 4, |i, j| {
        integrate(p, 8, |x| {
            let (vi, gi) = b.test(i, x);
            let (vj, gj) = b.test(j, x);
            vi * vj + gi[0] * gj[0] + gi[1] * gj[1]
        })
    })
}

/// `B_T` with identity diffusion; `signs[k]` orients facet `k` (opposite vertex `k`).
pub fn oracle_b(p: [Point; 3], signs: [f64; 3], beta: [f64; 2]) -> DMatrix<f64> {
    let b = Bary::new(p);
    let mut m = DMatrix::zeros(4, 8);
    for i in 0..4 {
        for j in 0..3 {
            let gu = b.grad(j);
            m[(i, j)] = integrate(p, 8, |x| {
                let g = b.test(i, x).1;
                gu[0] * g[0] + gu[1] * g[1]
            });
        }
        for k in 0..3 {
            let (a, c) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            m[(i, 3 + k)] = -signs[k] * integrate_segment(a, c, 6, |x| b.test(i, x).0);
        }
        m[(i, 6)] = integrate(p, 8, |x| {
            let g = b.test(i, x).1;
            beta[0] * g[0] + beta[1] * g[1]
        });
        m[(i, 7)] = integrate(p, 8, |x| b.test(i, x).0);
    }
    m
}

pub fn oracle_load(p: [Point; 3], f: impl Fn(Point) -> f64) -> Vec<f64> {
    let b = Bary::new(p);
    (0..4).map(|i| integrate(p, 8, |x| f(x) * b.test(i, x).0)).collect()
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(rhs).map(|(row, &r)| {
        let mut row = row.clone();
        row.push(r);
        row
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// `l^T G^{-1} l` by elimination on a given Gram matrix.
pub fn oracle_dual_sq(g: &DMatrix<f64>, l: &[f64]) -> f64 {
    let y = dense_solve(&to_rows(g), l);
    l.iter().zip(&y).map(|(a, b)| a * b).sum()
}

/// `l^T G^{-1} l` for a nodal functional `l` on triangle `p`, computed in the
/// basis `(1, l0, l1, bubble)` where the Gram matrix is well conditioned.
pub fn oracle_dual_sq_at(p: [Point; 3], l: &[f64]) -> f64 {
    let b = Bary::new(p);
    let basis = |i: usize, x: Point| match i {
        0 => (1.0, [0.0, 0.0]),
        1 => b.test(0, x),
        2 => b.test(1, x),
        _ => b.test(3, x),
    };
    let g: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            (0..4)
                .map(|j| {
                    integrate(p, 8, |x| {
                        let ((vi, gi), (vj, gj)) = (basis(i, x), basis(j, x));
                        vi * vj + gi[0] * gj[0] + gi[1] * gj[1]
                    })
                })
                .collect()
        })
        .collect();
    let lh = [l[0] + l[1] + l[2], l[0], l[1], l[3]];
    let y = dense_solve(&g, &lh);
    lh.iter().zip(&y).map(|(a, b)| a * b).sum()
}

/// Random counter-clockwise triangle with minimum angle above ~10 degrees
/// and size about `10^e`, `e` uniform in `exponents`.
pub fn random_triangle_sized(rng: &mut StdRng, exponents: std::ops::Range<f64>) -> [Point; 3] {
    loop {
        let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let s = 10f64.powf(rng.random_range(exponents.clone()));
        let mut p: [Point; 3] =
            std::array::from_fn(|_| [c[0] + s * rng.random_range(-1.0..1.0), c[1] + s * rng.random_range(-1.0..1.0)]);
        if min_angle(p) < 0.18 {
            continue;
        }
        if signed_area(p) < 0.0 {
            p.swap(1, 2);
        }
        return p;
    }
}

pub fn random_triangle(rng: &mut StdRng) -> [Point; 3] {
    random_triangle_sized(rng, -1.0..0.5)
}

pub fn signed_area(p: [Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

pub fn min_angle(p: [Point; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
            cos.clamp(-1.0, 1.0).acos()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Single-element mesh that keeps the given vertex order.
pub fn single_element(p: [Point; 3]) -> Mesh {
    Mesh::with_refinement_edges(p.to_vec(), vec![[0, 1, 2]]).unwrap()
}

pub fn uniformly_refined(mut mesh: Mesh, times: usize) -> Mesh {
    for _ in 0..times {
        mesh = mesh.refine(&MarkSet::all(&mesh), BisectionRule::AllEdges).unwrap().mesh;
    }
    mesh
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sixth-order central differences of `g` along axis `k`: first and second derivative.
pub fn fd_derivatives(g: &dyn Fn(Point) -> f64, x: Point, k: usize, h: f64) -> (f64, f64) {
    let at = |s: f64| {
        let mut y = x;
        y[k] += s * h;
        g(y)
    };
    let (m3, m2, m1, z, p1, p2, p3) = (at(-3.0), at(-2.0), at(-1.0), at(0.0), at(1.0), at(2.0), at(3.0));
    let d1 = (-m3 + 9.0 * m2 - 45.0 * m1 + 45.0 * p1 - 9.0 * p2 + p3) / (60.0 * h);
    let d2 = (2.0 * m3 - 27.0 * m2 + 270.0 * m1 - 490.0 * z + 270.0 * p1 - 27.0 * p2 + 2.0 * p3) / (180.0 * h * h);
    (d1, d2)
}

/// `-div(grad u + rho(u) beta) + gamma(u)` by finite differences of `u` alone,
/// together with the sum of the magnitudes of its three terms.
pub fn fd_operator(
    u: &dyn Fn(Point) -> f64,
    rho: &dyn Fn(f64) -> f64,
    gamma: &dyn Fn(f64) -> f64,
    beta: [f64; 2],
    x: Point,
    h: f64,
) -> (f64, f64) {
    let (_, uxx) = fd_derivatives(u, x, 0, h);
    let (_, uyy) = fd_derivatives(u, x, 1, h);
    let rho_u = |y: Point| rho(u(y));
    let (rx, _) = fd_derivatives(&rho_u, x, 0, h);
    let (ry, _) = fd_derivatives(&rho_u, x, 1, h);
    let lap = -(uxx + uyy);
    let conv = -(beta[0] * rx + beta[1] * ry);
    let react = gamma(u(x));
    (lap + conv + react, lap.abs() + conv.abs() + react.abs())
}

/// Largest relative mismatch `|(F(x+he) - F(x-he))/2h - J(x)e| / |J(x)e|`
/// over `states` random states and unit directions.
pub fn jacobian_fd_mismatch(mesh: &Mesh, problem: &semidpg::semilinear::ProblemSpec, states: usize, seed: u64) -> f64 {
    use semidpg::dpg::assemble_linear;
    use semidpg::fespace::TrialDofMap;
    use semidpg::semilinear::{el_jacobian, el_residual, initial_guess};

    let dofmap = TrialDofMap::with_boundary_dirichlet(mesh);
    let linear = assemble_linear(mesh, &dofmap, problem).unwrap();
    let mut rng = rng(seed);
    let n = dofmap.n_dofs();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let mut x = initial_guess(mesh, &dofmap, problem);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        x.add_free(&dofmap, &v, 1.0);
        let mut e: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ne = norm(&e);
        e.iter_mut().for_each(|v| *v /= ne);

        let j = el_jacobian(mesh, &dofmap, &linear, &x, problem).unwrap();
        let je = j.matvec(&e);
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.add_free(&dofmap, &e, h);
        xm.add_free(&dofmap, &e, -h);
        let fp = el_residual(mesh, &dofmap, &linear, &xp, problem).unwrap();
        let fm = el_residual(mesh, &dofmap, &linear, &xm, problem).unwrap();
        let diff: Vec<f64> = (0..n).map(|i| (fp[i] - fm[i]) / (2.0 * h) - je[i]).collect();
        worst = worst.max(norm(&diff) / norm(&je));
    }
    worst
}
