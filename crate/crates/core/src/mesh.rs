//! Conforming triangulations with newest-vertex bisection.
//!
//! Triangles are stored counter-clockwise as `[v0, v1, v2]` where `v0` is the
//! newest vertex; the refinement edge is `(v1, v2)`. Local facet `k` is the
//! edge opposite local vertex `k`, traversed from `v[k+1]` to `v[k+2]`, so
//! local facet 0 is always the refinement edge.
//!
//! Facets are stored with canonical orientation from the lower to the higher
//! global vertex index. The canonical unit normal of a facet is its direction
//! vector rotated by -90 degrees (clockwise), `(dy, -dx) / |d|`. A triangle's
//! sign for one of its facets is `+1` exactly when this canonical normal is the
//! outward normal of the triangle.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    facets: Vec<[usize; 2]>,
    tri_facets: Vec<[usize; 3]>,
    tri_signs: Vec<[f64; 3]>,
    facet_tris: Vec<[Option<usize>; 2]>,
    boundary_vertex: Vec<bool>,
}

/// Set of triangle indices selected for refinement (sorted, no duplicates).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkSet {
    elements: Vec<usize>,
}

impl MarkSet {
    pub fn new<I: IntoIterator<Item = usize>>(elements: I) -> Self {
        let mut elements: Vec<usize> = elements.into_iter().collect();
        elements.sort_unstable();
        elements.dedup();
        MarkSet { elements }
    }

    pub fn all(mesh: &Mesh) -> Self {
        MarkSet {
            elements: (0..mesh.n_triangles()).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.elements.binary_search(&t).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.elements.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.elements
    }
}

/// How a marked triangle is refined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BisectionRule {
    /// One bisection of the refinement edge (two children).
    RefinementEdge,
    /// All three edges are marked, i.e. three bisections (four children).
    AllEdges,
}

/// Output of a refinement: the new mesh and the child -> parent map.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub mesh: Mesh,
    pub parents: Vec<usize>,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

impl Mesh {
    /// Builds a mesh from arbitrary triangles. Clockwise triangles are
    /// reoriented and the refinement edge of every triangle is seeded as its
    /// longest edge (ties go to the smaller global facet index).
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        let mut oriented = triangles;
        for (t, tri) in oriented.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= vertices.len() {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references vertex {v} out of range"
                    )));
                }
            }
            if signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) < 0.0 {
                tri.swap(1, 2);
            }
        }
        let raw = Mesh::with_refinement_edges(vertices, oriented)?;

        let mut seeded = raw.triangles.clone();
        for (t, tri) in seeded.iter_mut().enumerate() {
            let lengths: [f64; 3] = std::array::from_fn(|k| raw.facet_length(raw.tri_facets[t][k]));
            let lmax = lengths.iter().cloned().fold(0.0, f64::max);
            let k = (0..3)
                .filter(|&k| lengths[k] >= lmax * (1.0 - 1e-12))
                .min_by_key(|&k| raw.tri_facets[t][k])
                .unwrap();
            let old = *tri;
            *tri = [old[k], old[(k + 1) % 3], old[(k + 2) % 3]];
        }
        Mesh::with_refinement_edges(raw.vertices, seeded)
    }

    /// Builds a mesh trusting the given vertex order: every triangle must be
    /// counter-clockwise with its newest vertex first.
    pub fn with_refinement_edges(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        let nv = vertices.len();
        let mut facet_index: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut facets = Vec::new();
        let mut facet_tris: Vec<[Option<usize>; 2]> = Vec::new();
        let mut tri_facets = Vec::with_capacity(triangles.len());
        let mut tri_signs = Vec::with_capacity(triangles.len());

        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a vertex out of range")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::DegenerateElement {
                    element: t,
                    reason: format!("signed area {area:e} is not positive"),
                });
            }
            let mut fs = [0usize; 3];
            let mut ss = [0.0f64; 3];
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let f = *facet_index.entry(key).or_insert_with(|| {
                    facets.push([key.0, key.1]);
                    facet_tris.push([None, None]);
                    facets.len() - 1
                });
                let slot = &mut facet_tris[f];
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else if slot[1].is_none() {
                    slot[1] = Some(t);
                } else {
                    return Err(Error::InvalidMesh(format!(
                        "facet ({}, {}) is shared by more than two triangles",
                        key.0, key.1
                    )));
                }
                fs[k] = f;
                ss[k] = if a < b { 1.0 } else { -1.0 };
            }
            tri_facets.push(fs);
            tri_signs.push(ss);
        }

        // Two counter-clockwise neighbours traverse their common edge in
        // opposite directions.
        for (f, slot) in facet_tris.iter().enumerate() {
            if let [Some(t0), Some(t1)] = *slot {
                let s0 = Self::sign_of(&tri_facets, &tri_signs, t0, f);
                let s1 = Self::sign_of(&tri_facets, &tri_signs, t1, f);
                if s0 * s1 > 0.0 {
                    return Err(Error::InvalidMesh(format!(
                        "triangles {t0} and {t1} overlap across facet {f}"
                    )));
                }
            }
        }

        let mut boundary_vertex = vec![false; nv];
        for (f, slot) in facet_tris.iter().enumerate() {
            if slot[1].is_none() {
                boundary_vertex[facets[f][0]] = true;
                boundary_vertex[facets[f][1]] = true;
            }
        }

        Ok(Mesh {
            vertices,
            triangles,
            facets,
            tri_facets,
            tri_signs,
            facet_tris,
            boundary_vertex,
        })
    }

    fn sign_of(tri_facets: &[[usize; 3]], tri_signs: &[[f64; 3]], t: usize, f: usize) -> f64 {
        let k = tri_facets[t].iter().position(|&g| g == f).unwrap();
        tri_signs[t][k]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn facets(&self) -> &[[usize; 2]] {
        &self.facets
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    /// Global facet indices of the local facets of triangle `t`.
    pub fn triangle_facets(&self, t: usize) -> [usize; 3] {
        self.tri_facets[t]
    }

    /// Orientation sign of local facet `k` of triangle `t`.
    pub fn facet_sign(&self, t: usize, k: usize) -> f64 {
        self.tri_signs[t][k]
    }

    pub fn facet_signs(&self, t: usize) -> [f64; 3] {
        self.tri_signs[t]
    }

    pub fn refinement_edge(&self, t: usize) -> usize {
        self.tri_facets[t][0]
    }

    /// Triangles incident to facet `f`; the second entry is `None` on the boundary.
    pub fn facet_triangles(&self, f: usize) -> [Option<usize>; 2] {
        self.facet_tris[f]
    }

    pub fn is_boundary_facet(&self, f: usize) -> bool {
        self.facet_tris[f][1].is_none()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn n_boundary_facets(&self) -> usize {
        self.facet_tris.iter().filter(|s| s[1].is_none()).count()
    }

    pub fn n_interior_facets(&self) -> usize {
        self.n_facets() - self.n_boundary_facets()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facets[f];
        dist(self.vertices[a], self.vertices[b])
    }

    /// Canonical unit normal of facet `f`.
    pub fn facet_normal(&self, f: usize) -> [f64; 2] {
        let [a, b] = self.facets[f];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = dx.hypot(dy);
        [dy / len, -dx / len]
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Smallest interior angle (radians) over all triangles.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let p = self.triangle_points(t);
            for k in 0..3 {
                let o = p[k];
                let a = p[(k + 1) % 3];
                let b = p[(k + 2) % 3];
                let u = [a[0] - o[0], a[1] - o[1]];
                let v = [b[0] - o[0], b[1] - o[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                min = min.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        min
    }

    pub fn boundary_length(&self) -> f64 {
        (0..self.n_facets())
            .filter(|&f| self.is_boundary_facet(f))
            .map(|f| self.facet_length(f))
            .sum()
    }

    /// Brute-force search for vertices lying in the relative interior of a
    /// facet. Quadratic cost; meant for tests on small meshes.
    pub fn hanging_vertices(&self) -> Vec<usize> {
        let mut hanging = Vec::new();
        for (v, &p) in self.vertices.iter().enumerate() {
            for &[a, b] in &self.facets {
                if a == v || b == v {
                    continue;
                }
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                let len = dist(pa, pb);
                let cross = (pb[0] - pa[0]) * (p[1] - pa[1]) - (pb[1] - pa[1]) * (p[0] - pa[0]);
                if cross.abs() > 1e-12 * len * len {
                    continue;
                }
                let s = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1])) / (len * len);
                if s > 1e-12 && s < 1.0 - 1e-12 {
                    hanging.push(v);
                    break;
                }
            }
        }
        hanging
    }

    /// Newest-vertex bisection: every marked triangle is bisected once along
    /// its refinement edge, plus closure bisections to keep the mesh conforming.
    pub fn bisect(&self, marked: &MarkSet) -> Result<Refinement> {
        self.refine(marked, BisectionRule::RefinementEdge)
    }

    pub fn refine(&self, marked: &MarkSet, rule: BisectionRule) -> Result<Refinement> {
        if let Some(&bad) = marked.as_slice().iter().find(|&&t| t >= self.n_triangles()) {
            return Err(Error::InvalidArgument(format!(
                "marked triangle {bad} out of range ({} triangles)",
                self.n_triangles()
            )));
        }
        if marked.is_empty() {
            log::warn!("empty mark set, mesh left unchanged");
            return Ok(Refinement {
                mesh: self.clone(),
                parents: (0..self.n_triangles()).collect(),
            });
        }

        let mut edge_marked = vec![false; self.n_facets()];
        for t in marked.iter() {
            match rule {
                BisectionRule::RefinementEdge => edge_marked[self.tri_facets[t][0]] = true,
                BisectionRule::AllEdges => {
                    for f in self.tri_facets[t] {
                        edge_marked[f] = true;
                    }
                }
            }
        }

        // Closure: a triangle with any marked edge must have its refinement edge marked.
        loop {
            let mut changed = false;
            for fs in &self.tri_facets {
                if !edge_marked[fs[0]] && (edge_marked[fs[1]] || edge_marked[fs[2]]) {
                    edge_marked[fs[0]] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint = vec![usize::MAX; self.n_facets()];
        for (f, &m) in edge_marked.iter().enumerate() {
            if m {
                let [a, b] = self.facets[f];
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                midpoint[f] = vertices.len();
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }

        let mut triangles = Vec::with_capacity(self.n_triangles() * 2);
        let mut parents = Vec::with_capacity(self.n_triangles() * 2);
        for (t, &[v0, v1, v2]) in self.triangles.iter().enumerate() {
            let fs = self.tri_facets[t];
            if !edge_marked[fs[0]] {
                triangles.push([v0, v1, v2]);
                parents.push(t);
                continue;
            }
            let m = midpoint[fs[0]];
            // Children (m; v0, v1) and (m; v2, v0) have refinement edges equal
            // to the parent's local facets 2 and 1.
            let children = [([m, v0, v1], fs[2]), ([m, v2, v0], fs[1])];
            for (child, f) in children {
                if edge_marked[f] {
                    let mm = midpoint[f];
                    let [a, b, c] = child;
                    triangles.push([mm, a, b]);
                    triangles.push([mm, c, a]);
                    parents.push(t);
                    parents.push(t);
                } else {
                    triangles.push(child);
                    parents.push(t);
                }
            }
        }

        Ok(Refinement {
            mesh: Mesh::with_refinement_edges(vertices, triangles)?,
            parents,
        })
    }

    /// Writes the plain-text dump: a `vertices <n> triangles <m>` header, one
    /// `x y` line per vertex and one `v0 v1 v2` line per triangle.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertices {} triangles {}", self.n_vertices(), self.n_triangles())?;
        for p in &self.vertices {
            writeln!(w, "{:.16e} {:.16e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Reads a dump written by [`Mesh::write_dump`]; triangle vertex order is
    /// kept, so refinement edges survive the round trip.
    pub fn read_dump<R: BufRead>(r: R) -> Result<Mesh> {
        let bad = |msg: &str| Error::InvalidMesh(format!("mesh dump: {msg}"));
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("missing header"))??;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 4 || tokens[0] != "vertices" || tokens[2] != "triangles" {
            return Err(bad("malformed header"));
        }
        let nv: usize = tokens[1].parse().map_err(|_| bad("vertex count"))?;
        let nt: usize = tokens[3].parse().map_err(|_| bad("triangle count"))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| bad("truncated vertex list"))??;
            let xs: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("vertex coordinate"))?;
            if xs.len() != 2 {
                return Err(bad("vertex line needs two coordinates"));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let line = lines.next().ok_or_else(|| bad("truncated triangle list"))??;
            let vs: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("triangle index"))?;
            if vs.len() != 3 {
                return Err(bad("triangle line needs three indices"));
            }
            triangles.push([vs[0], vs[1], vs[2]]);
        }
        Mesh::with_refinement_edges(vertices, triangles)
    }
}

fn grid_mesh(n: usize, lower: [i64; 2], upper: [i64; 2], keep_cell: impl Fn(i64, i64) -> bool) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("subdivision count must be at least 1".into()));
    }
    let n_i = n as i64;
    // Lattice coordinates are integers in units of 1/n.
    let (i0, j0) = (lower[0] * n_i, lower[1] * n_i);
    let (i1, j1) = (upper[0] * n_i, upper[1] * n_i);
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut vid = |i: i64, j: i64, vertices: &mut Vec<Point>| -> usize {
        *index.entry((i, j)).or_insert_with(|| {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            vertices.len() - 1
        })
    };
    for j in j0..j1 {
        for i in i0..i1 {
            if !keep_cell(i, j) {
                continue;
            }
            let p00 = vid(i, j, &mut vertices);
            let p10 = vid(i + 1, j, &mut vertices);
            let p11 = vid(i + 1, j + 1, &mut vertices);
            let p01 = vid(i, j + 1, &mut vertices);
            triangles.push([p00, p10, p11]);
            triangles.push([p00, p11, p01]);
        }
    }
    Mesh::from_triangles(vertices, triangles)
}

/// Uniform mesh of (0,1)^2 with `n x n` cells, each split along its
/// lower-left to upper-right diagonal (the refinement edge).
pub fn build_unit_square(n: usize) -> Result<Mesh> {
    grid_mesh(n, [0, 0], [1, 1], |_, _| true)
}

/// Uniform mesh of the L-shaped domain (-1,1)^2 minus [0,1)x(-1,0], made of
/// three unit squares with `n x n` cells each.
pub fn build_lshape(n: usize) -> Result<Mesh> {
    grid_mesh(n, [-1, -1], [1, 1], |i, j| !(i >= 0 && j < 0))
}
