//! Sparse symmetric systems and their direct solution.
//!
//! Matrices are kept in compressed-column form with both triangles stored.
//! Factorization is a sparse LU with partial pivoting (faer), so symmetric
//! indefinite matrices are handled as well.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Mat;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SparseSymmetric {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    /// Both triangles must be supplied.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite entry at ({i}, {j})")));
            }
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            rows[next[j]] = i;
            vals[next[j]] = v;
            next[j] += 1;
        }

        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(triplets.len() / 2);
        let mut values = Vec::with_capacity(triplets.len() / 2);
        col_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for j in 0..n {
            let (lo, hi) = (counts[j], counts[j + 1]);
            order.clear();
            order.extend(lo..hi);
            // stable sort keeps the summation order deterministic
            order.sort_by_key(|&k| rows[k]);
            let mut last = usize::MAX;
            for &k in &order {
                if rows[k] == last {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    row_idx.push(rows[k]);
                    values.push(vals[k]);
                    last = rows[k];
                }
            }
            col_ptr.push(row_idx.len());
        }
        let a = SparseSymmetric {
            n,
            col_ptr,
            row_idx,
            values,
        };
        a.check_structure()?;
        Ok(a)
    }

    /// Dense row-major input, for tests and small systems.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidArgument("matrix is not square".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 || i == j {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    fn check_structure(&self) -> Result<()> {
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                if self.position(j, i).is_none() {
                    return Err(Error::InvalidArgument(format!(
                        "structurally unsymmetric: ({i}, {j}) stored but ({j}, {i}) missing"
                    )));
                }
            }
        }
        Ok(())
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n {
            return None;
        }
        let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
        self.row_idx[lo..hi].binary_search(&i).ok().map(|k| lo + k)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                m = m.max((self.values[k] - self.get(j, self.row_idx[k])).abs());
            }
        }
        m
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * xj;
            }
        }
        y
    }

    /// Returns `self + other` where `other` is given as triplets whose
    /// positions lie inside the sparsity pattern of `self`.
    pub fn add_in_pattern(&self, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut out = self.clone();
        for &(i, j, v) in triplets {
            let k = out
                .position(i, j)
                .ok_or_else(|| Error::InvalidArgument(format!("entry ({i}, {j}) outside the sparsity pattern")))?;
            out.values[k] += v;
        }
        Ok(out)
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        SparseColMatRef::new(self.symbolic(), &self.values)
    }

    /// Symbolic analysis, reusable for every matrix with the same pattern.
    pub fn analyze(&self) -> Result<Analysis> {
        let symbolic = SymbolicLu::try_new(self.symbolic())
            .map_err(|e| Error::Singular(format!("symbolic analysis failed: {e:?}")))?;
        Ok(Analysis {
            n: self.n,
            nnz: self.nnz(),
            symbolic,
        })
    }

    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        self.matvec(x)
            .iter()
            .zip(b)
            .map(|(ax, b)| (ax - b) * (ax - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Symbolic LU analysis of a sparsity pattern.
#[derive(Clone)]
pub struct Analysis {
    n: usize,
    nnz: usize,
    symbolic: SymbolicLu<usize>,
}

pub struct Factorization {
    lu: Lu<usize, f64>,
    n: usize,
}

impl Analysis {
    pub fn factor(&self, a: &SparseSymmetric) -> Result<Factorization> {
        if a.n != self.n || a.nnz() != self.nnz {
            return Err(Error::InvalidArgument("matrix pattern differs from the analysed one".into()));
        }
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), a.as_faer()).map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                Error::Singular(format!("no admissible pivot in column {index}"))
            }
            other => Error::Singular(format!("{other:?}")),
        })?;
        Ok(Factorization { lu, n: a.n })
    }
}

impl Factorization {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                self.n
            )));
        }
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let x: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular(format!(
                "zero pivot during elimination; first non-finite solution entry at index {i}"
            )));
        }
        Ok(x)
    }
}

/// Factors `a` and solves `a x = b`, checking the backward error
/// `|Ax - b| <= 1e-10 (|A|_max |x| + |b|)`.
pub fn factor_solve(a: &SparseSymmetric, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            a.dim()
        )));
    }
    let x = a.analyze()?.factor(a)?.solve(b)?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let res = a.residual_norm(&x, b);
    let bound = 1e-10 * (a.max_abs() * norm(&x) + norm(b));
    if res > bound {
        return Err(Error::Singular(format!(
            "residual {res:e} exceeds {bound:e}; matrix is numerically singular"
        )));
    }
    Ok(x)
}
