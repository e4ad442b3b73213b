//! Compressed sparse row matrices, direct LU factorization with reuse, and the
//! mean-constrained saddle-point solver used by every step of the scheme.
//!
//! Factorization is delegated to faer's sparse LU with partial pivoting. The
//! CSR arrays of `A` are handed over as the CSC arrays of `A^T`, and solves use
//! the transposed triangular sweeps, so no copy or conversion is needed.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("sparse factorization failed: {0}")]
    Backend(String),
}

/// Row offsets and sorted, unique column indices of a CSR matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrPattern {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl CsrPattern {
    /// Builds a pattern from per-row column lists (sorted and deduplicated here).
    pub fn from_rows(ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        Self { nrows: rows.len(), ncols, row_ptr, col_idx }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[s..e].binary_search(&j).ok().map(|k| s + k)
    }
}

/// CSR matrix whose pattern may be shared between matrices assembled on the
/// same mesh.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pattern: Arc<CsrPattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn from_parts(pattern: Arc<CsrPattern>, values: Vec<f64>) -> Result<Self, LinalgError> {
        if values.len() != pattern.nnz() {
            return Err(LinalgError::Dimension(format!("{} values for {} entries", values.len(), pattern.nnz())));
        }
        Ok(Self { pattern, values })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed
    /// and explicit zeros are kept as structural entries.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nrows];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            rows[i].push(j);
        }
        let pattern = Arc::new(CsrPattern::from_rows(ncols, rows));
        let mut m = Self::zeros(pattern);
        for &(i, j, v) in triplets {
            let k = m.pattern.find(i, j).expect("entry is in the pattern");
            m.values[k] += v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &triplets)
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(rows.len(), ncols, &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
        (&self.pattern.col_idx[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        (0..self.nrows())
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    /// `A^T x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows());
        let mut y = vec![0.0; self.ncols()];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows() {
            let (cols, vals) = self.row(i);
            triplets.extend(cols.iter().zip(vals).map(|(&j, &v)| (j, i, v)));
        }
        Self::from_triplets(self.ncols(), self.nrows(), &triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `sum_t c_t A_t` over matrices sharing one pattern.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Result<Self, LinalgError> {
        let (_, first) = terms.first().ok_or_else(|| LinalgError::Dimension("empty combination".into()))?;
        let mut out = Self::zeros(first.pattern.clone());
        for (c, m) in terms {
            if !Arc::ptr_eq(&m.pattern, &out.pattern) && *m.pattern != *out.pattern {
                return Err(LinalgError::Dimension("matrices do not share a sparsity pattern".into()));
            }
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    /// Restriction to the given rows and columns, renumbered in list order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols()];
        for (k, &j) in cols.iter().enumerate() {
            col_map[j] = k;
        }
        let mut triplets = Vec::new();
        for (r, &i) in rows.iter().enumerate() {
            let (cs, vs) = self.row(i);
            for (&j, &v) in cs.iter().zip(vs) {
                if col_map[j] != usize::MAX {
                    triplets.push((r, col_map[j], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &triplets)
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Fill-reducing ordering and elimination structure of a sparsity pattern,
/// reusable for every matrix with that pattern.
#[derive(Debug, Clone)]
pub struct SymbolicFactorization {
    pattern: Arc<CsrPattern>,
    symbolic: SymbolicLu<usize>,
}

impl SymbolicFactorization {
    pub fn new(pattern: Arc<CsrPattern>) -> Result<Self, LinalgError> {
        if pattern.nrows != pattern.ncols {
            return Err(LinalgError::Dimension(format!("{}x{} is not square", pattern.nrows, pattern.ncols)));
        }
        let symbolic = SymbolicLu::try_new(transpose_view(&pattern)).map_err(|e| LinalgError::Backend(format!("{e:?}")))?;
        Ok(Self { pattern, symbolic })
    }

    pub fn factorize(&self, a: &SparseMatrix) -> Result<Factorization, LinalgError> {
        if !Arc::ptr_eq(&self.pattern, &a.pattern) && *self.pattern != *a.pattern {
            return Err(LinalgError::Dimension("matrix pattern differs from the symbolic factorization".into()));
        }
        if let Some(k) = a.values.iter().position(|v| !v.is_finite()) {
            let row = self.pattern.row_ptr.partition_point(|&s| s <= k) - 1;
            return Err(LinalgError::Singular { pivot: row });
        }
        let mat = SparseColMatRef::new(transpose_view(&self.pattern), &a.values);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat).map_err(|e| match e {
            LuError::SymbolicSingular { index } => LinalgError::Singular { pivot: index },
            LuError::Generic(err) => LinalgError::Backend(format!("{err:?}")),
        })?;
        let fact = Factorization { matrix: a.clone(), lu };
        fact.check_pivots()?;
        Ok(fact)
    }
}

fn transpose_view(p: &CsrPattern) -> SymbolicSparseColMatRef<'_, usize> {
    SymbolicSparseColMatRef::new_checked(p.ncols, p.nrows, &p.row_ptr, None, &p.col_idx)
}

/// Factorizes a square sparse matrix (symbolic and numeric phases at once).
pub fn factorize(a: &SparseMatrix) -> Result<Factorization, LinalgError> {
    SymbolicFactorization::new(a.pattern.clone())?.factorize(a)
}

/// Numeric LU factors of one matrix; immutable and shareable across threads.
#[derive(Debug)]
pub struct Factorization {
    matrix: SparseMatrix,
    lu: Lu<usize, f64>,
}

/// Residual contract of [`Factorization::solve`]: `|A x - b| <= TOL (1 + |b|)`.
pub const RESIDUAL_TOL: f64 = 1e-10;

const MAX_REFINEMENT_STEPS: usize = 3;

impl Factorization {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn raw_solve(&self, x: &mut [f64]) {
        let n = x.len();
        self.lu.solve_transpose_in_place(MatMut::from_column_major_slice_mut(x, n, 1));
    }

    /// Solves `A x = b`, refining iteratively if the first solve misses the
    /// residual contract.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.dim() {
            return Err(LinalgError::Dimension(format!("rhs of length {} for a {}-system", b.len(), self.dim())));
        }
        let mut x = b.to_vec();
        self.raw_solve(&mut x);
        let limit = RESIDUAL_TOL * (1.0 + norm2(b));
        for step in 0..=MAX_REFINEMENT_STEPS {
            let ax = self.matrix.mul_vec(&x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rn = norm2(&r);
            if rn <= limit {
                return Ok(x);
            }
            if !rn.is_finite() || step == MAX_REFINEMENT_STEPS {
                return Err(LinalgError::Singular { pivot: worst_index(&r) });
            }
            self.raw_solve(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        unreachable!()
    }

    // A zero pivot turns into inf/nan in the triangular solves; a probe solve
    // against a known solution exposes it along with where it bites first.
    fn check_pivots(&self) -> Result<(), LinalgError> {
        let n = self.dim();
        let exact: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
        let b = self.matrix.mul_vec(&exact);
        let mut x = b;
        self.raw_solve(&mut x);
        let err: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
        match err.iter().position(|e| !e.is_finite()) {
            Some(i) => Err(LinalgError::Singular { pivot: i }),
            None if norm2(&err) > 1e-2 * norm2(&exact) => Err(LinalgError::Singular { pivot: worst_index(&err) }),
            None => Ok(()),
        }
    }
}

fn worst_index(r: &[f64]) -> usize {
    let mut best = (0, -1.0);
    for (i, v) in r.iter().enumerate() {
        let a = if v.is_finite() { v.abs() } else { f64::INFINITY };
        if a > best.1 {
            best = (i, a);
        }
    }
    best.0
}

/// Removes the boundary rows and columns of a velocity-block matrix
/// (homogeneous Dirichlet data, so the right-hand side needs no lifting).
pub fn apply_dirichlet(a: &SparseMatrix, interior: &[usize]) -> SparseMatrix {
    a.submatrix(interior, interior)
}

/// Saddle-point system
///
/// ```text
/// [  K   -B^T ] [u]   [f]
/// [ -B    0   ] [p] = [g]
/// ```
///
/// on interior velocity DOFs with the pressure normalized by `a^T p = m`,
/// where `a` holds the cell areas. The columns of `B` over interior DOFs sum
/// to zero, so pressure is fixed only up to a constant and one continuity row
/// is redundant. The factorized matrix drops the row and the pressure unknown
/// of cell 0; solves then shift the pressure to the requested mean. `g` must
/// satisfy `sum(g) = 0`. `K` and `B` are given on the full velocity DOF range
/// and restricted here; the pattern of `K` is fixed at construction.
#[derive(Debug)]
pub struct SaddleSystem {
    n_interior: usize,
    n_pressure: usize,
    areas: Vec<f64>,
    k_pattern: Arc<CsrPattern>,
    k_slots: Vec<usize>,
    template: SparseMatrix,
    symbolic: SymbolicFactorization,
}

const NO_SLOT: usize = usize::MAX;

impl SaddleSystem {
    /// `k_pattern`: pattern of the full velocity block; `divergence`: the full
    /// `n_pressure x n_velocity` matrix `B[c, j] = (1_c, div phi_j)`.
    pub fn new(
        k_pattern: Arc<CsrPattern>,
        divergence: &SparseMatrix,
        areas: &[f64],
        interior: &[usize],
    ) -> Result<Self, LinalgError> {
        let n_vel = k_pattern.nrows;
        let n_pressure = divergence.nrows();
        if divergence.ncols() != n_vel || areas.len() != n_pressure || n_pressure == 0 {
            return Err(LinalgError::Dimension("divergence/area sizes do not match the velocity block".into()));
        }
        let n_interior = interior.len();
        let mut reduced = vec![NO_SLOT; n_vel];
        for (k, &d) in interior.iter().enumerate() {
            reduced[d] = k;
        }
        let dim = n_interior + n_pressure - 1;

        let mut triplets = Vec::new();
        for (r, &i) in interior.iter().enumerate() {
            let (s, e) = (k_pattern.row_ptr[i], k_pattern.row_ptr[i + 1]);
            for &j in &k_pattern.col_idx[s..e] {
                if reduced[j] != NO_SLOT {
                    triplets.push((r, reduced[j], 0.0));
                }
            }
        }
        for c in 1..n_pressure {
            let (cols, vals) = divergence.row(c);
            let q = n_interior + c - 1;
            for (&j, &v) in cols.iter().zip(vals) {
                if reduced[j] != NO_SLOT {
                    triplets.push((reduced[j], q, -v));
                    triplets.push((q, reduced[j], -v));
                }
            }
        }
        let template = SparseMatrix::from_triplets(dim, dim, &triplets);

        let mut k_slots = vec![NO_SLOT; k_pattern.nnz()];
        for (r, &i) in interior.iter().enumerate() {
            for k in k_pattern.row_ptr[i]..k_pattern.row_ptr[i + 1] {
                let j = k_pattern.col_idx[k];
                if reduced[j] != NO_SLOT {
                    k_slots[k] = template.pattern.find(r, reduced[j]).expect("slot exists");
                }
            }
        }
        let symbolic = SymbolicFactorization::new(template.pattern.clone())?;
        Ok(Self { n_interior, n_pressure, areas: areas.to_vec(), k_pattern, k_slots, template, symbolic })
    }

    /// Size of the factorized system: interior velocity + pressure - 1.
    pub fn dim(&self) -> usize {
        self.n_interior + self.n_pressure - 1
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_pressure(&self) -> usize {
        self.n_pressure
    }

    /// The factorized matrix for a given velocity block.
    pub fn assemble(&self, k: &SparseMatrix) -> Result<SparseMatrix, LinalgError> {
        if !Arc::ptr_eq(&self.k_pattern, k.pattern()) && *self.k_pattern != **k.pattern() {
            return Err(LinalgError::Dimension("velocity block has an unexpected pattern".into()));
        }
        let mut m = self.template.clone();
        for (&slot, &v) in self.k_slots.iter().zip(k.values()) {
            if slot != NO_SLOT {
                m.values[slot] += v;
            }
        }
        Ok(m)
    }

    pub fn factorize(&self, k: &SparseMatrix) -> Result<SaddleFactorization, LinalgError> {
        let m = self.assemble(k)?;
        Ok(SaddleFactorization {
            n_interior: self.n_interior,
            areas: self.areas.clone(),
            lu: self.symbolic.factorize(&m)?,
        })
    }
}

/// Factorized saddle system; one factorization serves any number of solves.
#[derive(Debug)]
pub struct SaddleFactorization {
    n_interior: usize,
    areas: Vec<f64>,
    lu: Factorization,
}

/// Interior velocity and pressure of a saddle solve.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl SaddleFactorization {
    /// Solves with momentum rhs `f` (interior DOFs), continuity rhs `g` and
    /// prescribed pressure integral `mean`.
    pub fn solve(&self, f: &[f64], g: &[f64], mean: f64) -> Result<SaddleSolution, LinalgError> {
        let n_pressure = self.areas.len();
        if f.len() != self.n_interior || g.len() != n_pressure {
            return Err(LinalgError::Dimension(format!(
                "rhs lengths ({}, {}) for a ({}, {}) saddle system",
                f.len(),
                g.len(),
                self.n_interior,
                n_pressure
            )));
        }
        let mut rhs = Vec::with_capacity(self.lu.dim());
        rhs.extend_from_slice(f);
        rhs.extend(g[1..].iter().map(|v| -v));
        let x = self.lu.solve(&rhs)?;
        let mut pressure = Vec::with_capacity(n_pressure);
        pressure.push(0.0);
        pressure.extend_from_slice(&x[self.n_interior..]);
        let total: f64 = self.areas.iter().sum();
        let shift = (mean - self.areas.iter().zip(&pressure).map(|(a, p)| a * p).sum::<f64>()) / total;
        pressure.iter_mut().for_each(|p| *p += shift);
        Ok(SaddleSolution { velocity: x[..self.n_interior].to_vec(), pressure })
    }

    pub fn factorization(&self) -> &Factorization {
        &self.lu
    }
}

/// One-shot solve of `[A -B^T; -B 0] (u, p) = (f, -g)` with `a^T p = 0`, where
/// `a_vv` and `b` are already restricted to interior velocity DOFs.
/// On return `B u = g` (for `g` summing to zero) and the pressure has zero mean.
pub fn saddle_solve(
    a_vv: &SparseMatrix,
    b: &SparseMatrix,
    areas: &[f64],
    f: &[f64],
    g: &[f64],
) -> Result<SaddleSolution, LinalgError> {
    let interior: Vec<usize> = (0..a_vv.nrows()).collect();
    let system = SaddleSystem::new(a_vv.pattern().clone(), b, areas, &interior)?;
    system.factorize(a_vv)?.solve(f, g, 0.0)
}
