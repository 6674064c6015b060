//! Compressed-sparse-column matrices, sparse Cholesky, and selected inversion.
//!
//! Every matrix in the engine is a [`CscMatrix`]: a shared, immutable
//! [`Pattern`] plus a value array aligned with it. Symmetric matrices are
//! stored with both triangles present so that elementwise masks line up with
//! the primal pattern directly.

mod cholesky;
mod matrix_market;
mod selinv;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

pub use cholesky::{cholesky, log_det_spd, solve_spd, CholFactor, SymbolicCholesky, PIVOT_TOLERANCE};
pub use matrix_market::{read_matrix_market, write_matrix_market};
pub use selinv::{partial_inverse, SelectedInverse};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) out of range for a {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotSpd { pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix must be square, got {nrows}x{ncols}")]
    NotSquare { nrows: usize, ncols: usize },
    #[error("entry ({row}, {col}) lies outside the factor fill pattern; widen the pattern and refactor")]
    OutsideFillPattern { row: usize, col: usize },
    #[error("matrix market parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SparseError>;

/// Column-compressed index structure with strictly increasing row indices
/// inside each column.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({}x{}, nnz={})", self.nrows, self.ncols, self.nnz())
    }
}

impl Pattern {
    /// Builds a pattern from raw arrays, checking the sortedness invariant.
    pub fn new(nrows: usize, ncols: usize, colptr: Vec<usize>, rowidx: Vec<usize>) -> Result<Self> {
        if colptr.len() != ncols + 1 {
            return Err(SparseError::DimensionMismatch {
                expected: ncols + 1,
                got: colptr.len(),
            });
        }
        if *colptr.last().unwrap() != rowidx.len() {
            return Err(SparseError::DimensionMismatch {
                expected: rowidx.len(),
                got: *colptr.last().unwrap(),
            });
        }
        for j in 0..ncols {
            let col = &rowidx[colptr[j]..colptr[j + 1]];
            for (k, &r) in col.iter().enumerate() {
                if r >= nrows || (k > 0 && col[k - 1] >= r) {
                    return Err(SparseError::IndexOutOfRange {
                        row: r,
                        col: j,
                        nrows,
                        ncols,
                    });
                }
            }
        }
        Ok(Self {
            nrows,
            ncols,
            colptr,
            rowidx,
        })
    }

    pub(crate) fn new_unchecked(nrows: usize, ncols: usize, colptr: Vec<usize>, rowidx: Vec<usize>) -> Self {
        debug_assert_eq!(colptr.len(), ncols + 1);
        Self {
            nrows,
            ncols,
            colptr,
            rowidx,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::new_unchecked(n, n, (0..=n).collect(), (0..n).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rowidx.len()
    }

    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }

    pub fn rowidx(&self) -> &[usize] {
        &self.rowidx
    }

    /// Row indices of column `j`.
    pub fn col(&self, j: usize) -> &[usize] {
        &self.rowidx[self.colptr[j]..self.colptr[j + 1]]
    }

    /// Storage index of entry `(i, j)`, if present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.colptr[j];
        self.col(j).binary_search(&i).ok().map(|k| start + k)
    }

    /// Iterates `(storage index, row, col)` in column-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.ncols).flat_map(move |j| (self.colptr[j]..self.colptr[j + 1]).map(move |p| (p, self.rowidx[p], j)))
    }

    /// Pattern of the transpose plus, for each output entry, the index of the
    /// input entry it came from.
    pub fn transpose_with_map(&self) -> (Pattern, Vec<usize>) {
        let mut counts = vec![0usize; self.nrows + 1];
        for &r in &self.rowidx {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let colptr = counts.clone();
        let mut next = counts;
        let mut rowidx = vec![0usize; self.nnz()];
        let mut map = vec![0usize; self.nnz()];
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let r = self.rowidx[p];
                let q = next[r];
                next[r] += 1;
                rowidx[q] = j;
                map[q] = p;
            }
        }
        (Pattern::new_unchecked(self.ncols, self.nrows, colptr, rowidx), map)
    }

    /// Union of several same-shape patterns with position maps from each
    /// operand into the union.
    pub fn union_with_maps(parts: &[&Pattern]) -> (Pattern, Vec<Vec<usize>>) {
        assert!(!parts.is_empty());
        let (nrows, ncols) = (parts[0].nrows, parts[0].ncols);
        for p in parts {
            assert_eq!((p.nrows, p.ncols), (nrows, ncols), "pattern shape mismatch in union");
        }
        let mut colptr = Vec::with_capacity(ncols + 1);
        colptr.push(0);
        let mut rowidx = Vec::new();
        let mut maps: Vec<Vec<usize>> = parts.iter().map(|p| vec![0usize; p.nnz()]).collect();
        let mut mark = vec![usize::MAX; nrows];
        let mut rows: Vec<usize> = Vec::new();
        for j in 0..ncols {
            rows.clear();
            for p in parts {
                for &r in p.col(j) {
                    if mark[r] != j {
                        mark[r] = j;
                        rows.push(r);
                    }
                }
            }
            rows.sort_unstable();
            let base = rowidx.len();
            rowidx.extend_from_slice(&rows);
            for (pi, p) in parts.iter().enumerate() {
                let mut q = 0;
                for k in p.colptr[j]..p.colptr[j + 1] {
                    let r = p.rowidx[k];
                    while rows[q] != r {
                        q += 1;
                    }
                    maps[pi][k] = base + q;
                }
            }
            colptr.push(rowidx.len());
        }
        (Pattern::new_unchecked(nrows, ncols, colptr, rowidx), maps)
    }

    /// Symbolic product pattern of `a * b`.
    pub fn product(a: &Pattern, b: &Pattern) -> Pattern {
        assert_eq!(a.ncols, b.nrows, "inner dimension mismatch in product");
        let mut colptr = Vec::with_capacity(b.ncols + 1);
        colptr.push(0);
        let mut rowidx = Vec::new();
        let mut mark = vec![usize::MAX; a.nrows];
        let mut rows = Vec::new();
        for j in 0..b.ncols {
            rows.clear();
            for &k in b.col(j) {
                for &i in a.col(k) {
                    if mark[i] != j {
                        mark[i] = j;
                        rows.push(i);
                    }
                }
            }
            rows.sort_unstable();
            rowidx.extend_from_slice(&rows);
            colptr.push(rowidx.len());
        }
        Pattern::new_unchecked(a.nrows, b.ncols, colptr, rowidx)
    }

    /// True when `(i, j)` present implies `(j, i)` present.
    pub fn is_structurally_symmetric(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let (t, _) = self.transpose_with_map();
        t == *self
    }

    /// True when every entry of `self` is also present in `other`.
    pub fn is_subset_of(&self, other: &Pattern) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.entries().all(|(_, i, j)| other.find(i, j).is_some())
    }
}

/// A sparse matrix: shared pattern plus aligned values.
#[derive(Clone, Debug)]
pub struct CscMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

/// Symmetric positive-definite matrices use the same storage; both triangles
/// are stored.
pub type SparseSpd = CscMatrix;

impl CscMatrix {
    pub fn new(pattern: Arc<Pattern>, values: Vec<f64>) -> Self {
        assert_eq!(pattern.nnz(), values.len(), "values must align with pattern");
        Self { pattern, values }
    }

    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let nnz = pattern.nnz();
        Self::new(pattern, vec![0.0; nnz])
    }

    /// Sums duplicate entries and sorts indices.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(SparseError::IndexOutOfRange {
                    row: r,
                    col: c,
                    nrows,
                    ncols,
                });
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].1, triplets[k].0));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowidx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = triplets[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                rowidx.push(r);
                values.push(v);
                colptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for j in 0..ncols {
            colptr[j + 1] += colptr[j];
        }
        Ok(Self::new(
            Arc::new(Pattern::new_unchecked(nrows, ncols, colptr, rowidx)),
            values,
        ))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Arc::new(Pattern::identity(n)), vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::new(Arc::new(Pattern::identity(d.len())), d.to_vec())
    }

    /// Dense to sparse, keeping entries with `|a_ij| > drop_tol`.
    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> Self {
        let mut triplets = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)].abs() > drop_tol {
                    triplets.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &triplets).expect("indices in range")
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for (p, i, j) in self.pattern.entries() {
            m[(i, j)] += self.values[p];
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.nrows().min(self.ncols());
        (0..n).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> CscMatrix {
        let (pat, map) = self.pattern.transpose_with_map();
        let values = map.iter().map(|&p| self.values[p]).collect();
        CscMatrix::new(Arc::new(pat), values)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols(), "vector length mismatch");
        let mut y = vec![0.0; self.nrows()];
        for j in 0..self.ncols() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.pattern.colptr[j]..self.pattern.colptr[j + 1] {
                y[self.pattern.rowidx[p]] += self.values[p] * xj;
            }
        }
        y
    }

    /// `y = Aᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows(), "vector length mismatch");
        (0..self.ncols())
            .map(|j| {
                (self.pattern.colptr[j]..self.pattern.colptr[j + 1])
                    .map(|p| self.values[p] * x[self.pattern.rowidx[p]])
                    .sum()
            })
            .collect()
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, b: &CscMatrix) -> CscMatrix {
        let pat = Arc::new(Pattern::product(&self.pattern, &b.pattern));
        let values = spgemm_numeric(self, b, &pat);
        CscMatrix::new(pat, values)
    }

    /// `sum_k coef_k * A_k` over operands of equal shape.
    pub fn linear_combination(terms: &[(f64, &CscMatrix)]) -> CscMatrix {
        let pats: Vec<&Pattern> = terms.iter().map(|(_, m)| m.pattern.as_ref()).collect();
        let (pat, maps) = Pattern::union_with_maps(&pats);
        let mut values = vec![0.0; pat.nnz()];
        for ((c, m), map) in terms.iter().zip(&maps) {
            for (v, &q) in m.values.iter().zip(map) {
                values[q] += c * v;
            }
        }
        CscMatrix::new(Arc::new(pat), values)
    }

    pub fn add(&self, other: &CscMatrix) -> CscMatrix {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    pub fn scale(&self, s: f64) -> CscMatrix {
        CscMatrix::new(self.pattern.clone(), self.values.iter().map(|v| v * s).collect())
    }

    /// `diag(d) A`.
    pub fn scale_rows(&self, d: &[f64]) -> CscMatrix {
        assert_eq!(d.len(), self.nrows());
        let values = self
            .pattern
            .entries()
            .map(|(p, i, _)| self.values[p] * d[i])
            .collect();
        CscMatrix::new(self.pattern.clone(), values)
    }

    /// `A diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> CscMatrix {
        assert_eq!(d.len(), self.ncols());
        let values = self
            .pattern
            .entries()
            .map(|(p, _, j)| self.values[p] * d[j])
            .collect();
        CscMatrix::new(self.pattern.clone(), values)
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        self.pattern
            .entries()
            .map(|(p, i, j)| (self.values[p] - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Rows of the matrix as `(column, value)` lists.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.nrows()];
        for (p, i, j) in self.pattern.entries() {
            rows[i].push((j, self.values[p]));
        }
        rows
    }
}

/// `assemble_csc` over a square `n x n` matrix; duplicates are summed.
pub fn assemble_csc(triplets: &[(usize, usize, f64)], n: usize) -> Result<SparseSpd> {
    CscMatrix::from_triplets(n, n, triplets)
}

/// Numeric Gustavson product gathered onto `out`; products falling outside
/// `out` are discarded.
pub(crate) fn spgemm_numeric(a: &CscMatrix, b: &CscMatrix, out: &Pattern) -> Vec<f64> {
    let ap = &a.pattern;
    let bp = &b.pattern;
    let mut acc = vec![0.0; ap.nrows];
    let mut mark = vec![usize::MAX; ap.nrows];
    let mut values = vec![0.0; out.nnz()];
    for j in 0..bp.ncols {
        if out.colptr[j] == out.colptr[j + 1] {
            continue;
        }
        for q in bp.colptr[j]..bp.colptr[j + 1] {
            let k = bp.rowidx[q];
            let bkj = b.values[q];
            for p in ap.colptr[k]..ap.colptr[k + 1] {
                let i = ap.rowidx[p];
                if mark[i] != j {
                    mark[i] = j;
                    acc[i] = 0.0;
                }
                acc[i] += a.values[p] * bkj;
            }
        }
        for p in out.colptr[j]..out.colptr[j + 1] {
            let i = out.rowidx[p];
            values[p] = if mark[i] == j { acc[i] } else { 0.0 };
        }
    }
    values
}
