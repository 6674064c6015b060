//! Up-looking simplicial Cholesky with an approximate-minimum-degree ordering.
//!
//! The symbolic phase (ordering, elimination tree, factor pattern) depends only
//! on the sparsity pattern and is shared between refactorizations through an
//! `Arc<SymbolicCholesky>`.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{CscMatrix, Pattern, Result, SparseError};

const NONE: usize = usize::MAX;

/// Relative pivot threshold: a pivot must exceed this times the largest
/// diagonal entry of the input.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    parent: Vec<usize>,
    input: Arc<Pattern>,
    // upper triangle of P A Pᵀ
    c_colptr: Vec<usize>,
    c_rowidx: Vec<usize>,
    input_to_c: Vec<usize>,
    l_pattern: Pattern,
}

impl SymbolicCholesky {
    /// Orders with AMD and computes the factor pattern.
    pub fn analyze(pattern: &Arc<Pattern>) -> Result<Self> {
        let n = pattern.nrows();
        if n != pattern.ncols() {
            return Err(SparseError::NotSquare {
                nrows: n,
                ncols: pattern.ncols(),
            });
        }
        let perm = if n == 0 {
            Vec::new()
        } else {
            let control = amd::Control::default();
            match amd::order(n, pattern.colptr(), pattern.rowidx(), &control) {
                Ok((p, _, _)) => p,
                Err(_) => (0..n).collect(),
            }
        };
        Self::with_ordering(pattern, perm)
    }

    /// Uses the given ordering, `perm[k]` being the original index eliminated at step `k`.
    pub fn with_ordering(pattern: &Arc<Pattern>, perm: Vec<usize>) -> Result<Self> {
        let n = pattern.nrows();
        if n != pattern.ncols() {
            return Err(SparseError::NotSquare {
                nrows: n,
                ncols: pattern.ncols(),
            });
        }
        if perm.len() != n {
            return Err(SparseError::DimensionMismatch {
                expected: n,
                got: perm.len(),
            });
        }
        let mut iperm = vec![NONE; n];
        for (k, &i) in perm.iter().enumerate() {
            iperm[i] = k;
        }

        // upper triangle of C = P A Pᵀ, columns sorted
        let mut counts = vec![0usize; n + 1];
        for (_, i, j) in pattern.entries() {
            let (pi, pj) = (iperm[i], iperm[j]);
            if pi <= pj {
                counts[pj + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let c_colptr = counts.clone();
        let mut next = counts;
        let mut tmp: Vec<(usize, usize)> = vec![(0, 0); c_colptr[n]];
        for (p, i, j) in pattern.entries() {
            let (pi, pj) = (iperm[i], iperm[j]);
            if pi <= pj {
                tmp[next[pj]] = (pi, p);
                next[pj] += 1;
            }
        }
        let mut input_to_c = vec![NONE; pattern.nnz()];
        let mut c_rowidx = vec![0usize; tmp.len()];
        for j in 0..n {
            let seg = &mut tmp[c_colptr[j]..c_colptr[j + 1]];
            seg.sort_unstable();
            for (q, &(r, p)) in seg.iter().enumerate() {
                c_rowidx[c_colptr[j] + q] = r;
                input_to_c[p] = c_colptr[j] + q;
            }
        }

        let parent = etree(n, &c_colptr, &c_rowidx);

        // factor pattern, one ereach per row
        let mut cols: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut w = vec![NONE; n];
        let mut s = vec![0usize; n];
        for k in 0..n {
            let top = ereach(k, &c_colptr, &c_rowidx, &parent, &mut w, &mut s);
            for &i in &s[top..n] {
                cols[i].push(k);
            }
        }
        let mut l_colptr = Vec::with_capacity(n + 1);
        l_colptr.push(0);
        let mut l_rowidx = Vec::new();
        for c in cols.iter_mut() {
            c.sort_unstable();
            l_rowidx.extend_from_slice(c);
            l_colptr.push(l_rowidx.len());
        }
        let l_pattern = Pattern::new_unchecked(n, n, l_colptr, l_rowidx);

        Ok(Self {
            n,
            perm,
            iperm,
            parent,
            input: pattern.clone(),
            c_colptr,
            c_rowidx,
            input_to_c,
            l_pattern,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn iperm(&self) -> &[usize] {
        &self.iperm
    }

    /// Lower-triangular pattern of the permuted factor, diagonal first in each column.
    pub fn l_pattern(&self) -> &Pattern {
        &self.l_pattern
    }

    pub fn input_pattern(&self) -> &Arc<Pattern> {
        &self.input
    }

    /// Whether a matrix with this pattern can be refactored with this analysis.
    pub fn accepts(&self, pattern: &Arc<Pattern>) -> bool {
        Arc::ptr_eq(&self.input, pattern) || *self.input == **pattern
    }
}

fn etree(n: usize, colptr: &[usize], rowidx: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &r in &rowidx[colptr[k]..colptr[k + 1]] {
            let mut i = r;
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of L in topological order, written to `s[top..n]`.
fn ereach(
    k: usize,
    colptr: &[usize],
    rowidx: &[usize],
    parent: &[usize],
    w: &mut [usize],
    s: &mut [usize],
) -> usize {
    let n = s.len();
    let mut top = n;
    w[k] = k;
    for &r in &rowidx[colptr[k]..colptr[k + 1]] {
        if r >= k {
            continue;
        }
        let mut i = r;
        let mut len = 0;
        while w[i] != k {
            s[len] = i;
            len += 1;
            w[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            s[top] = s[len];
        }
    }
    top
}

/// Numeric factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    symbolic: Arc<SymbolicCholesky>,
    l_values: Vec<f64>,
    logdet: f64,
}

impl CholFactor {
    pub fn factorize(a: &CscMatrix) -> Result<Self> {
        let symbolic = Arc::new(SymbolicCholesky::analyze(a.pattern())?);
        Self::factorize_with(symbolic, a)
    }

    /// Numeric factorization reusing a symbolic analysis of the same pattern.
    pub fn factorize_with(symbolic: Arc<SymbolicCholesky>, a: &CscMatrix) -> Result<Self> {
        if !symbolic.accepts(a.pattern()) {
            return Err(SparseError::DimensionMismatch {
                expected: symbolic.input.nnz(),
                got: a.nnz(),
            });
        }
        let n = symbolic.n;
        let sym = symbolic.as_ref();
        let mut c_values = vec![0.0; sym.c_rowidx.len()];
        for (p, &q) in sym.input_to_c.iter().enumerate() {
            if q != NONE {
                c_values[q] = a.values()[p];
            }
        }
        let max_diag = (0..n)
            .map(|k| {
                let end = sym.c_colptr[k + 1];
                if end > sym.c_colptr[k] && sym.c_rowidx[end - 1] == k {
                    c_values[end - 1].abs()
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        let tol = PIVOT_TOLERANCE * max_diag;

        let lp = &sym.l_pattern;
        let l_colptr = lp.colptr();
        let l_rowidx = lp.rowidx();
        let mut lx = vec![0.0; lp.nnz()];
        let mut next: Vec<usize> = (0..n).map(|i| l_colptr[i] + 1).collect();
        let mut x = vec![0.0; n];
        let mut w = vec![NONE; n];
        let mut s = vec![0usize; n];
        let mut logdet = 0.0;
        for k in 0..n {
            let top = ereach(k, &sym.c_colptr, &sym.c_rowidx, &sym.parent, &mut w, &mut s);
            for p in sym.c_colptr[k]..sym.c_colptr[k + 1] {
                x[sym.c_rowidx[p]] = c_values[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &s[top..n] {
                let lki = x[i] / lx[l_colptr[i]];
                x[i] = 0.0;
                for p in (l_colptr[i] + 1)..next[i] {
                    x[l_rowidx[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                debug_assert_eq!(l_rowidx[p], k);
                lx[p] = lki;
            }
            if !(d > tol) {
                return Err(SparseError::NotSpd {
                    pivot: sym.perm[k],
                    value: d,
                });
            }
            let dk = d.sqrt();
            lx[l_colptr[k]] = dk;
            logdet += 2.0 * dk.ln();
        }
        Ok(Self {
            symbolic,
            l_values: lx,
            logdet,
        })
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    pub fn l_values(&self) -> &[f64] {
        &self.l_values
    }

    /// `log |A| = 2 sum log L_kk`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// The permuted factor `L` as a sparse matrix.
    pub fn l_matrix(&self) -> CscMatrix {
        CscMatrix::new(Arc::new(self.symbolic.l_pattern.clone()), self.l_values.clone())
    }

    /// Solves `L y = y` in place (permuted ordering).
    pub fn solve_l_in_place(&self, y: &mut [f64]) {
        let lp = &self.symbolic.l_pattern;
        let (cp, ri) = (lp.colptr(), lp.rowidx());
        for j in 0..self.n() {
            let yj = y[j] / self.l_values[cp[j]];
            y[j] = yj;
            for p in (cp[j] + 1)..cp[j + 1] {
                y[ri[p]] -= self.l_values[p] * yj;
            }
        }
    }

    /// Solves `Lᵀ y = y` in place (permuted ordering).
    pub fn solve_lt_in_place(&self, y: &mut [f64]) {
        let lp = &self.symbolic.l_pattern;
        let (cp, ri) = (lp.colptr(), lp.rowidx());
        for j in (0..self.n()).rev() {
            let mut acc = y[j];
            for p in (cp[j] + 1)..cp[j + 1] {
                acc -= self.l_values[p] * y[ri[p]];
            }
            y[j] = acc / self.l_values[cp[j]];
        }
    }

    /// Solves `A x = b`.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if b.len() != n {
            return Err(SparseError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let perm = &self.symbolic.perm;
        let mut y: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        self.solve_l_in_place(&mut y);
        self.solve_lt_in_place(&mut y);
        let mut x = vec![0.0; n];
        for (k, &i) in perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    /// Solves `A X = B` for a dense right-hand side.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.n() {
            return Err(SparseError::DimensionMismatch {
                expected: self.n(),
                got: b.nrows(),
            });
        }
        let mut x = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col: Vec<f64> = b.column(j).iter().copied().collect();
            let sol = self.solve_vec(&col)?;
            x.column_mut(j).copy_from_slice(&sol);
        }
        Ok(x)
    }

    /// Maps standard-normal `z` to a draw with covariance `A⁻¹`: `Pᵀ L⁻ᵀ z`.
    pub fn sample_from_standard(&self, z: &[f64]) -> Vec<f64> {
        let mut u = z.to_vec();
        self.solve_lt_in_place(&mut u);
        let mut w = vec![0.0; self.n()];
        for (k, &i) in self.symbolic.perm.iter().enumerate() {
            w[i] = u[k];
        }
        w
    }
}

/// `cholesky(A)` with a fresh symbolic analysis.
pub fn cholesky(a: &CscMatrix) -> Result<CholFactor> {
    CholFactor::factorize(a)
}

/// `log_det_spd(F)`.
pub fn log_det_spd(f: &CholFactor) -> f64 {
    f.logdet()
}

/// `solve_spd(F, B)`.
pub fn solve_spd(f: &CholFactor, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    f.solve(b)
}
