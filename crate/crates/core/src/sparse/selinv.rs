//! Takahashi recursions: entries of `A⁻¹` on the pattern of `L + Lᵀ`.

use std::sync::Arc;

use super::{CholFactor, CscMatrix, Pattern, Result, SparseError, SymbolicCholesky};

/// `A⁻¹` restricted to the (permuted) fill pattern of the factor.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    symbolic: Arc<SymbolicCholesky>,
    // lower triangle of P A⁻¹ Pᵀ aligned with the L pattern
    z: Vec<f64>,
}

impl SelectedInverse {
    pub fn compute(f: &CholFactor) -> Self {
        let sym = f.symbolic().clone();
        let lp = sym.l_pattern();
        let (cp, ri) = (lp.colptr(), lp.rowidx());
        let lv = f.l_values();
        let n = sym.n();
        let mut z = vec![0.0; lv.len()];
        let mut acc: Vec<f64> = Vec::new();
        for i in (0..n).rev() {
            let d = lv[cp[i]];
            let off = (cp[i] + 1)..cp[i + 1];
            let rows = &ri[off.clone()];
            let lcol = &lv[off.clone()];
            let m = rows.len();
            acc.clear();
            acc.resize(m, 0.0);
            // acc[a] = sum_b L[rows[b], i] Z[rows[b], rows[a]]
            for a in 0..m {
                let j = rows[a];
                let mut b = a;
                for p in cp[j]..cp[j + 1] {
                    if b == m {
                        break;
                    }
                    if ri[p] == rows[b] {
                        let zv = z[p];
                        acc[a] += lcol[b] * zv;
                        if b > a {
                            acc[b] += lcol[a] * zv;
                        }
                        b += 1;
                    }
                }
                debug_assert_eq!(b, m, "fill pattern is not closed");
            }
            let mut diag = 1.0 / (d * d);
            for a in 0..m {
                let zji = -acc[a] / d;
                z[off.start + a] = zji;
                diag -= lcol[a] * zji / d;
            }
            z[cp[i]] = diag;
        }
        Self { symbolic: sym, z }
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    /// `(A⁻¹)_{ij}` in original indexing, if inside the fill pattern.
    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        let iperm = self.symbolic.iperm();
        let (pi, pj) = (iperm[i], iperm[j]);
        let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        self.symbolic
            .l_pattern()
            .find(r, c)
            .map(|p| self.z[p])
            .ok_or(SparseError::OutsideFillPattern { row: i, col: j })
    }

    /// Diagonal of `A⁻¹` in original indexing.
    pub fn diagonal(&self) -> Vec<f64> {
        let lp = self.symbolic.l_pattern();
        let mut d = vec![0.0; self.symbolic.n()];
        for (k, &i) in self.symbolic.perm().iter().enumerate() {
            d[i] = self.z[lp.colptr()[k]];
        }
        d
    }

    /// `A⁻¹` evaluated on `pattern`.
    pub fn on_pattern(&self, pattern: &Arc<Pattern>) -> Result<CscMatrix> {
        let n = self.symbolic.n();
        if pattern.nrows() != n || pattern.ncols() != n {
            return Err(SparseError::DimensionMismatch {
                expected: n,
                got: pattern.nrows().max(pattern.ncols()),
            });
        }
        let mut values = vec![0.0; pattern.nnz()];
        for (p, i, j) in pattern.entries() {
            values[p] = self.get(i, j)?;
        }
        Ok(CscMatrix::new(pattern.clone(), values))
    }

    /// The whole selected inverse as a symmetric matrix in original indexing.
    pub fn to_csc(&self) -> CscMatrix {
        let lp = self.symbolic.l_pattern();
        let perm = self.symbolic.perm();
        let mut t = Vec::with_capacity(2 * self.z.len());
        for (p, r, c) in lp.entries() {
            let (i, j) = (perm[r], perm[c]);
            t.push((i, j, self.z[p]));
            if r != c {
                t.push((j, i, self.z[p]));
            }
        }
        CscMatrix::from_triplets(self.symbolic.n(), self.symbolic.n(), &t).expect("indices in range")
    }
}

/// `partial_inverse(F, pattern)`: entries of `A⁻¹` on `pattern` by Takahashi recursions.
pub fn partial_inverse(f: &CholFactor, pattern: &Arc<Pattern>) -> Result<CscMatrix> {
    SelectedInverse::compute(f).on_pattern(pattern)
}
