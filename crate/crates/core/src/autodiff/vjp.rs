//! Vector-Jacobian products of the sparse kernels, each restricted to the
//! primal's sparsity pattern.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::sparse::{spgemm_numeric, CholFactor, CscMatrix, Pattern, Result, SelectedInverse, SparseError};

/// Adjoint of a sparse matrix, stored on the primal's pattern.
pub type MaskedAdjoint = CscMatrix;

/// `(C̄ Bᵀ) ⊙ mask`.
pub(crate) fn matmul_adjoint_left(cbar: &CscMatrix, b: &CscMatrix, mask: &Arc<Pattern>) -> Vec<f64> {
    spgemm_numeric(cbar, &b.transpose(), mask)
}

/// `(Aᵀ C̄) ⊙ mask`.
pub(crate) fn matmul_adjoint_right(a: &CscMatrix, cbar: &CscMatrix, mask: &Arc<Pattern>) -> Vec<f64> {
    spgemm_numeric(&a.transpose(), cbar, mask)
}

/// `c̄ A⁻ᵀ ⊙ mask(A)` through the selected inverse.
pub(crate) fn logdet_adjoint(a: &CscMatrix, f: &CholFactor, cbar: f64) -> Result<MaskedAdjoint> {
    // A⁻¹ is symmetric, so A⁻ᵀ on mask(A) is A⁻¹ on mask(A)
    let z = SelectedInverse::compute(f).on_pattern(a.pattern())?;
    Ok(z.scale(cbar))
}

/// Adjoints of `C = A⁻¹ B`: `B̄ = A⁻ᵀ C̄` and `Ā = (−B̄ Cᵀ) ⊙ mask(A)`.
pub fn vjp_sparse_solve(
    a: &CscMatrix,
    f: &CholFactor,
    c: &DMatrix<f64>,
    cbar: &DMatrix<f64>,
) -> Result<(MaskedAdjoint, DMatrix<f64>)> {
    if c.shape() != cbar.shape() || c.nrows() != a.nrows() {
        return Err(SparseError::DimensionMismatch {
            expected: a.nrows(),
            got: cbar.nrows(),
        });
    }
    // A symmetric, so A⁻ᵀ = A⁻¹
    let bbar = f.solve(cbar)?;
    let mut values = vec![0.0; a.nnz()];
    for (p, i, j) in a.pattern().entries() {
        values[p] = -(0..c.ncols()).map(|k| bbar[(i, k)] * c[(j, k)]).sum::<f64>();
    }
    Ok((CscMatrix::new(a.pattern().clone(), values), bbar))
}

/// Adjoint of `c = log|A|`: `Ā = c̄ (A⁻ᵀ ⊙ mask(A))`.
pub fn vjp_sparse_logdet(a: &CscMatrix, f: &CholFactor, cbar: f64) -> Result<MaskedAdjoint> {
    logdet_adjoint(a, f, cbar)
}

/// Adjoints of `C = A B`: `Ā = C̄ Bᵀ ⊙ mask(A)`, `B̄ = Aᵀ C̄ ⊙ mask(B)`.
pub fn vjp_sparse_matmul(a: &CscMatrix, b: &CscMatrix, cbar: &CscMatrix) -> (MaskedAdjoint, MaskedAdjoint) {
    let abar = matmul_adjoint_left(cbar, b, a.pattern());
    let bbar = matmul_adjoint_right(a, cbar, b.pattern());
    (
        CscMatrix::new(a.pattern().clone(), abar),
        CscMatrix::new(b.pattern().clone(), bbar),
    )
}
