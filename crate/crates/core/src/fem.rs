//! P1 finite-element matrices: lumped mass matrices, the anisotropic
//! stiffness matrix, the operator `L = C_{κ²} + G`, and the integer-β
//! precision recursion.
//!
//! Coefficients enter through centroid values only. The structural maps in
//! [`FemStructure`] are linear in those values and are shared by the plain
//! assembly functions and the differentiable model.

use std::sync::Arc;

use crate::autodiff::SparseLinearMap;
use crate::error::{Error, Result};
use crate::fields::AnisoTensor;
use crate::mesh::TriMesh;
use crate::sparse::{CscMatrix, Pattern};

/// Linear maps from per-triangle coefficient values to assembled matrices.
#[derive(Debug, Clone)]
pub struct FemStructure {
    n_vertices: usize,
    n_triangles: usize,
    /// `n × T` matrix with entries `area(T)/3`: lumped mass from centroid weights.
    pub mass_map: Arc<CscMatrix>,
    /// Maps `[h11_T.., h12_T.., h22_T..]` to the values of `G`.
    pub stiffness_map: Arc<SparseLinearMap>,
}

impl FemStructure {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        let (n, nt) = (mesh.n_vertices(), mesh.n_triangles());
        let mut mass = Vec::with_capacity(3 * nt);
        let mut local = Vec::with_capacity(27 * nt);
        let mut pat_trip = Vec::with_capacity(9 * nt);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let area = mesh.areas()[t];
            let g = mesh.gradients_p1(t)?;
            for a in 0..3 {
                mass.push((tri[a], t, area / 3.0));
                for b in 0..3 {
                    pat_trip.push((tri[a], tri[b], 0.0));
                    let (gi, gj) = (g[a], g[b]);
                    local.push((tri[a], tri[b], t, area * gi[0] * gj[0]));
                    local.push((tri[a], tri[b], nt + t, area * (gi[0] * gj[1] + gi[1] * gj[0])));
                    local.push((tri[a], tri[b], 2 * nt + t, area * gi[1] * gj[1]));
                }
            }
        }
        let pattern = CscMatrix::from_triplets(n, n, &pat_trip)?.pattern().clone();
        let terms = local
            .into_iter()
            .map(|(i, j, k, c)| (pattern.find(i, j).expect("entry in pattern") as u32, k as u32, c))
            .collect();
        Ok(Self {
            n_vertices: n,
            n_triangles: nt,
            mass_map: Arc::new(CscMatrix::from_triplets(n, nt, &mass)?),
            stiffness_map: Arc::new(SparseLinearMap {
                pattern,
                input_len: 3 * nt,
                terms,
            }),
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_triangles(&self) -> usize {
        self.n_triangles
    }

    /// Pattern of `G` (and of `L`).
    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.stiffness_map.pattern
    }

    /// Lumped mass diagonal `Σ_T f(s_T) area(T)/3`.
    pub fn lumped(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.n_triangles {
            return Err(Error::Shape(format!("{} weights for {} triangles", weights.len(), self.n_triangles)));
        }
        Ok(self.mass_map.mul_vec(weights))
    }

    /// Stiffness matrix from per-triangle tensors.
    pub fn stiffness(&self, h: &[AnisoTensor]) -> Result<CscMatrix> {
        if h.len() != self.n_triangles {
            return Err(Error::Shape(format!("{} tensors for {} triangles", h.len(), self.n_triangles)));
        }
        let mut x = Vec::with_capacity(3 * h.len());
        x.extend(h.iter().map(|t| t.h11));
        x.extend(h.iter().map(|t| t.h12));
        x.extend(h.iter().map(|t| t.h22));
        Ok(CscMatrix::new(self.pattern().clone(), self.stiffness_map.apply(&x)))
    }
}

/// `lumped_mass(mesh, f)`: diagonal lumped mass matrix weighted by centroid values.
pub fn lumped_mass(mesh: &TriMesh, weights: &[f64]) -> Result<CscMatrix> {
    Ok(CscMatrix::from_diagonal(&FemStructure::new(mesh)?.lumped(weights)?))
}

/// `stiffness(mesh, H)`.
pub fn stiffness(mesh: &TriMesh, h: &[AnisoTensor]) -> Result<CscMatrix> {
    FemStructure::new(mesh)?.stiffness(h)
}

/// Assembled FEM matrices for given centroid coefficients.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    /// Diagonal of `C`.
    pub c: Vec<f64>,
    /// Diagonal of `C_{κ²}`.
    pub c_k2: Vec<f64>,
    /// Diagonal of `C_{τ²}`.
    pub c_t2: Vec<f64>,
    pub g: CscMatrix,
    pub l: CscMatrix,
}

impl FemMatrices {
    /// Assembles from centroid values of `κ`, `τ`, and `H`.
    pub fn assemble(structure: &FemStructure, kappa: &[f64], tau: &[f64], h: &[AnisoTensor]) -> Result<Self> {
        let ones = vec![1.0; structure.n_triangles()];
        let c = structure.lumped(&ones)?;
        let k2: Vec<f64> = kappa.iter().map(|k| k * k).collect();
        let t2: Vec<f64> = tau.iter().map(|t| t * t).collect();
        let c_k2 = structure.lumped(&k2)?;
        let c_t2 = structure.lumped(&t2)?;
        let g = structure.stiffness(h)?;
        let l = CscMatrix::linear_combination(&[(1.0, &CscMatrix::from_diagonal(&c_k2)), (1.0, &g)]);
        Ok(Self { c, c_k2, c_t2, g, l })
    }
}

/// `integer_precision(fem, β)`: `Q₁ = L C_{τ²}⁻¹ L`, `Q_β = L C⁻¹ Q_{β−1} C⁻¹ L`.
pub fn integer_precision(fem: &FemMatrices, beta: u32) -> Result<CscMatrix> {
    if beta < 1 {
        return Err(Error::InvalidArgument("integer β must be at least 1".into()));
    }
    let inv_t2: Vec<f64> = fem.c_t2.iter().map(|v| 1.0 / v).collect();
    let inv_c: Vec<f64> = fem.c.iter().map(|v| 1.0 / v).collect();
    let lt = fem.l.transpose();
    let mut q = lt.matmul(&fem.l.scale_rows(&inv_t2));
    for _ in 1..beta {
        let right = fem.l.scale_rows(&inv_c);
        let left = lt.scale_cols(&inv_c);
        q = left.matmul(&q).matmul(&right);
    }
    Ok(q)
}
