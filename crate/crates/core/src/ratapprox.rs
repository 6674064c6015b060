//! Rational approximation of `y^β` on `[ε, 1]` and the fractional operator
//! built from it.
//!
//! With `y = 1/λ` for eigenvalues `λ ≥ 1` of the rescaled operator
//! `X = C⁻¹L / κ_min²`, the fit `y^β ≈ y·p(y)/q(y)` (deg p = k, deg q = k+1)
//! becomes `λ^{-β} ≈ P_R(λ)/P_L(λ)` with
//! `P_R(λ) = Σ c_i λ^{k−i}` and `P_L(λ) = Σ b_i λ^{k+1−i}`.
//!
//! The coefficients solve a linearized Chebyshev–Padé system: the first
//! `2k+2` Chebyshev coefficients of `q(y)·y^β − y·p(y)` vanish, with the
//! normalization `q(1) = 1`. Because the system is smooth in `β`, the
//! coefficient derivative follows from implicit differentiation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Coef, NodeId, Tape};
use crate::error::{Error, Result};
use crate::fem::FemMatrices;
use crate::sparse::{CholFactor, CscMatrix, SelectedInverse};

/// Quadrature nodes for the Chebyshev coefficients.
const QUAD_NODES: usize = 4000;
/// Grid size for the sup-error and denominator sign scans.
const SCAN_POINTS: usize = 10_000;
/// Default lower end of the fit interval.
pub const DEFAULT_EPS: f64 = 1e-4;

/// Coefficients of `y^β ≈ y·p(y)/q(y)` on `[ε, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalCoeffs {
    pub k: usize,
    pub beta: f64,
    pub eps: f64,
    /// Integer `β` takes the exact path; `c`, `b` are then unused.
    pub integer: Option<u32>,
    /// Numerator `p(y) = Σ c_i y^i`, length `k+1`.
    pub c: Vec<f64>,
    /// Denominator `q(y) = Σ b_i y^i`, length `k+2`, `q(1) = 1`.
    pub b: Vec<f64>,
    pub dc_dbeta: Vec<f64>,
    pub db_dbeta: Vec<f64>,
    /// `max |y·p/q − y^β|` over the scan grid.
    pub sup_error: f64,
}

impl RationalCoeffs {
    /// `max{1, ⌊β⌋}`.
    pub fn k_beta(&self) -> u32 {
        (self.beta.floor() as u32).max(1)
    }

    /// `y·p(y)/q(y)`, or `y^β` on the integer path.
    pub fn eval(&self, y: f64) -> f64 {
        match self.integer {
            Some(m) => y.powi(m as i32),
            None => y * horner(&self.c, y) / horner(&self.b, y),
        }
    }

    /// Flat `[b.., c..]` and its derivative in `β`.
    fn flat(&self) -> (Vec<f64>, Vec<f64>) {
        let v = self.b.iter().chain(&self.c).copied().collect();
        let d = self.db_dbeta.iter().chain(&self.dc_dbeta).copied().collect();
        (v, d)
    }

    /// Plain-text dump for cross-checking.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "beta {}", self.beta)?;
        writeln!(w, "k {}", self.k)?;
        writeln!(w, "eps {}", self.eps)?;
        writeln!(w, "sup_error {:e}", self.sup_error)?;
        for (i, c) in self.c.iter().enumerate() {
            writeln!(w, "c{} {:e}", i, c)?;
        }
        for (i, b) in self.b.iter().enumerate() {
            writeln!(w, "b{} {:e}", i, b)?;
        }
        Ok(())
    }
}

/// Polynomial with ascending coefficients.
fn horner(coef: &[f64], y: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &a| acc * y + a)
}

fn scan_grid(eps: f64) -> impl Iterator<Item = f64> {
    let lin = (0..SCAN_POINTS).map(move |i| eps + (1.0 - eps) * i as f64 / (SCAN_POINTS - 1) as f64);
    let (la, lb) = (eps.ln(), 0.0);
    let log = (0..SCAN_POINTS / 5).map(move |i| (la + (lb - la) * i as f64 / (SCAN_POINTS / 5 - 1) as f64).exp());
    lin.chain(log)
}

/// Rational coefficients for `y^β` on `[ε, 1]` of order `k`.
pub fn cheb_pade(beta: f64, k: usize, eps: f64) -> Result<RationalCoeffs> {
    if !(beta > 0.5 && beta.is_finite()) {
        return Err(Error::Rational(format!("β = {beta} must exceed 1/2")));
    }
    if k < 1 {
        return Err(Error::Rational("order k must be at least 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Rational(format!("ε = {eps} must lie in (0, 1)")));
    }
    if beta.fract() == 0.0 {
        return Ok(RationalCoeffs {
            k,
            beta,
            eps,
            integer: Some(beta as u32),
            c: vec![1.0],
            b: vec![1.0],
            dc_dbeta: vec![0.0],
            db_dbeta: vec![0.0],
            sup_error: 0.0,
        });
    }
    let nq = k + 2;
    let np = k + 1;
    let nrow = 2 * k + 2;
    let dim = nq + np;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut da = DMatrix::<f64>::zeros(dim, dim);
    let w = 2.0 / QUAD_NODES as f64;
    for j in 0..QUAD_NODES {
        let th = (j as f64 + 0.5) * std::f64::consts::PI / QUAD_NODES as f64;
        let y = eps + (th.cos() + 1.0) / 2.0 * (1.0 - eps);
        let yb = y.powf(beta);
        let ly = y.ln();
        for m in 0..nrow {
            let tm = (m as f64 * th).cos() * w;
            let mut yi = 1.0;
            for i in 0..nq {
                a[(m, i)] += tm * yb * yi;
                da[(m, i)] += tm * yb * yi * ly;
                yi *= y;
            }
            let mut yi = y;
            for i in 0..np {
                a[(m, nq + i)] -= tm * yi;
                yi *= y;
            }
        }
    }
    for i in 0..nq {
        a[(nrow, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(dim);
    rhs[nrow] = 1.0;
    let lu = a.lu();
    let u = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Rational(format!("singular coefficient system at β = {beta}, k = {k}")))?;
    let du = lu
        .solve(&(-(&da * &u)))
        .ok_or_else(|| Error::Rational("singular coefficient system".into()))?;
    let b: Vec<f64> = u.rows(0, nq).iter().copied().collect();
    let c: Vec<f64> = u.rows(nq, np).iter().copied().collect();
    let mut sup_error = 0.0f64;
    for y in scan_grid(eps) {
        let q = horner(&b, y);
        if !(q > 0.0) {
            return Err(Error::Rational(format!("denominator vanishes near y = {y:e} (β = {beta}, k = {k})")));
        }
        sup_error = sup_error.max((y * horner(&c, y) / q - y.powf(beta)).abs());
    }
    if !sup_error.is_finite() {
        return Err(Error::Rational("non-finite fit error".into()));
    }
    Ok(RationalCoeffs {
        k,
        beta,
        eps,
        integer: None,
        c,
        b,
        dc_dbeta: du.rows(nq, np).iter().copied().collect(),
        db_dbeta: du.rows(0, nq).iter().copied().collect(),
        sup_error,
    })
}

/// Tape nodes of the fractional operator.
#[derive(Debug, Clone, Copy)]
pub struct FracNodes {
    pub p_l: NodeId,
    pub p_r: NodeId,
    pub q_tilde: NodeId,
}

/// Inputs for [`frac_on_tape`].
#[derive(Debug, Clone, Copy)]
pub struct FracInputs {
    /// Sparse `L`.
    pub l: NodeId,
    /// Vector `diag(C)⁻¹` (constant).
    pub c_inv: NodeId,
    /// Vector `diag(C)² / diag(C_{τ²})`.
    pub weight: NodeId,
    /// Scalar `κ_min`.
    pub kappa_min: NodeId,
    /// Scalar `β`; only its derivative path uses it.
    pub beta: NodeId,
}

/// Records `P_L`, `P_R`, and `Q̃ = P_Lᵀ C C_{τ²}⁻¹ C P_L` on the tape.
pub fn frac_on_tape(tape: &mut Tape, inp: FracInputs, coeffs: &RationalCoeffs) -> FracNodes {
    let n = tape.sparse(inp.l).nrows();
    let eye = tape.sp_identity(n);
    let (p_l, p_r) = match coeffs.integer {
        Some(m) => {
            let y = tape.sp_scale_rows(inp.l, inp.c_inv);
            let mut p = y;
            for _ in 1..m {
                p = tape.sp_matmul(y, p);
            }
            (p, eye)
        }
        None => {
            let k2 = tape.square(inp.kappa_min);
            let inv_k2 = tape.recip(k2);
            let d = tape.mul(inp.c_inv, inv_k2);
            let x = tape.sp_scale_rows(inp.l, d);
            let (vals, ders) = coeffs.flat();
            let flat = tape.local(&[inp.beta], vals, vec![ders], false);
            let nb = coeffs.b.len();
            let b: Vec<NodeId> = (0..nb).map(|i| tape.index(flat, i)).collect();
            let c: Vec<NodeId> = (0..coeffs.c.len()).map(|i| tape.index(flat, nb + i)).collect();
            let horner_op = |tape: &mut Tape, coef: &[NodeId]| {
                let mut h = tape.sp_lincomb(&[(Coef::Node(coef[0]), x), (Coef::Node(coef[1]), eye)]);
                for &cj in &coef[2..] {
                    let xh = tape.sp_matmul(x, h);
                    h = tape.sp_lincomb(&[(Coef::Const(1.0), xh), (Coef::Node(cj), eye)]);
                }
                h
            };
            let pl_raw = horner_op(tape, &b);
            let p_r = if c.len() == 1 {
                tape.sp_lincomb(&[(Coef::Node(c[0]), eye)])
            } else {
                horner_op(tape, &c)
            };
            let lk = tape.ln(inp.kappa_min);
            let e = tape.mul(lk, inp.beta);
            let e = tape.scale(e, 2.0);
            let s = tape.exp(e);
            let p_l = tape.sp_lincomb(&[(Coef::Node(s), pl_raw)]);
            (p_l, p_r)
        }
    };
    let plt = tape.sp_transpose(p_l);
    let wp = tape.sp_scale_rows(p_l, inp.weight);
    let q_tilde = tape.sp_matmul(plt, wp);
    FracNodes { p_l, p_r, q_tilde }
}

/// Fractional operator with the precision of `w̃` and the map `w = P_R w̃`.
#[derive(Debug, Clone)]
pub struct FracOperator {
    pub p_l: CscMatrix,
    pub p_r: CscMatrix,
    pub kappa_min: f64,
    pub q_tilde: CscMatrix,
}

impl FracOperator {
    /// Cholesky factor of `Q̃`.
    pub fn factor(&self) -> Result<CholFactor> {
        Ok(CholFactor::factorize(&self.q_tilde)?)
    }

    /// Diagonal of `P_R Q̃⁻¹ P_Rᵀ`.
    ///
    /// Row `i` of `P_R` touches vertices within graph distance `k` of `i`,
    /// so every needed entry of `Q̃⁻¹` lies in the fill pattern of `Q̃`.
    pub fn marginal_variances(&self, factor: &CholFactor) -> Result<Vec<f64>> {
        let s = SelectedInverse::compute(factor);
        self.p_r
            .rows()
            .iter()
            .map(|row| {
                let mut v = 0.0;
                for &(j, aj) in row {
                    for &(k, ak) in row {
                        v += aj * ak * s.get(j, k)?;
                    }
                }
                Ok(v)
            })
            .collect()
    }

    /// Covariance `P_R Q̃⁻¹ P_Rᵀ` as a dense matrix (small problems only).
    pub fn dense_covariance(&self) -> Result<DMatrix<f64>> {
        let f = self.factor()?;
        let pr = self.p_r.to_dense();
        let x = f.solve(&pr.transpose())?;
        Ok(&pr * x)
    }
}

/// Builds [`FracOperator`] from assembled FEM matrices.
pub fn assemble_frac(fem: &FemMatrices, kappa_min: f64, coeffs: &RationalCoeffs) -> Result<FracOperator> {
    if !(kappa_min > 0.0) {
        return Err(Error::InvalidArgument(format!("κ_min = {kappa_min} must be positive")));
    }
    let mut tape = Tape::new();
    let l = tape.const_sparse(fem.l.clone());
    let c_inv = tape.const_vector(fem.c.iter().map(|c| 1.0 / c).collect());
    let weight = tape.const_vector(fem.c.iter().zip(&fem.c_t2).map(|(c, t)| c * c / t).collect());
    let km = tape.const_scalar(kappa_min);
    let beta = tape.const_scalar(coeffs.beta);
    let nodes = frac_on_tape(&mut tape, FracInputs { l, c_inv, weight, kappa_min: km, beta }, coeffs);
    Ok(FracOperator {
        p_l: tape.sparse(nodes.p_l).clone(),
        p_r: tape.sparse(nodes.p_r).clone(),
        kappa_min,
        q_tilde: tape.sparse(nodes.q_tilde).clone(),
    })
}

/// Draws `w = P_R w̃` with `w̃ ~ N(0, Q̃⁻¹)`.
pub fn sample_weights<R: Rng + ?Sized>(frac: &FracOperator, factor: &CholFactor, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..factor.n()).map(|_| rng.sample(StandardNormal)).collect();
    let wt = factor.sample_from_standard(&z);
    frac.p_r.mul_vec(&wt)
}
