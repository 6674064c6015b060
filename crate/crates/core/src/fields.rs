//! Spatially varying SPDE coefficients: cosine-basis expansions of
//! `log κ`, `log σ`, `v_x`, `v_y`, the anisotropy tensor `H(v)`, the noise
//! scaling `τ(s)`, and the interpretable parameters `(ρ, a, ψ)`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Rect;

/// Index set of cosine modes `(k, l)` on a rectangle, `(0, 0)` excluded,
/// ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub rect: Rect,
    pub modes: Vec<(usize, usize)>,
}

impl BasisSpec {
    /// Full tensor grid `{0..=M} × {0..=N} \ {(0,0)}`.
    pub fn grid(m: usize, n: usize, rect: Rect) -> Self {
        let modes = (0..=m)
            .flat_map(|k| (0..=n).map(move |l| (k, l)))
            .filter(|&kl| kl != (0, 0))
            .collect();
        Self { rect, modes }
    }

    /// The `count` modes of smallest Laplacian eigenvalue (ties broken
    /// lexicographically), listed lexicographically.
    pub fn lowest(count: usize, rect: Rect) -> Self {
        let kmax = (count as f64).sqrt().ceil() as usize + 2;
        let mut all: Vec<(usize, usize)> = (0..=kmax)
            .flat_map(|k| (0..=kmax).map(move |l| (k, l)))
            .filter(|&kl| kl != (0, 0))
            .collect();
        all.sort_by(|a, b| {
            eigenvalue(*a, &rect)
                .partial_cmp(&eigenvalue(*b, &rect))
                .unwrap()
                .then(a.cmp(b))
        });
        let mut modes: Vec<_> = all.into_iter().take(count).collect();
        modes.sort();
        Self { rect, modes }
    }

    /// A basis with `count` functions: the tensor grid when `count + 1` is a
    /// perfect square, otherwise the lowest-eigenvalue modes.
    pub fn with_count(count: usize, rect: Rect) -> Self {
        let r = ((count + 1) as f64).sqrt().round() as usize;
        if r * r == count + 1 && r >= 1 {
            Self::grid(r - 1, r - 1, rect)
        } else {
            Self::lowest(count, rect)
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Normalization constant `C_kl`: 2 when both indices are non-zero, √2 otherwise.
    pub fn c_kl(k: usize, l: usize) -> f64 {
        if k > 0 && l > 0 {
            2.0
        } else {
            SQRT_2
        }
    }

    /// Laplacian eigenvalues `(πk/A)² + (πl/B)²` in mode order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|&kl| eigenvalue(kl, &self.rect)).collect()
    }

    /// `f_kl(p)` for every mode; coordinates outside the rectangle are clamped.
    pub fn eval_point(&self, p: [f64; 2]) -> Vec<f64> {
        let r = &self.rect;
        let q = r.clamp(p);
        let norm = (r.width() * r.height()).sqrt();
        let ux = (q[0] - r.x0) / r.width();
        let uy = (q[1] - r.y0) / r.height();
        self.modes
            .iter()
            .map(|&(k, l)| {
                Self::c_kl(k, l) * (k as f64 * PI * ux).cos() * (l as f64 * PI * uy).cos() / norm
            })
            .collect()
    }

    /// Row-major `points × modes` evaluation matrix.
    pub fn eval(&self, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
        points.iter().map(|&p| self.eval_point(p)).collect()
    }
}

fn eigenvalue((k, l): (usize, usize), r: &Rect) -> f64 {
    (PI * k as f64 / r.width()).powi(2) + (PI * l as f64 / r.height()).powi(2)
}

/// `basis_eval(spec, points)`.
pub fn basis_eval(spec: &BasisSpec, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
    spec.eval(points)
}

/// Stationary scalars plus basis coefficients for the four parameter fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub log_kappa0: f64,
    pub log_sigma0: f64,
    pub vx0: f64,
    pub vy0: f64,
    pub nu: f64,
    pub alpha_kappa: Vec<f64>,
    pub alpha_sigma: Vec<f64>,
    pub alpha_vx: Vec<f64>,
    pub alpha_vy: Vec<f64>,
}

impl FieldParams {
    pub fn stationary(kappa0: f64, sigma0: f64, vx0: f64, vy0: f64, nu: f64, n_basis: usize) -> Self {
        Self {
            log_kappa0: kappa0.ln(),
            log_sigma0: sigma0.ln(),
            vx0,
            vy0,
            nu,
            alpha_kappa: vec![0.0; n_basis],
            alpha_sigma: vec![0.0; n_basis],
            alpha_vx: vec![0.0; n_basis],
            alpha_vy: vec![0.0; n_basis],
        }
    }

    /// `β = (ν + 1)/2`.
    pub fn beta(&self) -> f64 {
        (self.nu + 1.0) / 2.0
    }
}

/// Parameter fields at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub kappa: f64,
    pub sigma: f64,
    pub vx: f64,
    pub vy: f64,
}

/// `field_values(params, spec, points)`.
pub fn field_values(params: &FieldParams, spec: &BasisSpec, points: &[[f64; 2]]) -> Result<Vec<FieldValue>> {
    for (name, a) in [
        ("alpha_kappa", &params.alpha_kappa),
        ("alpha_sigma", &params.alpha_sigma),
        ("alpha_vx", &params.alpha_vx),
        ("alpha_vy", &params.alpha_vy),
    ] {
        if a.len() != spec.len() {
            return Err(Error::Shape(format!("{name} has {} coefficients, basis has {}", a.len(), spec.len())));
        }
    }
    let dot = |f: &[f64], a: &[f64]| f.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
    Ok(points
        .iter()
        .map(|&p| {
            let f = spec.eval_point(p);
            FieldValue {
                kappa: (params.log_kappa0 + dot(&f, &params.alpha_kappa)).exp(),
                sigma: (params.log_sigma0 + dot(&f, &params.alpha_sigma)).exp(),
                vx: params.vx0 + dot(&f, &params.alpha_vx),
                vy: params.vy0 + dot(&f, &params.alpha_vy),
            }
        })
        .collect())
}

/// Symmetric 2×2 anisotropy tensor with unit determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisoTensor {
    pub h11: f64,
    pub h12: f64,
    pub h22: f64,
}

impl AnisoTensor {
    pub fn det(&self) -> f64 {
        self.h11 * self.h22 - self.h12 * self.h12
    }

    pub fn to_matrix(&self) -> nalgebra::Matrix2<f64> {
        nalgebra::Matrix2::new(self.h11, self.h12, self.h12, self.h22)
    }

    /// `uᵀ H w`.
    pub fn form(&self, u: [f64; 2], w: [f64; 2]) -> f64 {
        u[0] * (self.h11 * w[0] + self.h12 * w[1]) + u[1] * (self.h12 * w[0] + self.h22 * w[1])
    }
}

/// `sinh(n)/n`, series below 1e-4.
pub fn sinhc(n: f64) -> f64 {
    if n < 1e-4 {
        1.0 + n * n / 6.0
    } else {
        n.sinh() / n
    }
}

/// `(n cosh n − sinh n)/n³`, the derivative of `sinhc` divided by `n`.
fn sinhc_slope(n: f64) -> f64 {
    if n < 1e-2 {
        1.0 / 3.0 + n * n / 30.0
    } else {
        (n * n.cosh() - n.sinh()) / (n * n * n)
    }
}

/// `H(v) = cosh‖v‖ I + sinh‖v‖/‖v‖ [[v_x, v_y], [v_y, −v_x]]`.
pub fn h_from_v(vx: f64, vy: f64) -> AnisoTensor {
    let n = vx.hypot(vy);
    let (c, s) = (n.cosh(), sinhc(n));
    AnisoTensor {
        h11: c + s * vx,
        h12: s * vy,
        h22: c - s * vx,
    }
}

/// `H(v)` with partial derivatives `[d/dvx, d/dvy]` of `(h11, h12, h22)`.
pub fn h_with_jacobian(vx: f64, vy: f64) -> (AnisoTensor, [[f64; 2]; 3]) {
    let n = vx.hypot(vy);
    let s = sinhc(n);
    let g = sinhc_slope(n);
    let h = h_from_v(vx, vy);
    let j = [
        [s * vx + s + vx * vx * g, s * vy + vx * vy * g],
        [vx * vy * g, s + vy * vy * g],
        [s * vx - s - vx * vx * g, s * vy - vx * vy * g],
    ];
    (h, j)
}

/// `ln Γ(2β) − ln Γ(2β−1) = ln(2β − 1)`.
fn gamma_ratio_ln(beta: f64) -> f64 {
    (2.0 * beta - 1.0).ln()
}

/// `τ(s) = σ √(4π Γ(2β)/Γ(2β−1)) κ^{2β−1} |H|^{1/4}`.
pub fn tau(beta: f64, sigma: f64, kappa: f64, det_h: f64) -> f64 {
    (2.0 * sigma.ln() + (4.0 * PI).ln() + gamma_ratio_ln(beta) + 2.0 * (2.0 * beta - 1.0) * kappa.ln()).exp().sqrt()
        * det_h.powf(0.25)
}

/// Marginal standard deviation implied by a stationary `τ₀` (inverse of [`tau`]).
pub fn sigma_from_tau(beta: f64, tau0: f64, kappa: f64, det_h: f64) -> f64 {
    tau0 / ((4.0 * PI * (2.0 * beta - 1.0)).sqrt() * kappa.powf(2.0 * beta - 1.0) * det_h.powf(0.25))
}

/// `tau_field(params, spec, points)`.
pub fn tau_field(params: &FieldParams, spec: &BasisSpec, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    let beta = params.beta();
    Ok(field_values(params, spec, points)?
        .into_iter()
        .map(|f| tau(beta, f.sigma, f.kappa, h_from_v(f.vx, f.vy).det()))
        .collect())
}

/// Geometric-mean range, range ratio, and orientation of the local
/// iso-correlation ellipse. Under non-stationarity these are nominal local values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interpretable {
    pub rho: f64,
    pub a: f64,
    pub psi: f64,
}

/// `(κ, v) → (ρ, a, ψ)` with `ρ = √(8ν)/κ`, `a = e^{‖v‖}`, `ψ = atan2(v_y, v_x)/2`.
pub fn interpretable(nu: f64, kappa: f64, vx: f64, vy: f64) -> Interpretable {
    Interpretable {
        rho: (8.0 * nu).sqrt() / kappa,
        a: vx.hypot(vy).exp(),
        psi: if vx == 0.0 && vy == 0.0 { 0.0 } else { vy.atan2(vx) / 2.0 },
    }
}

/// `(ρ, a, ψ, ν) → (κ, v_x, v_y)`.
pub fn from_interpretable(p: Interpretable, nu: f64) -> Result<(f64, f64, f64)> {
    if !(p.a >= 1.0) {
        return Err(Error::InvalidArgument(format!("range ratio a = {} must be at least 1", p.a)));
    }
    if !(p.rho > 0.0 && nu > 0.0) {
        return Err(Error::InvalidArgument("range and smoothness must be positive".into()));
    }
    let n = p.a.ln();
    Ok(((8.0 * nu).sqrt() / p.rho, n * (2.0 * p.psi).cos(), n * (2.0 * p.psi).sin()))
}
