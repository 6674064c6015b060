//! Prior densities and hyperparameter derivation.
//!
//! Stationary part: PC range prior `λ_ρ ρ⁻² e^{−λ_ρ/ρ}`, exponential on
//! `σ₀`, bivariate normal on `(v_x0, v_y0)`, scaled beta on `ν`, and
//! exponential on `σ_N`. Non-stationary part: `α ~ N(0, τ⁻¹ Q_NS⁻¹)` per
//! field, with `τ` calibrated by Monte Carlo against an exceedance threshold.

use std::f64::consts::{LN_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};
use crate::fields::BasisSpec;

/// HPD coverage used for the beta prior on `ν`.
pub const HPD_MASS: f64 = 0.95;
/// Target exceedance probability for penalty calibration.
pub const EXCEEDANCE: f64 = 0.05;

/// User-facing prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorInputs {
    /// Prior median of the range `ρ₀`.
    pub c_rho: f64,
    /// Prior median of `σ₀`.
    pub c_sigma: f64,
    /// `P(a > C_a) = 0.05`.
    #[serde(default = "default_c_a")]
    pub c_a: f64,
    /// Prior mean of `ν`.
    #[serde(default = "default_c_nu")]
    pub c_nu: f64,
    /// Width of the 95% HPD interval of `ν`.
    #[serde(default = "default_c_nu_hpd")]
    pub c_nu_hpd: f64,
    #[serde(default = "default_nu_max")]
    pub nu_max: f64,
    /// Prior median of `σ_N`.
    pub c_sigma_n: f64,
    #[serde(default = "default_c_ns")]
    pub c_ns_rho: f64,
    #[serde(default = "default_c_ns")]
    pub c_ns_sigma: f64,
    #[serde(default = "default_c_ns")]
    pub c_ns_v: f64,
    /// Precision of the fixed-effect prior.
    #[serde(default = "default_tau_beta")]
    pub tau_beta: f64,
}

fn default_c_a() -> f64 {
    4.0
}
fn default_c_nu() -> f64 {
    1.0
}
fn default_c_nu_hpd() -> f64 {
    1.8
}
fn default_nu_max() -> f64 {
    2.0
}
fn default_c_ns() -> f64 {
    10.0
}
fn default_tau_beta() -> f64 {
    1e-6
}

impl PriorInputs {
    /// Defaults with the three medians supplied.
    pub fn with_medians(c_rho: f64, c_sigma: f64, c_sigma_n: f64) -> Self {
        Self {
            c_rho,
            c_sigma,
            c_a: default_c_a(),
            c_nu: default_c_nu(),
            c_nu_hpd: default_c_nu_hpd(),
            nu_max: default_nu_max(),
            c_sigma_n,
            c_ns_rho: default_c_ns(),
            c_ns_sigma: default_c_ns(),
            c_ns_v: default_c_ns(),
            tau_beta: default_tau_beta(),
        }
    }
}

/// Inputs plus derived hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub inputs: PriorInputs,
    pub lambda_rho: f64,
    pub lambda_sigma: f64,
    pub lambda_sigma_n: f64,
    pub sigma_v: f64,
    /// Beta shape parameters for `ν/ν_max`.
    pub p: f64,
    pub q: f64,
}

/// `derive_hyper(inputs)`.
pub fn derive_hyper(inputs: &PriorInputs) -> Result<PriorConfig> {
    let i = inputs;
    for (name, v) in [
        ("c_rho", i.c_rho),
        ("c_sigma", i.c_sigma),
        ("c_sigma_n", i.c_sigma_n),
        ("nu_max", i.nu_max),
        ("c_nu_hpd", i.c_nu_hpd),
        ("tau_beta", i.tau_beta),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Prior(format!("{name} = {v} must be positive")));
        }
    }
    if !(i.c_a > 1.0) {
        return Err(Error::Prior(format!("c_a = {} must exceed 1", i.c_a)));
    }
    if !(i.c_nu > 0.0 && i.c_nu < i.nu_max) {
        return Err(Error::Prior(format!("c_nu = {} must lie in (0, nu_max = {})", i.c_nu, i.nu_max)));
    }
    for (name, v) in [("c_ns_rho", i.c_ns_rho), ("c_ns_sigma", i.c_ns_sigma), ("c_ns_v", i.c_ns_v)] {
        if !(v > 1.0) {
            return Err(Error::Prior(format!("{name} = {v} must exceed 1")));
        }
    }
    let (p, q) = beta_from_mean_hpd(i.c_nu / i.nu_max, i.c_nu_hpd / i.nu_max)?;
    Ok(PriorConfig {
        inputs: i.clone(),
        lambda_rho: i.c_rho * LN_2,
        lambda_sigma: LN_2 / i.c_sigma,
        lambda_sigma_n: LN_2 / i.c_sigma_n,
        sigma_v: sigma_v_from_c_a(i.c_a),
        p,
        q,
    })
}

/// `σ_v` with `P(exp‖v‖ > C_a) = 0.05` for `v ~ N(0, σ_v² I)`.
pub fn sigma_v_from_c_a(c_a: f64) -> f64 {
    c_a.ln() / (2.0 * (1.0 / EXCEEDANCE).ln()).sqrt()
}

/// Inverse of the regularized incomplete beta function by bisection.
pub fn beta_quantile(p: f64, q: f64, prob: f64) -> f64 {
    if prob <= 0.0 {
        return 0.0;
    }
    if prob >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(p, q, mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Width and lower end of the shortest interval with mass [`HPD_MASS`].
pub fn beta_hpd(p: f64, q: f64) -> (f64, f64) {
    let width = |t: f64| beta_quantile(p, q, t + HPD_MASS) - beta_quantile(p, q, t);
    let (mut a, mut b) = (0.0, 1.0 - HPD_MASS);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (width(x1), width(x2));
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = width(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = width(x2);
        }
        if b - a < 1e-13 {
            break;
        }
    }
    let mut best = (f1.min(f2), if f1 < f2 { x1 } else { x2 });
    for t in [0.0, 1.0 - HPD_MASS] {
        let w = width(t);
        if w < best.0 {
            best = (w, t);
        }
    }
    (best.0, beta_quantile(p, q, best.1))
}

/// Beta shapes with mean `m` and 95% HPD width `w` on the unit interval.
///
/// The search keeps both shapes at least 1 so the density is unimodal and
/// the HPD set is an interval.
pub fn beta_from_mean_hpd(m: f64, w: f64) -> Result<(f64, f64)> {
    let shapes = |s: f64| (m * s, (1.0 - m) * s);
    let s_min = 1.0 / m.min(1.0 - m);
    let s_max = 1e7;
    let w_max = {
        let (p, q) = shapes(s_min);
        beta_hpd(p, q).0
    };
    let w_min = {
        let (p, q) = shapes(s_max);
        beta_hpd(p, q).0
    };
    if !(w < w_max && w > w_min) {
        return Err(Error::Prior(format!(
            "HPD width {w} (relative to nu_max) outside the feasible range ({w_min:.3e}, {w_max:.6})"
        )));
    }
    let (mut lo, mut hi) = (s_min.ln(), s_max.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (p, q) = shapes(mid.exp());
        if beta_hpd(p, q).0 > w {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(shapes((0.5 * (lo + hi)).exp()))
}

impl PriorConfig {
    /// `log π(ρ)` for the PC range prior.
    pub fn log_range(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.lambda_rho.ln() - 2.0 * rho.ln() - self.lambda_rho / rho
    }

    /// `log π(σ₀)`.
    pub fn log_sigma(&self, sigma: f64) -> f64 {
        exp_log_density(self.lambda_sigma, sigma)
    }

    /// `log π(σ_N)`.
    pub fn log_sigma_n(&self, sigma_n: f64) -> f64 {
        exp_log_density(self.lambda_sigma_n, sigma_n)
    }

    /// `log π(v_x0, v_y0)`; uniform orientation is implied.
    pub fn log_aniso(&self, vx: f64, vy: f64) -> f64 {
        let s2 = self.sigma_v * self.sigma_v;
        -(2.0 * PI * s2).ln() - (vx * vx + vy * vy) / (2.0 * s2)
    }

    /// `log π(a)` on `a ≥ 1`.
    pub fn log_a(&self, a: f64) -> f64 {
        if a <= 1.0 {
            return f64::NEG_INFINITY;
        }
        let la = a.ln();
        let s2 = self.sigma_v * self.sigma_v;
        -s2.ln() + la.ln() - la - la * la / (2.0 * s2)
    }

    /// `log π(ν)`; `−∞` outside `(0, ν_max)`.
    pub fn log_nu(&self, nu: f64) -> f64 {
        let nm = self.inputs.nu_max;
        if !(nu > 0.0 && nu < nm) {
            return f64::NEG_INFINITY;
        }
        let x = nu / nm;
        (self.p - 1.0) * x.ln() + (self.q - 1.0) * (1.0 - x).ln() - ln_beta(self.p, self.q) - nm.ln()
    }
}

fn exp_log_density(rate: f64, x: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    rate.ln() - rate * x
}

/// Penalty precisions for the non-stationary coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPenalty {
    /// Diagonal of `Q_NS`, ordered as the basis modes.
    pub q_ns: Vec<f64>,
    /// `(τ_κ, τ_σ, τ_vx, τ_vy)`.
    pub tau: [f64; 4],
}

impl SpectralPenalty {
    pub fn new(spec: &BasisSpec, tau: [f64; 4]) -> Self {
        Self { q_ns: q_ns(spec), tau }
    }

    /// Gaussian log-density of one coefficient vector with precision `τ Q_NS`.
    pub fn log_density(&self, alpha: &[f64], tau: f64) -> Result<f64> {
        if alpha.len() != self.q_ns.len() {
            return Err(Error::Shape(format!("{} coefficients for {} modes", alpha.len(), self.q_ns.len())));
        }
        let e = alpha.len() as f64;
        let logdet: f64 = self.q_ns.iter().map(|q| q.ln()).sum::<f64>() + e * tau.ln();
        let quad: f64 = alpha.iter().zip(&self.q_ns).map(|(a, q)| q * a * a).sum::<f64>() * tau;
        Ok(0.5 * logdet - 0.5 * e * (2.0 * PI).ln() - 0.5 * quad)
    }
}

/// `Q_NS` diagonal `[(πk/A)² + (πl/B)²]²`.
pub fn q_ns(spec: &BasisSpec) -> Vec<f64> {
    spec.eigenvalues().into_iter().map(|e| e * e).collect()
}

/// `log_prior_nonstationary([α_κ, α_σ, α_vx, α_vy], penalty)`.
pub fn log_prior_nonstationary(alpha: [&[f64]; 4], penalty: &SpectralPenalty) -> Result<f64> {
    let mut total = 0.0;
    for (a, &t) in alpha.iter().zip(&penalty.tau) {
        total += penalty.log_density(a, t)?;
    }
    Ok(total)
}

/// Which field a penalty is calibrated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyTarget {
    Range,
    Sigma,
    Anisotropy,
}

/// Monte-Carlo settings for penalty calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub grid: usize,
    pub n_mc: usize,
    pub log_tau_lo: f64,
    pub log_tau_hi: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { grid: 25, n_mc: 2000, log_tau_lo: -20.0, log_tau_hi: 20.0 }
    }
}

/// Per-draw maximum over the grid of the exceedance statistic at `τ = 1`.
///
/// Every statistic scales as `τ^{-1/2}`, so one set of draws serves all `τ`.
pub fn unit_tau_maxima(target: PenaltyTarget, spec: &BasisSpec, grid: usize, n_mc: usize, seed: u64) -> Vec<f64> {
    let r = spec.rect;
    let pts: Vec<[f64; 2]> = (0..grid)
        .flat_map(|i| {
            (0..grid).map(move |j| {
                let t = |k: usize| if grid == 1 { 0.5 } else { k as f64 / (grid - 1) as f64 };
                [r.x0 + t(i) * r.width(), r.y0 + t(j) * r.height()]
            })
        })
        .collect();
    let scale: Vec<f64> = q_ns(spec).into_iter().map(|q| 1.0 / q.sqrt()).collect();
    let basis: Vec<Vec<f64>> = pts
        .iter()
        .map(|&p| spec.eval_point(p).into_iter().zip(&scale).map(|(f, s)| f * s).collect())
        .collect();
    let n_fields = if target == PenaltyTarget::Anisotropy { 2 } else { 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..n_mc)
        .map(|_| (0..n_fields * spec.len()).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let e = spec.len();
    draws
        .par_iter()
        .map(|z| {
            basis
                .iter()
                .map(|f| {
                    let s: f64 = (0..n_fields)
                        .map(|c| {
                            let v: f64 = f.iter().zip(&z[c * e..(c + 1) * e]).map(|(a, b)| a * b).sum();
                            v * v
                        })
                        .sum();
                    s.sqrt()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Fraction of draws whose statistic exceeds `log C_NS` at penalty `τ`.
pub fn exceedance(maxima: &[f64], tau: f64, c_ns: f64) -> f64 {
    let thr = c_ns.ln() * tau.sqrt();
    maxima.iter().filter(|&&m| m > thr).count() as f64 / maxima.len() as f64
}

/// `calibrate_penalty`: bisection on `log τ` for exceedance `0.05`.
pub fn calibrate_penalty(
    target: PenaltyTarget,
    c_ns: f64,
    spec: &BasisSpec,
    settings: CalibrationSettings,
    seed: u64,
) -> Result<f64> {
    if !(c_ns > 1.0) {
        return Err(Error::Prior(format!("threshold {c_ns} must exceed 1")));
    }
    if settings.n_mc < 1000 {
        return Err(Error::Prior(format!("n_mc = {} below 1000", settings.n_mc)));
    }
    if spec.is_empty() {
        return Err(Error::Prior("empty basis".into()));
    }
    let maxima = unit_tau_maxima(target, spec, settings.grid, settings.n_mc, seed);
    let p = |lt: f64| exceedance(&maxima, lt.exp(), c_ns);
    let (mut lo, mut hi) = (settings.log_tau_lo, settings.log_tau_hi);
    let ok = |v: f64| (EXCEEDANCE - 0.005..=EXCEEDANCE + 0.005).contains(&v);
    if p(lo) <= EXCEEDANCE + 0.005 {
        return Ok(lo.exp());
    }
    if p(hi) > EXCEEDANCE + 0.005 {
        return Err(Error::Prior(format!(
            "penalty bracket [{lo}, {hi}] on log τ does not reach exceedance {EXCEEDANCE}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let pm = p(mid);
        if ok(pm) && (hi - lo) < 1e-6 {
            return Ok(mid.exp());
        }
        if pm > EXCEEDANCE {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    if ok(p(mid)) || ok(p(hi)) {
        return Ok(if ok(p(mid)) { mid.exp() } else { hi.exp() });
    }
    Err(Error::Prior(format!("penalty bisection did not converge for threshold {c_ns}")))
}

/// Calibrates all four penalties; `τ_vx = τ_vy`.
pub fn calibrate_all(inputs: &PriorInputs, spec: &BasisSpec, settings: CalibrationSettings, seed: u64) -> Result<SpectralPenalty> {
    let t_k = calibrate_penalty(PenaltyTarget::Range, inputs.c_ns_rho, spec, settings, seed)?;
    let t_s = calibrate_penalty(PenaltyTarget::Sigma, inputs.c_ns_sigma, spec, settings, seed.wrapping_add(1))?;
    let t_v = calibrate_penalty(PenaltyTarget::Anisotropy, inputs.c_ns_v, spec, settings, seed.wrapping_add(2))?;
    Ok(SpectralPenalty::new(spec, [t_k, t_s, t_v, t_v]))
}
