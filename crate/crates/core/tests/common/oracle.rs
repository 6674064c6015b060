//! Dense-arithmetic references shared by the unit and acceptance tests.

use std::f64::consts::PI;
use std::sync::Arc;

use fracspde::fem::{FemMatrices, FemStructure};
use fracspde::fields::{field_values, h_from_v, tau, BasisSpec, FieldParams};
use fracspde::inference::*;
use fracspde::mesh::{build_rect_mesh, Rect, TriMesh};
use fracspde::priors::{derive_hyper, log_prior_nonstationary, PriorConfig, PriorInputs, SpectralPenalty};
use fracspde::ratapprox::{assemble_frac, cheb_pade};
use nalgebra::{DMatrix, DVector};

use super::Lcg;

pub fn small_mesh(n_side: f64) -> Arc<TriMesh> {
    Arc::new(build_rect_mesh(Rect::new(0.0, n_side, 0.0, n_side), 0.0, 1.0).unwrap())
}

pub fn priors(tau_beta: f64) -> PriorConfig {
    let mut i = PriorInputs::with_medians(2.0, 1.0, 0.3);
    i.tau_beta = tau_beta;
    derive_hyper(&i).unwrap()
}

pub fn basis(mesh: &TriMesh) -> BasisSpec {
    BasisSpec::with_count(4, mesh.interest_rect())
}

pub fn model(mesh: Arc<TriMesh>, class: ModelClass, order: usize, obs: ObservationSet, tau_beta: f64) -> Model {
    let b = basis(&mesh);
    let pen = SpectralPenalty::new(&b, [2.0, 3.0, 4.0, 4.0]);
    let spec = ModelSpec { class, nu_fixed: 1.0, order, eps: 1e-4, basis: b };
    Model::new(spec, mesh, priors(tau_beta), Some(pen), obs).unwrap()
}

pub fn observations(mesh: &TriMesh, n: usize, seed: u64, covariates: bool, replicates: usize) -> ObservationSet {
    let r = mesh.interest_rect();
    let mut rng = Lcg::new(seed);
    let locs: Vec<[f64; 2]> = (0..n).map(|_| [rng.range(r.x0, r.x1), rng.range(r.y0, r.y1)]).collect();
    let vals: Vec<f64> = (0..n).map(|_| rng.range(-1.5, 1.5)).collect();
    let design = covariates.then(|| DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { locs[i][0] / r.x1 }));
    let reps = (0..n).map(|i| i % replicates).collect();
    ObservationSet::new(locs, vals, design, Some(reps)).unwrap()
}

pub fn random_theta(m: &Model, rng: &mut Lcg, nu: Option<f64>) -> Vec<f64> {
    let nb = m.layout.n_basis.max(basis(&m.mesh).len());
    let mut fp = FieldParams::stationary(rng.range(0.6, 1.6), rng.range(0.6, 1.5), rng.range(-0.5, 0.5), rng.range(-0.5, 0.5), nu.unwrap_or(1.0), nb);
    if m.layout.n_basis > 0 {
        for a in [&mut fp.alpha_kappa, &mut fp.alpha_sigma, &mut fp.alpha_vx, &mut fp.alpha_vy] {
            for v in a.iter_mut() {
                *v = rng.range(-0.3, 0.3);
            }
        }
    }
    m.encode(&NaturalParams { fields: fp, sigma_n2: rng.range(0.05, 0.5) }).unwrap()
}

/// Prior part of the objective, computed term by term on the natural scale.
pub fn reference_prior(m: &Model, theta: &[f64]) -> f64 {
    let p = m.decode(theta);
    let pc = &m.priors;
    let f = &p.fields;
    let nu = match m.layout.nu() {
        Some(i) => nu_from_u(theta[i], m.nu_upper()).1,
        None => f.nu,
    };
    let rho = (8.0 * f.nu).sqrt() / f.log_kappa0.exp();
    let sigma0 = f.log_sigma0.exp();
    let sigma_n = p.sigma_n2.sqrt();
    let mut total = pc.log_range(rho) + rho.ln() + pc.log_sigma(sigma0) + sigma0.ln() + pc.log_aniso(f.vx0, f.vy0);
    total += pc.log_sigma_n(sigma_n) + sigma_n.ln() - 2f64.ln();
    if let Some(i) = m.layout.nu() {
        let (_, _, d) = nu_from_u(theta[i], m.nu_upper());
        total += pc.log_nu(nu) + d.ln();
    }
    if m.layout.n_basis > 0 {
        let pen = m.penalty.as_ref().unwrap();
        total += log_prior_nonstationary([&f.alpha_kappa, &f.alpha_sigma, &f.alpha_vx, &f.alpha_vy], pen).unwrap();
    }
    total
}

pub struct DenseEval {
    pub logpost: f64,
    pub mu: Vec<DVector<f64>>,
    pub q_c: Vec<DMatrix<f64>>,
    pub marginal: f64,
}

/// Dense-arithmetic evaluation of the same objective.
pub fn dense_reference(m: &Model, theta: &[f64]) -> DenseEval {
    let p = m.decode(theta);
    let f = &p.fields;
    let beta = f.beta();
    let mesh = &m.mesh;
    let vals = field_values(f, &m.spec.basis, mesh.centroids()).unwrap();
    let kappa: Vec<f64> = vals.iter().map(|v| v.kappa).collect();
    let taus: Vec<f64> = vals.iter().map(|v| tau(beta, v.sigma, v.kappa, 1.0)).collect();
    let hs: Vec<_> = vals.iter().map(|v| h_from_v(v.vx, v.vy)).collect();
    let fem = FemMatrices::assemble(&FemStructure::new(mesh).unwrap(), &kappa, &taus, &hs).unwrap();
    let kmin = kappa.iter().cloned().fold(f64::INFINITY, f64::min);
    let frac = assemble_frac(&fem, kmin, &cheb_pade(beta, m.spec.order, m.spec.eps).unwrap()).unwrap();
    let qt = frac.q_tilde.to_dense();
    let pr = frac.p_r.to_dense();
    let nv = qt.nrows();
    let obs = &m.obs;
    let pfix = obs.design.as_ref().map_or(0, |d| d.ncols());
    let tb = m.priors.inputs.tau_beta;
    let nz = nv + pfix;
    let mut qz = DMatrix::zeros(nz, nz);
    qz.view_mut((0, 0), (nv, nv)).copy_from(&qt);
    for i in nv..nz {
        qz[(i, i)] = tb;
    }
    let s2 = p.sigma_n2;
    let ld_qz = 2.0 * qz.clone().cholesky().unwrap().l().diagonal().map(f64::ln).sum();
    let mut out = DenseEval { logpost: reference_prior(m, theta), mu: vec![], q_c: vec![], marginal: reference_prior(m, theta) };
    for rows in obs.replicate_rows() {
        let n = rows.len();
        let locs: Vec<[f64; 2]> = rows.iter().map(|&i| obs.locations[i]).collect();
        let a = mesh.projector(&locs).unwrap().to_dense();
        let mut s = DMatrix::zeros(n, nz);
        s.view_mut((0, 0), (n, nv)).copy_from(&(&a * &pr));
        if let Some(d) = &obs.design {
            for (r, &i) in rows.iter().enumerate() {
                for c in 0..pfix {
                    s[(r, nv + c)] = d[(i, c)];
                }
            }
        }
        let y = DVector::from_iterator(n, rows.iter().map(|&i| obs.values[i]));
        let qc = &qz + s.transpose() * &s / s2;
        let ch = qc.clone().cholesky().unwrap();
        let mu = ch.solve(&(s.transpose() * &y / s2));
        let ld_qc = 2.0 * ch.l().diagonal().map(f64::ln).sum();
        let r = &y - &s * &mu;
        let nf = n as f64;
        out.logpost += 0.5 * ld_qz - 0.5 * nf * s2.ln() - 0.5 * ld_qc - 0.5 * mu.dot(&(&qz * &mu)) - 0.5 * r.dot(&r) / s2
            - 0.5 * nf * (2.0 * PI).ln();
        // Marginal Gaussian density of y.
        let cov = &s * qz.clone().try_inverse().unwrap() * s.transpose() + DMatrix::identity(n, n) * s2;
        let cc = cov.cholesky().unwrap();
        let quad = y.dot(&cc.solve(&y));
        out.marginal += -0.5 * quad - cc.l().diagonal().map(f64::ln).sum() - 0.5 * nf * (2.0 * PI).ln();
        out.mu.push(mu);
        out.q_c.push(qc);
    }
    out
}

/// Richardson-extrapolated central difference.
pub fn fd_gradient(m: &Model, theta: &[f64]) -> Vec<f64> {
    let f = |t: &[f64]| m.log_posterior(t).unwrap();
    (0..theta.len())
        .map(|i| {
            let d = |h: f64| {
                let (mut a, mut b) = (theta.to_vec(), theta.to_vec());
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            };
            let h = 1e-3;
            (4.0 * d(h / 2.0) - d(h)) / 3.0
        })
        .collect()
}

/// Dense `S_P μ_C` and `diag(S_P Q_C⁻¹ S_Pᵀ)`.
pub fn dense_prediction(m: &Model, post: &Posterior, locs: &[[f64; 2]], design: Option<&DMatrix<f64>>) -> (DVector<f64>, DVector<f64>) {
    let a = m.mesh.projector(locs).unwrap().to_dense() * post.p_r.to_dense();
    let p = post.n_fixed;
    let mut s = DMatrix::zeros(locs.len(), a.ncols() + p);
    s.view_mut((0, 0), (locs.len(), a.ncols())).copy_from(&a);
    if let Some(d) = design {
        s.view_mut((0, a.ncols()), (locs.len(), p)).copy_from(d);
    }
    let rep = &post.replicates[0];
    let mean = &s * DVector::from_vec(rep.mu.clone());
    let inv = rep.q_c.to_dense().try_inverse().unwrap();
    let var = (&s * inv * s.transpose()).diagonal();
    (mean, var)
}

pub fn crps_by_quadrature(m: f64, s: f64, y: f64) -> f64 {
    let cdf = |t: f64| 0.5 * (1.0 + statrs::function::erf::erf((t - m) / (s * std::f64::consts::SQRT_2)));
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        acc * h / 3.0
    };
    let lo = m.min(y) - 12.0 * s;
    let hi = m.max(y) + 12.0 * s;
    // Split at y where the indicator jumps.
    simpson(&|t| cdf(t).powi(2), lo, y, 20_000) + simpson(&|t| (1.0 - cdf(t)).powi(2), y, hi, 20_000)
}

/// Composite Simpson rule on `[a, b]`.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Tanh-sinh quadrature on `[a, b]`; robust to endpoint singularities.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let r = (b - a) / 2.0;
    let h = 1.0 / 256.0;
    let hp = std::f64::consts::FRAC_PI_2;
    let kmax = (4.5 / h) as i64;
    let mut s = 0.0;
    for k in -kmax..=kmax {
        let t = k as f64 * h;
        let u = hp * t.sinh();
        let w = hp * t.cosh() / u.cosh().powi(2);
        // Distance to the nearer endpoint in units of r, free of cancellation.
        let d = 2.0 / (1.0 + (2.0 * u.abs()).exp());
        if d == 0.0 || w == 0.0 {
            continue;
        }
        let x = if u >= 0.0 { b - r * d } else { a + r * d };
        s += w * f(x);
    }
    s * r * h
}

/// Independent HPD width: density level set by quadrature and golden-section search.
pub fn quadrature_hpd_width(c: &PriorConfig) -> f64 {
    let nm = c.inputs.nu_max;
    let dens = |x: f64| c.log_nu(x).exp();
    let mass_above = |k: f64| simpson(|x| if dens(x) >= k { dens(x) } else { 0.0 }, 1e-12, nm - 1e-12, 200_000);
    let (mut lo, mut hi) = (0.0, (0..1000).map(|i| dens(nm * (i as f64 + 0.5) / 1000.0)).fold(0.0, f64::max));
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mass_above(mid) > 0.95 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = 0.5 * (lo + hi);
    let mode = {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (1e-9, nm - 1e-9);
        for _ in 0..200 {
            let x1 = b - g * (b - a);
            let x2 = a + g * (b - a);
            if dens(x1) > dens(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        0.5 * (a + b)
    };
    let cross = |mut a: f64, mut b: f64, rising: bool| {
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if (dens(m) >= k) == rising {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    };
    let left = if dens(1e-12) >= k { 0.0 } else { cross(1e-12, mode, true) };
    let right = if dens(nm - 1e-12) >= k { nm } else { cross(mode, nm - 1e-12, false) };
    right - left
}

