//! Penalized log-posterior of the latent Gaussian model, its gradient
//! through the tape, conditional moments, and MAP estimation.
//!
//! Parameter vector (unconstrained):
//! `[log κ₀, log σ₀, v_x0, v_y0, (u_ν), log σ_N², α_κ, α_σ, α_vx, α_vy]`,
//! where `u_ν` is present only when `ν` is estimated and the `α` blocks only
//! for non-stationary models. `ν = ν_up · sigmoid(u_ν)` with
//! `ν_up = min(ν_max, 3)`.

mod adam;
mod observations;

pub use adam::{fit_map, AdamConfig, FitResult, TraceRow};
pub use observations::ObservationSet;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Coef, NodeId, SymbolicCache, Tape};
use crate::error::{Error, Result};
use crate::fem::FemStructure;
use crate::fields::{h_with_jacobian, BasisSpec, FieldParams};
use crate::mesh::TriMesh;
use crate::priors::{PriorConfig, SpectralPenalty};
use crate::ratapprox::{cheb_pade, frac_on_tape, FracInputs, RationalCoeffs};
use crate::sparse::{CholFactor, CscMatrix};

/// Half-width of the band around integers that `ν` is pushed out of.
pub const INTEGER_CLAMP: f64 = 1e-3;
/// Upper limit of the smoothness supported by the rational path.
pub const NU_CEILING: f64 = 3.0;

/// Model classes: fixed (`ν = 1`) or estimated smoothness, stationary or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelClass {
    #[serde(rename = "nf-s")]
    NfS,
    #[serde(rename = "nf-ns")]
    NfNs,
    #[serde(rename = "f-s")]
    FS,
    #[serde(rename = "f-ns")]
    FNs,
}

impl ModelClass {
    pub fn estimates_nu(self) -> bool {
        matches!(self, ModelClass::FS | ModelClass::FNs)
    }

    pub fn nonstationary(self) -> bool {
        matches!(self, ModelClass::NfNs | ModelClass::FNs)
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelClass::NfS => "NF-S",
            ModelClass::NfNs => "NF-NS",
            ModelClass::FS => "F-S",
            ModelClass::FNs => "F-NS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nf-s" => Some(ModelClass::NfS),
            "nf-ns" => Some(ModelClass::NfNs),
            "f-s" => Some(ModelClass::FS),
            "f-ns" => Some(ModelClass::FNs),
            _ => None,
        }
    }
}

/// Structure of a model independent of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub class: ModelClass,
    /// Smoothness used when it is not estimated.
    pub nu_fixed: f64,
    /// Rational approximation order.
    pub order: usize,
    /// Lower end of the rational fit interval.
    pub eps: f64,
    /// Basis for the non-stationary fields (ignored for stationary classes).
    pub basis: BasisSpec,
}

/// Index map of the unconstrained parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub estimate_nu: bool,
    pub n_basis: usize,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        Self {
            estimate_nu: spec.class.estimates_nu(),
            n_basis: if spec.class.nonstationary() { spec.basis.len() } else { 0 },
        }
    }

    pub fn nu(&self) -> Option<usize> {
        self.estimate_nu.then_some(4)
    }

    pub fn log_sigma_n2(&self) -> usize {
        4 + usize::from(self.estimate_nu)
    }

    /// Start of coefficient block `f` (0 = κ, 1 = σ, 2 = v_x, 3 = v_y).
    pub fn alpha(&self, f: usize) -> usize {
        self.log_sigma_n2() + 1 + f * self.n_basis
    }

    pub fn len(&self) -> usize {
        self.alpha(4)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Column names for traces and tables.
    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["log_kappa0", "log_sigma0", "vx0", "vy0"].iter().map(|s| s.to_string()).collect();
        if self.estimate_nu {
            v.push("u_nu".into());
        }
        v.push("log_sigma_n2".into());
        for f in ["kappa", "sigma", "vx", "vy"] {
            v.extend((0..self.n_basis).map(|i| format!("alpha_{f}_{i}")));
        }
        v
    }
}

/// `ν = ν_up · sigmoid(u)` pushed out of the integer band; also returns the
/// unclamped value and `dν/du` of the unclamped map.
pub fn nu_from_u(u: f64, nu_up: f64) -> (f64, f64, f64) {
    let s = 1.0 / (1.0 + (-u).exp());
    let raw = nu_up * s;
    let d = nu_up * s * (1.0 - s);
    let r = raw.round();
    let nu = if r >= 1.0 && (raw - r).abs() < INTEGER_CLAMP {
        if raw >= r {
            r + INTEGER_CLAMP
        } else {
            r - INTEGER_CLAMP
        }
    } else {
        raw
    };
    (nu, raw, d)
}

/// Inverse of the unclamped map.
pub fn u_from_nu(nu: f64, nu_up: f64) -> f64 {
    let s = nu / nu_up;
    (s / (1.0 - s)).ln()
}

/// Natural-scale view of an unconstrained parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    pub fields: FieldParams,
    pub sigma_n2: f64,
}

/// A model bound to a mesh, priors, and observations.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub layout: ParamLayout,
    pub mesh: Arc<TriMesh>,
    pub fem: Arc<FemStructure>,
    pub priors: PriorConfig,
    pub penalty: Option<SpectralPenalty>,
    pub obs: ObservationSet,
    nu_up: f64,
    /// `T × |E|` basis values at centroids.
    basis_c: Option<Arc<CscMatrix>>,
    groups: Vec<Group>,
    cache: Arc<SymbolicCache>,
    c_diag: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Group {
    a: CscMatrix,
    x: Option<CscMatrix>,
    y: Vec<f64>,
}

/// Tape nodes of one recorded evaluation.
#[derive(Debug, Clone)]
pub struct Recorded {
    pub theta: NodeId,
    pub output: NodeId,
    pub p_r: NodeId,
    pub q_tilde: NodeId,
    /// Per replicate: `(μ_C, Q_C)`.
    pub conditional: Vec<(NodeId, NodeId)>,
    pub coeffs: RationalCoeffs,
}

impl Model {
    pub fn new(
        spec: ModelSpec,
        mesh: Arc<TriMesh>,
        priors: PriorConfig,
        penalty: Option<SpectralPenalty>,
        obs: ObservationSet,
    ) -> Result<Self> {
        let layout = ParamLayout::new(&spec);
        if spec.class.nonstationary() {
            let pen = penalty
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("non-stationary model needs a spectral penalty".into()))?;
            if pen.q_ns.len() != spec.basis.len() {
                return Err(Error::Shape(format!("penalty has {} modes, basis {}", pen.q_ns.len(), spec.basis.len())));
            }
        }
        if spec.order < 1 {
            return Err(Error::InvalidArgument("rational order must be at least 1".into()));
        }
        let fem = Arc::new(FemStructure::new(&mesh)?);
        let basis_c = if spec.class.nonstationary() {
            let mut t = Vec::new();
            for (r, &p) in mesh.centroids().iter().enumerate() {
                for (c, v) in spec.basis.eval_point(p).into_iter().enumerate() {
                    if v != 0.0 {
                        t.push((r, c, v));
                    }
                }
            }
            Some(Arc::new(CscMatrix::from_triplets(mesh.n_triangles(), spec.basis.len(), &t)?))
        } else {
            None
        };
        let mut groups = Vec::new();
        for rows in obs.replicate_rows() {
            let locs: Vec<[f64; 2]> = rows.iter().map(|&i| obs.locations[i]).collect();
            let a = mesh.projector(&locs)?;
            let x = obs.design.as_ref().map(|d| {
                let mut t = Vec::new();
                for (r, &i) in rows.iter().enumerate() {
                    for c in 0..d.ncols() {
                        t.push((r, c, d[(i, c)]));
                    }
                }
                CscMatrix::from_triplets(rows.len(), d.ncols(), &t)
            });
            let x = x.transpose()?;
            groups.push(Group { a, x, y: rows.iter().map(|&i| obs.values[i]).collect() });
        }
        let c_diag = fem.lumped(&vec![1.0; mesh.n_triangles()])?;
        let nu_up = priors.inputs.nu_max.min(NU_CEILING);
        Ok(Self {
            spec,
            layout,
            mesh,
            fem,
            priors,
            penalty,
            obs,
            nu_up,
            basis_c,
            groups,
            cache: Arc::new(SymbolicCache::default()),
            c_diag,
        })
    }

    pub fn nu_upper(&self) -> f64 {
        self.nu_up
    }

    pub fn n_replicates(&self) -> usize {
        self.groups.len()
    }

    /// Model smoothness for a parameter vector.
    pub fn nu(&self, theta: &[f64]) -> f64 {
        match self.layout.nu() {
            Some(i) => nu_from_u(theta[i], self.nu_up).0,
            None => self.spec.nu_fixed,
        }
    }

    /// Unconstrained vector from natural parameters.
    pub fn encode(&self, p: &NaturalParams) -> Result<Vec<f64>> {
        let l = &self.layout;
        let mut t = vec![p.fields.log_kappa0, p.fields.log_sigma0, p.fields.vx0, p.fields.vy0];
        if l.estimate_nu {
            if !(p.fields.nu > 0.0 && p.fields.nu < self.nu_up) {
                return Err(Error::InvalidArgument(format!("ν = {} outside (0, {})", p.fields.nu, self.nu_up)));
            }
            t.push(u_from_nu(p.fields.nu, self.nu_up));
        }
        t.push(p.sigma_n2.ln());
        for a in [&p.fields.alpha_kappa, &p.fields.alpha_sigma, &p.fields.alpha_vx, &p.fields.alpha_vy] {
            if l.n_basis > 0 {
                if a.len() != l.n_basis {
                    return Err(Error::Shape(format!("{} coefficients for {} basis functions", a.len(), l.n_basis)));
                }
                t.extend_from_slice(a);
            }
        }
        Ok(t)
    }

    /// Natural parameters from an unconstrained vector.
    pub fn decode(&self, theta: &[f64]) -> NaturalParams {
        let l = &self.layout;
        let nb = self.spec.basis.len();
        let block = |f: usize| {
            if l.n_basis > 0 {
                theta[l.alpha(f)..l.alpha(f) + l.n_basis].to_vec()
            } else {
                vec![0.0; nb]
            }
        };
        NaturalParams {
            fields: FieldParams {
                log_kappa0: theta[0],
                log_sigma0: theta[1],
                vx0: theta[2],
                vy0: theta[3],
                nu: self.nu(theta),
                alpha_kappa: block(0),
                alpha_sigma: block(1),
                alpha_vx: block(2),
                alpha_vy: block(3),
            },
            sigma_n2: theta[l.log_sigma_n2()].exp(),
        }
    }

    fn field_vector(&self, tape: &mut Tape, theta: NodeId, base: usize, f: usize, zeros: NodeId) -> NodeId {
        let b = tape.index(theta, base);
        match &self.basis_c {
            Some(bc) => {
                let idx = self.layout.alpha(f);
                let parts: Vec<NodeId> = (idx..idx + self.layout.n_basis).map(|i| tape.index(theta, i)).collect();
                let alpha = tape.concat(&parts);
                let v = tape.mat_vec_const(bc.clone(), alpha);
                tape.add(v, b)
            }
            None => tape.add(zeros, b),
        }
    }

    /// Records the log-posterior on a fresh tape.
    pub fn record(&self, theta: &[f64]) -> Result<(Tape, Recorded)> {
        if theta.len() != self.layout.len() {
            return Err(Error::Shape(format!("{} parameters, model expects {}", theta.len(), self.layout.len())));
        }
        let mut tape = Tape::with_cache(self.cache.clone());
        let th = tape.var_vector(theta.to_vec());
        let rec = self.record_on(&mut tape, th, theta).map_err(|e| Error::Evaluation {
            params: theta.to_vec(),
            source: Box::new(e),
        })?;
        Ok((tape, rec))
    }

    fn record_on(&self, tape: &mut Tape, th: NodeId, theta: &[f64]) -> Result<Recorded> {
        let l = self.layout;
        let nt = self.mesh.n_triangles();
        let zeros = tape.const_vector(vec![0.0; nt]);

        // Smoothness.
        let (nu, nu_raw, dnu) = match l.nu() {
            Some(i) => nu_from_u(theta[i], self.nu_up),
            None => (self.spec.nu_fixed, self.spec.nu_fixed, 0.0),
        };
        let beta_v = (nu + 1.0) / 2.0;
        let nu_node = match l.nu() {
            Some(i) => {
                let u = tape.index(th, i);
                let clamped = nu != nu_raw;
                tape.local(&[u], vec![nu], vec![vec![if clamped { 0.0 } else { dnu }]], true)
            }
            None => tape.const_scalar(nu),
        };
        let beta = tape.add_const(nu_node, 1.0);
        let beta = tape.scale(beta, 0.5);
        let coeffs = cheb_pade(beta_v, self.spec.order, self.spec.eps)?;

        // Coefficient fields at centroids.
        let log_kappa = self.field_vector(tape, th, 0, 0, zeros);
        let log_sigma = self.field_vector(tape, th, 1, 1, zeros);
        let vx = self.field_vector(tape, th, 2, 2, zeros);
        let vy = self.field_vector(tape, th, 3, 3, zeros);
        let kappa = tape.exp(log_kappa);

        let (vxv, vyv) = (tape.vector(vx).to_vec(), tape.vector(vy).to_vec());
        let mut comps = [
            (Vec::with_capacity(nt), Vec::with_capacity(nt), Vec::with_capacity(nt)),
            (Vec::with_capacity(nt), Vec::with_capacity(nt), Vec::with_capacity(nt)),
            (Vec::with_capacity(nt), Vec::with_capacity(nt), Vec::with_capacity(nt)),
        ];
        for t in 0..nt {
            let (h, j) = h_with_jacobian(vxv[t], vyv[t]);
            for (c, val) in [h.h11, h.h12, h.h22].into_iter().enumerate() {
                comps[c].0.push(val);
                comps[c].1.push(j[c][0]);
                comps[c].2.push(j[c][1]);
            }
        }
        let hs: Vec<NodeId> = comps
            .into_iter()
            .map(|(v, dx, dy)| tape.local(&[vx, vy], v, vec![dx, dy], false))
            .collect();
        let hcat = tape.concat(&hs);
        let g = tape.sparse_linear(self.fem.stiffness_map.clone(), hcat);

        // τ² = σ² 4π (2β−1) κ^{2(2β−1)}.
        let e = tape.scale(beta, 2.0);
        let e = tape.add_const(e, -1.0);
        let ln_e = tape.ln(e);
        let two_e = tape.scale(e, 2.0);
        let kap_term = tape.mul(log_kappa, two_e);
        let sig_term = tape.scale(log_sigma, 2.0);
        let lt2 = tape.add(kap_term, sig_term);
        let lt2 = tape.add(lt2, ln_e);
        let lt2 = tape.add_const(lt2, (4.0 * PI).ln());
        let t2 = tape.exp(lt2);

        let mass = self.fem.mass_map.clone();
        let k2 = tape.square(kappa);
        let c_k2 = tape.mat_vec_const(mass.clone(), k2);
        let c_t2 = tape.mat_vec_const(mass, t2);
        let dk2 = tape.sp_diag(c_k2);
        let lop = tape.sp_lincomb(&[(Coef::Const(1.0), dk2), (Coef::Const(1.0), g)]);
        let c_inv = tape.const_vector(self.c_diag.iter().map(|c| 1.0 / c).collect());
        let c_sq = tape.const_vector(self.c_diag.iter().map(|c| c * c).collect());
        let weight = tape.div(c_sq, c_t2);
        let kappa_min = tape.min(kappa);
        let frac = frac_on_tape(tape, FracInputs { l: lop, c_inv, weight, kappa_min, beta }, &coeffs);

        // Likelihood.
        let lsn2 = tape.index(th, l.log_sigma_n2());
        let neg = tape.scale(lsn2, -1.0);
        let inv_s2 = tape.exp(neg);
        let p_fixed = self.obs.design.as_ref().map_or(0, |d| d.ncols());
        let q_z = if p_fixed > 0 {
            let tb = tape.const_sparse(CscMatrix::identity(p_fixed).scale(self.priors.inputs.tau_beta));
            tape.sp_blockdiag(frac.q_tilde, tb)
        } else {
            frac.q_tilde
        };
        let mut terms: Vec<NodeId> = Vec::new();
        let mut conditional = Vec::new();
        if !self.groups.is_empty() {
            let ld_qz = tape.logdet(q_z)?;
            for grp in &self.groups {
                let n = grp.y.len() as f64;
                let a = tape.const_sparse(grp.a.clone());
                let ap = tape.sp_matmul(a, frac.p_r);
                let s = match &grp.x {
                    Some(x) => {
                        let xn = tape.const_sparse(x.clone());
                        tape.sp_hstack(ap, xn)
                    }
                    None => ap,
                };
                let st = tape.sp_transpose(s);
                let sts = tape.sp_matmul(st, s);
                let q_c = tape.sp_lincomb(&[(Coef::Const(1.0), q_z), (Coef::Node(inv_s2), sts)]);
                let y = tape.const_vector(grp.y.clone());
                let sty = tape.sp_matvec(st, y);
                let rhs = tape.mul(sty, inv_s2);
                let mu = tape.solve(q_c, rhs)?;
                let ld_qc = tape.logdet(q_c)?;
                let qmu = tape.sp_matvec(q_z, mu);
                let quad_z = tape.dot(mu, qmu);
                let smu = tape.sp_matvec(s, mu);
                let resid = tape.sub(y, smu);
                let rss = tape.dot(resid, resid);
                let rss = tape.mul(rss, inv_s2);
                // ½ ld_qz − ½ ld_qc − ½ quad − ½ rss − (n/2) lsn2 − (n/2) ln 2π
                let mut acc = tape.sub(ld_qz, ld_qc);
                acc = tape.sub(acc, quad_z);
                acc = tape.sub(acc, rss);
                let nl = tape.scale(lsn2, n);
                acc = tape.sub(acc, nl);
                acc = tape.scale(acc, 0.5);
                acc = tape.add_const(acc, -0.5 * n * (2.0 * PI).ln());
                terms.push(acc);
                conditional.push((mu, q_c));
            }
        }

        // Priors with change of variables to the unconstrained scale.
        let pc = &self.priors;
        let lk0 = tape.index(th, 0);
        let ls0 = tape.index(th, 1);
        let vx0 = tape.index(th, 2);
        let vy0 = tape.index(th, 3);
        // log ρ = ½ log(8ν) − log κ₀; Jacobian |∂ρ/∂log κ₀| = ρ.
        let ln_nu = tape.ln(nu_node);
        let lrho = tape.scale(ln_nu, 0.5);
        let lrho = tape.add_const(lrho, 0.5 * 8f64.ln());
        let lrho = tape.sub(lrho, lk0);
        let nlrho = tape.scale(lrho, -1.0);
        let inv_rho = tape.exp(nlrho);
        let pr_rho = tape.scale(inv_rho, -pc.lambda_rho);
        let pr_rho = tape.sub(pr_rho, lrho);
        let pr_rho = tape.add_const(pr_rho, pc.lambda_rho.ln());
        terms.push(pr_rho);
        let sigma0 = tape.exp(ls0);
        let pr_sig = tape.scale(sigma0, -pc.lambda_sigma);
        let pr_sig = tape.add(pr_sig, ls0);
        let pr_sig = tape.add_const(pr_sig, pc.lambda_sigma.ln());
        terms.push(pr_sig);
        let s2v = pc.sigma_v * pc.sigma_v;
        let vx2 = tape.square(vx0);
        let vy2 = tape.square(vy0);
        let v2 = tape.add(vx2, vy2);
        let pr_v = tape.scale(v2, -0.5 / s2v);
        let pr_v = tape.add_const(pr_v, -(2.0 * PI * s2v).ln());
        terms.push(pr_v);
        if let Some(i) = l.nu() {
            let lp = pc.log_nu(nu_raw) + dnu.ln();
            let u = theta[i];
            // d/du of log π(ν(u)) + log ν'(u), analytically.
            let nm = pc.inputs.nu_max;
            let x = nu_raw / nm;
            let dlogpi = ((pc.p - 1.0) / x - (pc.q - 1.0) / (1.0 - x)) / nm;
            let s = 1.0 / (1.0 + (-u).exp());
            let dterm = dlogpi * dnu + (1.0 - 2.0 * s);
            let un = tape.index(th, i);
            terms.push(tape.local(&[un], vec![lp], vec![vec![dterm]], true));
        }
        let half = tape.scale(lsn2, 0.5);
        let sigma_n = tape.exp(half);
        let pr_n = tape.scale(sigma_n, -pc.lambda_sigma_n);
        let pr_n = tape.add(pr_n, half);
        let pr_n = tape.add_const(pr_n, pc.lambda_sigma_n.ln() - 2f64.ln());
        terms.push(pr_n);
        if let Some(pen) = &self.penalty {
            if l.n_basis > 0 {
                let q = tape.const_vector(pen.q_ns.clone());
                let e = l.n_basis as f64;
                let base: f64 = 0.5 * pen.q_ns.iter().map(|v| v.ln()).sum::<f64>() - 0.5 * e * (2.0 * PI).ln();
                for f in 0..4 {
                    let idx = l.alpha(f);
                    let parts: Vec<NodeId> = (idx..idx + l.n_basis).map(|i| tape.index(th, i)).collect();
                    let alpha = tape.concat(&parts);
                    let qa = tape.mul(q, alpha);
                    let quad = tape.dot(alpha, qa);
                    let t = pen.tau[f];
                    let term = tape.scale(quad, -0.5 * t);
                    terms.push(tape.add_const(term, base + 0.5 * e * t.ln()));
                }
            }
        }
        let all = tape.concat(&terms);
        let output = tape.sum(all);
        Ok(Recorded { theta: th, output, p_r: frac.p_r, q_tilde: frac.q_tilde, conditional, coeffs })
    }

    /// Log-posterior value.
    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        let (tape, rec) = self.record(theta)?;
        Ok(tape.scalar(rec.output))
    }

    /// Log-posterior value and gradient with respect to `theta`.
    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (tape, rec) = self.record(theta)?;
        let g = tape.gradient(rec.output, &[rec.theta]).map_err(|e| Error::Evaluation {
            params: theta.to_vec(),
            source: Box::new(e),
        })?;
        Ok((tape.scalar(rec.output), g))
    }

    /// Conditional moments per replicate.
    pub fn conditional_moments(&self, theta: &[f64]) -> Result<Posterior> {
        let (mut tape, rec) = self.record(theta)?;
        let mut reps = Vec::with_capacity(rec.conditional.len());
        for &(mu, qc) in &rec.conditional {
            let f = tape.factor(qc)?;
            reps.push(ReplicatePosterior { mu: tape.vector(mu).to_vec(), q_c: tape.sparse(qc).clone(), factor: f });
        }
        let q_tilde = tape.sparse(rec.q_tilde).clone();
        let prior_factor = tape.factor(rec.q_tilde)?;
        Ok(Posterior {
            theta: theta.to_vec(),
            p_r: tape.sparse(rec.p_r).clone(),
            q_tilde,
            prior_factor,
            replicates: reps,
            sigma_n2: theta[self.layout.log_sigma_n2()].exp(),
            n_fixed: self.obs.design.as_ref().map_or(0, |d| d.ncols()),
            tau_beta: self.priors.inputs.tau_beta,
            log_posterior: tape.scalar(rec.output),
        })
    }
}

/// Gaussian conditional moments of `z = (w̃, β)` for one replicate.
#[derive(Debug, Clone)]
pub struct ReplicatePosterior {
    pub mu: Vec<f64>,
    pub q_c: CscMatrix,
    pub factor: Arc<CholFactor>,
}

/// Conditional moments at fixed parameters.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub theta: Vec<f64>,
    pub p_r: CscMatrix,
    pub q_tilde: CscMatrix,
    pub prior_factor: Arc<CholFactor>,
    pub replicates: Vec<ReplicatePosterior>,
    pub sigma_n2: f64,
    pub n_fixed: usize,
    pub tau_beta: f64,
    pub log_posterior: f64,
}
