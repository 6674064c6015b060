use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};

/// Adam settings. The objective is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Stop when `|Δℓ| < rel_tol · |ℓ|`.
    pub rel_tol: f64,
    /// The stopping rule is not checked before this many iterations.
    pub min_iter: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, max_iter: 2000, rel_tol: 1e-4, min_iter: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub logpost: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Best-seen unconstrained parameters.
    pub theta: Vec<f64>,
    pub log_posterior: f64,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub wall_ms: f64,
    /// Evaluations that failed and were retried with a halved step.
    pub failures: usize,
}

impl FitResult {
    pub fn write_trace<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.trace {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Maximizes the log-posterior with Adam from `theta0`.
///
/// An evaluation failure after the start reverts to the previous iterate
/// and halves the step size; the fit ends once the step falls below 1e-8.
pub fn fit_map(model: &Model, theta0: &[f64], cfg: &AdamConfig) -> Result<FitResult> {
    let start = Instant::now();
    let (mut f, mut g) = match model.value_and_gradient(theta0) {
        Ok(v) => v,
        Err(e) => return Err(e),
    };
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteStart);
    }
    let d = theta0.len();
    let mut theta = theta0.to_vec();
    let (mut m, mut v) = (vec![0.0; d], vec![0.0; d]);
    let mut lr = cfg.learning_rate;
    let mut best = (f, theta.clone());
    let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut trace = vec![TraceRow { iteration: 0, logpost: f, grad_norm: norm(&g), wall_ms: ms(start) }];
    let mut converged = false;
    let mut failures = 0;
    let mut t = 0;
    while t < cfg.max_iter {
        t += 1;
        let mut m_new = m.clone();
        let mut v_new = v.clone();
        let mut cand = theta.clone();
        let b1t = 1.0 - cfg.beta1.powi(t as i32);
        let b2t = 1.0 - cfg.beta2.powi(t as i32);
        for i in 0..d {
            m_new[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v_new[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            cand[i] += lr * (m_new[i] / b1t) / ((v_new[i] / b2t).sqrt() + cfg.epsilon);
        }
        let eval = model.value_and_gradient(&cand).and_then(|(fv, gv)| {
            if fv.is_finite() && gv.iter().all(|x| x.is_finite()) {
                Ok((fv, gv))
            } else {
                Err(Error::InvalidArgument("non-finite log-posterior".into()))
            }
        });
        let (f_new, g_new) = match eval {
            Ok(v) => v,
            Err(_) => {
                failures += 1;
                lr *= 0.5;
                t -= 1;
                if lr < 1e-8 {
                    break;
                }
                continue;
            }
        };
        let delta = (f_new - f).abs();
        (theta, m, v, f, g) = (cand, m_new, v_new, f_new, g_new);
        if f > best.0 {
            best = (f, theta.clone());
        }
        trace.push(TraceRow { iteration: t, logpost: f, grad_norm: norm(&g), wall_ms: ms(start) });
        if t >= cfg.min_iter && delta < cfg.rel_tol * f.abs() {
            converged = true;
            break;
        }
    }
    Ok(FitResult { theta: best.1, log_posterior: best.0, trace, converged, wall_ms: ms(start), failures })
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
