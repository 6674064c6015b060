//! Posterior prediction at new locations and proper scoring.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::inference::{Model, Posterior};
use crate::sparse::{CholFactor, SelectedInverse};

/// Predictive scale: the latent field or a new noisy observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Latent,
    Observation,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Latent => "latent",
            Scale::Observation => "observation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub locations: Vec<[f64; 2]>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub scale: Scale,
}

#[derive(Debug, Serialize)]
struct PredictionRow<'a> {
    x: f64,
    y: f64,
    mean: f64,
    sd: f64,
    scale: &'a str,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Writes `x,y,mean,sd,scale`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for i in 0..self.len() {
            w.serialize(PredictionRow {
                x: self.locations[i][0],
                y: self.locations[i][1],
                mean: self.mean[i],
                sd: self.sd[i],
                scale: self.scale.as_str(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            y: f64,
            mean: f64,
            sd: f64,
            scale: Scale,
        }
        let mut rdr = csv::Reader::from_path(path)?;
        let mut p = Prediction { locations: vec![], mean: vec![], sd: vec![], scale: Scale::Latent };
        for r in rdr.deserialize() {
            let r: Row = r?;
            p.locations.push([r.x, r.y]);
            p.mean.push(r.mean);
            p.sd.push(r.sd);
            p.scale = r.scale;
        }
        Ok(p)
    }
}

/// Diagonal of `R A⁻¹ Rᵀ` for sparse rows `R`.
///
/// Rows whose pairwise entries fall inside the factor's fill pattern use the
/// selected inverse; the rest are solved directly.
pub fn quadratic_diag(factor: &CholFactor, rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let sel = SelectedInverse::compute(factor);
    let from_pattern = |r: &Vec<(usize, f64)>| -> Option<f64> {
        let mut s = 0.0;
        for &(a, va) in r {
            for &(b, vb) in r {
                s += va * vb * sel.get(a, b).ok()?;
            }
        }
        Some(s)
    };
    let n = factor.n();
    rows.par_iter()
        .map(|r| match from_pattern(r) {
            Some(v) => Ok(v),
            None => {
                let mut rhs = vec![0.0; n];
                for &(a, v) in r {
                    rhs[a] += v;
                }
                let x = factor.solve_vec(&rhs)?;
                Ok(r.iter().map(|&(a, v)| v * x[a]).sum())
            }
        })
        .collect()
}

/// Posterior predictive mean and standard deviation at `locations` for
/// replicate `replicate`.
///
/// With no observations the prior is used: zero mean and prior marginal
/// variance (plus `τ_β⁻¹ |x|²` for covariates).
pub fn predict(
    model: &Model,
    post: &Posterior,
    replicate: usize,
    locations: &[[f64; 2]],
    design: Option<&DMatrix<f64>>,
    scale: Scale,
) -> Result<Prediction> {
    let p = post.n_fixed;
    match (design, p) {
        (None, 0) => {}
        (Some(d), p) if d.ncols() == p && d.nrows() == locations.len() => {}
        (Some(d), _) => {
            return Err(Error::Shape(format!(
                "design at new locations is {}×{}, expected {}×{p}",
                d.nrows(),
                d.ncols(),
                locations.len()
            )))
        }
        (None, p) => return Err(Error::Shape(format!("model has {p} covariates but no design was given"))),
    }
    let a = model.mesh.projector(locations)?;
    let nv = post.p_r.ncols();
    let ap = a.matmul(&post.p_r);
    let mut rows = ap.rows();
    if let Some(d) = design {
        for (i, r) in rows.iter_mut().enumerate() {
            r.extend((0..p).map(|c| (nv + c, d[(i, c)])));
        }
    }
    let (mean, var) = if post.replicates.is_empty() {
        let latent: Vec<Vec<(usize, f64)>> = rows.iter().map(|r| r.iter().copied().filter(|&(c, _)| c < nv).collect()).collect();
        let mut v = quadratic_diag(&post.prior_factor, &latent)?;
        for (vi, r) in v.iter_mut().zip(&rows) {
            *vi += r.iter().filter(|&&(c, _)| c >= nv).map(|&(_, x)| x * x / post.tau_beta).sum::<f64>();
        }
        (vec![0.0; rows.len()], v)
    } else {
        let rep = post
            .replicates
            .get(replicate)
            .ok_or_else(|| Error::InvalidArgument(format!("replicate {replicate} of {}", post.replicates.len())))?;
        let mean = rows.iter().map(|r| r.iter().map(|&(c, v)| v * rep.mu[c]).sum()).collect();
        (mean, quadratic_diag(&rep.factor, &rows)?)
    };
    let extra = if scale == Scale::Observation { post.sigma_n2 } else { 0.0 };
    let sd = var.iter().map(|v| (v.max(0.0) + extra).sqrt()).collect();
    Ok(Prediction { locations: locations.to_vec(), mean, sd, scale })
}

/// Closed-form CRPS of `N(mean, sd²)` at `y`.
pub fn crps_gaussian(mean: f64, sd: f64, y: f64) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::InvalidArgument(format!("standard deviation {sd} must be positive")));
    }
    let z = (y - mean) / sd;
    let cdf = 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    Ok(sd * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / PI.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub rmse: f64,
    pub crps: f64,
}

/// RMSE of the mean and average CRPS against `truth`.
pub fn score_set(pred: &Prediction, truth: &[f64]) -> Result<Scores> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} truth values for {} predictions", truth.len(), pred.len())));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty set".into()));
    }
    let n = truth.len() as f64;
    let mut se = 0.0;
    let mut cr = 0.0;
    for i in 0..truth.len() {
        se += (pred.mean[i] - truth[i]).powi(2);
        cr += crps_gaussian(pred.mean[i], pred.sd[i], truth[i])?;
    }
    Ok(Scores { rmse: (se / n).sqrt(), crps: cr / n })
}
