use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use fracspde::fields::{BasisSpec, FieldParams};
use fracspde::inference::{fit_map, Model, ModelSpec, NaturalParams, ObservationSet};
use fracspde::predict::{predict, score_set, Prediction};
use fracspde::priors::{calibrate_all, derive_hyper, PriorInputs, SpectralPenalty};
use fracspde::simstudy::{estimate_bias, generate_dataset, run_study, summarize, write_rows};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Everything `predict` needs to rebuild the fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub spec: ModelSpec,
    pub priors: PriorInputs,
    pub penalty_tau: Option<[f64; 4]>,
    pub parameter_names: Vec<String>,
    pub theta: Vec<f64>,
    pub natural: FieldParams,
    pub sigma_n2: f64,
    pub log_posterior: f64,
    pub converged: bool,
    pub iterations: usize,
    pub failures: usize,
}

/// Outcome recorded in the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub extra: BTreeMap<String, serde_json::Value>,
}

fn model_spec(cfg: &RunConfig) -> ModelSpec {
    ModelSpec {
        class: cfg.model.class,
        nu_fixed: cfg.model.nu_fixed,
        order: cfg.model.order,
        eps: cfg.model.eps,
        basis: BasisSpec::with_count(cfg.model.basis.max(1), cfg.mesh.rect()),
    }
}

fn priors_with_cns(cfg: &RunConfig) -> PriorInputs {
    let mut p = cfg.priors.clone();
    (p.c_ns_rho, p.c_ns_sigma, p.c_ns_v) = (cfg.model.cns, cfg.model.cns, cfg.model.cns);
    p
}

fn read_points(path: &Path) -> Result<Vec<[f64; 2]>> {
    #[derive(Deserialize)]
    struct P {
        x: f64,
        y: f64,
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for r in rdr.deserialize() {
        let p: P = r.with_context(|| format!("reading {}", path.display()))?;
        out.push([p.x, p.y]);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ValueRow {
    x: f64,
    y: f64,
    value: f64,
}

fn grid_points(cfg: &RunConfig) -> Vec<[f64; 2]> {
    let mut s = cfg.study.clone();
    s.domain = cfg.mesh.rect();
    s.grid = cfg.io.grid;
    s.grid_points()
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome> {
    let mut study = cfg.study.clone();
    study.domain = cfg.mesh.rect();
    study.extension = cfg.mesh.extension;
    study.edge_length = cfg.mesh.edge_length;
    study.n_obs = vec![cfg.simulate.n_obs];
    study.grid = cfg.io.grid;
    study.seed = cfg.seed;
    let mesh = cfg.mesh.build()?;
    let (mut locs, mut vals, mut reps) = (Vec::new(), Vec::new(), Vec::new());
    let mut truth = Vec::new();
    for r in 0..cfg.simulate.replicates.max(1) {
        let d = generate_dataset(&study, &mesh, cfg.simulate.generator, r)?;
        locs.extend_from_slice(&d.observations.locations);
        vals.extend_from_slice(&d.observations.values);
        reps.extend(std::iter::repeat(r).take(d.observations.len()));
        if r == 0 {
            truth = d.grid.iter().zip(&d.truth).map(|(p, &v)| ValueRow { x: p[0], y: p[1], value: v }).collect();
        }
    }
    let obs = ObservationSet::new(locs, vals, None, Some(reps))?;
    let dir = &cfg.io.out_dir;
    let (op, tp) = (dir.join("observations.csv"), dir.join("truth.csv"));
    obs.write_csv(&op)?;
    write_rows(&tp, &truth)?;
    let (g, _) = fracspde::simstudy::generator_params(&study, cfg.simulate.generator);
    let mut out = Outcome { outputs: vec![op, tp], ..Outcome::default() };
    out.extra.insert("generator".into(), serde_json::to_value(g)?);
    Ok(out)
}

pub fn calibrate(cfg: &RunConfig) -> Result<Outcome> {
    let spec = model_spec(cfg).basis;
    let pen = calibrate_all(&priors_with_cns(cfg), &spec, cfg.calibration.into(), cfg.seed)?;
    let path = cfg.io.out_dir.join("penalty.json");
    fs::write(&path, serde_json::to_string_pretty(&pen)?)?;
    let mut out = Outcome { outputs: vec![path], ..Outcome::default() };
    out.extra.insert("tau".into(), serde_json::to_value(pen.tau)?);
    Ok(out)
}

fn load_data(cfg: &RunConfig) -> Result<ObservationSet> {
    let Some(p) = &cfg.io.data else { bail!("io.data is required for this command") };
    ObservationSet::read_csv(p).with_context(|| format!("reading observations {}", p.display()))
}

pub fn fit(cfg: &RunConfig) -> Result<Outcome> {
    let obs = load_data(cfg)?;
    let mesh = Arc::new(cfg.mesh.build()?);
    let spec = model_spec(cfg);
    let inputs = priors_with_cns(cfg);
    let priors = derive_hyper(&inputs)?;
    let penalty = if spec.class.nonstationary() {
        Some(calibrate_all(&inputs, &spec.basis, cfg.calibration.into(), cfg.seed)?)
    } else {
        None
    };
    let model = Model::new(spec.clone(), mesh, priors, penalty.clone(), obs)?;
    // Start at the prior medians.
    let nu0 = if spec.class.estimates_nu() { inputs.c_nu.min(0.95 * model.nu_upper()) } else { spec.nu_fixed };
    let kappa0 = (8.0 * nu0).sqrt() / inputs.c_rho;
    let start = NaturalParams {
        fields: FieldParams::stationary(kappa0, inputs.c_sigma, 0.0, 0.0, nu0, spec.basis.len()),
        sigma_n2: inputs.c_sigma_n.powi(2),
    };
    let theta0 = model.encode(&start)?;
    let res = fit_map(&model, &theta0, &cfg.optimizer)?;
    let nat = model.decode(&res.theta);
    let art = FitArtifact {
        spec,
        priors: inputs,
        penalty_tau: penalty.map(|p| p.tau),
        parameter_names: model.layout.names(),
        theta: res.theta.clone(),
        natural: nat.fields,
        sigma_n2: nat.sigma_n2,
        log_posterior: res.log_posterior,
        converged: res.converged,
        iterations: res.trace.last().map_or(0, |r| r.iteration),
        failures: res.failures,
    };
    let fp = cfg.fit_path();
    fs::write(&fp, serde_json::to_string_pretty(&art)?)?;
    let tp = cfg.io.out_dir.join("trace.csv");
    res.write_trace(fs::File::create(&tp)?)?;
    let mut out = Outcome { outputs: vec![fp, tp], ..Outcome::default() };
    out.extra.insert("log_posterior".into(), res.log_posterior.into());
    out.extra.insert("converged".into(), res.converged.into());
    if let Some(t) = art.penalty_tau {
        out.extra.insert("tau".into(), serde_json::to_value(t)?);
    }
    Ok(out)
}

pub fn predict_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let fp = cfg.fit_path();
    let art: FitArtifact = serde_json::from_str(&fs::read_to_string(&fp).with_context(|| format!("reading fit {}", fp.display()))?)?;
    let obs = load_data(cfg)?;
    ensure!(obs.design.is_none(), "covariates are not supported by the CSV path");
    let mesh = Arc::new(cfg.mesh.build()?);
    let penalty = art.penalty_tau.map(|t| SpectralPenalty::new(&art.spec.basis, t));
    let model = Model::new(art.spec.clone(), mesh, derive_hyper(&art.priors)?, penalty, obs)?;
    let post = model.conditional_moments(&art.theta)?;
    let locs = match &cfg.io.locations {
        Some(p) => read_points(p)?,
        None => grid_points(cfg),
    };
    let pred = predict(&model, &post, cfg.io.replicate, &locs, None, cfg.io.scale)?;
    let path = cfg.io.out_dir.join("prediction.csv");
    pred.write_csv(&path)?;
    Ok(Outcome { outputs: vec![path], ..Outcome::default() })
}

pub fn score(cfg: &RunConfig) -> Result<Outcome> {
    let pp = cfg.io.prediction.clone().unwrap_or_else(|| cfg.io.out_dir.join("prediction.csv"));
    let Some(tp) = &cfg.io.truth else { bail!("io.truth is required for score") };
    let pred = Prediction::read_csv(&pp).with_context(|| format!("reading prediction {}", pp.display()))?;
    let truth: Vec<ValueRow> = csv::Reader::from_path(tp)
        .with_context(|| format!("opening {}", tp.display()))?
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    ensure!(truth.len() == pred.len(), "truth has {} rows, prediction {}", truth.len(), pred.len());
    for (i, (t, p)) in truth.iter().zip(&pred.locations).enumerate() {
        ensure!((t.x - p[0]).abs() < 1e-9 && (t.y - p[1]).abs() < 1e-9, "row {i}: truth and prediction locations differ");
    }
    let values: Vec<f64> = truth.iter().map(|t| t.value).collect();
    let s = score_set(&pred, &values)?;
    #[derive(Serialize)]
    struct Row {
        n: usize,
        rmse: f64,
        crps: f64,
    }
    let path = cfg.io.out_dir.join("scores.csv");
    write_rows(&path, &[Row { n: values.len(), rmse: s.rmse, crps: s.crps }])?;
    let mut out = Outcome { outputs: vec![path], ..Outcome::default() };
    out.extra.insert("rmse".into(), s.rmse.into());
    out.extra.insert("crps".into(), s.crps.into());
    Ok(out)
}

pub fn study(cfg: &RunConfig) -> Result<Outcome> {
    let mut sc = cfg.study.clone();
    sc.threads = cfg.threads;
    let dir = &cfg.io.out_dir;
    let out = run_study(&sc, Some(dir))?;
    let sp = dir.join("summary.csv");
    write_rows(&sp, &summarize(&out.rows))?;
    let bp = dir.join("bias.csv");
    write_rows(&bp, &estimate_bias(&out.rows))?;
    let mut o = Outcome {
        outputs: vec![dir.join(fracspde::simstudy::RESULTS_FILE), dir.join(fracspde::simstudy::TIMINGS_FILE), sp, bp],
        ..Outcome::default()
    };
    o.extra.insert("study".into(), serde_json::to_value(&out.manifest)?);
    Ok(o)
}
