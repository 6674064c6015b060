//! Synthetic datasets from known generators and the candidate-model
//! comparison run on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FemMatrices, FemStructure};
use crate::fields::{field_values, h_from_v, interpretable, tau, BasisSpec, FieldParams};
use crate::inference::{fit_map, AdamConfig, Model, ModelClass, ModelSpec, NaturalParams, ObservationSet};
use crate::mesh::{build_rect_mesh, Rect, TriMesh};
use crate::predict::{predict, score_set, Scale};
use crate::priors::{calibrate_all, derive_hyper, CalibrationSettings, PriorInputs, SpectralPenalty};
use crate::ratapprox::{assemble_frac, cheb_pade, sample_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Stationary,
    NonStationary,
}

impl GeneratorKind {
    pub fn label(self) -> &'static str {
        match self {
            GeneratorKind::Stationary => "stationary",
            GeneratorKind::NonStationary => "non-stationary",
        }
    }
}

/// The data-generating field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub nu: f64,
    pub kappa0: f64,
    pub sigma0: f64,
    pub vx0: f64,
    pub vy0: f64,
    /// Basis size of the non-stationary anisotropy.
    pub ns_basis: usize,
    /// Largest `‖v(s)‖` of the non-stationary generator.
    pub ns_max_norm: f64,
    pub order: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self { nu: 0.5, kappa0: 0.2, sigma0: 1.0, vx0: 0.0, vy0: 0.0, ns_basis: 8, ns_max_norm: 4f64.ln(), order: 1 }
    }
}

/// One candidate model, e.g. `F-NS-B8-C10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub class: ModelClass,
    #[serde(default = "default_basis")]
    pub basis: usize,
    #[serde(default = "default_cns")]
    pub c_ns: f64,
}

fn default_basis() -> usize {
    8
}
fn default_cns() -> f64 {
    10.0
}

impl Candidate {
    pub fn new(class: ModelClass, basis: usize, c_ns: f64) -> Self {
        Self { class, basis, c_ns }
    }

    pub fn label(&self) -> String {
        if self.class.nonstationary() {
            format!("{}-B{}-C{}", self.class.label(), self.basis, self.c_ns)
        } else {
            self.class.label().to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub domain: Rect,
    pub extension: f64,
    pub edge_length: f64,
    pub generators: Vec<GeneratorKind>,
    pub generator: GeneratorSpec,
    pub replicates: usize,
    pub n_obs: Vec<usize>,
    pub candidates: Vec<Candidate>,
    pub noise_variance: f64,
    /// Prediction grid is `grid × grid` cell centres.
    pub grid: usize,
    pub seed: u64,
    pub priors: PriorInputs,
    pub optimizer: AdamConfig,
    pub order: usize,
    pub calibration: CalibrationSettings,
    pub threads: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            domain: Rect::new(0.0, 20.0, 0.0, 20.0),
            extension: 20.0,
            edge_length: 1.58,
            generators: vec![GeneratorKind::Stationary, GeneratorKind::NonStationary],
            generator: GeneratorSpec::default(),
            replicates: 5,
            n_obs: vec![125, 500],
            candidates: vec![
                Candidate::new(ModelClass::NfS, 8, 10.0),
                Candidate::new(ModelClass::NfNs, 8, 10.0),
                Candidate::new(ModelClass::FS, 8, 10.0),
                Candidate::new(ModelClass::FNs, 8, 10.0),
            ],
            noise_variance: 0.1,
            grid: 50,
            seed: 20_240_601,
            priors: PriorInputs::with_medians(5.0, 1.0, 0.5),
            optimizer: AdamConfig::default(),
            order: 1,
            calibration: CalibrationSettings::default(),
            threads: 1,
        }
    }
}

impl StudyConfig {
    /// Configuration at the scale of the original protocol.
    pub fn full_scale() -> Self {
        let mut c = Self::default();
        c.replicates = 25;
        c.n_obs = vec![125, 500, 1000];
        c.grid = 100;
        c.candidates = vec![Candidate::new(ModelClass::NfS, 8, 10.0), Candidate::new(ModelClass::FS, 8, 10.0)];
        for class in [ModelClass::NfNs, ModelClass::FNs] {
            for basis in [8, 16] {
                for c_ns in [2.0, 5.0, 10.0] {
                    c.candidates.push(Candidate::new(class, basis, c_ns));
                }
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.n_obs.is_empty() || self.n_obs.contains(&0) {
            return bad("n_obs must list positive counts");
        }
        if self.candidates.is_empty() || self.generators.is_empty() {
            return bad("at least one candidate and one generator are required");
        }
        if !(self.noise_variance >= 0.0) {
            return bad("noise_variance must be non-negative");
        }
        if self.grid == 0 || self.order == 0 {
            return bad("grid and order must be positive");
        }
        if self.candidates.iter().any(|c| c.class.nonstationary() && !(c.c_ns > 1.0 && c.basis > 0)) {
            return bad("non-stationary candidates need basis > 0 and c_ns > 1");
        }
        Ok(())
    }

    pub fn max_obs(&self) -> usize {
        self.n_obs.iter().copied().max().unwrap_or(0)
    }

    pub fn grid_points(&self) -> Vec<[f64; 2]> {
        let r = self.domain;
        let g = self.grid;
        let mut pts = Vec::with_capacity(g * g);
        for j in 0..g {
            for i in 0..g {
                pts.push([r.x0 + (i as f64 + 0.5) * r.width() / g as f64, r.y0 + (j as f64 + 0.5) * r.height() / g as f64]);
            }
        }
        pts
    }

    pub fn mesh(&self) -> Result<TriMesh> {
        build_rect_mesh(self.domain, self.extension, self.edge_length)
    }
}

/// Deterministic stream seed for a labelled cell.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = h.wrapping_add(p.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 30;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Generator parameters; the non-stationary anisotropy is drawn once from the
/// spectral prior with the study seed and rescaled to `ns_max_norm`.
pub fn generator_params(cfg: &StudyConfig, kind: GeneratorKind) -> (FieldParams, BasisSpec) {
    let g = &cfg.generator;
    let spec = BasisSpec::with_count(g.ns_basis.max(1), cfg.domain);
    let mut p = FieldParams::stationary(g.kappa0, g.sigma0, g.vx0, g.vy0, g.nu, spec.len());
    if kind == GeneratorKind::NonStationary {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0xA115]));
        let pen = SpectralPenalty::new(&spec, [1.0; 4]);
        for a in [&mut p.alpha_vx, &mut p.alpha_vy] {
            for (v, q) in a.iter_mut().zip(&pen.q_ns) {
                *v = rng.sample::<f64, _>(StandardNormal) / q.sqrt();
            }
        }
        let vals = field_values(&p, &spec, &grid(cfg.domain, 100)).expect("matching lengths");
        let peak = vals.iter().map(|f| (f.vx - g.vx0).hypot(f.vy - g.vy0)).fold(0.0, f64::max);
        let s = g.ns_max_norm / peak;
        for a in [&mut p.alpha_vx, &mut p.alpha_vy] {
            a.iter_mut().for_each(|v| *v *= s);
        }
    }
    (p, spec)
}

fn grid(r: Rect, g: usize) -> Vec<[f64; 2]> {
    (0..g * g)
        .map(|k| {
            let (i, j) = (k % g, k / g);
            [r.x0 + r.width() * i as f64 / (g - 1) as f64, r.y0 + r.height() * j as f64 / (g - 1) as f64]
        })
        .collect()
}

/// One synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `max(n_obs)` noisy observations in random order; the first `n` form the `n`-subset.
    pub observations: ObservationSet,
    /// Latent field at the observation locations.
    pub latent_at_obs: Vec<f64>,
    pub grid: Vec<[f64; 2]>,
    pub truth: Vec<f64>,
}

impl Dataset {
    /// The nested subset of the first `n` observations.
    pub fn subset(&self, n: usize) -> ObservationSet {
        let rows: Vec<usize> = (0..n.min(self.observations.len())).collect();
        self.observations.select(&rows)
    }
}

/// Draws the latent field, observations, and grid truth for one replicate.
pub fn generate_dataset(cfg: &StudyConfig, mesh: &TriMesh, kind: GeneratorKind, replicate: usize) -> Result<Dataset> {
    let (params, spec) = generator_params(cfg, kind);
    let beta = params.beta();
    let vals = field_values(&params, &spec, mesh.centroids())?;
    let kappa: Vec<f64> = vals.iter().map(|v| v.kappa).collect();
    let taus: Vec<f64> = vals.iter().map(|v| tau(beta, v.sigma, v.kappa, 1.0)).collect();
    let hs: Vec<_> = vals.iter().map(|v| h_from_v(v.vx, v.vy)).collect();
    let fem = FemMatrices::assemble(&FemStructure::new(mesh)?, &kappa, &taus, &hs)?;
    let kmin = kappa.iter().copied().fold(f64::INFINITY, f64::min);
    let frac = assemble_frac(&fem, kmin, &cheb_pade(beta, cfg.generator.order, crate::ratapprox::DEFAULT_EPS)?)?;
    let factor = frac.factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[kind as u64, replicate as u64]));
    let w = sample_weights(&frac, &factor, &mut rng);
    let r = cfg.domain;
    let n = cfg.max_obs();
    let locs: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(r.x0..r.x1), rng.gen_range(r.y0..r.y1)]).collect();
    let latent = mesh.projector(&locs)?.mul_vec(&w);
    let sd = cfg.noise_variance.sqrt();
    let values = latent.iter().map(|l| l + sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let grid = cfg.grid_points();
    let truth = mesh.projector(&grid)?.mul_vec(&w);
    Ok(Dataset { observations: ObservationSet::simple(locs, values)?, latent_at_obs: latent, grid, truth })
}

/// One row of the long-format results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub generator: String,
    pub candidate: String,
    pub n_obs: usize,
    pub replicate: usize,
    pub status: String,
    pub rmse: Option<f64>,
    pub crps: Option<f64>,
    pub nu: Option<f64>,
    pub rho0: Option<f64>,
    pub a0: Option<f64>,
    pub psi0: Option<f64>,
    pub sigma0: Option<f64>,
    pub sigma_n: Option<f64>,
    pub log_posterior: Option<f64>,
    pub iterations: Option<usize>,
}

impl StudyRow {
    fn key(&self) -> (String, String, usize, usize) {
        (self.generator.clone(), self.candidate.clone(), self.n_obs, self.replicate)
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Wall time per cell; kept apart from the results so they stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub generator: String,
    pub candidate: String,
    pub n_obs: usize,
    pub replicate: usize,
    pub runtime_ms: f64,
}

/// Run manifest contents.
#[derive(Debug, Clone, Serialize)]
pub struct StudyManifest {
    pub config: StudyConfig,
    pub version: &'static str,
    pub generator_coefficients: BTreeMap<String, FieldParams>,
    /// Calibrated `[τ_κ, τ_σ, τ_vx, τ_vy]` per candidate label.
    pub penalties: BTreeMap<String, [f64; 4]>,
    pub cells_total: usize,
    pub cells_failed: usize,
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub rows: Vec<StudyRow>,
    pub timings: Vec<TimingRow>,
    pub manifest: StudyManifest,
}

/// Fits one candidate to one dataset subset and scores it on the grid.
pub fn run_cell(
    cfg: &StudyConfig,
    mesh: &Arc<TriMesh>,
    data: &Dataset,
    cand: &Candidate,
    penalty: Option<&SpectralPenalty>,
    n: usize,
    cell_seed: u64,
) -> Result<StudyRow> {
    let obs = data.subset(n);
    let spec = BasisSpec::with_count(cand.basis.max(1), cfg.domain);
    let mspec = ModelSpec { class: cand.class, nu_fixed: 1.0, order: cfg.order, eps: crate::ratapprox::DEFAULT_EPS, basis: spec.clone() };
    let mut inputs = cfg.priors.clone();
    (inputs.c_ns_rho, inputs.c_ns_sigma, inputs.c_ns_v) = (cand.c_ns, cand.c_ns, cand.c_ns);
    let priors = derive_hyper(&inputs)?;
    let model = Model::new(mspec, mesh.clone(), priors, penalty.cloned(), obs)?;
    // Start within ±50% of the generating values; non-stationary terms at zero.
    let g = &cfg.generator;
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
    let mut jitter = |v: f64| v * rng.gen_range(0.5..1.5);
    let nu0 = jitter(g.nu).min(0.95 * model.nu_upper());
    let start = NaturalParams {
        fields: FieldParams::stationary(jitter(g.kappa0), jitter(g.sigma0), g.vx0, g.vy0, nu0, spec.len()),
        sigma_n2: jitter(cfg.noise_variance.max(1e-3)),
    };
    let theta0 = model.encode(&start)?;
    let fit = fit_map(&model, &theta0, &cfg.optimizer)?;
    let post = model.conditional_moments(&fit.theta)?;
    let pred = predict(&model, &post, 0, &data.grid, None, Scale::Latent)?;
    let scores = score_set(&pred, &data.truth)?;
    let p = model.decode(&fit.theta);
    let f = &p.fields;
    let ip = interpretable(f.nu, f.log_kappa0.exp(), f.vx0, f.vy0);
    Ok(StudyRow {
        generator: String::new(),
        candidate: cand.label(),
        n_obs: n,
        replicate: 0,
        status: "ok".into(),
        rmse: Some(scores.rmse),
        crps: Some(scores.crps),
        nu: Some(f.nu),
        rho0: Some(ip.rho),
        a0: Some(ip.a),
        psi0: Some(ip.psi),
        sigma0: Some(f.log_sigma0.exp()),
        sigma_n: Some(p.sigma_n2.sqrt()),
        log_posterior: Some(fit.log_posterior),
        iterations: fit.trace.last().map(|r| r.iteration),
    })
}

/// Calibrated penalties for every non-stationary candidate, keyed by label.
pub fn candidate_penalties(cfg: &StudyConfig) -> Result<BTreeMap<String, SpectralPenalty>> {
    let mut out = BTreeMap::new();
    for c in cfg.candidates.iter().filter(|c| c.class.nonstationary()) {
        let key = format!("B{}-C{}", c.basis, c.c_ns);
        if out.contains_key(&key) {
            continue;
        }
        let spec = BasisSpec::with_count(c.basis, cfg.domain);
        let mut inputs = cfg.priors.clone();
        (inputs.c_ns_rho, inputs.c_ns_sigma, inputs.c_ns_v) = (c.c_ns, c.c_ns, c.c_ns);
        let seed = derive_seed(cfg.seed, &[0xCA1, c.basis as u64, c.c_ns.to_bits()]);
        out.insert(key, calibrate_all(&inputs, &spec, cfg.calibration, seed)?);
    }
    Ok(out)
}

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Runs every (generator, candidate, replicate, n_obs) cell.
///
/// With `out_dir`, rows already present in its results file are kept and their
/// cells skipped; results, timings, and the manifest are rewritten at the end.
/// Rows are sorted by cell key, so output does not depend on scheduling.
pub fn run_study(cfg: &StudyConfig, out_dir: Option<&Path>) -> Result<StudyOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run_study_inner(cfg, out_dir))
}

fn run_study_inner(cfg: &StudyConfig, out_dir: Option<&Path>) -> Result<StudyOutput> {
    let mesh = Arc::new(cfg.mesh()?);
    let penalties = candidate_penalties(cfg)?;
    let mut existing: Vec<StudyRow> = Vec::new();
    let mut old_timings: Vec<TimingRow> = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let rp = dir.join(RESULTS_FILE);
        if rp.exists() {
            existing = csv::Reader::from_path(&rp)?.deserialize().collect::<std::result::Result<_, _>>()?;
        }
        let tp = dir.join(TIMINGS_FILE);
        if tp.exists() {
            old_timings = csv::Reader::from_path(&tp)?.deserialize().collect::<std::result::Result<_, _>>()?;
        }
    }
    let done: BTreeSet<_> = existing.iter().map(|r| r.key()).collect();

    // Datasets are regenerated per (generator, replicate) and shared by its cells.
    let mut jobs = Vec::new();
    for &kind in &cfg.generators {
        for rep in 0..cfg.replicates {
            for (ci, cand) in cfg.candidates.iter().enumerate() {
                for &n in &cfg.n_obs {
                    let key = (kind.label().to_string(), cand.label(), n, rep);
                    if !done.contains(&key) {
                        jobs.push((kind, rep, ci, n));
                    }
                }
            }
        }
    }
    let mut datasets = BTreeMap::new();
    for &(kind, rep, _, _) in &jobs {
        if let std::collections::btree_map::Entry::Vacant(e) = datasets.entry((kind, rep)) {
            e.insert(generate_dataset(cfg, &mesh, kind, rep)?);
        }
    }
    let results: Vec<(StudyRow, TimingRow)> = jobs
        .par_iter()
        .map(|&(kind, rep, ci, n)| {
            let cand = &cfg.candidates[ci];
            let data = &datasets[&(kind, rep)];
            let pen = penalties.get(&format!("B{}-C{}", cand.basis, cand.c_ns)).filter(|_| cand.class.nonstationary());
            let seed = derive_seed(cfg.seed, &[kind as u64 + 10, rep as u64, ci as u64, n as u64]);
            let t = Instant::now();
            let mut row = run_cell(cfg, &mesh, data, cand, pen, n, seed).unwrap_or_else(|e| failed_row(cand, n, &e));
            row.generator = kind.label().to_string();
            row.replicate = rep;
            let timing = TimingRow {
                generator: row.generator.clone(),
                candidate: row.candidate.clone(),
                n_obs: n,
                replicate: rep,
                runtime_ms: t.elapsed().as_secs_f64() * 1e3,
            };
            (row, timing)
        })
        .collect();
    let mut rows = existing;
    let mut timings = old_timings;
    for (r, t) in results {
        rows.push(r);
        timings.push(t);
    }
    rows.sort_by_key(|r| r.key());
    timings.sort_by(|a, b| (&a.generator, &a.candidate, a.n_obs, a.replicate).cmp(&(&b.generator, &b.candidate, b.n_obs, b.replicate)));

    let mut gens = BTreeMap::new();
    for &kind in &cfg.generators {
        gens.insert(kind.label().to_string(), generator_params(cfg, kind).0);
    }
    let manifest = StudyManifest {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION"),
        generator_coefficients: gens,
        penalties: penalties.iter().map(|(k, p)| (k.clone(), p.tau)).collect(),
        cells_total: rows.len(),
        cells_failed: rows.iter().filter(|r| !r.ok()).count(),
    };
    if let Some(dir) = out_dir {
        write_rows(&dir.join(RESULTS_FILE), &rows)?;
        write_rows(&dir.join(TIMINGS_FILE), &timings)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(StudyOutput { rows, timings, manifest })
}

fn failed_row(cand: &Candidate, n: usize, e: &Error) -> StudyRow {
    StudyRow {
        generator: String::new(),
        candidate: cand.label(),
        n_obs: n,
        replicate: 0,
        status: format!("failed: {}", e.to_string().replace(['\n', ','], " ")),
        rmse: None,
        crps: None,
        nu: None,
        rho0: None,
        a0: None,
        psi0: None,
        sigma0: None,
        sigma_n: None,
        log_posterior: None,
        iterations: None,
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<StudyRow>> {
    Ok(csv::Reader::from_path(path)?.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Mean scores per (generator, candidate, n_obs) over successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub generator: String,
    pub candidate: String,
    pub n_obs: usize,
    pub n_ok: usize,
    pub mean_rmse: Option<f64>,
    pub mean_crps: Option<f64>,
}

pub fn summarize(rows: &[StudyRow]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(String, String, usize), Vec<&StudyRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.generator.clone(), r.candidate.clone(), r.n_obs)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((generator, candidate, n_obs), rs)| {
            let ok: Vec<&&StudyRow> = rs.iter().filter(|r| r.ok()).collect();
            let mean = |f: &dyn Fn(&StudyRow) -> Option<f64>| {
                let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            CellSummary {
                generator,
                candidate,
                n_obs,
                n_ok: ok.len(),
                mean_rmse: mean(&|r| r.rmse),
                mean_crps: mean(&|r| r.crps),
            }
        })
        .collect()
}

/// Mean and empirical standard deviation of one fitted parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub generator: String,
    pub candidate: String,
    pub n_obs: usize,
    pub parameter: String,
    pub mean: Option<f64>,
    /// Absent with fewer than two estimates.
    pub sd: Option<f64>,
}

/// Parameter names reported by [`estimate_bias`], in output order.
pub const BIAS_PARAMETERS: [&str; 6] = ["nu", "rho0", "a0", "psi0", "sigma0", "sigma_n"];

pub fn estimate_bias(rows: &[StudyRow]) -> Vec<BiasRow> {
    let mut groups: BTreeMap<(String, String, usize), Vec<&StudyRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok()) {
        groups.entry((r.generator.clone(), r.candidate.clone(), r.n_obs)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((g, c, n), rs) in groups {
        for name in BIAS_PARAMETERS {
            let v: Vec<f64> = rs
                .iter()
                .filter_map(|r| match name {
                    "nu" => r.nu,
                    "rho0" => r.rho0,
                    "a0" => r.a0,
                    "psi0" => r.psi0,
                    "sigma0" => r.sigma0,
                    _ => r.sigma_n,
                })
                .collect();
            let k = v.len() as f64;
            let mean = (!v.is_empty()).then(|| v.iter().sum::<f64>() / k);
            let sd = (v.len() >= 2).then(|| {
                let m = mean.unwrap();
                (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            });
            out.push(BiasRow { generator: g.clone(), candidate: c.clone(), n_obs: n, parameter: name.to_string(), mean, sd });
        }
    }
    out
}
