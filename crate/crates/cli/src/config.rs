//! Run configuration: a TOML file with nested sections, unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fracspde::inference::{AdamConfig, ModelClass};
use fracspde::mesh::{build_rect_mesh, Rect, TriMesh};
use fracspde::priors::{CalibrationSettings, PriorInputs};
use fracspde::simstudy::{GeneratorKind, StudyConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub mesh: MeshSection,
    pub priors: PriorInputs,
    pub model: ModelSection,
    pub optimizer: AdamConfig,
    pub calibration: CalibrationSection,
    pub io: IoSection,
    pub simulate: SimulateSection,
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: 1,
            mesh: MeshSection::default(),
            priors: PriorInputs::with_medians(5.0, 1.0, 0.5),
            model: ModelSection::default(),
            optimizer: AdamConfig::default(),
            calibration: CalibrationSection::default(),
            io: IoSection::default(),
            simulate: SimulateSection::default(),
            study: StudyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    /// `[x0, x1, y0, y1]` of the region of interest.
    pub domain: [f64; 4],
    pub extension: f64,
    pub edge_length: f64,
    /// Optional mesh file; the domain and extension still describe the region of interest.
    pub file: Option<PathBuf>,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self { domain: [0.0, 20.0, 0.0, 20.0], extension: 20.0, edge_length: 1.58, file: None }
    }
}

impl MeshSection {
    pub fn rect(&self) -> Rect {
        let [x0, x1, y0, y1] = self.domain;
        Rect::new(x0, x1, y0, y1)
    }

    pub fn build(&self) -> Result<TriMesh> {
        Ok(match &self.file {
            Some(f) => TriMesh::load(f, Some((self.rect(), self.extension))).with_context(|| format!("loading mesh {}", f.display()))?,
            None => build_rect_mesh(self.rect(), self.extension, self.edge_length)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub class: ModelClass,
    pub basis: usize,
    pub cns: f64,
    pub order: usize,
    pub nu_fixed: f64,
    pub eps: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { class: ModelClass::FS, basis: 8, cns: 10.0, order: 1, nu_fixed: 1.0, eps: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub grid: usize,
    pub n_mc: usize,
    pub log_tau_lo: f64,
    pub log_tau_hi: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let d = CalibrationSettings::default();
        Self { grid: d.grid, n_mc: d.n_mc, log_tau_lo: d.log_tau_lo, log_tau_hi: d.log_tau_hi }
    }
}

impl From<CalibrationSection> for CalibrationSettings {
    fn from(c: CalibrationSection) -> Self {
        Self { grid: c.grid, n_mc: c.n_mc, log_tau_lo: c.log_tau_lo, log_tau_hi: c.log_tau_hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    /// Observations `x,y,value[,replicate]`.
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Fit artifact read by `predict`; defaults to `<out_dir>/fit.json`.
    pub fit: Option<PathBuf>,
    /// Prediction locations `x,y`; defaults to a grid over the domain.
    pub locations: Option<PathBuf>,
    /// Prediction grid size when no locations file is given.
    pub grid: usize,
    /// `latent` or `observation`.
    pub scale: fracspde::predict::Scale,
    /// Replicate whose conditional distribution is used for prediction.
    pub replicate: usize,
    /// Inputs of `score`.
    pub prediction: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            data: None,
            out_dir: PathBuf::from("out"),
            fit: None,
            locations: None,
            grid: 50,
            scale: fracspde::predict::Scale::Latent,
            replicate: 0,
            prediction: None,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub generator: GeneratorKind,
    pub replicates: usize,
    pub n_obs: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { generator: GeneratorKind::Stationary, replicates: 1, n_obs: 500 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("{}", e.message().trim()).context(describe(text, &e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let [x0, x1, y0, y1] = self.mesh.domain;
        anyhow::ensure!(x1 > x0 && y1 > y0, "mesh.domain must satisfy x0 < x1 and y0 < y1");
        anyhow::ensure!(self.mesh.extension >= 0.0, "mesh.extension must be non-negative");
        anyhow::ensure!(self.mesh.edge_length > 0.0, "mesh.edge_length must be positive");
        anyhow::ensure!(self.model.order >= 1, "model.order must be at least 1");
        anyhow::ensure!(!self.model.class.nonstationary() || self.model.basis > 0, "model.basis must be positive");
        anyhow::ensure!(self.io.grid > 0, "io.grid must be positive");
        // TOML integers are signed 64-bit.
        for (name, v) in [("seed", self.seed), ("study.seed", self.study.seed)] {
            anyhow::ensure!(v <= i64::MAX as u64, "{name} = {v} exceeds {}", i64::MAX);
        }
        Ok(())
    }

    pub fn fit_path(&self) -> PathBuf {
        self.io.fit.clone().unwrap_or_else(|| self.io.out_dir.join("fit.json"))
    }
}

fn describe(text: &str, e: &toml::de::Error) -> String {
    let Some(s) = e.span() else { return "invalid configuration".to_string() };
    let start = s.start.min(text.len());
    let line_no = text[..start].matches('\n').count() + 1;
    let line = text.lines().nth(line_no - 1).unwrap_or("").trim();
    format!("invalid configuration at line {line_no} (`{line}`)")
}
