use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gpnn::data::Recipe;
use gpnn::kernels::{KernelSpec, Theta};
use gpnn::predict::DEFAULT_NEIGHBOURS;
use gpnn::simulate::{AssumedModel, NoiseDist};
use gpnn::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// Real-data experiment: one fit per seed on a seeded train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<PathBuf>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_calibration_size")]
    pub calibration_size: usize,
    #[serde(default = "default_true")]
    pub calibrate: bool,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_leaf_size")]
    pub leaf_size: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_kernel() -> KernelSpec {
    KernelSpec::Rbf
}
fn default_m() -> usize {
    DEFAULT_NEIGHBOURS
}
fn default_calibration_size() -> usize {
    gpnn::calibrate::DEFAULT_CALIBRATION_SIZE
}
fn default_true() -> bool {
    true
}
fn default_train_fraction() -> f64 {
    7.0 / 9.0
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_leaf_size() -> usize {
    gpnn::nn_index::DEFAULT_LEAF_SIZE
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("gpnn-out")
}

/// Relative paths in a config file are taken relative to the file itself.
fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing experiment config {}", path.display()))?;
        let base = parent_dir(path);
        rebase(&base, &mut cfg.dataset);
        if let Some(r) = cfg.recipe.as_mut() {
            rebase(&base, r);
        }
        rebase(&base, &mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!("train_fraction must lie in (0, 1), got {}", self.train_fraction);
        }
        if self.m == 0 {
            bail!("m must be >= 1");
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn recipe(&self) -> Result<Recipe> {
        load_recipe(self.recipe.as_deref())
    }
}

pub fn load_recipe(path: Option<&Path>) -> Result<Recipe> {
    match path {
        None => Ok(Recipe::last_column_target()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading recipe {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing recipe {}", p.display()))
        }
    }
}

/// Cartesian grid of assumed models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumedGrid {
    pub kernels: Vec<KernelSpec>,
    pub lengthscale: Vec<f64>,
    pub noise_var: Vec<f64>,
    pub signal_var: Vec<f64>,
}

impl AssumedGrid {
    pub fn expand(&self) -> Result<Vec<AssumedModel>> {
        let mut out = Vec::new();
        for &kernel in &self.kernels {
            for &l in &self.lengthscale {
                for &nv in &self.noise_var {
                    for &sv in &self.signal_var {
                        out.push(AssumedModel {
                            kernel,
                            theta: Theta::new(l, nv, sv)?,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Simulation sweep over training sizes and assumed models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub ns: Vec<usize>,
    pub n_star: usize,
    #[serde(default = "default_sim_m")]
    pub m: usize,
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise: NoiseDist,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default)]
    pub plot_data: bool,
    #[serde(default = "default_sim_output_dir")]
    pub output_dir: PathBuf,
    pub generative: AssumedModel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumed: Vec<AssumedModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<AssumedGrid>,
}

fn default_sim_m() -> usize {
    100
}
fn default_noise() -> NoiseDist {
    NoiseDist::Gaussian
}
fn default_sim_output_dir() -> PathBuf {
    PathBuf::from("gpnn-sim")
}

impl SimulationConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: SimulationConfig =
            toml::from_str(&text).with_context(|| format!("parsing simulation config {}", path.display()))?;
        rebase(&parent_dir(path), &mut cfg.output_dir);
        Ok(cfg)
    }

    /// Explicit `assumed` entries followed by the expanded grid.
    pub fn assumed_models(&self) -> Result<Vec<AssumedModel>> {
        let mut all = self.assumed.clone();
        if let Some(g) = &self.grid {
            all.extend(g.expand()?);
        }
        if all.is_empty() {
            bail!("simulation config lists no assumed models (use [[assumed]] or [grid])");
        }
        Ok(all)
    }
}
