//! Experiment configuration files (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rafm_core::datasets::{DatasetKind, DatasetSpec, ToyParams};
use rafm_core::flow::{Method, TrainConfig};
use rafm_core::metrics::N_PROJECTIONS;
use rafm_core::sampler::SamplerConfig;
use rafm_core::sphere::PROJECTION_SKIP_NORM;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEEDS: [u64; 3] = [8925, 77395, 65457];
pub const DEFAULT_MATRIX_SEED: u64 = 42;
pub const DEFAULT_N_SAMPLES: usize = 50_000;
pub const TOY_N_SAMPLES: usize = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKindName {
    StudentT,
    AnisoGauss,
    Toy2d,
    Piv,
    PivTrunc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Prepared matrix for `piv` / `piv_trunc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// `NYxNX` grid for `piv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(default = "default_matrix_seed")]
    pub matrix_seed: u64,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_matrix_seed() -> u64 {
    DEFAULT_MATRIX_SEED
}

pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("grid {s:?} is not of the form NYxNX"))?;
    let ny: usize = a.trim().parse().with_context(|| format!("grid {s:?}"))?;
    let nx: usize = b.trim().parse().with_context(|| format!("grid {s:?}"))?;
    ensure!(ny > 0 && nx > 0, "grid {s:?} has a zero side");
    Ok((ny, nx))
}

impl DatasetSection {
    fn require<T: Copy>(&self, v: Option<T>, name: &str) -> Result<T> {
        v.with_context(|| format!("dataset kind {:?} requires `{name}`", self.kind))
    }

    /// Fills kind-specific defaults and checks that every required field is
    /// present and no irrelevant field is set.
    pub fn resolve(&mut self) -> Result<()> {
        let allowed: &[&str] = match self.kind {
            DatasetKindName::StudentT => &["d", "nu", "n_samples"],
            DatasetKindName::AnisoGauss => &["d", "n_samples"],
            DatasetKindName::Toy2d => &["n_samples", "modes", "kappa", "scale", "nu"],
            DatasetKindName::Piv => &["path", "grid"],
            DatasetKindName::PivTrunc => &["path", "d"],
        };
        let present = [
            ("d", self.d.is_some()),
            ("nu", self.nu.is_some()),
            ("n_samples", self.n_samples.is_some()),
            ("modes", self.modes.is_some()),
            ("kappa", self.kappa.is_some()),
            ("scale", self.scale.is_some()),
            ("path", self.path.is_some()),
            ("grid", self.grid.is_some()),
        ];
        for (name, set) in present {
            ensure!(
                !set || allowed.contains(&name),
                "`{name}` is not a parameter of dataset kind {:?}",
                self.kind
            );
        }
        match self.kind {
            DatasetKindName::StudentT => {
                self.require(self.d, "d")?;
                self.require(self.nu, "nu")?;
                self.n_samples.get_or_insert(DEFAULT_N_SAMPLES);
            }
            DatasetKindName::AnisoGauss => {
                self.require(self.d, "d")?;
                self.n_samples.get_or_insert(DEFAULT_N_SAMPLES);
            }
            DatasetKindName::Toy2d => {
                let p = ToyParams::default();
                self.n_samples.get_or_insert(TOY_N_SAMPLES);
                self.modes.get_or_insert(p.modes);
                self.kappa.get_or_insert(p.kappa);
                self.scale.get_or_insert(p.scale);
                if let Some(nu) = self.nu {
                    ensure!(nu == 3.0, "toy2d radial law is |t_3|; nu = {nu} is not supported");
                }
            }
            DatasetKindName::Piv => {
                self.require(self.path.as_ref(), "path")?;
                parse_grid(self.require(self.grid.as_deref(), "grid")?)?;
            }
            DatasetKindName::PivTrunc => {
                self.require(self.path.as_ref(), "path")?;
                self.require(self.d, "d")?;
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<DatasetSpec> {
        let kind = match self.kind {
            DatasetKindName::StudentT => DatasetKind::StudentT {
                d: self.require(self.d, "d")?,
                nu: self.require(self.nu, "nu")?,
            },
            DatasetKindName::AnisoGauss => DatasetKind::AnisoGauss {
                d: self.require(self.d, "d")?,
            },
            DatasetKindName::Toy2d => {
                let p = ToyParams::default();
                DatasetKind::Toy2d(ToyParams {
                    modes: self.modes.unwrap_or(p.modes),
                    kappa: self.kappa.unwrap_or(p.kappa),
                    scale: self.scale.unwrap_or(p.scale),
                })
            }
            DatasetKindName::Piv => {
                let (ny, nx) = parse_grid(self.require(self.grid.as_deref(), "grid")?)?;
                DatasetKind::Piv {
                    ny,
                    nx,
                    path: self.require(self.path.as_ref(), "path")?.clone(),
                }
            }
            DatasetKindName::PivTrunc => DatasetKind::PivTrunc {
                d: self.require(self.d, "d")?,
                path: self.require(self.path.as_ref(), "path")?.clone(),
            },
        };
        Ok(DatasetSpec {
            kind,
            n_samples: self.n_samples.unwrap_or(0),
            matrix_seed: self.matrix_seed,
            data_seed: self.data_seed,
            split_seed: self.split_seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
            checkpoint_every: t.checkpoint_every,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub steps: usize,
    pub project: bool,
    pub projection_skip_norm: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            steps: 128,
            project: true,
            projection_skip_norm: PROJECTION_SKIP_NORM,
        }
    }
}

impl SamplerSection {
    pub fn to_core(&self) -> SamplerConfig {
        SamplerConfig {
            steps: self.steps,
            project: self.project,
            projection_skip_norm: self.projection_skip_norm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_gen: usize,
    pub n_proj: usize,
    pub angular: bool,
    pub mmd: bool,
    pub histogram_bins: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n_gen: 10_000,
            n_proj: N_PROJECTIONS,
            angular: false,
            mmd: false,
            histogram_bins: 50,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSection {
    /// Also sample the trained RAFM model without projection.
    #[serde(default)]
    pub projection: bool,
    /// Add oracle-radius variants of Source-only and RAFM.
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub warmup_steps: u64,
    pub measured_steps: u64,
    pub repeats: usize,
    pub nfe: Vec<usize>,
    pub batch: usize,
}

impl Default for TimingSection {
    fn default() -> Self {
        Self {
            warmup_steps: 10,
            measured_steps: 200,
            repeats: 3,
            nfe: vec![32, 64, 128, 256],
            batch: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub ablations: AblationSection,
    #[serde(default)]
    pub timing: TimingSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text)?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Fills defaults and validates the whole configuration.
    pub fn resolve(&mut self) -> Result<()> {
        self.dataset.resolve()?;
        ensure!(!self.methods.is_empty(), "`methods` is empty");
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        ensure!(seen.len() == self.methods.len(), "`methods` lists a method twice");
        ensure!(!self.seeds.is_empty(), "`seeds` is empty");
        let mut seeds = self.seeds.clone();
        seeds.sort();
        seeds.dedup();
        ensure!(seeds.len() == self.seeds.len(), "`seeds` lists a seed twice");
        ensure!(self.train.batch_size > 0, "train.batch_size must be positive");
        ensure!(self.train.lr > 0.0, "train.lr must be positive");
        ensure!(self.sampler.steps > 0, "sampler.steps must be positive");
        ensure!(self.eval.n_gen > 0, "eval.n_gen must be positive");
        ensure!(self.eval.n_proj > 0, "eval.n_proj must be positive");
        ensure!(self.eval.histogram_bins > 0, "eval.histogram_bins must be positive");
        ensure!(self.timing.repeats > 0, "timing.repeats must be positive");
        for &nfe in &self.timing.nfe {
            ensure!(nfe >= 4 && nfe % 4 == 0, "timing NFE {nfe} is not a positive multiple of 4");
        }
        if self.ablations.oracle {
            let has_oracle = matches!(
                self.dataset.kind,
                DatasetKindName::StudentT | DatasetKindName::AnisoGauss | DatasetKindName::Toy2d
            );
            if !has_oracle {
                bail!("oracle ablation needs a synthetic dataset with a known radial law");
            }
        }
        Ok(())
    }

    /// Canonical TOML text; written verbatim into every run directory.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn dataset_label(&self) -> Result<String> {
        Ok(self.dataset.spec()?.label())
    }
}
