//! `rafm` command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rafm_core::artifact::save_matrix;
use rafm_core::datasets::{prepare_piv, PIV_NX, PIV_NY};
use serde::Serialize;

use crate::config::{parse_grid, ExperimentConfig};
use crate::run::{run_experiment, RunStatus};
use crate::tables::{write_aggregate, write_tables};

#[derive(Parser, Debug)]
#[command(name = "rafm", version, about = "Radial-angular flow matching experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Small toy experiment that finishes in seconds.
    Smoke,
    /// Every `*.toml` under the configs directory.
    Full,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse DaVis snapshots, compute vorticity and write one matrix per grid.
    PreparePiv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "8x4,8x8,16x16", value_delimiter = ',')]
        grids: Vec<String>,
        /// Full-resolution grid of every snapshot, NYxNX.
        #[arg(long)]
        shape: Option<String>,
    },
    /// Train, sample and evaluate every method and seed of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Mean and standard deviation over seeds of every stored run.
    Aggregate {
        #[arg(long, default_value = "results")]
        results: PathBuf,
    },
    /// Regenerate all result tables from stored metrics.
    Tables {
        #[arg(long, default_value = "results")]
        results: PathBuf,
    },
    /// Training-step and sampling wall times for a config.
    Timing {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a whole profile, then aggregate and write tables.
    All {
        #[arg(long, value_enum, default_value_t = Profile::Smoke)]
        profile: Profile,
        #[arg(long, default_value = "configs")]
        configs: PathBuf,
        #[arg(long, default_value = "results")]
        results: PathBuf,
    },
}

/// Toy experiment used by the smoke profile: n = 2,000, 200 steps, 1,000
/// generated samples.
pub fn smoke_config(output: &Path) -> ExperimentConfig {
    let text = r#"
methods = ["gaussian_fm", "source_only", "rafm"]

[dataset]
kind = "toy2d"
n_samples = 2000

[train]
steps = 200
batch_size = 256
lr = 0.001
checkpoint_every = 100

[sampler]
steps = 128
project = true
projection_skip_norm = 0.001

[eval]
n_gen = 1000
n_proj = 500
angular = true
mmd = true
histogram_bins = 50

[ablations]
projection = true
oracle = true
"#;
    let mut cfg = ExperimentConfig::from_toml(text).expect("smoke config is valid");
    cfg.output_dir = output.to_path_buf();
    cfg
}

#[derive(Serialize)]
struct PivManifest {
    grids: Vec<String>,
    retained: Vec<String>,
    skipped: Vec<(String, String)>,
}

pub fn prepare_piv_cmd(input: &Path, output: &Path, grids: &[String], shape: Option<&str>) -> Result<()> {
    let grids: Vec<(usize, usize)> = grids.iter().map(|g| parse_grid(g)).collect::<Result<_>>()?;
    let shape = match shape {
        Some(s) => parse_grid(s)?,
        None => (PIV_NY, PIV_NX),
    };
    let prepared = prepare_piv(input, &grids, shape).with_context(|| format!("preparing {}", input.display()))?;
    std::fs::create_dir_all(output)?;
    for ((ny, nx), m) in &prepared.matrices {
        let path = output.join(format!("piv_{ny}x{nx}.bin"));
        save_matrix(&path, m, &format!("piv_{ny}x{nx}"), Default::default())?;
        info!("wrote {} ({} x {})", path.display(), m.n(), m.d());
    }
    let manifest = PivManifest {
        grids: grids.iter().map(|(a, b)| format!("{a}x{b}")).collect(),
        retained: prepared.retained.clone(),
        skipped: prepared
            .skipped
            .iter()
            .map(|(f, r)| (f.clone(), r.to_string()))
            .collect(),
    };
    std::fs::write(output.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    info!("{} snapshots retained, {} skipped", prepared.retained.len(), prepared.skipped.len());
    Ok(())
}

fn run_config(mut cfg: ExperimentConfig, output: Option<&Path>) -> Result<usize> {
    if let Some(o) = output {
        cfg.output_dir = o.to_path_buf();
    }
    let records = run_experiment(&cfg)?;
    let failed = records
        .iter()
        .filter(|r| matches!(r.status, RunStatus::Failed(_)))
        .count();
    info!("{} runs, {failed} failed", records.len());
    Ok(failed)
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PreparePiv {
            input,
            output,
            grids,
            shape,
        } => prepare_piv_cmd(&input, &output, &grids, shape.as_deref()),
        Command::Run { config, output } => {
            let failed = run_config(ExperimentConfig::load(&config)?, output.as_deref())?;
            if failed > 0 {
                bail!("{failed} run(s) failed; see error.txt in their directories");
            }
            Ok(())
        }
        Command::Aggregate { results } => {
            let rows = write_aggregate(&results)?;
            info!("aggregated {} cells", rows.len());
            Ok(())
        }
        Command::Tables { results } => {
            for p in write_tables(&results)? {
                info!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Timing { config, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            let (_, path) = crate::timing::timing(&cfg)?;
            info!("wrote {}", path.display());
            Ok(())
        }
        Command::All {
            profile,
            configs,
            results,
        } => {
            let mut failed = 0;
            match profile {
                Profile::Smoke => failed += run_config(smoke_config(&results), None)?,
                Profile::Full => {
                    let mut files: Vec<PathBuf> = std::fs::read_dir(&configs)
                        .with_context(|| format!("listing {}", configs.display()))?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
                        .collect();
                    files.sort();
                    for f in files {
                        info!("config {}", f.display());
                        match ExperimentConfig::load(&f).and_then(|c| run_config(c, Some(&results))) {
                            Ok(n) => failed += n,
                            Err(e) => {
                                log::error!("{}: {e:#}", f.display());
                                failed += 1;
                            }
                        }
                    }
                }
            }
            write_tables(&results)?;
            if failed > 0 {
                bail!("{failed} run(s) or experiment(s) failed");
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["rafm", "run", "--config", "configs/student_t_d16.toml"]).unwrap();
        assert!(matches!(cli.command, Command::Run { .. }));
        let cli = Cli::try_parse_from(["rafm", "prepare-piv", "--input", "a", "--output", "b"]).unwrap();
        match cli.command {
            Command::PreparePiv { grids, .. } => assert_eq!(grids, vec!["8x4", "8x8", "16x16"]),
            _ => panic!(),
        }
    }

    #[test]
    fn smoke_profile_matches_budget() {
        let cfg = smoke_config(Path::new("out"));
        assert_eq!(cfg.dataset.n_samples, Some(2_000));
        assert_eq!((cfg.train.steps, cfg.eval.n_gen), (200, 1_000));
    }
}
