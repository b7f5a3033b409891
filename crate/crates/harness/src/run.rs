//! Runs every (method, seed) of an experiment and persists the artifacts
//! under `results/<dataset>/<method>/seed_<seed>/`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use rafm_core::artifact::save_matrix;
use rafm_core::datasets::{split, DataSplit};
use rafm_core::flow::{self, streams, Method, RadialMode};
use rafm_core::metrics::{evaluation_seed, quantile_linear, EvalContext, EvalOptions, MetricsReport, RunMetadata};
use rafm_core::numerics::{sorted, Prng, SampleMatrix};
use rafm_core::radial::{fit_empirical_radial, RadialLaw, SourceSampler};
use rafm_core::sampler;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.json";
pub const TIMING_FILE: &str = "timing.json";
pub const SAMPLES_FILE: &str = "samples.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const HISTOGRAM_FILE: &str = "radial_hist.csv";
pub const ERROR_FILE: &str = "error.txt";

/// Steps excluded from the per-step training time.
pub const TIMING_WARMUP_STEPS: usize = 10;

/// A sampled configuration of a trained method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variant {
    pub label: String,
    pub method: Method,
    pub radial_mode: RadialMode,
    pub project: bool,
}

/// Variants that share one trained model.
#[derive(Clone, Debug)]
pub struct TrainingGroup {
    pub method: Method,
    pub train_mode: RadialMode,
    pub variants: Vec<Variant>,
}

/// Expands methods and ablations into training groups. RAFM never reads the
/// radial law during training, so its projection-off and oracle variants
/// reuse the same model; Source-only trains once per radial mode.
pub fn plan(cfg: &ExperimentConfig) -> Vec<TrainingGroup> {
    let v = |label: &str, method, radial_mode, project| Variant {
        label: label.to_string(),
        method,
        radial_mode,
        project,
    };
    let mut groups = Vec::new();
    for &m in &cfg.methods {
        match m {
            Method::GaussianFm => groups.push(TrainingGroup {
                method: m,
                train_mode: RadialMode::Empirical,
                variants: vec![v("gaussian_fm", m, RadialMode::Empirical, false)],
            }),
            Method::SourceOnly => {
                groups.push(TrainingGroup {
                    method: m,
                    train_mode: RadialMode::Empirical,
                    variants: vec![v("source_only", m, RadialMode::Empirical, false)],
                });
                if cfg.ablations.oracle {
                    groups.push(TrainingGroup {
                        method: m,
                        train_mode: RadialMode::Oracle,
                        variants: vec![v("source_only_oracle", m, RadialMode::Oracle, false)],
                    });
                }
            }
            Method::Rafm => {
                let mut variants = vec![v("rafm", m, RadialMode::Empirical, cfg.sampler.project)];
                if cfg.ablations.projection {
                    variants.push(v("rafm_noproj", m, RadialMode::Empirical, false));
                }
                if cfg.ablations.oracle {
                    variants.push(v("rafm_oracle", m, RadialMode::Oracle, cfg.sampler.project));
                }
                groups.push(TrainingGroup {
                    method: m,
                    train_mode: RadialMode::Empirical,
                    variants,
                });
            }
        }
    }
    groups
}

pub fn run_dir(output: &Path, dataset: &str, label: &str, seed: u64) -> PathBuf {
    output.join(dataset).join(label).join(format!("seed_{seed}"))
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub status: RunStatus,
    pub metrics: Option<MetricsReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunTiming {
    pub train_seconds: f64,
    /// Mean step time after the first ten steps.
    pub train_step_seconds: Option<f64>,
    pub sampling_seconds: f64,
    pub nfe: usize,
    pub eval_seconds: f64,
    /// Set when the model was trained once for several variants.
    pub shared_training: bool,
}

/// Data shared by every run of an experiment.
pub struct Prepared {
    pub label: String,
    pub split: DataSplit,
    pub empirical: RadialLaw,
    pub oracle: Option<RadialLaw>,
    pub eval: EvalContext,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let spec = cfg.dataset.spec()?;
    let label = spec.label();
    let data = spec.generate().with_context(|| format!("building dataset {label}"))?;
    let split = split(&data, spec.split_seed)?;
    let empirical = fit_empirical_radial(&split.train)?;
    let oracle = spec.oracle().map(RadialLaw::Oracle);
    let eval = EvalContext::new(
        split.test.clone(),
        cfg.eval.n_proj,
        evaluation_seed(&label, cfg.train.steps),
    );
    info!(
        "{label}: n={} d={} train/valid/test = {}/{}/{}",
        data.n(),
        data.d(),
        split.train.n(),
        split.valid.n(),
        split.test.n()
    );
    Ok(Prepared {
        label,
        split,
        empirical,
        oracle,
        eval,
    })
}

fn law_for<'a>(prep: &'a Prepared, mode: RadialMode) -> Result<&'a RadialLaw> {
    match mode {
        RadialMode::Empirical => Ok(&prep.empirical),
        RadialMode::Oracle => prep
            .oracle
            .as_ref()
            .context("dataset has no oracle radial law"),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Binned norm histograms (fractions) over `[0, q]`, `q` the 99.5% test
/// quantile, plus an overflow bin.
pub fn radial_histogram(
    mut w: impl Write,
    bins: usize,
    generated: &[f64],
    source: &[f64],
    test: &[f64],
) -> Result<()> {
    let top = quantile_linear(&sorted(test), 0.995).max(f64::MIN_POSITIVE);
    let width = top / bins as f64;
    let count = |v: &[f64]| {
        let mut c = vec![0usize; bins + 1];
        for &r in v.iter().filter(|r| r.is_finite()) {
            let k = ((r / width) as usize).min(bins);
            c[k] += 1;
        }
        let n = v.len().max(1) as f64;
        c.into_iter().map(|k| k as f64 / n).collect::<Vec<_>>()
    };
    let (g, s, t) = (count(generated), count(source), count(test));
    writeln!(w, "bin_lo,bin_hi,generated,source,test")?;
    for k in 0..=bins {
        let lo = k as f64 * width;
        let hi = if k == bins { f64::INFINITY } else { lo + width };
        writeln!(w, "{lo},{hi},{},{},{}", g[k], s[k], t[k])?;
    }
    Ok(())
}

fn source_for_variant(prep: &Prepared, v: &Variant, d: usize) -> Result<SourceSampler> {
    Ok(match v.method {
        Method::GaussianFm => SourceSampler::Gaussian { d },
        _ => SourceSampler::Radial {
            law: law_for(prep, v.radial_mode)?.clone(),
            d,
        },
    })
}

fn run_group(
    cfg: &ExperimentConfig,
    snapshot: &str,
    prep: &Prepared,
    group: &TrainingGroup,
    seed: u64,
) -> Result<Vec<RunRecord>> {
    let d = prep.split.train.d();
    let dirs: Vec<PathBuf> = group
        .variants
        .iter()
        .map(|v| run_dir(&cfg.output_dir, &prep.label, &v.label, seed))
        .collect();
    for dir in &dirs {
        if dir.exists() {
            fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), snapshot)?;
    }

    let train_source = match group.method {
        Method::GaussianFm => SourceSampler::Gaussian { d },
        _ => SourceSampler::Radial {
            law: law_for(prep, group.train_mode)?.clone(),
            d,
        },
    };
    info!("{} {} seed {seed}: training", prep.label, group.method);
    let started = Instant::now();
    let outcome = flow::train(
        group.method,
        &train_source,
        &prep.split.train,
        Some(&prep.split.valid),
        &cfg.train.to_core(),
        seed,
        Some(&dirs[0]),
    )?;
    let train_seconds = started.elapsed().as_secs_f64();
    if outcome.dropped_rows > 0 {
        warn!("{} seed {seed}: dropped {} zero-norm rows", prep.label, outcome.dropped_rows);
    }
    let step_mean = (outcome.step_seconds.len() > TIMING_WARMUP_STEPS).then(|| {
        let tail = &outcome.step_seconds[TIMING_WARMUP_STEPS..];
        tail.iter().sum::<f64>() / tail.len() as f64
    });
    {
        let mut f = fs::File::create(dirs[0].join(LOSS_FILE))?;
        flow::write_loss_log(&mut f, &outcome.losses)?;
    }
    for dir in &dirs[1..] {
        for ck in &outcome.checkpoints {
            fs::copy(ck, dir.join(ck.file_name().expect("file name")))?;
        }
        fs::copy(dirs[0].join(LOSS_FILE), dir.join(LOSS_FILE))?;
    }

    let sampler_cfg = cfg.sampler.to_core();
    let mut records = Vec::new();
    for (v, dir) in group.variants.iter().zip(&dirs) {
        let result = (|| -> Result<MetricsReport> {
            let source = source_for_variant(prep, v, d)?;
            let cfg_v = rafm_core::sampler::SamplerConfig {
                project: v.project,
                ..sampler_cfg
            };
            let started = Instant::now();
            let mut rng = Prng::with_stream(seed, streams::SAMPLING);
            let raw = sampler::generate(v.method, &outcome.model, &source, &mut rng, cfg.eval.n_gen, &cfg_v)?;
            let sampling_seconds = started.elapsed().as_secs_f64();

            let started = Instant::now();
            let metadata = RunMetadata {
                dataset: prep.label.clone(),
                method: v.label.clone(),
                seed,
                checkpoint_step: cfg.train.steps,
            };
            let opts = EvalOptions {
                angular: cfg.eval.angular,
                mmd: cfg.eval.mmd,
            };
            let report = prep.eval.evaluate(&raw, opts, metadata)?;
            let eval_seconds = started.elapsed().as_secs_f64();

            let mut seeds = BTreeMap::new();
            seeds.insert("seed".to_string(), seed);
            seeds.insert("matrix_seed".to_string(), cfg.dataset.matrix_seed);
            seeds.insert("data_seed".to_string(), cfg.dataset.data_seed);
            seeds.insert("split_seed".to_string(), cfg.dataset.split_seed);
            let name = format!("{}/{}/seed_{seed}", prep.label, v.label);
            save_matrix(&dir.join(SAMPLES_FILE), &raw, &name, seeds)?;

            let source_pts = source.sample(&mut Prng::with_stream(seed, streams::SAMPLING), cfg.eval.n_gen);
            let mut f = fs::File::create(dir.join(HISTOGRAM_FILE))?;
            radial_histogram(
                &mut f,
                cfg.eval.histogram_bins,
                &raw.row_norms(),
                &source_pts.row_norms(),
                &prep.eval.test_radii,
            )?;

            write_json(&dir.join(METRICS_FILE), &report)?;
            write_json(
                &dir.join(TIMING_FILE),
                &RunTiming {
                    train_seconds,
                    train_step_seconds: step_mean,
                    sampling_seconds,
                    nfe: cfg_v.nfe(),
                    eval_seconds,
                    shared_training: group.variants.len() > 1,
                },
            )?;
            Ok(report)
        })();
        records.push(match result {
            Ok(report) => {
                info!(
                    "{} {} seed {seed}: radial W1 {:.4} KS {:.4} sliced W1 {:.4}",
                    prep.label, v.label, report.radial_w1, report.ks, report.sliced_w1
                );
                RunRecord {
                    dataset: prep.label.clone(),
                    method: v.label.clone(),
                    seed,
                    dir: dir.clone(),
                    status: RunStatus::Ok,
                    metrics: Some(report),
                }
            }
            Err(e) => failed_record(&prep.label, &v.label, seed, dir, &e),
        });
    }
    Ok(records)
}

fn failed_record(dataset: &str, label: &str, seed: u64, dir: &Path, e: &anyhow::Error) -> RunRecord {
    let msg = format!("{e:#}");
    warn!("{dataset} {label} seed {seed} failed: {msg}");
    let _ = fs::create_dir_all(dir);
    let _ = fs::write(dir.join(ERROR_FILE), format!("{msg}\n"));
    let _ = fs::remove_file(dir.join(METRICS_FILE));
    RunRecord {
        dataset: dataset.to_string(),
        method: label.to_string(),
        seed,
        dir: dir.to_path_buf(),
        status: RunStatus::Failed(msg),
        metrics: None,
    }
}

/// Runs the whole experiment. A failure inside one run is recorded in its
/// directory and does not stop the others; dataset preparation errors abort.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let snapshot = cfg.to_toml()?;
    let prep = prepare(cfg)?;
    let groups = plan(cfg);
    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        for group in &groups {
            match run_group(cfg, &snapshot, &prep, group, seed) {
                Ok(r) => records.extend(r),
                Err(e) => {
                    for v in &group.variants {
                        let dir = run_dir(&cfg.output_dir, &prep.label, &v.label, seed);
                        records.push(failed_record(&prep.label, &v.label, seed, &dir, &e));
                    }
                }
            }
        }
    }
    Ok(records)
}

/// Reads a run's metrics back from disk.
pub fn load_metrics(dir: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(dir.join(METRICS_FILE))
        .with_context(|| format!("reading {}", dir.join(METRICS_FILE).display()))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_timing(dir: &Path) -> Result<RunTiming> {
    let text = fs::read_to_string(dir.join(TIMING_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rows of a generated sample file (may contain non-finite rows).
pub fn load_samples(dir: &Path) -> Result<SampleMatrix> {
    Ok(rafm_core::artifact::load_matrix(&dir.join(SAMPLES_FILE))?.1)
}
