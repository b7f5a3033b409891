//! Training-step and sampling wall-clock measurements.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use log::info;
use rafm_core::flow::{self, streams, TrainConfig};
use rafm_core::numerics::Prng;
use rafm_core::sampler::{self, SamplerConfig};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::run::prepare;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Repeats {
    pub repeats: Vec<f64>,
    pub mean: f64,
}

impl Repeats {
    fn new(repeats: Vec<f64>) -> Self {
        let mean = repeats.iter().sum::<f64>() / repeats.len().max(1) as f64;
        Self { repeats, mean }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MethodTiming {
    /// Mean seconds per optimisation step, warm-up excluded.
    pub train_step_seconds: Repeats,
    /// Wall seconds to generate one batch, keyed by NFE.
    pub sampling_seconds: BTreeMap<usize, Repeats>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TimingReport {
    pub dataset: String,
    pub warmup_steps: u64,
    pub measured_steps: u64,
    pub batch_size: usize,
    pub sample_batch: usize,
    pub methods: BTreeMap<String, MethodTiming>,
}

/// Times every configured method: `repeats` independent short trainings
/// (first `warmup_steps` discarded) and one sampling batch per NFE level
/// with the resulting model. Writes `results/<dataset>/timing.json`.
pub fn timing(cfg: &ExperimentConfig) -> Result<(TimingReport, PathBuf)> {
    let prep = prepare(cfg)?;
    let t = &cfg.timing;
    let d = prep.split.train.d();
    let train_cfg = TrainConfig {
        steps: t.warmup_steps + t.measured_steps,
        checkpoint_every: 0,
        ..cfg.train.to_core()
    };
    let mut methods = BTreeMap::new();
    for &m in &cfg.methods {
        let source = flow::source_for(m, &prep.empirical, d);
        let mut step_means = Vec::new();
        let mut sampling: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for rep in 0..t.repeats {
            let seed = cfg.seeds[rep % cfg.seeds.len()];
            let out = flow::train(m, &source, &prep.split.train, None, &train_cfg, seed, None)?;
            let tail = &out.step_seconds[t.warmup_steps as usize..];
            step_means.push(tail.iter().sum::<f64>() / tail.len().max(1) as f64);
            for &nfe in &t.nfe {
                let scfg = SamplerConfig {
                    steps: nfe / 4,
                    ..cfg.sampler.to_core()
                };
                let mut rng = Prng::with_stream(seed, streams::SAMPLING);
                let started = Instant::now();
                sampler::generate(m, &out.model, &source, &mut rng, t.batch, &scfg)?;
                sampling.entry(nfe).or_default().push(started.elapsed().as_secs_f64());
            }
        }
        info!("{} {m}: {:.3e} s/step", prep.label, step_means.iter().sum::<f64>() / step_means.len() as f64);
        methods.insert(
            m.as_str().to_string(),
            MethodTiming {
                train_step_seconds: Repeats::new(step_means),
                sampling_seconds: sampling.into_iter().map(|(k, v)| (k, Repeats::new(v))).collect(),
            },
        );
    }
    let report = TimingReport {
        dataset: prep.label.clone(),
        warmup_steps: t.warmup_steps,
        measured_steps: t.measured_steps,
        batch_size: cfg.train.batch_size,
        sample_batch: t.batch,
        methods,
    };
    let dir = cfg.output_dir.join(&prep.label);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("timing.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok((report, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::smoke_config;

    #[test]
    fn repeats_and_nfe_levels() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config(dir.path());
        cfg.methods = vec![rafm_core::flow::Method::Rafm];
        cfg.dataset.n_samples = Some(500);
        cfg.timing = crate::config::TimingSection {
            warmup_steps: 10,
            measured_steps: 5,
            repeats: 3,
            nfe: vec![4, 256],
            batch: 500,
        };
        let (report, path) = timing(&cfg).unwrap();
        assert!(path.ends_with("toy2d/timing.json"));
        let m = &report.methods["rafm"];
        assert_eq!(m.train_step_seconds.repeats.len(), 3);
        let r = &m.sampling_seconds[&256];
        assert!((r.mean - r.repeats.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert!(r.mean > m.sampling_seconds[&4].mean);
        let back: TimingReport = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
        assert_eq!(back.methods["rafm"].sampling_seconds.len(), 2);
        assert_eq!(back.warmup_steps, 10);
    }
}
