//! Cross-seed aggregation of stored run metrics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::run::{load_metrics, load_timing, ERROR_FILE, METRICS_FILE};

/// Scalar metrics carried into aggregate tables, in column order.
pub const METRIC_NAMES: [&str; 8] = [
    "radial_w1",
    "ks",
    "sliced_w1",
    "angular_sw",
    "mmd",
    "nan_rate",
    "exploding_rate",
    "invalid_rate",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (n - 1); absent for a single value.
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Some(Self { mean, std, n })
    }

    pub fn format(&self, digits: usize) -> String {
        match self.std {
            Some(s) => format!("{:.*} ± {:.*}", digits, self.mean, digits, s),
            None => format!("{:.*}", digits, self.mean),
        }
    }
}

/// One stored run directory, successful or failed.
#[derive(Clone, Debug)]
pub struct StoredRun {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub metrics: Option<BTreeMap<String, f64>>,
    pub train_seconds: Option<f64>,
}

fn metric_map(report: &rafm_core::metrics::MetricsReport) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("radial_w1".into(), report.radial_w1);
    m.insert("ks".into(), report.ks);
    m.insert("sliced_w1".into(), report.sliced_w1);
    if let Some(v) = report.angular_sw {
        m.insert("angular_sw".into(), v);
    }
    if let Some(v) = report.mmd {
        m.insert("mmd".into(), v);
    }
    m.insert("nan_rate".into(), report.nan_rate);
    m.insert("exploding_rate".into(), report.exploding_rate);
    m.insert("invalid_rate".into(), report.invalid_rate);
    m
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .map(|e| e.path())
        .collect();
    out.sort();
    Ok(out)
}

/// Scans `results/<dataset>/<method>/seed_<seed>/`. A seed directory with an
/// error marker or without metrics counts as a failed run.
pub fn collect(results: &Path) -> Result<Vec<StoredRun>> {
    let mut runs = Vec::new();
    if !results.exists() {
        return Ok(runs);
    }
    for ds in sorted_subdirs(results)? {
        let dataset = ds.file_name().unwrap().to_string_lossy().into_owned();
        if dataset == crate::tables::TABLES_DIR {
            continue;
        }
        for md in sorted_subdirs(&ds)? {
            let method = md.file_name().unwrap().to_string_lossy().into_owned();
            for sd in sorted_subdirs(&md)? {
                let name = sd.file_name().unwrap().to_string_lossy().into_owned();
                let Some(seed) = name.strip_prefix("seed_").and_then(|s| s.parse().ok()) else {
                    continue;
                };
                let ok = !sd.join(ERROR_FILE).exists() && sd.join(METRICS_FILE).exists();
                let metrics = if ok {
                    Some(metric_map(&load_metrics(&sd)?))
                } else {
                    None
                };
                let train_seconds = load_timing(&sd).ok().map(|t| t.train_seconds);
                runs.push(StoredRun {
                    dataset: dataset.clone(),
                    method: method.clone(),
                    seed,
                    dir: sd,
                    metrics,
                    train_seconds,
                });
            }
        }
    }
    Ok(runs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub method: String,
    pub seeds_ok: Vec<u64>,
    pub seeds_failed: Vec<u64>,
    /// Set when any seed failed; statistics cover the surviving seeds.
    pub flagged: bool,
    pub metrics: BTreeMap<String, Stat>,
    pub train_seconds: Option<Stat>,
}

/// Display order of method labels.
pub fn method_rank(label: &str) -> usize {
    const ORDER: [&str; 6] = [
        "gaussian_fm",
        "source_only",
        "source_only_oracle",
        "rafm",
        "rafm_oracle",
        "rafm_noproj",
    ];
    ORDER.iter().position(|m| *m == label).unwrap_or(ORDER.len())
}

/// Mean and sample standard deviation per metric for every (dataset, method).
pub fn aggregate(runs: &[StoredRun]) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<(String, usize, String), Vec<&StoredRun>> = BTreeMap::new();
    for r in runs {
        cells
            .entry((r.dataset.clone(), method_rank(&r.method), r.method.clone()))
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|((dataset, _, method), rs)| {
            let ok: Vec<&&StoredRun> = rs.iter().filter(|r| r.metrics.is_some()).collect();
            let mut metrics = BTreeMap::new();
            for name in METRIC_NAMES {
                let vals: Vec<f64> = ok
                    .iter()
                    .filter_map(|r| r.metrics.as_ref().unwrap().get(name).copied())
                    .collect();
                if let Some(s) = Stat::of(&vals) {
                    metrics.insert(name.to_string(), s);
                }
            }
            let times: Vec<f64> = ok.iter().filter_map(|r| r.train_seconds).collect();
            let seeds_failed: Vec<u64> = rs.iter().filter(|r| r.metrics.is_none()).map(|r| r.seed).collect();
            AggregateRow {
                dataset,
                method,
                seeds_ok: ok.iter().map(|r| r.seed).collect(),
                flagged: !seeds_failed.is_empty(),
                seeds_failed,
                metrics,
                train_seconds: Stat::of(&times),
            }
        })
        .collect()
}

pub fn find<'a>(rows: &'a [AggregateRow], dataset: &str, method: &str) -> Option<&'a AggregateRow> {
    rows.iter().find(|r| r.dataset == dataset && r.method == method)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv_line(fields: &[String]) -> String {
    let mut line = fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

/// Marker written in place of a missing cell.
pub const MISSING: &str = "";

/// `aggregate.csv` with raw mean/std/n columns per metric.
pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut header = vec!["dataset".to_string(), "method".to_string(), "n_ok".into(), "n_failed".into()];
    for m in METRIC_NAMES {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    header.push("train_seconds_mean".into());
    header.push("train_seconds_std".into());
    header.push("flags".into());
    let mut out = csv_line(&header);
    let num = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_else(|| MISSING.to_string());
    for r in rows {
        let mut f = vec![
            r.dataset.clone(),
            r.method.clone(),
            r.seeds_ok.len().to_string(),
            r.seeds_failed.len().to_string(),
        ];
        let mut missing = Vec::new();
        for m in METRIC_NAMES {
            let s = r.metrics.get(m);
            if s.is_none() && !matches!(m, "angular_sw" | "mmd") {
                missing.push(m);
            }
            f.push(num(s.map(|s| s.mean)));
            f.push(num(s.and_then(|s| s.std)));
        }
        f.push(num(r.train_seconds.map(|s| s.mean)));
        f.push(num(r.train_seconds.and_then(|s| s.std)));
        let mut flags = Vec::new();
        if r.flagged {
            flags.push(format!("failed_seeds={:?}", r.seeds_failed));
        }
        if !missing.is_empty() {
            flags.push(format!("missing={}", missing.join("|")));
        }
        f.push(flags.join(";"));
        out.push_str(&csv_line(&f));
    }
    out
}
