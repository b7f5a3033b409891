//! Result tables, regenerated from stored run files only.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;

use crate::aggregate::{aggregate, aggregate_csv, collect, csv_line, find, AggregateRow, Stat, MISSING};

pub const TABLES_DIR: &str = "tables";
const DIGITS: usize = 4;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Stat { mean: f64, std: Option<f64>, n: usize, flagged: bool },
    Missing { missing: bool },
}

impl Cell {
    fn stat(s: Option<&Stat>, flagged: bool) -> Self {
        match s {
            Some(s) => Cell::Stat {
                mean: s.mean,
                std: s.std,
                n: s.n,
                flagged,
            },
            None => Cell::Missing { missing: true },
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Text(t) => t.clone(),
            Cell::Stat { mean, std, n, flagged } => {
                let s = Stat { mean: *mean, std: *std, n: *n }.format(DIGITS);
                if *flagged {
                    format!("{s} *")
                } else {
                    s
                }
            }
            Cell::Missing { .. } => MISSING.to_string(),
        }
    }
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = csv_line(&self.columns);
        for r in &self.rows {
            out.push_str(&csv_line(&r.iter().map(Cell::render).collect::<Vec<_>>()));
        }
        out
    }
}

fn metric_cell(row: Option<&AggregateRow>, metric: &str) -> Cell {
    match row {
        Some(r) => Cell::stat(r.metrics.get(metric), r.flagged),
        None => Cell::Missing { missing: true },
    }
}

fn datasets(rows: &[AggregateRow]) -> Vec<String> {
    let mut ds: Vec<String> = rows.iter().map(|r| r.dataset.clone()).collect();
    ds.dedup();
    ds
}

/// Main comparison: radial W1, KS, sliced W1 and training time.
pub fn table_main(rows: &[AggregateRow]) -> Table {
    let mut out = Vec::new();
    for ds in datasets(rows) {
        for m in ["gaussian_fm", "source_only", "rafm"] {
            let Some(r) = find(rows, &ds, m) else { continue };
            let mut cells = vec![Cell::Text(ds.clone()), Cell::Text(m.to_string())];
            for metric in ["radial_w1", "ks", "sliced_w1"] {
                cells.push(metric_cell(Some(r), metric));
            }
            cells.push(match r.train_seconds {
                Some(s) => Cell::Stat {
                    mean: s.mean,
                    std: s.std,
                    n: s.n,
                    flagged: r.flagged,
                },
                None => Cell::Missing { missing: true },
            });
            out.push(cells);
        }
    }
    Table {
        name: "table1_main".into(),
        columns: ["dataset", "method", "radial_w1", "ks", "sliced_w1", "train_seconds"]
            .map(String::from)
            .to_vec(),
        rows: out,
    }
}

/// Empirical against oracle radial laws.
pub fn table_oracle(rows: &[AggregateRow]) -> Table {
    let methods = ["source_only", "source_only_oracle", "rafm", "rafm_oracle"];
    let mut out = Vec::new();
    for ds in datasets(rows) {
        if find(rows, &ds, "rafm_oracle").is_none() && find(rows, &ds, "source_only_oracle").is_none() {
            continue;
        }
        for metric in ["radial_w1", "ks", "sliced_w1"] {
            let mut cells = vec![Cell::Text(ds.clone()), Cell::Text(metric.to_string())];
            for m in methods {
                cells.push(metric_cell(find(rows, &ds, m), metric));
            }
            out.push(cells);
        }
    }
    let mut columns = vec!["dataset".to_string(), "metric".to_string()];
    columns.extend(methods.map(String::from));
    Table {
        name: "table3_oracle".into(),
        columns,
        rows: out,
    }
}

/// Low-dimensional toy including the angular metric.
pub fn table_toy(rows: &[AggregateRow]) -> Table {
    let mut out = Vec::new();
    for ds in datasets(rows).into_iter().filter(|d| d.starts_with("toy2d")) {
        for m in ["gaussian_fm", "source_only", "rafm"] {
            let Some(r) = find(rows, &ds, m) else { continue };
            let mut cells = vec![Cell::Text(ds.clone()), Cell::Text(m.to_string())];
            for metric in ["radial_w1", "ks", "sliced_w1", "angular_sw"] {
                cells.push(metric_cell(Some(r), metric));
            }
            out.push(cells);
        }
    }
    Table {
        name: "table4_toy".into(),
        columns: ["dataset", "method", "radial_w1", "ks", "sliced_w1", "angular_sw"]
            .map(String::from)
            .to_vec(),
        rows: out,
    }
}

/// RAFM with and without tangential projection, with stability rates.
pub fn table_projection(rows: &[AggregateRow]) -> Table {
    let mut out = Vec::new();
    for ds in datasets(rows) {
        if find(rows, &ds, "rafm_noproj").is_none() {
            continue;
        }
        for (m, name) in [("rafm", "with_projection"), ("rafm_noproj", "without_projection")] {
            let r = find(rows, &ds, m);
            let mut cells = vec![Cell::Text(ds.clone()), Cell::Text(name.to_string())];
            for metric in ["radial_w1", "ks", "sliced_w1", "nan_rate", "exploding_rate", "invalid_rate"] {
                cells.push(metric_cell(r, metric));
            }
            out.push(cells);
        }
    }
    Table {
        name: "table5_projection".into(),
        columns: [
            "dataset",
            "variant",
            "radial_w1",
            "ks",
            "sliced_w1",
            "nan_rate",
            "exploding_rate",
            "invalid_rate",
        ]
        .map(String::from)
        .to_vec(),
        rows: out,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

/// Writes `aggregate.{csv,json}` under `results/tables/`.
pub fn write_aggregate(results: &Path) -> Result<Vec<AggregateRow>> {
    let rows = aggregate(&collect(results)?);
    let dir = results.join(TABLES_DIR);
    fs::create_dir_all(&dir)?;
    write_text(&dir.join("aggregate.csv"), &aggregate_csv(&rows))?;
    write_text(&dir.join("aggregate.json"), &(serde_json::to_string_pretty(&rows)? + "\n"))?;
    Ok(rows)
}

/// Regenerates every table from the stored run files. Returns the paths written.
pub fn write_tables(results: &Path) -> Result<Vec<PathBuf>> {
    let rows = write_aggregate(results)?;
    let dir = results.join(TABLES_DIR);
    let mut written = vec![dir.join("aggregate.csv"), dir.join("aggregate.json")];
    for t in [table_main(&rows), table_oracle(&rows), table_toy(&rows), table_projection(&rows)] {
        let csv = dir.join(format!("{}.csv", t.name));
        let json = dir.join(format!("{}.json", t.name));
        write_text(&csv, &t.to_csv())?;
        write_text(&json, &(serde_json::to_string_pretty(&t)? + "\n"))?;
        written.push(csv);
        written.push(json);
    }
    Ok(written)
}
