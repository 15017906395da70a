//! Merges per-command result files into one table keyed by
//! `(model, dataset)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::metric_correlation;

/// One result file as written by an evaluation command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultRecord {
    Sgts {
        model: String,
        dataset: String,
        spearman_rho: f64,
        n_pairs: usize,
    },
    Probe {
        model: String,
        dataset: String,
        accuracy: f64,
        regularization: f64,
    },
    Fewshot {
        model: String,
        dataset: String,
        k: usize,
        mean: f64,
        std: f64,
    },
    AlignUniform {
        model: String,
        dataset: String,
        alignment: f64,
        uniformity: f64,
    },
}

impl ResultRecord {
    fn key(&self) -> (String, String) {
        let (m, d) = match self {
            ResultRecord::Sgts { model, dataset, .. }
            | ResultRecord::Probe { model, dataset, .. }
            | ResultRecord::Fewshot { model, dataset, .. }
            | ResultRecord::AlignUniform { model, dataset, .. } => (model, dataset),
        };
        (m.clone(), d.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub dataset: String,
    pub sgts: Option<f64>,
    pub probe_accuracy: Option<f64>,
    /// Mean few-shot accuracy per shot count.
    pub fewshot: BTreeMap<usize, f64>,
    pub alignment: Option<f64>,
    pub uniformity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    /// `probe` or `fewshot_<k>`.
    pub against: String,
    pub n: usize,
    pub pearson: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Sections with no data in any row.
    pub absent: Vec<String>,
    pub correlations: Vec<CorrelationEntry>,
}

fn json_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            json_files(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Every result record under `dir` (recursively); other JSON files are
/// ignored.
pub fn collect_records(dir: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    json_files(dir, &mut files)?;
    let mut records = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        if let Ok(r) = serde_json::from_str::<ResultRecord>(&text) {
            records.push(r);
        }
    }
    if records.is_empty() {
        return Err(Error::invalid(format!("no result files under {}", dir.display())));
    }
    Ok(records)
}

/// Later records for the same cell overwrite earlier ones.
pub fn build_report(records: &[ResultRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::invalid("no results to report"));
    }
    let mut rows: BTreeMap<(String, String), ReportRow> = BTreeMap::new();
    for r in records {
        let key = r.key();
        let row = rows.entry(key.clone()).or_insert_with(|| ReportRow {
            model: key.0,
            dataset: key.1,
            ..Default::default()
        });
        match r {
            ResultRecord::Sgts { spearman_rho, .. } => row.sgts = Some(*spearman_rho),
            ResultRecord::Probe { accuracy, .. } => row.probe_accuracy = Some(*accuracy),
            ResultRecord::Fewshot { k, mean, .. } => {
                row.fewshot.insert(*k, *mean);
            }
            ResultRecord::AlignUniform { alignment, uniformity, .. } => {
                row.alignment = Some(*alignment);
                row.uniformity = Some(*uniformity);
            }
        }
    }
    let rows: Vec<ReportRow> = rows.into_values().collect();
    let mut absent = Vec::new();
    if rows.iter().all(|r| r.sgts.is_none()) {
        absent.push("sgts".to_string());
    }
    if rows.iter().all(|r| r.probe_accuracy.is_none()) {
        absent.push("probe".to_string());
    }
    if rows.iter().all(|r| r.fewshot.is_empty()) {
        absent.push("fewshot".to_string());
    }
    if rows.iter().all(|r| r.alignment.is_none()) {
        absent.push("align_uniform".to_string());
    }

    let mut targets: Vec<(String, Box<dyn Fn(&ReportRow) -> Option<f64>>)> =
        vec![("probe".into(), Box::new(|r: &ReportRow| r.probe_accuracy))];
    let ks: std::collections::BTreeSet<usize> = rows.iter().flat_map(|r| r.fewshot.keys().copied()).collect();
    for k in ks {
        targets.push((format!("fewshot_{k}"), Box::new(move |r: &ReportRow| r.fewshot.get(&k).copied())));
    }
    let mut correlations = Vec::new();
    for (name, get) in targets {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| Some((r.sgts?, get(r)?))).unzip();
        if xs.len() >= 3 {
            if let Ok((pearson, p_value)) = metric_correlation(&xs, &ys) {
                correlations.push(CorrelationEntry {
                    against: name,
                    n: xs.len(),
                    pearson,
                    p_value,
                });
            }
        }
    }
    Ok(Report {
        rows,
        absent,
        correlations,
    })
}

fn cell(v: Option<f64>, scale: f64) -> String {
    v.map(|v| format!("{:.2}", v * scale)).unwrap_or_else(|| "-".into())
}

/// Human-readable table; accuracies in percent, similarity scores raw.
pub fn render_table(report: &Report) -> String {
    let ks: std::collections::BTreeSet<usize> = report.rows.iter().flat_map(|r| r.fewshot.keys().copied()).collect();
    let mut header = vec!["model".to_string(), "dataset".into(), "sgts".into(), "probe".into()];
    header.extend(ks.iter().map(|k| format!("{k}-shot")));
    header.extend(["align".to_string(), "uniform".into()]);
    let mut table: Vec<Vec<String>> = vec![header];
    for r in &report.rows {
        let mut line = vec![r.model.clone(), r.dataset.clone(), cell(r.sgts, 1.0), cell(r.probe_accuracy, 100.0)];
        line.extend(ks.iter().map(|k| cell(r.fewshot.get(k).copied(), 100.0)));
        line.extend([cell(r.alignment, 1.0), cell(r.uniformity, 1.0)]);
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len()).map(|c| table.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, line) in table.iter().enumerate() {
        let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        if i == 0 {
            writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))).unwrap();
        }
    }
    for a in &report.absent {
        writeln!(out, "{a}: absent").unwrap();
    }
    if !report.correlations.is_empty() {
        writeln!(out, "\ncorrelation with sgts:").unwrap();
        for c in &report.correlations {
            writeln!(out, "  {:<12} n={:<3} r={:.4} p={:.3e}", c.against, c.n, c.pearson, c.p_value).unwrap();
        }
    }
    out
}
