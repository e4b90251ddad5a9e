//! Long-format CSV traces and a JSON summary per experiment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One evaluated iteration of one run. Absent metrics serialize as empty cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub grad_rmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub init: String,
    pub dataset: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    /// Threshold label (e.g. `psnr>=40`) to first crossing iteration.
    pub crossings: BTreeMap<String, Option<usize>>,
    pub final_metrics: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow<'a> {
    model: &'a str,
    init: &'a str,
    dataset: &'a str,
    seed: u64,
    iteration: usize,
    loss: Option<f64>,
    psnr: Option<f64>,
    ssim: Option<f64>,
    grad_rmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub init: String,
    pub dataset: String,
    pub seed: u64,
    pub crossings: BTreeMap<String, Option<usize>>,
    /// Non-finite values (e.g. an exact PSNR) are stored as `null`.
    pub final_metrics: BTreeMap<String, Option<f64>>,
}

impl From<&RunRecord> for SummaryRow {
    fn from(r: &RunRecord) -> Self {
        Self {
            model: r.model.clone(),
            init: r.init.clone(),
            dataset: r.dataset.clone(),
            seed: r.seed,
            crossings: r.crossings.clone(),
            final_metrics: r
                .final_metrics
                .iter()
                .map(|(k, v)| (k.clone(), v.is_finite().then_some(*v)))
                .collect(),
        }
    }
}

/// Write `<dir>/<experiment>.csv` and `<dir>/<experiment>_summary.json`.
pub fn write_results(runs: &[RunRecord], dir: &Path, experiment: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{experiment}.csv"));
    let json_path = dir.join(format!("{experiment}_summary.json"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in runs {
        for row in &r.rows {
            w.serialize(CsvRow {
                model: &r.model,
                init: &r.init,
                dataset: &r.dataset,
                seed: r.seed,
                iteration: row.iteration,
                loss: row.loss,
                psnr: row.psnr,
                ssim: row.ssim,
                grad_rmse: row.grad_rmse,
            })?;
        }
    }
    w.flush()?;
    let summary: Vec<SummaryRow> = runs.iter().map(SummaryRow::from).collect();
    fs::write(&json_path, serde_json::to_vec_pretty(&summary)?)?;
    Ok((csv_path, json_path))
}

/// Parsed CSV rows keyed by `(model, init, dataset, seed)`, in file order.
pub fn read_trace_csv(path: &Path) -> Result<Vec<((String, String, String, u64), TraceRow)>> {
    #[derive(Deserialize)]
    struct Owned {
        model: String,
        init: String,
        dataset: String,
        seed: u64,
        iteration: usize,
        loss: Option<f64>,
        psnr: Option<f64>,
        ssim: Option<f64>,
        grad_rmse: Option<f64>,
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize::<Owned>() {
        let o = rec?;
        out.push((
            (o.model, o.init, o.dataset, o.seed),
            TraceRow {
                iteration: o.iteration,
                loss: o.loss,
                psnr: o.psnr,
                ssim: o.ssim,
                grad_rmse: o.grad_rmse,
            },
        ));
    }
    Ok(out)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
