//! Tables and curves from completed runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use xfnf_core::io::{read_summary, read_trace_csv, SummaryRow};

use crate::error::{CliError, CliResult};

pub const MISSING: &str = "-";

/// Every `*_summary.json` with its sibling CSV under `dir`, in path order.
fn find_runs(dir: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Some(stem) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix("_summary.json")) {
                // Per-run traces repeat the experiment-level file; pretraining is not a comparison row.
                if stem == "trace" || stem == "pretrain" {
                    continue;
                }
                let csv = path.with_file_name(format!("{stem}.csv"));
                if csv.exists() {
                    found.push((path, csv));
                }
            }
        }
    }
    found.sort();
    Ok(found)
}

fn find_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "pgm") {
                found.push(path.strip_prefix(dir).unwrap_or(&path).to_path_buf());
            }
        }
    }
    found.sort();
    Ok(found)
}

type GroupKey = (String, String, String);

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean crossing over seeds; annotated when only some seeds crossed.
fn crossing_cell(values: &[Option<usize>]) -> String {
    let hits: Vec<f64> = values.iter().flatten().map(|&v| v as f64).collect();
    match mean(&hits) {
        None => MISSING.to_string(),
        Some(m) if hits.len() == values.len() => format!("{m:.0}"),
        Some(m) => format!("{m:.0} ({}/{})", hits.len(), values.len()),
    }
}

pub struct ReportFiles {
    pub markdown: PathBuf,
    pub table_csv: PathBuf,
    pub curves_csv: PathBuf,
}

pub fn cmd_report(dir: &Path) -> CliResult<ReportFiles> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", dir.display())));
    }
    let runs = find_runs(dir)?;
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut curves: BTreeMap<(GroupKey, usize), Vec<f64>> = BTreeMap::new();
    for (summary, csv) in &runs {
        rows.extend(read_summary(summary)?);
        for ((model, init, dataset, _seed), row) in read_trace_csv(csv)? {
            if let Some(p) = row.psnr {
                curves.entry(((model, init, dataset), row.iteration)).or_default().push(p);
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("no completed runs under {}", dir.display())));
    }

    let thresholds: Vec<String> = {
        let mut t: Vec<(f64, String)> = rows
            .iter()
            .flat_map(|r| r.crossings.keys())
            .map(|k| (k.trim_start_matches("psnr>=").parse().unwrap_or(f64::INFINITY), k.clone()))
            .collect();
        t.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        t.dedup_by(|a, b| a.1 == b.1);
        t.into_iter().map(|(_, k)| k).collect()
    };
    let mut groups: BTreeMap<GroupKey, Vec<&SummaryRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry((r.dataset.clone(), r.model.clone(), r.init.clone())).or_default().push(r);
    }

    let mut md = String::from("# Iterations to reconstruction thresholds\n\n");
    let header: Vec<String> = ["dataset", "model", "init", "seeds"]
        .iter()
        .map(|s| s.to_string())
        .chain(thresholds.iter().map(|t| format!("{t} dB")))
        .chain(["final PSNR".to_string(), "final grad RMSE".to_string()])
        .collect();
    let _ = writeln!(md, "| {} |", header.join(" | "));
    let _ = writeln!(md, "|{}|", vec!["---"; header.len()].join("|"));
    let mut table = csv::Writer::from_writer(Vec::new());
    table.write_record(&header).map_err(|e| CliError::Data(e.to_string()))?;
    for ((dataset, model, init), members) in &groups {
        let metric = |name: &str| -> String {
            let v: Vec<f64> = members.iter().filter_map(|r| r.final_metrics.get(name).copied().flatten()).collect();
            mean(&v).map_or(MISSING.to_string(), |m| format!("{m:.4}"))
        };
        let mut cells = vec![dataset.clone(), model.clone(), init.clone(), members.len().to_string()];
        for t in &thresholds {
            let values: Vec<Option<usize>> = members.iter().map(|r| r.crossings.get(t).copied().flatten()).collect();
            cells.push(crossing_cell(&values));
        }
        cells.push(metric("psnr"));
        cells.push(metric("grad_rmse"));
        let _ = writeln!(md, "| {} |", cells.join(" | "));
        table.write_record(&cells).map_err(|e| CliError::Data(e.to_string()))?;
    }

    let images = find_images(dir)?;
    if !images.is_empty() {
        md.push_str("\n# Slices\n\n");
        for p in &images {
            let _ = writeln!(md, "- {}", p.display());
        }
    }

    let mut curve_csv = csv::Writer::from_writer(Vec::new());
    curve_csv
        .write_record(["model", "init", "dataset", "iteration", "mean_psnr", "seeds"])
        .map_err(|e| CliError::Data(e.to_string()))?;
    for (((model, init, dataset), it), v) in &curves {
        let m = mean(v).unwrap_or(f64::NAN);
        curve_csv
            .write_record([model, init, dataset, &it.to_string(), &format!("{m}"), &v.len().to_string()])
            .map_err(|e| CliError::Data(e.to_string()))?;
    }

    let files = ReportFiles {
        markdown: dir.join("report.md"),
        table_csv: dir.join("report.csv"),
        curves_csv: dir.join("curves.csv"),
    };
    let bytes = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| CliError::Data(e.to_string()));
    fs::write(&files.markdown, md)?;
    fs::write(&files.table_csv, bytes(table)?)?;
    fs::write(&files.curves_csv, bytes(curve_csv)?)?;
    Ok(files)
}
