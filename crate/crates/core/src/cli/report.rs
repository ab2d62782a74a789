//! Summaries of a results file: a mean table ranked by insertion AUC and,
//! for sweeps, one chart per metric with a series per strategy.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::experiment::read_results;
use super::svg::{line_chart, Series};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, ResultRow, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub strategy: String,
    pub summary: Summary,
}

#[derive(Debug, Clone)]
pub struct Report {
    /// Sorted by mean insertion AUC, descending.
    pub table: Vec<TableRow>,
    /// Chart series keyed by metric (`insertion` / `deletion`); empty when
    /// the results carry no sweep.
    pub sweep: Vec<(String, Vec<Series>)>,
    pub files: Vec<PathBuf>,
}

/// Name of the chart series a row belongs to: the strategy for attack
/// paths, the method otherwise.
fn series_name(row: &ResultRow) -> String {
    if row.strategy == "-" {
        row.method.clone()
    } else {
        row.strategy.clone()
    }
}

/// Per-(method, strategy) means, best insertion first; ties break by name.
pub fn summary_table(rows: &[ResultRow]) -> Result<Vec<TableRow>> {
    let mut groups: BTreeMap<(String, String), Vec<ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.strategy.clone())).or_default().push(r.clone());
    }
    let mut table = groups
        .into_iter()
        .map(|((method, strategy), rs)| {
            Ok(TableRow {
                method,
                strategy,
                summary: aggregate(&rs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    table.sort_by(|a, b| {
        b.summary
            .mean_insertion
            .total_cmp(&a.summary.mean_insertion)
            .then_with(|| (&a.method, &a.strategy).cmp(&(&b.method, &b.strategy)))
    });
    Ok(table)
}

pub fn format_table(table: &[TableRow]) -> String {
    let mut s = format!(
        "{:<4} {:<10} {:<12} {:>6} {:>10} {:>10}\n",
        "rank", "method", "strategy", "n", "insertion", "deletion"
    );
    for (i, r) in table.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<4} {:<10} {:<12} {:>6} {:>10.4} {:>10.4}",
            i + 1,
            r.method,
            r.strategy,
            r.summary.count,
            r.summary.mean_insertion,
            r.summary.mean_deletion
        );
    }
    s
}

/// Mean AUC per (series, sweep value), values sorted numerically.
pub fn sweep_series(rows: &[ResultRow]) -> Result<Vec<(String, Vec<Series>)>> {
    let swept: Vec<&ResultRow> = rows.iter().filter(|r| r.sweep_axis != "none").collect();
    if swept.is_empty() {
        return Ok(Vec::new());
    }
    // series -> [(value, insertion sum, deletion sum, count)]
    let mut acc: BTreeMap<String, Vec<(f64, f64, f64, usize)>> = BTreeMap::new();
    for r in swept {
        let v: f64 = r
            .sweep_value
            .parse()
            .map_err(|_| Error::invalid(format!("non-numeric sweep value `{}`", r.sweep_value)))?;
        let pts = acc.entry(series_name(r)).or_default();
        let i = match pts.iter().position(|p| p.0 == v) {
            Some(i) => i,
            None => {
                pts.push((v, 0.0, 0.0, 0));
                pts.len() - 1
            }
        };
        pts[i].1 += r.insertion_auc;
        pts[i].2 += r.deletion_auc;
        pts[i].3 += 1;
    }
    for pts in acc.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let build = |pick: fn(&(f64, f64, f64, usize)) -> f64| -> Vec<Series> {
        acc.iter()
            .map(|(name, pts)| Series {
                name: name.clone(),
                points: pts.iter().map(|e| (e.0, pick(e))).collect(),
            })
            .collect()
    };
    Ok(vec![
        ("insertion".into(), build(|e| e.1 / e.3 as f64)),
        ("deletion".into(), build(|e| e.2 / e.3 as f64)),
    ])
}

/// Reads `results` and writes `summary.txt`, `summary.csv` and, for sweeps,
/// `sweep_insertion.svg` / `sweep_deletion.svg` into `out_dir`.
pub fn report(results: &Path, out_dir: &Path) -> Result<Report> {
    let rows = read_results(results)?;
    if rows.is_empty() {
        return Err(Error::format(results, "no result rows"));
    }
    let table = summary_table(&rows)?;
    let sweep = sweep_series(&rows)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();

    let txt = out_dir.join("summary.txt");
    std::fs::write(&txt, format_table(&table)).map_err(|e| Error::io(&txt, e))?;
    files.push(txt);

    let csv_path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["rank", "method", "strategy", "count", "mean_insertion_auc", "mean_deletion_auc"])?;
    for (i, r) in table.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.method.clone(),
            r.strategy.clone(),
            r.summary.count.to_string(),
            r.summary.mean_insertion.to_string(),
            r.summary.mean_deletion.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    files.push(csv_path);

    let axis = rows.iter().map(|r| r.sweep_axis.as_str()).find(|a| *a != "none").unwrap_or("none");
    for (metric, series) in &sweep {
        let path = out_dir.join(format!("sweep_{metric}.svg"));
        let svg = line_chart(
            &format!("mean {metric} AUC vs {axis}"),
            axis,
            &format!("{metric} AUC"),
            series,
        );
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }
    Ok(Report { table, sweep, files })
}
