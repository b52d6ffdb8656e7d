use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use super::experiment::{ExperimentKind, ResultRecord};
use crate::error::{Error, Result};

pub const JSONL_FILE: &str = "results.jsonl";
pub const WIDE_CSV_FILE: &str = "results_wide.csv";

/// One JSON object per line, in record order.
pub fn to_jsonl(records: &[ResultRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// One row per `(dataset, experiment, grid point)`, with value, half-width
/// and failure rate columns for every `(estimator, metric)` pair.
pub fn to_wide_csv(records: &[ResultRecord]) -> Result<String> {
    type Key = (String, ExperimentKind, u64, usize, usize);
    let mut columns: Vec<String> = Vec::new();
    let mut rows: BTreeMap<Key, (f64, BTreeMap<String, String>)> = BTreeMap::new();
    for r in records {
        let stem = format!("{}_{}", r.estimator.as_str(), r.metric.as_str());
        let cells = [
            (stem.clone(), fmt_opt(r.value)),
            (format!("{stem}_hw2s"), fmt_opt(r.mc_halfwidth_2sigma)),
            (format!("{stem}_failure_rate"), r.failure_rate.to_string()),
        ];
        // Grid points are positive, so their bit patterns sort numerically.
        let key = (r.dataset.clone(), r.experiment, r.grid_point.to_bits(), r.n_expert, r.n_total);
        let entry = rows.entry(key).or_insert_with(|| (r.grid_point, BTreeMap::new()));
        for (name, value) in cells {
            if !columns.contains(&name) {
                columns.push(name.clone());
            }
            entry.1.insert(name, value);
        }
    }
    columns.sort();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "dataset".to_string(),
        "experiment".into(),
        "grid_point".into(),
        "n_expert".into(),
        "n_total".into(),
    ];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for ((dataset, experiment, _, n, total), (point, cells)) in &rows {
        let mut rec = vec![
            dataset.clone(),
            experiment.as_str().to_string(),
            point.to_string(),
            n.to_string(),
            total.to_string(),
        ];
        rec.extend(columns.iter().map(|c| cells.get(c).cloned().unwrap_or_default()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `results.jsonl` and `results_wide.csv` into `dir`, creating it if
/// needed, and returns both paths.
pub fn emit_results(records: &[ResultRecord], dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    if records.is_empty() {
        return Err(Error::invalid("no results to emit"));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let jsonl = dir.join(JSONL_FILE);
    let wide = dir.join(WIDE_CSV_FILE);
    std::fs::write(&jsonl, to_jsonl(records)?)?;
    std::fs::write(&wide, to_wide_csv(records)?)?;
    Ok((jsonl, wide))
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
