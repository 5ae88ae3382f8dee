//! File formats: tabular regression CSV input, metric CSV output and belief
//! checkpoints.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lofi_core::belief::{DlrBelief, SphericalBelief};

use crate::config::TargetColumn;

pub const METRIC_HEADER: &str = "t,task_id,seed,method,metric,value";

/// Feature rows and targets read from a headed CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTable {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

pub fn load_csv_regression(path: &Path, target: &TargetColumn) -> Result<RegressionTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.len() < 2 {
        bail!("{}: need at least one feature column and a target column", path.display());
    }
    let target_idx = match target {
        TargetColumn::Last => headers.len() - 1,
        TargetColumn::Index(i) if *i < headers.len() => *i,
        TargetColumn::Index(i) => bail!("{}: target column {i} out of range ({} columns)", path.display(), headers.len()),
        TargetColumn::Name(n) => headers
            .iter()
            .position(|h| h == n)
            .with_context(|| format!("{}: no column named `{n}`", path.display()))?,
    };
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (row, record) in reader.records().enumerate() {
        // row numbers are 1-based data rows (the header is row 0)
        let record = record.with_context(|| format!("{}: row {}", path.display(), row + 1))?;
        if record.len() != headers.len() {
            bail!("{}: row {} has {} fields, expected {}", path.display(), row + 1, record.len(), headers.len());
        }
        let mut x = Vec::with_capacity(headers.len() - 1);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .with_context(|| format!("{}: row {}, column `{}`: `{cell}` is not a finite number", path.display(), row + 1, headers[col]))?;
            if col == target_idx {
                targets.push(v);
            } else {
                x.push(v);
            }
        }
        features.push(x);
    }
    if targets.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let mut feature_names = headers.clone();
    let target_name = feature_names.remove(target_idx);
    Ok(RegressionTable {
        feature_names,
        target_name,
        features,
        targets,
    })
}

/// One row of the metric CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub t: usize,
    pub task_id: usize,
    pub seed: u64,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.task_id.to_string(),
            r.seed.to_string(),
            r.method.clone(),
            r.metric.clone(),
            format_float(r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_file(path: &Path, rows: &[MetricRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_metrics(std::io::BufWriter::new(f), rows)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<&str> = reader.headers()?.iter().collect();
    if header != METRIC_HEADER.split(',').collect::<Vec<_>>() {
        bail!("{}: unexpected header", path.display());
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).with_context(|| format!("{}: row {} is short", path.display(), i + 1));
        rows.push(MetricRecord {
            t: field(0)?.parse()?,
            task_id: field(1)?.parse()?,
            seed: field(2)?.parse()?,
            method: field(3)?.to_string(),
            metric: field(4)?.to_string(),
            value: field(5)?.parse()?,
        });
    }
    Ok(rows)
}

/// A saved posterior.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Dlr(DlrBelief),
    Spherical(SphericalBelief),
}

impl Checkpoint {
    pub fn encode(&self) -> String {
        match self {
            Checkpoint::Dlr(b) => b.encode(),
            Checkpoint::Spherical(b) => b.encode(),
        }
    }

    pub fn decode(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        Ok(match first.trim() {
            "lofi-dlr v1" => Checkpoint::Dlr(DlrBelief::decode(text)?),
            "lofi-spherical v1" => Checkpoint::Spherical(SphericalBelief::decode(text)?),
            other => bail!("unrecognized checkpoint header `{other}`"),
        })
    }
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, c.encode()).with_context(|| format!("writing {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Checkpoint::decode(&text).with_context(|| format!("decoding {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lofi_core::{DMatrix, DVector};

    fn temp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("lofi-io-{}-{name}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn csv_by_name_and_bad_cell_row() {
        let dir = temp("csv");
        let p = dir.join("a.csv");
        fs::write(&p, "a, y, b\n1, 2, 3\n4, 5, 6\n").unwrap();
        let t = load_csv_regression(&p, &TargetColumn::Name("y".into())).unwrap();
        assert_eq!(t.features, vec![vec![1.0, 3.0], vec![4.0, 6.0]]);
        assert_eq!(t.targets, vec![2.0, 5.0]);
        assert_eq!(t.feature_names, vec!["a", "b"]);
        fs::write(&p, "a,y\n1,2\n3,oops\n").unwrap();
        let err = load_csv_regression(&p, &TargetColumn::Last).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("oops"), "{err}");
    }

    #[test]
    fn metrics_round_trip_exactly() {
        let rows = vec![MetricRecord {
            t: 3,
            task_id: 1,
            seed: 9,
            method: "lofi".into(),
            metric: "rmse".into(),
            value: 0.1 + 0.2,
        }];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(METRIC_HEADER));
        assert!(text.contains("3.0000000000000004e-1"));
        let p = temp("m").join("m.csv");
        write_metrics_file(&p, &rows).unwrap();
        assert_eq!(read_metrics_file(&p).unwrap(), rows);
    }

    #[test]
    fn checkpoint_round_trip() {
        let b = DlrBelief::new(DVector::from_vec(vec![0.5, -1.0]), DVector::from_vec(vec![1.0, 2.0]), DMatrix::from_row_slice(2, 1, &[0.3, 0.1])).unwrap();
        let p = temp("ck").join("b.txt");
        save_checkpoint(&p, &Checkpoint::Dlr(b.clone())).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), Checkpoint::Dlr(b));
        assert!(Checkpoint::decode("junk").is_err());
    }
}
