//! Coverage reports, per-replication records and dataset files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::experiment::ReplicationRecord;
use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// One `(scheme, inflation)` cell of a coverage study. Field order is the CSV
/// column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageRow {
    pub scheme: String,
    pub alpha: f64,
    pub inflation: f64,
    pub exact_freq: f64,
    pub conservative_freq: f64,
    /// Binomial standard error of `conservative_freq`.
    pub mc_se: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub n: usize,
    pub p: usize,
    pub covariance: String,
    pub marginal: String,
    pub seed: u64,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "scheme",
    "alpha",
    "inflation",
    "exact_freq",
    "conservative_freq",
    "mc_se",
    "K",
    "B",
    "n",
    "p",
    "covariance",
    "marginal",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn row(&self, scheme: &str, inflation: f64) -> Option<&CoverageRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.inflation == inflation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Parse(format!("unknown report format `{s}`"))),
        }
    }
}

pub fn write_report_to<W: Write>(report: &CoverageReport, out: W, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if report.rows.is_empty() {
                w.write_record(CSV_COLUMNS)?;
            }
            for row in &report.rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, report)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_report(report: &CoverageReport, path: &Path, format: ReportFormat) -> Result<()> {
    write_report_to(report, BufWriter::new(File::create(path)?), format)
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<CoverageReport> {
    let file = BufReader::new(File::open(path)?);
    match format {
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_reader(file);
            let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
            if header != CSV_COLUMNS {
                return Err(Error::Parse(format!(
                    "unexpected report columns {header:?}"
                )));
            }
            let rows = r.deserialize().collect::<std::result::Result<_, _>>()?;
            Ok(CoverageReport { rows })
        }
        ReportFormat::Json => Ok(serde_json::from_reader(file)?),
    }
}

/// Per-replication `T_n` and bootstrap quantiles, one column per scheme.
pub fn write_records(path: &Path, schemes: &[String], records: &[ReplicationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["replication".to_owned(), "t_n".to_owned()];
    header.extend(schemes.iter().cloned());
    w.write_record(&header)?;
    for (k, r) in records.iter().enumerate() {
        let mut line = vec![k.to_string(), r.t_n.to_string()];
        line.extend(r.t_star.iter().map(f64::to_string));
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

/// Where a dataset file came from; written next to it as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub n: usize,
    pub p: usize,
    pub covariance: String,
    pub marginal: String,
    pub seed: u64,
    pub true_mean: Option<f64>,
    pub generator: String,
}

/// Writes `n,p` on the first line, then one comma-separated row per line.
pub fn write_dataset_to<W: Write>(data: &DataMatrix, mut out: W) -> Result<()> {
    writeln!(out, "{},{}", data.nrows(), data.ncols())?;
    let mut line = String::new();
    for row in data.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset(data: &DataMatrix, path: &Path, provenance: &DatasetProvenance) -> Result<()> {
    write_dataset_to(data, BufWriter::new(File::create(path)?))?;
    let side = sidecar_path(path);
    let mut f = BufWriter::new(File::create(side)?);
    serde_json::to_writer_pretty(&mut f, provenance)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

pub fn read_dataset(path: &Path) -> Result<DataMatrix> {
    read_dataset_from(BufReader::new(File::open(path)?))
}

pub fn read_dataset_from<R: BufRead>(input: R) -> Result<DataMatrix> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or(Error::Empty("dataset file has no header line"))??;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("header must be `n,p`: {e}")))?;
    let [n, p] = dims[..] else {
        return Err(Error::Parse(format!("header must be `n,p`, got `{header}`")));
    };
    let mut values = Vec::with_capacity(n.saturating_mul(p));
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("row {i}: bad value `{tok}`: {e}")))?;
            values.push(v);
        }
        if values.len() - before != p {
            return Err(Error::Parse(format!(
                "row {i} has {} values, expected {p}",
                values.len() - before
            )));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse(format!("expected {n} rows, found {rows}")));
    }
    DataMatrix::new(n, p, values)
}
