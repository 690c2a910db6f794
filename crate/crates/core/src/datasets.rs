//! Synthetic benchmark data, CSV ingestion and the average-rank metric.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Dataset;

/// One of the four synthetic regression problems with Gaussian features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub id: u8,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(id: u8, n: usize, d: usize, seed: u64) -> Result<Self> {
        let spec = SyntheticSpec { id, n, d, seed };
        let truth = ground_truth(id)?;
        if n == 0 {
            return Err(Error::InvalidInput("synthetic dataset needs at least one row".into()));
        }
        if d < truth.len() {
            return Err(Error::InvalidInput(format!(
                "dataset {id} needs d >= {}, got {d}",
                truth.len()
            )));
        }
        Ok(spec)
    }

    /// Zero-based indices of the features the target depends on.
    pub fn truth(&self) -> Vec<usize> {
        ground_truth(self.id).expect("validated id")
    }

    /// Best achievable average rank of the truth features.
    pub fn ideal_rank(&self) -> f64 {
        (self.truth().len() as f64 + 1.0) / 2.0
    }
}

/// Zero-based ground-truth feature set of synthetic dataset `id`.
pub fn ground_truth(id: u8) -> Result<Vec<usize>> {
    match id {
        1 => Ok(vec![0, 1]),
        2 | 3 => Ok(vec![0, 1, 2, 3]),
        4 => Ok(vec![0, 1, 2]),
        _ => Err(Error::InvalidInput(format!(
            "unknown synthetic dataset id {id} (expected 1-4)"
        ))),
    }
}

/// Noise-free target of dataset `id` at `x`; `x` must hold the truth features.
pub fn synthetic_target(id: u8, x: &[f64]) -> f64 {
    match id {
        1 => x[0] * x[0] - 0.5 * x[1] * x[1] + (2.0 * PI * x[0]).sin(),
        2 => {
            x[0].exp() * (x[1] * x[2]).tanh()
                + (-x[3].abs()).exp() * (x[0] * x[1]).tanh()
                + (x[0] * x[1]).exp() * (x[2] * x[3]).sin()
        }
        3 => {
            x[0].sin() * x[1].exp()
                + (x[2] * x[3]).cos() * (x[0] * x[1] * PI).tanh()
                + (-(x[0] * x[0] + x[1] * x[1])).exp() * ((x[2] + x[3]) * PI).sin()
        }
        4 => (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] - 4.0).exp(),
        _ => panic!("unknown synthetic dataset id {id}"),
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let spec = SyntheticSpec::new(spec.id, spec.n, spec.d, spec.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows: Vec<Vec<f64>> = (0..spec.n)
        .map(|_| (0..spec.d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let targets = rows.iter().map(|r| synthetic_target(spec.id, r)).collect();
    Dataset::unnamed(rows, targets)
}

/// Mean 1-based rank of `truth` when features are sorted by descending
/// `|attribution|`, ties going to the lower index.
pub fn average_rank(attributions: &[f64], truth: &[usize]) -> Result<f64> {
    let d = attributions.len();
    if truth.is_empty() || truth.len() > d || truth.iter().any(|&t| t >= d) {
        return Err(Error::InvalidInput(
            "truth must be a nonempty subset of the features".into(),
        ));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| attributions[b].abs().total_cmp(&attributions[a].abs()).then(a.cmp(&b)));
    let mut rank = vec![0usize; d];
    for (pos, &j) in order.iter().enumerate() {
        rank[j] = pos + 1;
    }
    Ok(truth.iter().map(|&t| rank[t] as f64).sum::<f64>() / truth.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub per_instance: Vec<f64>,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl RankReport {
    pub fn from_ranks(per_instance: Vec<f64>) -> Result<Self> {
        if per_instance.is_empty() {
            return Err(Error::InvalidInput("rank report needs at least one instance".into()));
        }
        let mut sorted = per_instance.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(RankReport {
            mean: per_instance.iter().sum::<f64>() / per_instance.len() as f64,
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            per_instance,
        })
    }
}

/// Rows dropped while reading a CSV file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub dropped_missing_target: usize,
    pub imputed_cells: usize,
}

/// Reads a comma-separated file with a header row. `target` names the label
/// column (default: the last column). Blank feature cells are replaced by
/// the mean of the present values in their column; rows with a blank target
/// are dropped.
pub fn read_csv(path: impl AsRef<Path>, target: Option<&str>) -> Result<(Dataset, IngestReport)> {
    read_csv_from(std::fs::File::open(path)?, target)
}

pub fn read_csv_from<R: Read>(reader: R, target: Option<&str>) -> Result<(Dataset, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .delimiter(b',')
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 2 {
        return Err(Error::Ingestion {
            row: 1,
            column: headers.first().cloned().unwrap_or_default(),
            message: "need at least one feature column and a target column".into(),
        });
    }
    let t = match target {
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| Error::Ingestion {
            row: 1,
            column: name.to_string(),
            message: "target column not found in header".into(),
        })?,
        None => headers.len() - 1,
    };

    let mut report = IngestReport::default();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut targets = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // Line 1 is the header.
        let line = k + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Ingestion {
                row: line,
                column: String::new(),
                message: format!("{} fields, expected {}", record.len(), headers.len()),
            });
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        let mut y = None;
        for (j, raw) in record.iter().enumerate() {
            let raw = raw.trim();
            let value = if raw.is_empty() {
                None
            } else {
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    _ => {
                        return Err(Error::Ingestion {
                            row: line,
                            column: headers[j].clone(),
                            message: format!("cannot parse {raw:?} as a number"),
                        })
                    }
                }
            };
            if j == t {
                y = value;
            } else {
                row.push(value);
            }
        }
        match y {
            Some(y) => {
                cells.push(row);
                targets.push(y);
            }
            None => report.dropped_missing_target += 1,
        }
    }
    if report.dropped_missing_target > 0 {
        log::warn!("dropped {} rows with a missing target", report.dropped_missing_target);
    }
    if cells.len() < 2 {
        return Err(Error::Ingestion {
            row: cells.len() + report.dropped_missing_target + 1,
            column: headers[t].clone(),
            message: format!("need at least 2 rows with a target, found {}", cells.len()),
        });
    }

    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != t)
        .map(|(_, h)| h.clone())
        .collect();
    let mut means = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let present: Vec<f64> = cells.iter().filter_map(|r| r[j]).collect();
        if present.is_empty() {
            return Err(Error::Ingestion {
                row: 2,
                column: name.clone(),
                message: "column has no values to impute from".into(),
            });
        }
        means.push(present.iter().sum::<f64>() / present.len() as f64);
    }
    let rows = cells
        .into_iter()
        .map(|r| {
            r.into_iter()
                .zip(&means)
                .map(|(v, &m)| {
                    v.unwrap_or_else(|| {
                        report.imputed_cells += 1;
                        m
                    })
                })
                .collect()
        })
        .collect();
    Ok((Dataset::new(rows, targets, names)?, report))
}

/// Reads query points from a CSV whose header contains every name in
/// `feature_names`; other columns are ignored and blank cells are errors.
pub fn read_queries(path: impl AsRef<Path>, feature_names: &[String]) -> Result<Vec<Vec<f64>>> {
    read_queries_from(std::fs::File::open(path)?, feature_names)
}

pub fn read_queries_from<R: Read>(reader: R, feature_names: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let cols = feature_names
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Ingestion {
                row: 1,
                column: name.clone(),
                message: "feature column missing from query header".into(),
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut out = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = cols
            .iter()
            .map(|&c| {
                let raw = record.get(c).unwrap_or("").trim();
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::Ingestion {
                        row: k + 2,
                        column: headers[c].clone(),
                        message: format!("cannot parse {raw:?} as a number"),
                    }),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::Ingestion {
            row: 2,
            column: String::new(),
            message: "query file has no rows".into(),
        });
    }
    Ok(out)
}

/// Writes features followed by a `y` column, floats in shortest
/// round-trip form.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(data, std::io::BufWriter::new(file))
}

pub fn write_csv_to<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push("y".into());
    w.write_record(&header)?;
    for (row, y) in data.rows().iter().zip(data.targets()) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(format!("{y:?}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
