//! Dataset loading, the three-blob synthetic generator, the UCI Wine loader
//! and feature normalization.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::metrics::LabelVector;

/// Points, their weights and optional ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × d`, one point per row.
    pub features: Array2<f64>,
    pub weights: Vec<f64>,
    pub true_labels: Option<LabelVector>,
    pub name: String,
    /// Header names of the feature columns.
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn n_points(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let trimmed = cell.trim();
    trimmed.parse::<f64>().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("{trimmed:?} is not a number"),
    })
}

/// Maps raw label strings to ids `0..k`, ordering numerically when every
/// label parses as an integer and lexicographically otherwise.
fn encode_labels(raw: &[String]) -> LabelVector {
    let distinct: BTreeSet<&str> = raw.iter().map(|s| s.trim()).collect();
    let mut order: Vec<&str> = distinct.into_iter().collect();
    if order.iter().all(|s| s.parse::<i64>().is_ok()) {
        order.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    LabelVector(
        raw.iter()
            .map(|s| order.iter().position(|o| *o == s.trim()).unwrap())
            .collect(),
    )
}

/// Reads a headed CSV. The weight column (default: all ones) and label
/// column are removed from the features; every other column must be numeric.
/// Row numbers in errors are 1-based and count the header as row 1.
pub fn load_csv(
    path: impl AsRef<Path>,
    weight_column: Option<&str>,
    label_column: Option<&str>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, weight_column, label_column, name)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: Read>(
    reader: R,
    weight_column: Option<&str>,
    label_column: Option<&str>,
    name: String,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Io(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |wanted: Option<&str>, role: &str| -> Result<Option<usize>> {
        match wanted {
            None => Ok(None),
            Some(col) => headers
                .iter()
                .position(|h| h == col)
                .map(Some)
                .ok_or_else(|| Error::Parse {
                    row: 1,
                    column: col.to_string(),
                    message: format!("{role} column not found in header"),
                }),
        }
    };
    let weight_ix = find(weight_column, "weight")?;
    let label_ix = find(label_column, "label")?;
    let feature_ix: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != weight_ix && Some(c) != label_ix)
        .collect();
    if feature_ix.is_empty() {
        return Err(Error::EmptyData("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut weights = Vec::new();
    let mut raw_labels = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| Error::Io(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::RaggedRows {
                row,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for &c in &feature_ix {
            values.push(parse_number(&record[c], row, &headers[c])?);
        }
        if let Some(c) = weight_ix {
            let w = parse_number(&record[c], row, &headers[c])?;
            if !(w > 0.0) {
                return Err(Error::NonPositiveWeight { index: k, value: w });
            }
            weights.push(w);
        } else {
            weights.push(1.0);
        }
        if let Some(c) = label_ix {
            raw_labels.push(record[c].to_string());
        }
    }
    let n = weights.len();
    if n == 0 {
        return Err(Error::EmptyData("no data rows".into()));
    }
    let features = Array2::from_shape_vec((n, feature_ix.len()), values)
        .expect("row lengths checked above");
    Ok(Dataset {
        features,
        weights,
        true_labels: label_ix.map(|_| encode_labels(&raw_labels)),
        name,
        feature_names: feature_ix.iter().map(|&c| headers[c].clone()).collect(),
    })
}

/// Writes features, then `weight`, then `label` (when present).
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut header: Vec<String> = if data.feature_names.len() == data.dim() {
        data.feature_names.clone()
    } else {
        (0..data.dim()).map(|k| format!("x{k}")).collect()
    };
    header.push("weight".into());
    if data.true_labels.is_some() {
        header.push("label".into());
    }
    wtr.write_record(&header).map_err(io)?;
    for (j, row) in data.features.outer_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(data.weights[j].to_string());
        if let Some(labels) = &data.true_labels {
            fields.push(labels.0[j].to_string());
        }
        wtr.write_record(&fields).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Blob centres of the synthetic dataset.
pub const SYNTHETIC_CENTERS: [(f64, f64); 3] = [(2.0, 2.0), (5.0, 6.0), (8.0, 10.0)];
pub const SYNTHETIC_STD: f64 = 0.6;
pub const SYNTHETIC_PER_BLOB: usize = 100;

/// Three isotropic Gaussian blobs of 100 points each in the plane, weighted
/// by their y-coordinate. If any y would be non-positive, every y is shifted
/// up so the minimum becomes 0.1.
pub fn generate_synthetic(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SYNTHETIC_STD).expect("valid standard deviation");
    let n = SYNTHETIC_CENTERS.len() * SYNTHETIC_PER_BLOB;
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for (blob, &(cx, cy)) in SYNTHETIC_CENTERS.iter().enumerate() {
        for k in 0..SYNTHETIC_PER_BLOB {
            let j = blob * SYNTHETIC_PER_BLOB + k;
            features[[j, 0]] = cx + noise.sample(&mut rng);
            features[[j, 1]] = cy + noise.sample(&mut rng);
            labels.push(blob);
        }
    }
    let min_y = features.column(1).iter().copied().fold(f64::INFINITY, f64::min);
    if min_y <= 0.0 {
        let shift = 0.1 - min_y;
        features.column_mut(1).mapv_inplace(|y| y + shift);
    }
    let weights = features.column(1).to_vec();
    Dataset {
        features,
        weights,
        true_labels: Some(LabelVector(labels)),
        name: format!("synthetic-{seed}"),
        feature_names: vec!["x".into(), "y".into()],
    }
}

pub const WINE_ROWS: usize = 178;
pub const WINE_ATTRIBUTES: usize = 13;

/// Non-fatal findings while loading the Wine file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WineWarning {
    UnexpectedRowCount { found: usize },
}

/// A loaded Wine dataset plus any warning about its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct WineLoad {
    pub dataset: Dataset,
    pub warning: Option<WineWarning>,
}

/// Loads the UCI Wine file: class label first, then 13 attributes. A header
/// row is skipped when its first cell is not numeric. Weights are the raw
/// alcohol values (first attribute).
pub fn load_wine(path: impl AsRef<Path>) -> Result<WineLoad> {
    let text = std::fs::read_to_string(path)?;
    parse_wine(&text)
}

/// [`load_wine`] over in-memory text.
pub fn parse_wine(text: &str) -> Result<WineLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Io(e.to_string()))?;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if k == 0 && record.get(0).is_some_and(|c| c.trim().parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != WINE_ATTRIBUTES + 1 {
            return Err(Error::RaggedRows {
                row,
                expected: WINE_ATTRIBUTES + 1,
                found: record.len(),
            });
        }
        let label = parse_number(&record[0], row, "class")?;
        raw_labels.push(format!("{}", label as i64));
        for c in 1..=WINE_ATTRIBUTES {
            values.push(parse_number(&record[c], row, &format!("attribute {c}"))?);
        }
    }
    let n = raw_labels.len();
    if n == 0 {
        return Err(Error::EmptyData("wine file has no rows".into()));
    }
    let features = Array2::from_shape_vec((n, WINE_ATTRIBUTES), values).expect("row lengths checked");
    let weights = features.column(0).to_vec();
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
        return Err(Error::NonPositiveWeight { index, value });
    }
    let warning = (n != WINE_ROWS).then_some(WineWarning::UnexpectedRowCount { found: n });
    if let Some(w) = &warning {
        log::warn!("wine file: {w:?}, expected {WINE_ROWS} rows");
    }
    Ok(WineLoad {
        dataset: Dataset {
            features,
            weights,
            true_labels: Some(encode_labels(&raw_labels)),
            name: "wine".into(),
            feature_names: (1..=WINE_ATTRIBUTES).map(|c| format!("a{c}")).collect(),
        },
        warning,
    })
}

/// Z-scores every feature column (sample standard deviation, divisor
/// `n − 1`). Constant columns pass through unchanged; weights and labels are
/// untouched.
pub fn normalize_zscore(data: &Dataset) -> Dataset {
    let mut out = data.clone();
    let n = data.n_points();
    if n < 2 {
        return out;
    }
    for mut col in out.features.columns_mut() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() {
            col.mapv_inplace(|x| (x - mean) / sd);
        }
    }
    out
}

/// `g` equal capacities `Σz / g`.
pub fn equal_capacities(data: &Dataset, g: usize) -> Vec<f64> {
    let share = data.weight_sum() / g as f64;
    vec![share; g]
}
