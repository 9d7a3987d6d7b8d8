use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetSchema};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadOptions {
    /// Drop rows with a missing cell in any used column. When false a missing
    /// cell is a parse error.
    pub drop_missing: bool,
    /// Cell contents (after trimming) treated as missing.
    pub missing_tokens: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            drop_missing: true,
            missing_tokens: vec![String::new(), "NA".into(), "?".into()],
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ds = read_csv(file, schema, opts)?;
    log::info!("loaded {} rows from {}", ds.len(), path.display());
    Ok(ds)
}

enum Role {
    Feature(usize),
    Label,
    Score,
    Weight,
}

/// Reads an RFC-4180 CSV with a header row. Columns not named by the schema
/// are ignored.
pub fn read_csv<R: Read>(reader: R, schema: &DatasetSchema, opts: &LoadOptions) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in CSV header")))
    };

    let mut used: Vec<(usize, &str, Role)> = Vec::new();
    for (j, c) in schema.columns.iter().enumerate() {
        used.push((find(c)?, c, Role::Feature(j)));
    }
    if let Some(l) = &schema.label {
        used.push((find(l)?, l, Role::Label));
    }
    if let Some(s) = &schema.risk_score {
        used.push((find(s)?, s, Role::Score));
    }
    if let Some(w) = &schema.weight {
        used.push((find(w)?, w, Role::Weight));
    }

    let n = schema.columns.len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    let mut weights = Vec::new();
    let mut dropped = 0usize;
    let mut feature_row = vec![0.0; n];

    'records: for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // 1-based data row, header excluded
        let row_no = i + 1;
        let (mut label, mut score, mut weight) = (None, None, None);
        for (pos, name, role) in &used {
            let raw = record.get(*pos).unwrap_or("").trim();
            if opts.missing_tokens.iter().any(|t| t == raw) {
                if opts.drop_missing {
                    dropped += 1;
                    continue 'records;
                }
                return Err(Error::Parse {
                    row: row_no,
                    column: name.to_string(),
                    message: "missing value".into(),
                });
            }
            let value = parse_cell(raw, name, schema, row_no)?;
            match role {
                Role::Feature(j) => feature_row[*j] = value,
                Role::Label => {
                    label = Some(match value {
                        0.0 => false,
                        1.0 => true,
                        v => {
                            return Err(Error::Parse {
                                row: row_no,
                                column: name.to_string(),
                                message: format!("label must be 0 or 1, got {v}"),
                            })
                        }
                    })
                }
                Role::Score => score = Some(value),
                Role::Weight => weight = Some(value),
            }
        }
        data.extend_from_slice(&feature_row);
        labels.extend(label);
        scores.extend(score);
        weights.extend(weight);
    }

    let m = data.len() / n;
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values");
    }
    if m == 0 {
        return Err(Error::Data("no rows left after filtering missing values".into()));
    }
    let rows = Array2::from_shape_vec((m, n), data).expect("row-major buffer of m*n values");
    Dataset::new(
        schema.clone(),
        rows,
        schema.label.as_ref().map(|_| labels),
        schema.risk_score.as_ref().map(|_| scores),
        schema.weight.as_ref().map(|_| weights),
    )
}

fn parse_cell(raw: &str, column: &str, schema: &DatasetSchema, row: usize) -> Result<f64> {
    if let Some(map) = schema.encodings.get(column) {
        return map.get(raw).map(|&code| code as f64).ok_or_else(|| Error::Parse {
            row,
            column: column.to_string(),
            message: format!("value `{raw}` has no declared encoding"),
        });
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("non-finite value {v}"),
        }),
        Err(_) => Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("non-numeric value `{raw}` and no encoding declared"),
        }),
    }
}

/// Writes the dataset in the same dialect `read_csv` accepts: feature columns,
/// then label, risk score and (when `schema.weight` is set) weight.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let schema = ds.schema();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = schema.columns.iter().map(String::as_str).collect();
    header.extend(schema.label.as_deref());
    header.extend(schema.risk_score.as_deref());
    header.extend(schema.weight.as_deref());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, row) in ds.rows().rows().into_iter().enumerate() {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        if let Some(labels) = ds.labels() {
            record.push(u8::from(labels[i]).to_string());
        }
        if let Some(scores) = ds.scores() {
            record.push(scores[i].to_string());
        }
        if schema.weight.is_some() {
            record.push(ds.weights()[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
