//! Tabular datasets with protected-feature annotations.
//!
//! A [`Dataset`] holds only numeric feature columns; labels, risk scores and
//! sample weights travel alongside as separate vectors so that a predictor
//! never sees them.

mod folds;
mod io;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use folds::{check_fold_coverage, make_folds, FoldCoverageGap, FoldPlan};
pub use io::{load_csv, read_csv, write_csv, LoadOptions};
pub use synthetic::{generate_synthetic, synthetic_schema, SyntheticOptions, SYNTHETIC_DEFAULT_COUNT};

/// Column layout of a dataset and which feature columns are protected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    /// Feature columns, in model input order.
    pub columns: Vec<String>,
    /// Protected features (FP). Everything else in `columns` is unprotected.
    pub protected: Vec<String>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub risk_score: Option<String>,
    /// Optional per-row sample weight column (written by mitigation).
    #[serde(default)]
    pub weight: Option<String>,
    /// Integer label encodings for categorical columns: column -> (text -> code).
    #[serde(default)]
    pub encodings: BTreeMap<String, BTreeMap<String, i64>>,
}

impl DatasetSchema {
    pub fn new(
        columns: impl IntoIterator<Item = impl Into<String>>,
        protected: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            protected: protected.into_iter().map(Into::into).collect(),
            label: None,
            risk_score: None,
            weight: None,
            encodings: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_risk_score(mut self, column: impl Into<String>) -> Self {
        self.risk_score = Some(column.into());
        self
    }

    /// Unprotected features (FU), in column order.
    pub fn unprotected(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| !self.protected.contains(c))
            .map(String::as_str)
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn is_protected(&self, name: &str) -> bool {
        self.protected.iter().any(|p| p == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Schema("no feature columns declared".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{c}`")));
            }
        }
        if self.protected.is_empty() {
            return Err(Error::Schema("at least one protected feature is required".into()));
        }
        let mut seen_p = BTreeSet::new();
        for p in &self.protected {
            if !seen.contains(p.as_str()) {
                return Err(Error::Schema(format!(
                    "protected feature `{p}` is not a feature column"
                )));
            }
            if !seen_p.insert(p.as_str()) {
                return Err(Error::Schema(format!("protected feature `{p}` listed twice")));
            }
        }
        for (role, col) in [
            ("label", &self.label),
            ("risk score", &self.risk_score),
            ("weight", &self.weight),
        ] {
            if let Some(col) = col {
                if seen.contains(col.as_str()) {
                    return Err(Error::Schema(format!(
                        "{role} column `{col}` must not also be a feature column"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An immutable feature matrix plus its side vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: DatasetSchema,
    rows: Array2<f64>,
    labels: Option<Vec<bool>>,
    scores: Option<Vec<f64>>,
    weights: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset, checking that every side vector matches the row count.
    /// `weights = None` means all ones.
    pub fn new(
        schema: DatasetSchema,
        rows: Array2<f64>,
        labels: Option<Vec<bool>>,
        scores: Option<Vec<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        schema.validate()?;
        let (m, n) = rows.dim();
        if n != schema.columns.len() {
            return Err(Error::Schema(format!(
                "matrix has {n} columns but schema declares {}",
                schema.columns.len()
            )));
        }
        if labels.as_ref().is_some_and(|l| l.len() != m) {
            return Err(Error::arg("label vector length differs from row count"));
        }
        if scores.as_ref().is_some_and(|s| s.len() != m) {
            return Err(Error::arg("score vector length differs from row count"));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; m]);
        if weights.len() != m {
            return Err(Error::arg("weight vector length differs from row count"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Data(format!(
                "sample weight {w} is not a finite non-negative number"
            )));
        }
        Ok(Self {
            schema,
            rows,
            labels,
            scores,
            weights,
        })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }

    pub fn column(&self, name: &str) -> Result<ArrayView1<'_, f64>> {
        let idx = self
            .schema
            .column_index(name)
            .ok_or_else(|| Error::arg(format!("unknown column `{name}`")))?;
        Ok(self.rows.column(idx))
    }

    /// Distinct values of a column, ascending.
    pub fn distinct_values(&self, name: &str) -> Result<Vec<f64>> {
        let mut values: Vec<f64> = self.column(name)?.to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(values)
    }

    /// Checks the audit requirement that every protected column takes at
    /// least two distinct values.
    pub fn check_protected_coverage(&self) -> Result<()> {
        for p in &self.schema.protected {
            if self.distinct_values(p)?.len() < 2 {
                return Err(Error::Data(format!(
                    "protected feature `{p}` takes a single value; at least two are required"
                )));
            }
        }
        Ok(())
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            schema: self.schema.clone(),
            rows: self.rows.select(Axis(0), indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            scores: self.scores.as_deref().map(pick),
            weights: pick(&self.weights),
        }
    }

    /// Same dataset with labels removed (for label-free audits).
    pub fn without_labels(&self) -> Dataset {
        let mut schema = self.schema.clone();
        schema.label = None;
        Dataset {
            schema,
            labels: None,
            ..self.clone()
        }
    }

    pub(crate) fn with_rows(&self, rows: Array2<f64>) -> Dataset {
        debug_assert_eq!(rows.dim(), self.rows.dim());
        Dataset { rows, ..self.clone() }
    }

    /// Names a weight column (default `weight`) so CSV output carries weights.
    pub(crate) fn ensure_weight_column(&mut self) {
        if self.schema.weight.is_none() {
            self.schema.weight = Some("weight".to_string());
        }
    }

    /// Appends copies of existing rows with new weights. Used by re-weighting.
    pub(crate) fn append_replicas(&mut self, replicas: &[(usize, f64)]) {
        if replicas.is_empty() {
            return;
        }
        let idx: Vec<usize> = replicas.iter().map(|(i, _)| *i).collect();
        let extra = self.rows.select(Axis(0), &idx);
        self.rows
            .append(Axis(0), extra.view())
            .expect("replica rows share the column count");
        if let Some(labels) = &mut self.labels {
            let copies: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            labels.extend(copies);
        }
        if let Some(scores) = &mut self.scores {
            let copies: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            scores.extend(copies);
        }
        self.weights.extend(replicas.iter().map(|(_, w)| *w));
    }
}

/// Min-max map of one column: `normalized = (x - min) / span`, `span = 0` for
/// constant columns (which map to 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub min: f64,
    pub span: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        if self.span == 0.0 {
            0.0
        } else {
            (x - self.min) / self.span
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        self.min + v * self.span
    }
}

/// Min-max scales every feature column to [0, 1].
pub fn normalize(ds: &Dataset) -> Result<(Dataset, Vec<AffineMap>)> {
    let mut rows = ds.rows.clone();
    let mut maps = Vec::with_capacity(ds.n_features());
    for (j, mut col) in rows.axis_iter_mut(Axis(1)).enumerate() {
        if let Some(bad) = col.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "column `{}` contains non-finite value {bad}",
                ds.schema.columns[j]
            )));
        }
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let map = if col.is_empty() {
            AffineMap { min: 0.0, span: 0.0 }
        } else {
            AffineMap { min: lo, span: hi - lo }
        };
        col.mapv_inplace(|v| map.apply(v));
        maps.push(map);
    }
    Ok((ds.with_rows(rows), maps))
}

/// Applies previously fitted maps (e.g. from a training split) to another dataset.
pub fn apply_normalization(ds: &Dataset, maps: &[AffineMap]) -> Result<Dataset> {
    if maps.len() != ds.n_features() {
        return Err(Error::arg("normalization map count differs from column count"));
    }
    let mut rows = ds.rows.clone();
    for (mut col, map) in rows.axis_iter_mut(Axis(1)).zip(maps) {
        col.mapv_inplace(|v| map.apply(v));
    }
    Ok(ds.with_rows(rows))
}
