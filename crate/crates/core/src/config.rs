//! Declarative run configuration (JSON) and its content hash.
//!
//! Relative paths are resolved against the configuration file's directory.
//! Command-line flags override fields after loading; the hash covers the
//! effective configuration, so two runs with equal hashes compute the same
//! numbers.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benn::{LossConfig, TrainConfig};
use crate::dataset::{load_csv, Dataset, DatasetSchema, LoadOptions, SyntheticOptions};
use crate::error::{Error, Result};
use crate::evaluation::GuidelineConfig;
use crate::metrics::MetricOptions;
use crate::mitigation::MitigationConfig;
use crate::model::{ExternalModel, TreeConfig};
use crate::pipeline::{AuditSettings, ModelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        schema: DatasetSchema,
        #[serde(default)]
        load: LoadOptions,
    },
    Synthetic {
        #[serde(default = "default_count")]
        count: usize,
        /// Defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_agreement")]
        biased_agreement: f64,
    },
}

fn default_count() -> usize {
    crate::dataset::SYNTHETIC_DEFAULT_COUNT
}

fn default_agreement() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    #[default]
    TrainTree,
    External {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        /// Where request/response files go; defaults to `<output_dir>/exchange`.
        #[serde(default)]
        exchange_dir: Option<PathBuf>,
    },
    /// CSV of precomputed outcomes: a `prediction` column, or else the first column.
    PredictionsFile { path: PathBuf },
}

fn default_timeout() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSpec {
    pub k: usize,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    /// Skip folds missing a protected value instead of failing.
    pub permissive: bool,
}

impl Default for FoldSpec {
    fn default() -> Self {
        Self {
            k: 5,
            seed: None,
            permissive: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: ModelSource,
    /// Features to audit; empty means all protected features of the schema.
    #[serde(default)]
    pub protected: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default)]
    pub loss: LossConfig,
    /// `train.seed` is ignored; shuffling is seeded from the run seed.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub guidelines: GuidelineConfig,
    #[serde(default)]
    pub mitigation: MitigationConfig,
    /// Feature to re-weight on; defaults to the first audited feature.
    #[serde(default)]
    pub mitigation_feature: Option<String>,
    /// After mitigating, retrain and audit before and after.
    #[serde(default = "yes")]
    pub mitigation_audit: bool,
    #[serde(default)]
    pub folds: Option<FoldSpec>,
    #[serde(default = "yes")]
    pub benn: bool,
    /// Exit with status 2 when a guideline fails.
    #[serde(default = "yes")]
    pub fail_on_guidelines: bool,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn yes() -> bool {
    true
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn config_err(path: &str, e: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.to_string(),
        message: e.to_string(),
    }
}

impl RunConfig {
    /// Default configuration on the built-in synthetic dataset.
    pub fn synthetic() -> Self {
        serde_json::from_str(r#"{"dataset": {"kind": "synthetic"}}"#).expect("valid default config")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner())
        })
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::Csv { path, .. } = &mut self.dataset {
            fix(path);
        }
        match &mut self.model {
            ModelSource::PredictionsFile { path } => fix(path),
            ModelSource::External {
                exchange_dir: Some(d), ..
            } => fix(d),
            _ => {}
        }
        fix(&mut self.output_dir);
    }

    /// Checks cross-field invariants. `queryable` says whether the command
    /// needs to query the model (BENN or retraining).
    pub fn validate(&self, queryable: bool) -> Result<()> {
        match &self.dataset {
            DatasetSource::Csv { path, schema, .. } => {
                if !path.exists() {
                    return Err(config_err("dataset.path", format!("{} does not exist", path.display())));
                }
                schema.validate().map_err(|e| config_err("dataset.schema", e))?;
            }
            DatasetSource::Synthetic {
                count,
                biased_agreement,
                ..
            } => {
                if *count < 8 {
                    return Err(config_err("dataset.count", "at least 8 rows are needed"));
                }
                if !(0.0..=1.0).contains(biased_agreement) {
                    return Err(config_err("dataset.biased_agreement", "must lie in [0, 1]"));
                }
            }
        }
        match &self.model {
            ModelSource::PredictionsFile { path } => {
                if queryable {
                    return Err(config_err(
                        "model",
                        "a predictions file cannot be queried; BENN and retraining need a model",
                    ));
                }
                if !path.exists() {
                    return Err(config_err("model.path", format!("{} does not exist", path.display())));
                }
            }
            ModelSource::External { timeout_secs, .. } => {
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    return Err(config_err("model.timeout_secs", "must be positive"));
                }
            }
            ModelSource::TrainTree => {}
        }
        if self.tree.criterion != "gini" {
            return Err(config_err("tree.criterion", "only \"gini\" is supported"));
        }
        self.loss.validate().map_err(|e| config_err("loss", e))?;
        self.train.validate().map_err(|e| config_err("train", e))?;
        self.mitigation.validate().map_err(|e| config_err("mitigation", e))?;
        if self.guidelines.eps.is_nan() || self.guidelines.eps < 0.0 {
            return Err(config_err("guidelines.eps", "must be non-negative"));
        }
        if let Some(f) = &self.folds {
            if f.k < 2 {
                return Err(config_err("folds.k", "at least two folds are needed"));
            }
            if !matches!(self.model, ModelSource::TrainTree) {
                return Err(config_err(
                    "folds",
                    "cross-validation retrains the built-in tree per fold",
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        hash_bytes(json.as_bytes())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Csv { path, schema, load } => load_csv(path, schema, load),
            DatasetSource::Synthetic {
                count,
                seed,
                biased_agreement,
            } => SyntheticOptions {
                count: *count,
                seed: seed.unwrap_or(self.seed),
                biased_agreement: *biased_agreement,
            }
            .generate(),
        }
    }

    pub fn model_spec(&self, ds: &Dataset) -> Result<ModelSpec> {
        Ok(match &self.model {
            ModelSource::TrainTree => ModelSpec::TrainTree,
            ModelSource::External {
                program,
                args,
                timeout_secs,
                exchange_dir,
            } => ModelSpec::External(ExternalModel::new(
                program.clone(),
                args.clone(),
                exchange_dir.clone().unwrap_or_else(|| self.output_dir.join("exchange")),
                ds.n_features(),
                Duration::from_secs_f64(*timeout_secs),
            )),
            ModelSource::PredictionsFile { path } => ModelSpec::Outcomes(read_predictions(path)?),
        })
    }

    pub fn audit_settings(&self) -> AuditSettings {
        AuditSettings {
            protected: self.protected.clone(),
            metrics: self.metrics.clone(),
            tree: self.tree.clone(),
            loss: self.loss.clone(),
            train: self.train.clone(),
            guidelines: self.guidelines.clone(),
            benn: self.benn,
            seed: self.seed,
        }
    }
}

/// SHA-256 hex digest, used to tag outputs derived from a file rather than a config.
pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads outcomes from a `prediction` column, or the first column.
pub fn read_predictions(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == "prediction")
        .unwrap_or(0);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(col).unwrap_or("").trim();
        let v: f64 = cell.parse().map_err(|_| Error::Parse {
            row: i + 1,
            column: "prediction".into(),
            message: format!("`{cell}` is not a number"),
        })?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parse {
                row: i + 1,
                column: "prediction".into(),
                message: format!("{v} outside [0, 1]"),
            });
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::synthetic();
        assert_eq!(c.loss, LossConfig::default());
        assert_eq!(c.train.epochs, 300);
        assert!(c.benn && c.fail_on_guidelines && c.mitigation_audit);
        c.validate(true).unwrap();
        assert_eq!(c.load_dataset().unwrap().len(), 305);
    }

    #[test]
    fn errors_carry_field_paths() {
        let e = RunConfig::from_json(r#"{"dataset": {"kind": "synthetic"}, "loss": {"eps": "big"}}"#).unwrap_err();
        match e {
            Error::Config { path, .. } => assert_eq!(path, "loss.eps"),
            other => panic!("{other:?}"),
        }
        let e = RunConfig::from_json(r#"{"dataset": {"kind": "synthetic"}, "train": {"epoch": 3}}"#).unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
        let c = RunConfig::from_json(r#"{"dataset": {"kind": "synthetic"}, "loss": {"eps": -1}}"#).unwrap();
        match c.validate(true).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "loss"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn predictions_file_rejected_when_model_must_be_queried() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pred.csv");
        fs::write(&p, "prediction\n0.2\n0.9\n").unwrap();
        let mut c = RunConfig::synthetic();
        c.model = ModelSource::PredictionsFile { path: p.clone() };
        assert!(c.validate(false).is_ok());
        match c.validate(true).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "model"),
            other => panic!("{other:?}"),
        }
        assert_eq!(read_predictions(&p).unwrap(), vec![0.2, 0.9]);
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let a = RunConfig::synthetic();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        fs::write(&cfg, r#"{"dataset": {"kind": "synthetic"}, "output_dir": "res"}"#).unwrap();
        let c = RunConfig::from_path(&cfg).unwrap();
        assert_eq!(c.output_dir, dir.path().join("res"));
    }

    #[test]
    fn missing_csv_is_a_config_error() {
        let c = RunConfig::from_json(
            r#"{"dataset": {"kind": "csv", "path": "/nonexistent.csv", "schema": {"columns": ["a"], "protected": ["a"]}}}"#,
        )
        .unwrap();
        assert!(matches!(c.validate(false), Err(Error::Config { path, .. }) if path == "dataset.path"));
    }

    #[test]
    fn full_example_parses() {
        let c = RunConfig::from_json(FULL_EXAMPLE).unwrap();
        assert_eq!(c.seed, 31);
        assert_eq!(c.folds.unwrap().seed, Some(31));
        assert!(matches!(c.dataset, DatasetSource::Csv { .. }));
    }

    const FULL_EXAMPLE: &str = r#"{
  "dataset": {
    "kind": "csv",
    "path": "compas.csv",
    "schema": {
      "columns": ["race", "sex", "age_cat", "priors_count"],
      "protected": ["race", "sex", "age_cat"],
      "label": "two_year_recid",
      "risk_score": "decile_score",
      "encodings": {"sex": {"Male": 0, "Female": 1}}
    },
    "load": {"drop_missing": true, "missing_tokens": ["", "NA", "?"]}
  },
  "model": {"kind": "train_tree"},
  "protected": ["race", "sex"],
  "seed": 31,
  "benn": true,
  "fail_on_guidelines": true,
  "metrics": {"convention": "corrected", "decision_threshold": 0.5, "score_threshold": 0.5, "calibration_bins": 10},
  "tree": {"criterion": "gini", "min_samples_split": 2, "max_depth": null},
  "loss": {"lambda1": 1.0, "lambda2": 1.0, "lambda3": 1.0, "eps": 0.3, "fd_step": 0.6, "fd_target": "composite", "normalize_count": true, "clamp": false},
  "train": {"batch_size": 128, "epochs": 300, "learning_rate": 0.001},
  "guidelines": {"eps": 0.01, "variance_bound": 0.002},
  "mitigation": {"positive_weight": 1.0, "other_weight": 0.1, "threshold": 0.0045, "max_iterations": 10000},
  "mitigation_feature": "race",
  "mitigation_audit": true,
  "folds": {"k": 5, "seed": 31, "permissive": false},
  "output_dir": "out/compas"
}"#;
}
