//! One audit over a train/evaluation split: metrics, ensemble, BENN and
//! guidelines, with all randomness derived from a single seed.

use ndarray::{Array2, ArrayView2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::benn::{estimate_bias, train, BennEstimate, GeneratorNet, LossConfig, TrainConfig, TrainingLog};
use crate::dataset::{apply_normalization, normalize, AffineMap, Dataset};
use crate::ensemble::{aggregate, EnsembleEstimate};
use crate::error::{Error, Result};
use crate::evaluation::{check_guidelines, mitigation_delta, BiasReport, GuidelineConfig, MitigationDelta};
use crate::metrics::{estimate_all_from_outcomes, Flag, MetricOptions};
use crate::mitigation::{reweight, MitigationConfig, MitigationLog};
use crate::model::{predict, train_tree, DecisionTree, ExternalModel, Predictor, TreeConfig};

/// Independent seeds for each random component of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub tree: u64,
    pub generator: u64,
    pub shuffle: u64,
}

impl Seeds {
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            tree: rng.next_u64(),
            generator: rng.next_u64(),
            shuffle: rng.next_u64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditSettings {
    /// Features to audit; empty means every protected feature in the schema.
    pub protected: Vec<String>,
    pub metrics: MetricOptions,
    pub tree: TreeConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub guidelines: GuidelineConfig,
    pub benn: bool,
    pub seed: u64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            protected: Vec::new(),
            metrics: MetricOptions::default(),
            tree: TreeConfig::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            guidelines: GuidelineConfig::default(),
            benn: true,
            seed: 0,
        }
    }
}

impl AuditSettings {
    fn features(&self, ds: &Dataset) -> Result<Vec<String>> {
        if self.protected.is_empty() {
            return Ok(ds.schema().protected.clone());
        }
        for f in &self.protected {
            if !ds.schema().is_protected(f) {
                return Err(Error::arg(format!("`{f}` is not a protected feature of the dataset")));
            }
        }
        Ok(self.protected.clone())
    }
}

/// Where the audited model comes from.
#[derive(Debug)]
pub enum ModelSpec {
    /// Train the built-in tree on the (normalized) training split.
    TrainTree,
    /// A model in another process that expects raw feature values.
    External(ExternalModel),
    /// Precomputed outcomes, one per evaluation row. Cannot be queried, so BENN is unavailable.
    Outcomes(Vec<f64>),
}

/// Presents a raw-feature model to code that works on normalized rows.
struct RawInputModel<'a> {
    inner: &'a dyn Predictor,
    maps: &'a [AffineMap],
}

impl Predictor for RawInputModel<'_> {
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let raw = Array2::from_shape_fn(rows.dim(), |(i, j)| self.maps[j].invert(rows[[i, j]]));
        self.inner.predict_batch(raw.view())
    }
}

#[derive(Debug)]
pub struct AuditOutcome {
    pub report: BiasReport,
    pub ensemble: Vec<EnsembleEstimate>,
    pub benn: Option<BennEstimate>,
    pub generator: Option<GeneratorNet>,
    pub training_log: Option<TrainingLog>,
    pub tree: Option<DecisionTree>,
}

/// Audits `model` on `eval`, training whatever needs training on `train`.
///
/// Features are min-max normalized with the training split's ranges before
/// they reach the model or the generator; metrics group on raw values.
pub fn audit_split(
    train_ds: &Dataset,
    eval: &Dataset,
    model: &ModelSpec,
    settings: &AuditSettings,
) -> Result<AuditOutcome> {
    let features = settings.features(eval)?;
    eval.check_protected_coverage()?;
    let seeds = Seeds::derive(settings.seed);
    let (train_n, maps) = normalize(train_ds)?;
    let eval_n = apply_normalization(eval, &maps)?;

    let mut tree = None;
    let queryable: Option<Box<dyn Predictor + '_>> = match model {
        ModelSpec::TrainTree => {
            let t = train_tree(&train_n, &settings.tree, seeds.tree)?;
            log::info!("trained tree of depth {}", t.depth());
            tree = Some(t.clone());
            Some(Box::new(t))
        }
        ModelSpec::External(m) => Some(Box::new(RawInputModel { inner: m, maps: &maps })),
        ModelSpec::Outcomes(_) => None,
    };
    let outcomes = match (model, &queryable) {
        (ModelSpec::Outcomes(o), _) => {
            if o.len() != eval.len() {
                return Err(Error::arg(format!(
                    "{} predictions for {} evaluation rows",
                    o.len(),
                    eval.len()
                )));
            }
            o.clone()
        }
        (_, Some(m)) => predict(m.as_ref(), eval_n.rows().view())?,
        (_, None) => unreachable!("only precomputed outcomes lack a model"),
    };

    let mut metrics = Vec::new();
    let mut ensemble = Vec::new();
    for f in &features {
        let est = estimate_all_from_outcomes(eval, &outcomes, f, &settings.metrics)?;
        ensemble.push(aggregate(&est)?);
        metrics.extend(est);
    }

    let (mut benn, mut generator, mut training_log) = (None, None, None);
    if settings.benn {
        let m = queryable
            .as_ref()
            .ok_or_else(|| Error::arg("BENN needs a queryable model, not precomputed predictions"))?;
        let tcfg = TrainConfig {
            seed: seeds.shuffle,
            ..settings.train.clone()
        };
        let net = GeneratorNet::new(train_n.n_features(), seeds.generator);
        let (net, log) = train(net, &train_n, m.as_ref(), &settings.loss, &tcfg)?;
        benn = Some(estimate_bias(&net, &eval_n)?);
        generator = Some(net);
        training_log = Some(log);
    }

    let guidelines = benn
        .as_ref()
        .map(|b| check_guidelines(b, &ensemble, &settings.guidelines))
        .transpose()?;
    let mut report = BiasReport::assemble(
        &ensemble,
        benn.as_ref(),
        guidelines,
        metrics,
        settings.metrics.convention,
        settings.seed,
    )?;
    report.notes.push(format!(
        "predictions are positive when the model outcome exceeds {}",
        settings.metrics.decision_threshold
    ));
    if report.metrics.iter().any(|m| m.flags.contains(&Flag::ScoreFromModel)) {
        report
            .notes
            .push("no risk-score column; score metrics use the model's soft outcome".into());
    }
    Ok(AuditOutcome {
        report,
        ensemble,
        benn,
        generator,
        training_log,
        tree,
    })
}

/// Audits a dataset against itself (train and evaluate on the same rows).
pub fn audit(ds: &Dataset, model: &ModelSpec, settings: &AuditSettings) -> Result<AuditOutcome> {
    audit_split(ds, ds, model, settings)
}

#[derive(Debug)]
pub struct MitigationOutcome {
    pub mitigated: Dataset,
    pub log: MitigationLog,
    pub before: AuditOutcome,
    pub after: AuditOutcome,
    pub deltas: Vec<MitigationDelta>,
}

/// Re-weights `ds` on `feature`, then audits a model trained on the original
/// rows and one trained on the mitigated rows. Both are evaluated on the
/// original rows, so the deltas reflect the change in the model alone.
pub fn mitigate_and_reaudit(
    ds: &Dataset,
    feature: &str,
    mitigation: &MitigationConfig,
    settings: &AuditSettings,
) -> Result<MitigationOutcome> {
    if !settings.benn {
        return Err(Error::arg("mitigation deltas compare BENN estimations; enable BENN"));
    }
    let (mitigated, log) = reweight(ds, feature, mitigation)?;
    log::info!(
        "re-weighted `{feature}`: variance {:.6} -> {:.6} in {} iterations",
        log.initial_variance,
        log.final_variance,
        log.iterations
    );
    let before = audit_split(ds, ds, &ModelSpec::TrainTree, settings)?;
    let after = audit_split(&mitigated, ds, &ModelSpec::TrainTree, settings)?;
    let deltas = mitigation_delta(&before.report, &after.report)?;
    Ok(MitigationOutcome {
        mitigated,
        log,
        before,
        after,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;

    fn quick() -> AuditSettings {
        AuditSettings {
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            ..AuditSettings::default()
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s = Seeds::derive(3);
        assert_eq!(s, Seeds::derive(3));
        assert_ne!(s.tree, s.generator);
        assert_ne!(Seeds::derive(4), s);
    }

    #[test]
    fn synthetic_ensemble_is_exact() {
        let ds = generate_synthetic(305, 1).unwrap();
        let out = audit(&ds, &ModelSpec::TrainTree, &AuditSettings { benn: false, ..quick() }).unwrap();
        assert_eq!(out.report.feature("fair").unwrap().ensemble, 0.0);
        assert_eq!(out.report.feature("biased").unwrap().ensemble, 1.0);
        assert!(out.benn.is_none() && out.report.guidelines.is_none());
    }

    #[test]
    fn precomputed_outcomes_cannot_feed_benn() {
        let ds = generate_synthetic(305, 1).unwrap();
        let outcomes = vec![0.0; ds.len()];
        let r = audit(&ds, &ModelSpec::Outcomes(outcomes.clone()), &quick());
        assert!(matches!(r, Err(Error::Argument(_))));
        let ok = audit(
            &ds,
            &ModelSpec::Outcomes(outcomes),
            &AuditSettings { benn: false, ..quick() },
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn same_settings_same_report() {
        let ds = generate_synthetic(305, 2).unwrap();
        let a = audit(&ds, &ModelSpec::TrainTree, &quick()).unwrap();
        let b = audit(&ds, &ModelSpec::TrainTree, &quick()).unwrap();
        assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
        assert_eq!(a.generator, b.generator);
    }

    #[test]
    fn mitigation_reaudit_on_noisy_data() {
        let ds = crate::dataset::SyntheticOptions {
            count: 305,
            seed: 0,
            biased_agreement: 0.8,
        }
        .generate()
        .unwrap();
        let out = mitigate_and_reaudit(&ds, "biased", &MitigationConfig::default(), &quick()).unwrap();
        assert!(out.mitigated.len() > ds.len());
        assert_eq!(out.deltas.len(), 2);
        assert!(out.log.final_variance <= MitigationConfig::default().threshold);
    }

    #[test]
    fn mitigation_fails_without_positive_rows() {
        // biased == label exactly, so the biased=0 group has no positives.
        let ds = generate_synthetic(305, 0).unwrap();
        let r = mitigate_and_reaudit(&ds, "biased", &MitigationConfig::default(), &quick());
        assert!(matches!(r, Err(Error::Mitigation { .. })), "{r:?}");
    }

    #[cfg(unix)]
    #[test]
    fn external_model_sees_raw_values() {
        // Outputs the first column verbatim, so raw inputs outside [0, 1] would be rejected.
        let dir = tempfile::tempdir().unwrap();
        let script =
            r#"cut -d, -f1 "$1" | while read -r v; do if [ "$v" = "10" ]; then echo 1; else echo 0; fi; done > "$2""#;
        let model = ExternalModel::new(
            "sh",
            vec!["-c".into(), script.into(), "stub".into()],
            dir.path(),
            1,
            std::time::Duration::from_secs(10),
        );
        let schema = crate::dataset::DatasetSchema::new(["g"], ["g"]).with_label("y");
        let rows = Array2::from_shape_vec((4, 1), vec![10.0, 10.0, 20.0, 20.0]).unwrap();
        let ds = Dataset::new(schema, rows, Some(vec![true, true, false, false]), None, None).unwrap();
        let out = audit(
            &ds,
            &ModelSpec::External(model),
            &AuditSettings { benn: false, ..quick() },
        )
        .unwrap();
        assert_eq!(out.report.feature("g").unwrap().ensemble, 1.0);
    }
}
