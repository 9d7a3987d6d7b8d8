//! Comparing BENN with the ensemble baseline: guidelines, reports,
//! mitigation deltas and k-fold stability.

mod guidelines;
mod report;

use std::thread;

use crate::dataset::{check_fold_coverage, Dataset, FoldPlan};
use crate::ensemble::EnsembleEstimate;
use crate::error::{Error, Result};
use crate::pipeline::{audit_split, AuditSettings, ModelSpec};

pub use guidelines::{check_guidelines, rank_descending, sample_variance, GuidelineConfig, GuidelineReport};
pub use report::{
    mitigation_delta, write_delta_csv, BiasReport, FeatureReport, FoldStat, MitigationDelta, DELTA_DEAD_ZONE,
    REPORT_FORMAT_VERSION,
};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Trains and audits once per fold, each fold on its own thread.
///
/// Fold `i` trains on the other folds, evaluates on fold `i` and uses seed
/// `settings.seed + i`. A fold whose test split misses a protected value
/// fails the run, or is skipped when `permissive` is set. The returned
/// report holds per-feature means with ranks and guidelines computed on
/// them, plus the per-fold spread.
pub fn cross_validate(ds: &Dataset, plan: &FoldPlan, settings: &AuditSettings, permissive: bool) -> Result<BiasReport> {
    let gaps = check_fold_coverage(ds, plan)?;
    let mut folds = Vec::new();
    for fold in 0..plan.k {
        match gaps.iter().find(|g| g.fold == fold) {
            Some(g) if !permissive => {
                return Err(Error::Fold {
                    fold,
                    message: format!("test split has no rows with {} = {}", g.feature, g.missing_value),
                })
            }
            Some(_) => log::warn!("skipping fold {fold}: incomplete protected values"),
            None => folds.push(fold),
        }
    }
    if folds.len() < 2 {
        return Err(Error::Fold {
            fold: 0,
            message: "fewer than two usable folds".into(),
        });
    }

    let outcomes: Vec<Result<_>> = thread::scope(|s| {
        let handles: Vec<_> = folds
            .iter()
            .map(|&fold| {
                s.spawn(move || {
                    let train = ds.select(&plan.train_indices(fold));
                    let test = ds.select(&plan.test_indices(fold));
                    let fold_settings = AuditSettings {
                        seed: settings.seed.wrapping_add(fold as u64),
                        ..settings.clone()
                    };
                    audit_split(&train, &test, &ModelSpec::TrainTree, &fold_settings).map_err(|e| Error::Fold {
                        fold,
                        message: e.to_string(),
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fold thread panicked"))
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let features: Vec<String> = outcomes[0].ensemble.iter().map(|e| e.feature.clone()).collect();
    let mut stats = Vec::new();
    let mut ensemble = Vec::new();
    let mut benn_means = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let ens: Vec<f64> = outcomes.iter().map(|o| o.ensemble[i].value).collect();
        let ben: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| o.benn.as_ref().and_then(|b| b.get(f)))
            .collect();
        let e0 = &outcomes[0].ensemble[i];
        ensemble.push(EnsembleEstimate {
            value: mean(&ens),
            ..e0.clone()
        });
        let (benn_mean, benn_std) = if ben.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (mean(&ben), sample_variance(&ben).sqrt())
        };
        benn_means.push(benn_mean);
        stats.push(FoldStat {
            feature: f.clone(),
            benn_mean,
            benn_std,
            benn_values: ben,
            ensemble_mean: mean(&ens),
            ensemble_std: sample_variance(&ens).sqrt(),
            ensemble_values: ens,
        });
    }
    let benn = settings.benn.then(|| crate::benn::BennEstimate {
        features: features.clone(),
        values: benn_means,
    });
    let guidelines = benn
        .as_ref()
        .map(|b| check_guidelines(b, &ensemble, &settings.guidelines))
        .transpose()?;
    let mut report = BiasReport::assemble(
        &ensemble,
        benn.as_ref(),
        guidelines,
        Vec::new(),
        settings.metrics.convention,
        settings.seed,
    )?;
    for f in &mut report.features {
        f.ensemble_metric = None;
    }
    report.folds = Some(stats);
    report.notes.push(format!(
        "{}-fold cross-validation, {} folds evaluated; values are fold means",
        plan.k,
        folds.len()
    ));
    Ok(report)
}
