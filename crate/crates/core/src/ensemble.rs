//! Ensemble estimation: the worst (largest) available metric estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Flag, MetricEstimate, MetricId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub feature: String,
    pub value: f64,
    /// Metric attaining the max; ties go to the earliest metric in the fixed order.
    pub argmax: MetricId,
    pub n_available: usize,
    pub n_unavailable: usize,
    pub n_degenerate: usize,
}

/// Maximum over the available estimations for one feature.
///
/// Unavailable metrics are excluded and counted. Fails when nothing is
/// available or the estimations span several features.
pub fn aggregate(estimates: &[MetricEstimate]) -> Result<EnsembleEstimate> {
    let feature = match estimates.first() {
        Some(e) => e.feature.clone(),
        None => return Err(Error::Argument("no estimations to aggregate".into())),
    };
    if estimates.iter().any(|e| e.feature != feature) {
        return Err(Error::Argument("estimations cover more than one feature".into()));
    }
    let mut best: Option<(f64, MetricId)> = None;
    for e in estimates {
        let Some(v) = e.value else { continue };
        best = match best {
            Some((bv, bid)) if bv > v || (bv == v && bid < e.metric) => Some((bv, bid)),
            _ => Some((v, e.metric)),
        };
    }
    let (value, argmax) = best.ok_or_else(|| Error::Aggregation(feature.clone()))?;
    Ok(EnsembleEstimate {
        feature,
        value,
        argmax,
        n_available: estimates.iter().filter(|e| e.is_available()).count(),
        n_unavailable: estimates.iter().filter(|e| !e.is_available()).count(),
        n_degenerate: estimates.iter().filter(|e| e.flags.contains(&Flag::Degenerate)).count(),
    })
}

/// One ensemble per feature, in order of first appearance.
pub fn aggregate_by_feature(estimates: &[MetricEstimate]) -> Result<Vec<EnsembleEstimate>> {
    let mut features: Vec<&str> = Vec::new();
    for e in estimates {
        if !features.contains(&e.feature.as_str()) {
            features.push(&e.feature);
        }
    }
    features
        .into_iter()
        .map(|f| {
            let subset: Vec<MetricEstimate> = estimates.iter().filter(|e| e.feature == f).cloned().collect();
            aggregate(&subset)
        })
        .collect()
}
