use serde::{Deserialize, Serialize};

use crate::benn::BennEstimate;
use crate::ensemble::EnsembleEstimate;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidelineConfig {
    /// Slack allowed when requiring BENN >= ensemble.
    pub eps: f64,
    /// Largest acceptable sample variance of the BENN - ensemble differences.
    pub variance_bound: f64,
}

impl Default for GuidelineConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            variance_bound: 0.002,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidelineReport {
    pub features: Vec<String>,
    /// `BENN - ensemble` per feature.
    pub differences: Vec<f64>,
    /// Every BENN estimation is at least the ensemble minus `eps`.
    pub g1: bool,
    /// Smallest `BENN - ensemble + eps`; negative exactly when G1 fails.
    pub g1_slack: f64,
    /// Features violating G1.
    pub g1_failures: Vec<String>,
    /// Both methods rank the features identically.
    pub g2: bool,
    pub benn_ranks: Vec<usize>,
    pub ensemble_ranks: Vec<usize>,
    /// The differences are nearly constant.
    pub g3: bool,
    pub difference_variance: f64,
    /// G2 and G3 hold trivially with a single protected feature.
    pub degenerate: bool,
    pub eps: f64,
    pub variance_bound: f64,
}

impl GuidelineReport {
    pub fn passed(&self) -> bool {
        self.g1 && self.g2 && self.g3
    }
}

/// Rank 1 is the largest value; ties go to the lexicographically smaller name.
pub fn rank_descending(features: &[String], values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .total_cmp(&values[a])
            .then_with(|| features[a].cmp(&features[b]))
    });
    let mut ranks = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Sample variance (divides by `n - 1`); 0 for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Compares BENN against the ensemble on the ensemble's features.
pub fn check_guidelines(
    benn: &BennEstimate,
    ensemble: &[EnsembleEstimate],
    cfg: &GuidelineConfig,
) -> Result<GuidelineReport> {
    if ensemble.is_empty() {
        return Err(Error::arg("no features to compare"));
    }
    if cfg.eps.is_nan() || cfg.eps < 0.0 {
        return Err(Error::arg("guideline slack must be non-negative"));
    }
    let features: Vec<String> = ensemble.iter().map(|e| e.feature.clone()).collect();
    let ens: Vec<f64> = ensemble.iter().map(|e| e.value).collect();
    let ben = benn.restrict(&features)?.values;

    let differences: Vec<f64> = ben.iter().zip(&ens).map(|(b, e)| b - e).collect();
    let g1_failures: Vec<String> = features
        .iter()
        .zip(&differences)
        .filter(|(_, &d)| d < -cfg.eps)
        .map(|(f, _)| f.clone())
        .collect();
    let g1_slack = differences.iter().fold(f64::INFINITY, |a, &d| a.min(d + cfg.eps));

    let benn_ranks = rank_descending(&features, &ben);
    let ensemble_ranks = rank_descending(&features, &ens);
    let degenerate = features.len() == 1;
    let difference_variance = sample_variance(&differences);

    Ok(GuidelineReport {
        g1: g1_failures.is_empty(),
        g1_slack,
        g1_failures,
        g2: degenerate || benn_ranks == ensemble_ranks,
        g3: degenerate || difference_variance <= cfg.variance_bound,
        benn_ranks,
        ensemble_ranks,
        difference_variance,
        degenerate,
        features,
        differences,
        eps: cfg.eps,
        variance_bound: cfg.variance_bound,
    })
}
