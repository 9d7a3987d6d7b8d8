//! The 21 group-fairness metrics, each adjusted to a scaled estimation in
//! `[0, 1]` where 0 means the metric's fairness rule holds.
//!
//! For a binary protected feature a difference-style rule becomes
//! `|rate(f=1) - rate(f=0)|`; with more than two values the per-value rates'
//! variance is divided by the largest variance `k` proportions can have.
//! Rules that are stated as variances (equalized odds, equal opportunity,
//! calibration, prediction parity, ERBS) use that scaled variance for any `k`.

mod confusion;
mod estimators;
mod stats;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{hard_labels, predict, Predictor, DEFAULT_DECISION_THRESHOLD};

pub use confusion::{confusion_by_group, Confusion, GroupConfusion};
pub use stats::{max_variance, scaled_variance};

/// Every metric, in the fixed order used for reports and tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    EqualizedOdds,
    DisparateImpact,
    DemographicParity,
    Sensitivity,
    Specificity,
    BalanceErrorRate,
    #[serde(rename = "lr_plus")]
    LRPlus,
    EqualPositivePredictionValue,
    EqualNegativePredictionValue,
    EqualAccuracy,
    EqualOpportunity,
    TreatmentEquality,
    #[serde(rename = "equal_fpr")]
    EqualFPR,
    #[serde(rename = "equal_fnr")]
    EqualFNR,
    ErrorRateBalance,
    NormalizedDifference,
    MutualInformation,
    BalanceResiduals,
    Calibration,
    PredictionParity,
    ErrorRateBalanceScore,
}

/// Inputs a metric needs beyond the model's predictions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Requirement {
    Predictions,
    Labels,
    Scores,
}

/// Task compatibility: supervised-only metrics need ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskCompatibility {
    Supervised,
    Both,
}

impl MetricId {
    pub const ALL: [MetricId; 21] = [
        MetricId::EqualizedOdds,
        MetricId::DisparateImpact,
        MetricId::DemographicParity,
        MetricId::Sensitivity,
        MetricId::Specificity,
        MetricId::BalanceErrorRate,
        MetricId::LRPlus,
        MetricId::EqualPositivePredictionValue,
        MetricId::EqualNegativePredictionValue,
        MetricId::EqualAccuracy,
        MetricId::EqualOpportunity,
        MetricId::TreatmentEquality,
        MetricId::EqualFPR,
        MetricId::EqualFNR,
        MetricId::ErrorRateBalance,
        MetricId::NormalizedDifference,
        MetricId::MutualInformation,
        MetricId::BalanceResiduals,
        MetricId::Calibration,
        MetricId::PredictionParity,
        MetricId::ErrorRateBalanceScore,
    ];

    pub fn requirement(self) -> Requirement {
        use MetricId::*;
        match self {
            DisparateImpact | DemographicParity | NormalizedDifference | MutualInformation => Requirement::Predictions,
            Calibration | PredictionParity | ErrorRateBalanceScore => Requirement::Scores,
            _ => Requirement::Labels,
        }
    }

    pub fn task_compatibility(self) -> TaskCompatibility {
        match self.requirement() {
            Requirement::Labels => TaskCompatibility::Supervised,
            _ => TaskCompatibility::Both,
        }
    }

    pub fn name(self) -> &'static str {
        use MetricId::*;
        match self {
            EqualizedOdds => "equalized_odds",
            DisparateImpact => "disparate_impact",
            DemographicParity => "demographic_parity",
            Sensitivity => "sensitivity",
            Specificity => "specificity",
            BalanceErrorRate => "balance_error_rate",
            LRPlus => "lr_plus",
            EqualPositivePredictionValue => "equal_positive_prediction_value",
            EqualNegativePredictionValue => "equal_negative_prediction_value",
            EqualAccuracy => "equal_accuracy",
            EqualOpportunity => "equal_opportunity",
            TreatmentEquality => "treatment_equality",
            EqualFPR => "equal_fpr",
            EqualFNR => "equal_fnr",
            ErrorRateBalance => "error_rate_balance",
            NormalizedDifference => "normalized_difference",
            MutualInformation => "mutual_information",
            BalanceResiduals => "balance_residuals",
            Calibration => "calibration",
            PredictionParity => "prediction_parity",
            ErrorRateBalanceScore => "error_rate_balance_score",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which form of the four inverted estimations to use.
///
/// Equal opportunity, prediction parity, ERBS and error rate balance are
/// printed as `1 - ...`, which is near 1 for perfectly fair inputs. `Corrected`
/// drops the inversion (and takes the max over calibration bins instead of
/// the min, and divides equal accuracy by group size); `Verbatim` keeps the
/// printed forms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    Corrected,
    Verbatim,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Corrected => "corrected",
            Convention::Verbatim => "verbatim",
        })
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrected" => Ok(Convention::Corrected),
            "verbatim" => Ok(Convention::Verbatim),
            other => Err(Error::arg(format!("unknown convention `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Some group rate was 0/0 and was skipped, or fewer than two groups
    /// had a defined rate.
    Degenerate,
    /// A ratio had a zero denominator for one group; the estimation saturated.
    Saturated,
    /// Risk scores were taken from the predictor's soft output.
    ScoreFromModel,
    /// Required inputs (labels or scores) were missing.
    Unavailable,
}

/// Everything a metric can look at, row-aligned.
#[derive(Clone, Copy, Debug)]
pub struct EvalInput<'a> {
    /// Hard predictions `M(x)`.
    pub predictions: &'a [bool],
    pub protected: &'a [f64],
    pub labels: Option<&'a [bool]>,
    pub scores: Option<&'a [f64]>,
    /// Risk score threshold `t` for prediction parity and ERBS.
    pub score_threshold: Option<f64>,
    /// Equal-width score bins used to condition calibration.
    pub calibration_bins: usize,
}

impl<'a> EvalInput<'a> {
    pub fn new(predictions: &'a [bool], protected: &'a [f64]) -> Self {
        Self {
            predictions,
            protected,
            labels: None,
            scores: None,
            score_threshold: None,
            calibration_bins: DEFAULT_CALIBRATION_BINS,
        }
    }

    pub fn with_labels(mut self, labels: &'a [bool]) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn with_scores(mut self, scores: &'a [f64], threshold: f64) -> Self {
        self.scores = Some(scores);
        self.score_threshold = Some(threshold);
        self
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let m = self.predictions.len();
        if m == 0 {
            return Err(Error::arg("no samples to evaluate"));
        }
        if self.protected.len() != m
            || self.labels.is_some_and(|l| l.len() != m)
            || self.scores.is_some_and(|s| s.len() != m)
        {
            return Err(Error::arg("evaluation vectors differ in length"));
        }
        if self.protected.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("protected values must be finite"));
        }
        Ok(())
    }
}

pub const DEFAULT_CALIBRATION_BINS: usize = 10;

/// A feature-agnostic estimation value with its flags.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimation {
    pub value: f64,
    pub flags: Vec<Flag>,
}

/// One (metric, feature) result. `value` is `None` exactly when the metric
/// was unavailable for lack of labels or scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub metric: MetricId,
    pub feature: String,
    pub value: Option<f64>,
    pub convention: Convention,
    pub flags: Vec<Flag>,
}

impl MetricEstimate {
    pub fn is_available(&self) -> bool {
        self.value.is_some()
    }
}

/// Computes one metric. Fails if the metric's required inputs are missing.
pub fn estimate(id: MetricId, inp: &EvalInput<'_>, convention: Convention) -> Result<Estimation> {
    inp.validate()?;
    estimators::estimate(id, inp, convention)
}

fn ensure_kind(id: MetricId, kind: Requirement) -> Result<()> {
    if id.requirement() == kind {
        Ok(())
    } else {
        Err(Error::arg(format!("{id} is not a {kind:?}-based metric")))
    }
}

/// Disparate impact, demographic parity, normalized difference, mutual information.
pub fn estimate_prediction_metric(id: MetricId, inp: &EvalInput<'_>, convention: Convention) -> Result<Estimation> {
    ensure_kind(id, Requirement::Predictions)?;
    estimate(id, inp, convention)
}

/// The fourteen metrics that need ground truth.
pub fn estimate_supervised_metric(id: MetricId, inp: &EvalInput<'_>, convention: Convention) -> Result<Estimation> {
    ensure_kind(id, Requirement::Labels)?;
    estimate(id, inp, convention)
}

/// Calibration, prediction parity, ERBS.
pub fn estimate_score_metric(id: MetricId, inp: &EvalInput<'_>, convention: Convention) -> Result<Estimation> {
    ensure_kind(id, Requirement::Scores)?;
    estimate(id, inp, convention)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub convention: Convention,
    /// Soft outcomes above this are positive predictions.
    pub decision_threshold: f64,
    /// Risk score threshold `t`.
    pub score_threshold: f64,
    pub calibration_bins: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            convention: Convention::Corrected,
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
            score_threshold: 0.5,
            calibration_bins: DEFAULT_CALIBRATION_BINS,
        }
    }
}

/// Queries the model once and evaluates all 21 metrics for one protected
/// feature. Metrics whose inputs are missing come back unavailable.
pub fn estimate_all<P: Predictor + ?Sized>(
    ds: &Dataset,
    model: &P,
    feature: &str,
    opts: &MetricOptions,
) -> Result<Vec<MetricEstimate>> {
    let outcomes = predict(model, ds.rows().view())?;
    estimate_all_from_outcomes(ds, &outcomes, feature, opts)
}

/// Same as [`estimate_all`] with precomputed soft outcomes (one per row).
pub fn estimate_all_from_outcomes(
    ds: &Dataset,
    outcomes: &[f64],
    feature: &str,
    opts: &MetricOptions,
) -> Result<Vec<MetricEstimate>> {
    if !ds.schema().is_protected(feature) {
        return Err(Error::arg(format!("feature `{feature}` is not protected")));
    }
    if outcomes.len() != ds.len() {
        return Err(Error::arg("outcome count differs from dataset length"));
    }
    let predictions = hard_labels(outcomes, opts.decision_threshold);
    let protected = ds.column(feature)?.to_vec();
    let (scores, from_model) = match ds.scores() {
        Some(s) => (s, false),
        None => (outcomes, true),
    };
    let mut inp = EvalInput::new(&predictions, &protected).with_scores(scores, opts.score_threshold);
    inp.calibration_bins = opts.calibration_bins;
    if let Some(labels) = ds.labels() {
        inp = inp.with_labels(labels);
    }

    MetricId::ALL
        .iter()
        .map(|&metric| {
            let base = MetricEstimate {
                metric,
                feature: feature.to_string(),
                value: None,
                convention: opts.convention,
                flags: vec![Flag::Unavailable],
            };
            if metric.requirement() == Requirement::Labels && inp.labels.is_none() {
                return Ok(base);
            }
            let mut est = estimate(metric, &inp, opts.convention)?;
            if metric.requirement() == Requirement::Scores && from_model {
                est.flags.push(Flag::ScoreFromModel);
            }
            Ok(MetricEstimate {
                value: Some(est.value),
                flags: est.flags,
                ..base
            })
        })
        .collect()
}

/// Runs [`estimate_all`] for every protected feature with a single model query.
pub fn estimate_all_features<P: Predictor + ?Sized>(
    ds: &Dataset,
    model: &P,
    opts: &MetricOptions,
) -> Result<Vec<MetricEstimate>> {
    let outcomes = predict(model, ds.rows().view())?;
    let mut out = Vec::new();
    for feature in &ds.schema().protected {
        out.extend(estimate_all_from_outcomes(ds, &outcomes, feature, opts)?);
    }
    Ok(out)
}

/// CSV table with one row per metric and one column per feature.
pub fn estimates_to_csv(estimates: &[MetricEstimate]) -> Result<String> {
    let mut features: Vec<&str> = Vec::new();
    for e in estimates {
        if !features.contains(&e.feature.as_str()) {
            features.push(&e.feature);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric"];
    header.extend(&features);
    w.write_record(&header)?;
    for id in MetricId::ALL {
        let mut row = vec![id.name().to_string()];
        let mut any = false;
        for f in &features {
            let cell = estimates
                .iter()
                .find(|e| e.metric == id && e.feature == *f)
                .map(|e| {
                    any = true;
                    e.value.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
                })
                .unwrap_or_else(|| "NA".to_string());
            row.push(cell);
        }
        if any {
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
