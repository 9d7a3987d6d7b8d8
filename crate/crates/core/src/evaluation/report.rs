use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::guidelines::{rank_descending, GuidelineReport};
use crate::benn::BennEstimate;
use crate::ensemble::EnsembleEstimate;
use crate::error::{Error, Result};
use crate::metrics::{Convention, MetricEstimate, MetricId};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub feature: String,
    pub ensemble: f64,
    pub ensemble_metric: Option<MetricId>,
    pub ensemble_rank: usize,
    pub benn: Option<f64>,
    pub benn_rank: Option<usize>,
    /// `benn - ensemble`.
    pub difference: Option<f64>,
}

/// Spread of the per-fold estimations for one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldStat {
    pub feature: String,
    pub benn_values: Vec<f64>,
    pub benn_mean: f64,
    /// Sample standard deviation.
    pub benn_std: f64,
    pub ensemble_values: Vec<f64>,
    pub ensemble_mean: f64,
    pub ensemble_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub version: u32,
    pub config_hash: String,
    pub convention: Convention,
    pub seed: u64,
    pub features: Vec<FeatureReport>,
    pub guidelines: Option<GuidelineReport>,
    pub folds: Option<Vec<FoldStat>>,
    pub metrics: Vec<MetricEstimate>,
    pub notes: Vec<String>,
}

impl BiasReport {
    /// Assembles per-feature rows, ranks and differences.
    pub fn assemble(
        ensemble: &[EnsembleEstimate],
        benn: Option<&BennEstimate>,
        guidelines: Option<GuidelineReport>,
        metrics: Vec<MetricEstimate>,
        convention: Convention,
        seed: u64,
    ) -> Result<Self> {
        let names: Vec<String> = ensemble.iter().map(|e| e.feature.clone()).collect();
        let ens: Vec<f64> = ensemble.iter().map(|e| e.value).collect();
        let ens_ranks = rank_descending(&names, &ens);
        let benn_vals = benn.map(|b| b.restrict(&names)).transpose()?.map(|b| b.values);
        let benn_ranks = benn_vals.as_ref().map(|v| rank_descending(&names, v));
        let features = ensemble
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let b = benn_vals.as_ref().map(|v| v[i]);
                FeatureReport {
                    feature: e.feature.clone(),
                    ensemble: e.value,
                    ensemble_metric: Some(e.argmax),
                    ensemble_rank: ens_ranks[i],
                    benn: b,
                    benn_rank: benn_ranks.as_ref().map(|r| r[i]),
                    difference: b.map(|b| b - e.value),
                }
            })
            .collect();
        Ok(Self {
            version: REPORT_FORMAT_VERSION,
            config_hash: String::new(),
            convention,
            seed,
            features,
            guidelines,
            folds: None,
            metrics,
            notes: Vec::new(),
        })
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureReport> {
        self.features.iter().find(|f| f.feature == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text table with one column per protected feature.
    pub fn to_table(&self) -> String {
        let width = self.features.iter().map(|f| f.feature.len()).max().unwrap_or(0).max(8);
        let mut s = String::new();
        let _ = writeln!(s, "config hash: {}", self.config_hash);
        let _ = writeln!(s, "convention: {}  seed: {}", self.convention, self.seed);
        let _ = write!(s, "{:<22}", "");
        for f in &self.features {
            let _ = write!(s, " {:>width$}", f.feature);
        }
        s.push('\n');
        let mut row = |label: &str, cell: &dyn Fn(&FeatureReport) -> String| {
            let _ = write!(s, "{label:<22}");
            for f in &self.features {
                let _ = write!(s, " {:>width$}", cell(f));
            }
            s.push('\n');
        };
        let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        row("Ensemble", &|f| num(Some(f.ensemble)));
        row("BENN", &|f| num(f.benn));
        row("Rank (ensemble)", &|f| f.ensemble_rank.to_string());
        row("Rank (BENN)", &|f| f.benn_rank.map_or("-".into(), |r| r.to_string()));
        row("Difference", &|f| num(f.difference));
        if let Some(folds) = &self.folds {
            let stat = |f: &FeatureReport| folds.iter().find(|s| s.feature == f.feature);
            row("BENN fold std", &|f| num(stat(f).map(|s| s.benn_std)));
            row("Ensemble fold std", &|f| num(stat(f).map(|s| s.ensemble_std)));
        }
        if let Some(g) = &self.guidelines {
            let _ = writeln!(s, "Differences variance   {:.4}", g.difference_variance);
            let verdict = |b: bool| if b { "pass" } else { "FAIL" };
            let _ = writeln!(
                s,
                "G1 {} (slack {:.4}, eps {})  G2 {}  G3 {} (bound {}){}",
                verdict(g.g1),
                g.g1_slack,
                g.eps,
                verdict(g.g2),
                verdict(g.g3),
                g.variance_bound,
                if g.degenerate { "  [single feature]" } else { "" }
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

/// Change in both estimators after mitigation, for one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationDelta {
    pub feature: String,
    pub ensemble_delta: f64,
    pub benn_delta: f64,
    pub agree: bool,
}

/// Changes smaller than this count as no change.
pub const DELTA_DEAD_ZONE: f64 = 0.005;

fn sign(x: f64) -> i8 {
    if x.abs() < DELTA_DEAD_ZONE {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

/// `after - before` per feature for both methods, with sign agreement.
pub fn mitigation_delta(before: &BiasReport, after: &BiasReport) -> Result<Vec<MitigationDelta>> {
    before
        .features
        .iter()
        .map(|b| {
            let a = after
                .feature(&b.feature)
                .ok_or_else(|| Error::arg(format!("feature `{}` missing after mitigation", b.feature)))?;
            let (Some(bb), Some(ab)) = (b.benn, a.benn) else {
                return Err(Error::arg(format!("no BENN estimation for `{}`", b.feature)));
            };
            let ensemble_delta = a.ensemble - b.ensemble;
            let benn_delta = ab - bb;
            Ok(MitigationDelta {
                feature: b.feature.clone(),
                ensemble_delta,
                benn_delta,
                agree: sign(ensemble_delta) == sign(benn_delta),
            })
        })
        .collect()
}

/// CSV with header `feature,ensemble_delta,benn_delta,agree`.
pub fn write_delta_csv<W: Write>(deltas: &[MitigationDelta], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature", "ensemble_delta", "benn_delta", "agree"])?;
    for d in deltas {
        out.write_record([
            d.feature.clone(),
            d.ensemble_delta.to_string(),
            d.benn_delta.to_string(),
            d.agree.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<delta csv>", e))?;
    Ok(())
}
