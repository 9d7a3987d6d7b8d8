//! Re-weighting mitigation: append weighted replicas of existing samples
//! until the positive-label rate is nearly equal across protected groups.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigationConfig {
    /// Weight of a replica that lowers the variance on its own.
    pub positive_weight: f64,
    /// Fallback weight tried when the full weight overshoots.
    pub other_weight: f64,
    /// Stop once the group positive-rate variance is at most this.
    pub threshold: f64,
    pub max_iterations: usize,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            positive_weight: 1.0,
            other_weight: 0.1,
            threshold: 0.0045,
            max_iterations: 10_000,
        }
    }
}

impl MitigationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.positive_weight >= 0.0 && self.other_weight >= 0.0) {
            return Err(Error::arg("replica weights must be non-negative"));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::arg("variance threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationStep {
    pub iteration: usize,
    pub group: f64,
    /// Index of the row that was copied.
    pub row: usize,
    pub weight: f64,
    /// Variance after appending this replica.
    pub variance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MitigationLog {
    pub feature: String,
    pub initial_variance: f64,
    pub final_variance: f64,
    pub iterations: usize,
    pub steps: Vec<MitigationStep>,
}

impl MitigationLog {
    /// CSV with header `iteration,group,row,weight,variance`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "group", "row", "weight", "variance"])?;
        for s in &self.steps {
            out.write_record([
                s.iteration.to_string(),
                s.group.to_string(),
                s.row.to_string(),
                s.weight.to_string(),
                s.variance.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<mitigation log>", e))?;
        Ok(())
    }
}

/// Weighted label mass per group, groups in ascending value order.
#[derive(Clone, Debug)]
struct GroupMass {
    values: Vec<f64>,
    total: Vec<f64>,
    positive: Vec<f64>,
}

impl GroupMass {
    fn of(ds: &Dataset, feature: &str) -> Result<(Self, Vec<usize>)> {
        let labels = ds
            .labels()
            .ok_or_else(|| Error::arg("re-weighting needs ground-truth labels"))?;
        let col = ds.column(feature)?;
        let values = ds.distinct_values(feature)?;
        let group: Vec<usize> = col
            .iter()
            .map(|v| values.binary_search_by(|x| x.total_cmp(v)).expect("distinct value"))
            .collect();
        let mut total = vec![0.0; values.len()];
        let mut positive = vec![0.0; values.len()];
        for ((&g, &y), &w) in group.iter().zip(labels).zip(ds.weights()) {
            total[g] += w;
            if y {
                positive[g] += w;
            }
        }
        if let Some(g) = total.iter().position(|&t| t <= 0.0) {
            return Err(Error::Data(format!("group {feature}={} has no weight", values[g])));
        }
        Ok((
            Self {
                values,
                total,
                positive,
            },
            group,
        ))
    }

    fn rates(&self) -> Vec<f64> {
        self.total.iter().zip(&self.positive).map(|(t, p)| p / t).collect()
    }

    fn variance(&self) -> f64 {
        let r = self.rates();
        if r.len() < 2 {
            return 0.0;
        }
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / r.len() as f64
    }

    fn with(&self, g: usize, weight: f64, positive: bool) -> Self {
        let mut next = self.clone();
        next.total[g] += weight;
        if positive {
            next.positive[g] += weight;
        }
        next
    }
}

/// Population variance, across groups, of each group's weighted positive-label rate.
pub fn group_positive_variance(ds: &Dataset, feature: &str) -> Result<f64> {
    Ok(GroupMass::of(ds, feature)?.0.variance())
}

fn group_name(feature: &str, value: f64) -> String {
    format!("{feature}={value}")
}

/// Appends replicas until the variance reaches the threshold.
///
/// Each round visits the groups in ascending value order. A group below the
/// mean rate gets a copy of its first positive row, a group above the mean a
/// copy of its first negative row. The copy is kept at the positive weight
/// if that strictly lowers the variance, else at the other weight if that
/// does, else dropped. The input rows stay an unchanged prefix.
pub fn reweight(ds: &Dataset, feature: &str, cfg: &MitigationConfig) -> Result<(Dataset, MitigationLog)> {
    cfg.validate()?;
    if !ds.schema().is_protected(feature) {
        return Err(Error::arg(format!("feature `{feature}` is not protected")));
    }
    let (mut mass, group) = GroupMass::of(ds, feature)?;
    let labels = ds.labels().expect("checked by GroupMass");
    let first = |g: usize, want: bool| (0..ds.len()).find(|&i| group[i] == g && labels[i] == want);

    let mut variance = mass.variance();
    let mut log = MitigationLog {
        feature: feature.to_string(),
        initial_variance: variance,
        ..MitigationLog::default()
    };
    let mut replicas: Vec<(usize, f64)> = Vec::new();
    let mut iteration = 0;
    while variance > cfg.threshold && iteration < cfg.max_iterations {
        iteration += 1;
        let rates = mass.rates();
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let mut added = false;
        for (g, rate) in rates.iter().enumerate() {
            let want = match rate.partial_cmp(&mean) {
                Some(std::cmp::Ordering::Less) => true,
                Some(std::cmp::Ordering::Greater) => false,
                _ => continue,
            };
            let row = first(g, want).ok_or_else(|| Error::Mitigation {
                group: group_name(feature, mass.values[g]),
                message: format!("no {} sample to replicate", if want { "positive" } else { "negative" }),
            })?;
            for weight in [cfg.positive_weight, cfg.other_weight] {
                let next = mass.with(g, weight, want);
                let v = next.variance();
                if v < variance {
                    mass = next;
                    variance = v;
                    replicas.push((row, weight));
                    log.steps.push(MitigationStep {
                        iteration,
                        group: mass.values[g],
                        row,
                        weight,
                        variance,
                    });
                    added = true;
                    break;
                }
            }
        }
        if !added {
            return Err(Error::Mitigation {
                group: feature.to_string(),
                message: format!("no replica lowers the variance {variance:.6} further"),
            });
        }
    }
    if variance > cfg.threshold {
        log::warn!("re-weighting `{feature}` stopped at {iteration} iterations with variance {variance:.6}");
    }
    log.final_variance = variance;
    log.iterations = iteration;

    let mut out = ds.clone();
    if !replicas.is_empty() {
        out.ensure_weight_column();
        out.append_replicas(&replicas);
    }
    Ok((out, log))
}
