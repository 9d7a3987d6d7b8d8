use serde::{Deserialize, Serialize};

use super::EvalInput;
use crate::error::{Error, Result};

/// Confusion counts for one protected group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn predicted_positive(&self) -> usize {
        self.tp + self.fp
    }
}

/// Per-group confusion counts, groups in ascending protected value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub values: Vec<f64>,
    pub counts: Vec<Confusion>,
}

impl GroupConfusion {
    pub fn n_groups(&self) -> usize {
        self.values.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(Confusion::total).sum()
    }
}

/// Sorted distinct protected values and each row's group index.
pub(crate) fn group_index(protected: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut values = protected.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let idx = protected
        .iter()
        .map(|v| values.binary_search_by(|x| x.total_cmp(v)).expect("value present"))
        .collect();
    (values, idx)
}

/// Tallies TP/FP/TN/FN per protected value. Needs labels.
pub fn confusion_by_group(inp: &EvalInput<'_>) -> Result<GroupConfusion> {
    inp.validate()?;
    let labels = inp
        .labels
        .ok_or_else(|| Error::arg("confusion counts need ground-truth labels"))?;
    let (values, idx) = group_index(inp.protected);
    let mut counts = vec![Confusion::default(); values.len()];
    for ((&g, &p), &y) in idx.iter().zip(inp.predictions).zip(labels) {
        let c = &mut counts[g];
        match (p, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(GroupConfusion { values, counts })
}
