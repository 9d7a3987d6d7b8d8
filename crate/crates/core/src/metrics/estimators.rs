use std::collections::BTreeSet;

use super::confusion::{confusion_by_group, group_index, Confusion};
use super::stats::{disparity, scaled_variance};
use super::{Convention, Estimation, EvalInput, Flag, MetricId};
use crate::error::{Error, Result};

/// Collects flags while terms are computed.
#[derive(Default)]
struct Flags(BTreeSet<Flag>);

impl Flags {
    /// Defined rates, or `None` (flagged) when fewer than two groups have one.
    fn defined(&mut self, rates: &[Option<f64>]) -> Option<Vec<f64>> {
        let xs: Vec<f64> = rates.iter().flatten().copied().collect();
        if xs.len() < rates.len() || xs.len() < 2 {
            self.0.insert(Flag::Degenerate);
        }
        (xs.len() >= 2).then_some(xs)
    }

    fn diff(&mut self, rates: &[Option<f64>]) -> Option<f64> {
        self.defined(rates).map(|r| disparity(&r))
    }

    fn var(&mut self, rates: &[Option<f64>]) -> Option<f64> {
        self.defined(rates).map(|r| scaled_variance(&r))
    }

    /// Disparity of unbounded ratios (possibly infinite), scaled by `scale`.
    fn unbounded(&mut self, ratios: &[Option<f64>], scale: f64) -> Option<f64> {
        let xs = self.defined(ratios)?;
        if xs.iter().any(|x| x.is_infinite()) {
            self.0.insert(Flag::Saturated);
        }
        Some(match xs[..] {
            [a, b] if a.is_infinite() && b.is_infinite() => 0.0,
            [a, b] if a.is_infinite() || b.is_infinite() => 1.0,
            [a, b] => ((a - b).abs() / scale).min(1.0),
            _ => {
                let q: Vec<f64> = xs.iter().map(|x| (x / scale).min(1.0)).collect();
                scaled_variance(&q)
            }
        })
    }

    fn finish(self, value: f64) -> Estimation {
        Estimation {
            value: value.clamp(0.0, 1.0),
            flags: self.0.into_iter().collect(),
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn unbounded_ratio(num: usize, den: usize) -> Option<f64> {
    match (num, den) {
        (0, 0) => None,
        (_, 0) => Some(f64::INFINITY),
        _ => Some(num as f64 / den as f64),
    }
}

fn combine_max(terms: &[Option<f64>]) -> f64 {
    terms.iter().flatten().copied().fold(0.0, f64::max)
}

fn combine_min(terms: &[Option<f64>]) -> f64 {
    terms.iter().flatten().copied().reduce(f64::min).unwrap_or(0.0)
}

fn invert(value: f64, convention: Convention) -> f64 {
    match convention {
        Convention::Corrected => value,
        Convention::Verbatim => 1.0 - value,
    }
}

/// Group sizes and predicted-positive counts, no labels needed.
struct Positives {
    size: Vec<usize>,
    pos: Vec<usize>,
}

fn positives(inp: &EvalInput<'_>) -> Positives {
    let (values, idx) = group_index(inp.protected);
    let mut size = vec![0; values.len()];
    let mut pos = vec![0; values.len()];
    for (&g, &p) in idx.iter().zip(inp.predictions) {
        size[g] += 1;
        pos[g] += usize::from(p);
    }
    Positives { size, pos }
}

pub(super) fn estimate(id: MetricId, inp: &EvalInput<'_>, convention: Convention) -> Result<Estimation> {
    use MetricId::*;
    match id {
        DisparateImpact => Ok(disparate_impact(inp)),
        DemographicParity => {
            let p = positives(inp);
            let rates: Vec<_> = p.pos.iter().zip(&p.size).map(|(&a, &n)| ratio(a, n)).collect();
            let mut f = Flags::default();
            let v = f.diff(&rates).unwrap_or(0.0);
            Ok(f.finish(v))
        }
        NormalizedDifference => Ok(normalized_difference(inp)),
        MutualInformation => Ok(mutual_information(inp)),
        Calibration | PredictionParity | ErrorRateBalanceScore => score_metric(id, inp, convention),
        _ => supervised(id, inp, convention),
    }
}

fn disparate_impact(inp: &EvalInput<'_>) -> Estimation {
    let p = positives(inp);
    let mut f = Flags::default();
    if p.size.len() < 2 {
        f.0.insert(Flag::Degenerate);
        return f.finish(0.0);
    }
    let rates: Vec<f64> = p.pos.iter().zip(&p.size).map(|(&a, &n)| a as f64 / n as f64).collect();
    let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().copied().fold(0.0, f64::max);
    if hi == 0.0 {
        f.0.insert(Flag::Degenerate);
        return f.finish(0.0);
    }
    if lo == 0.0 {
        f.0.insert(Flag::Saturated);
    }
    let min_ratio = lo / hi;
    let value = if min_ratio > 0.8 { 0.0 } else { 1.0 - min_ratio / 0.8 };
    f.finish(value)
}

fn normalized_difference(inp: &EvalInput<'_>) -> Estimation {
    let p = positives(inp);
    let mut f = Flags::default();
    let k = p.size.len();
    if k < 2 {
        f.0.insert(Flag::Degenerate);
        return f.finish(0.0);
    }
    let m = inp.len() as f64;
    let pi = p.pos.iter().sum::<usize>() as f64 / m;
    let w: Vec<f64> = p.size.iter().map(|&n| n as f64 / m).collect();
    let rate: Vec<f64> = p.pos.iter().zip(&p.size).map(|(&a, &n)| a as f64 / n as f64).collect();
    let mut best = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let denom = (pi / w[b]).max((1.0 - pi) / w[a]);
            best = best.max(((rate[a] - rate[b]) / denom).abs());
        }
    }
    f.finish(best)
}

fn entropy(counts: impl IntoIterator<Item = usize>, total: f64) -> f64 {
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let q = c as f64 / total;
            -q * q.log2()
        })
        .sum()
}

fn mutual_information(inp: &EvalInput<'_>) -> Estimation {
    let p = positives(inp);
    let mut f = Flags::default();
    let m = inp.len() as f64;
    let n_pos: usize = p.pos.iter().sum();
    let h_pred = entropy([n_pos, inp.len() - n_pos], m);
    let h_group = entropy(p.size.iter().copied(), m);
    if h_pred == 0.0 || h_group == 0.0 {
        f.0.insert(Flag::Degenerate);
        return f.finish(0.0);
    }
    // Sum over cells of p(M, f) log2(p(M, f) / (p(M) p(f))), with the ratio
    // taken on integer counts so exact independence gives exactly 0.
    let n = inp.len();
    let n_neg = n - n_pos;
    let mut info = 0.0;
    for (&a, &size) in p.pos.iter().zip(&p.size) {
        for (c, marginal) in [(a, n_pos), (size - a, n_neg)] {
            if c > 0 {
                let ratio = (n * c) as f64 / (marginal * size) as f64;
                info += c as f64 / m * ratio.log2();
            }
        }
    }
    let info = info.max(0.0);
    f.finish(info / (h_pred * h_group).sqrt())
}

fn supervised(id: MetricId, inp: &EvalInput<'_>, convention: Convention) -> Result<Estimation> {
    use MetricId::*;
    let gc = confusion_by_group(inp)?;
    let m = inp.len() as f64;
    let rates = |g: fn(&Confusion) -> Option<f64>| -> Vec<Option<f64>> { gc.counts.iter().map(g).collect() };
    let tpr = rates(|c| ratio(c.tp, c.tp + c.fn_));
    let fpr = rates(|c| ratio(c.fp, c.fp + c.tn));
    let fnr = rates(|c| ratio(c.fn_, c.fn_ + c.tp));
    let mut f = Flags::default();
    let value = match id {
        EqualizedOdds => combine_max(&[f.var(&tpr), f.var(&fpr)]),
        Sensitivity => f.diff(&tpr).unwrap_or(0.0),
        Specificity => f.diff(&rates(|c| ratio(c.tn, c.tn + c.fp))).unwrap_or(0.0),
        BalanceErrorRate => {
            let r: Vec<_> = gc.counts.iter().map(|c| Some((c.fp + c.fn_) as f64 / m)).collect();
            f.diff(&r).unwrap_or(0.0)
        }
        LRPlus => {
            // TPR / (1 - TPR) reduces to TP / FN.
            let lr = rates(|c| (c.tp + c.fn_ > 0).then(|| unbounded_ratio(c.tp, c.fn_)).flatten());
            f.unbounded(&lr, m / 2.0).unwrap_or(0.0)
        }
        EqualPositivePredictionValue => f.diff(&rates(|c| ratio(c.tp, c.tp + c.fp))).unwrap_or(0.0),
        EqualNegativePredictionValue => f.diff(&rates(|c| ratio(c.tn, c.tn + c.fn_))).unwrap_or(0.0),
        EqualAccuracy => {
            let r: Vec<_> = gc
                .counts
                .iter()
                .map(|c| {
                    let den = match convention {
                        Convention::Corrected => c.total() as f64,
                        Convention::Verbatim => m,
                    };
                    Some((c.tp + c.tn) as f64 / den)
                })
                .collect();
            f.diff(&r).unwrap_or(0.0)
        }
        EqualOpportunity => invert(f.var(&tpr).unwrap_or(0.0), convention),
        TreatmentEquality => {
            let r = rates(|c| unbounded_ratio(c.fn_, c.fp));
            f.unbounded(&r, m).unwrap_or(0.0)
        }
        EqualFPR => f.diff(&fpr).unwrap_or(0.0),
        EqualFNR => f.diff(&fnr).unwrap_or(0.0),
        ErrorRateBalance => invert(combine_min(&[f.diff(&fnr), f.diff(&fpr)]), convention),
        BalanceResiduals => f.diff(&rates(|c| ratio(c.fp + c.fn_, c.total()))).unwrap_or(0.0),
        _ => unreachable!("{id} is not a supervised metric"),
    };
    Ok(f.finish(value))
}

/// `P(pred = 1 | cond, group)` for each group; `None` where `cond` never holds.
fn conditional_rates(
    idx: &[usize],
    k: usize,
    cond: impl Fn(usize) -> bool,
    event: impl Fn(usize) -> bool,
) -> Vec<Option<f64>> {
    let mut num = vec![0; k];
    let mut den = vec![0; k];
    for (i, &g) in idx.iter().enumerate() {
        if cond(i) {
            den[g] += 1;
            num[g] += usize::from(event(i));
        }
    }
    num.iter().zip(&den).map(|(&a, &n)| ratio(a, n)).collect()
}

fn score_metric(id: MetricId, inp: &EvalInput<'_>, convention: Convention) -> Result<Estimation> {
    let scores = inp
        .scores
        .ok_or_else(|| Error::arg(format!("{id} needs risk scores")))?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::arg("risk scores must be finite"));
    }
    let (values, idx) = group_index(inp.protected);
    let k = values.len();
    let preds = inp.predictions;
    let mut f = Flags::default();

    let value = match id {
        MetricId::Calibration => {
            let bins = inp.calibration_bins.max(1);
            let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let bin_of = |s: f64| {
                if hi > lo {
                    (((s - lo) / (hi - lo)) * bins as f64).floor().min((bins - 1) as f64) as usize
                } else {
                    0
                }
            };
            let row_bin: Vec<usize> = scores.iter().map(|&s| bin_of(s)).collect();
            let mut terms = Vec::new();
            for b in 0..bins {
                if !row_bin.contains(&b) {
                    continue;
                }
                let r = conditional_rates(&idx, k, |i| row_bin[i] == b, |i| preds[i]);
                terms.push(f.var(&r));
            }
            match convention {
                Convention::Corrected => combine_max(&terms),
                Convention::Verbatim => combine_min(&terms),
            }
        }
        MetricId::PredictionParity => {
            let t = threshold(inp, id)?;
            let r = conditional_rates(&idx, k, |i| scores[i] > t, |i| preds[i]);
            invert(f.var(&r).unwrap_or(0.0), convention)
        }
        MetricId::ErrorRateBalanceScore => {
            let t = threshold(inp, id)?;
            let a = conditional_rates(&idx, k, |i| !preds[i], |i| scores[i] > t);
            let b = conditional_rates(&idx, k, |i| preds[i], |i| scores[i] <= t);
            invert(combine_min(&[f.var(&a), f.var(&b)]), convention)
        }
        _ => unreachable!("{id} is not a score metric"),
    };
    Ok(f.finish(value))
}

fn threshold(inp: &EvalInput<'_>, id: MetricId) -> Result<f64> {
    inp.score_threshold
        .ok_or_else(|| Error::arg(format!("{id} needs a score threshold")))
}
