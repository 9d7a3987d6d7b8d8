//! Direct row-probability oracle for the 21 metrics, written from the
//! definitions without sharing code with the estimators.

use fairaudit::metrics::{estimate, Convention, EvalInput, MetricId};

pub const TOL: f64 = 1e-12;
pub const THRESHOLD: f64 = 0.5;
pub const BINS: usize = 10;

#[derive(Clone, Copy, Debug)]
pub struct Row {
    pub p: bool,
    pub y: bool,
    pub g: u8,
    pub s: f64,
}

/// `P(event | cond)` over the rows, `None` when `cond` never holds.
fn prob(rows: &[Row], event: impl Fn(&Row) -> bool, cond: impl Fn(&Row) -> bool) -> Option<f64> {
    let n = rows.iter().filter(|r| cond(r)).count();
    let k = rows.iter().filter(|r| cond(r) && event(r)).count();
    (n > 0).then(|| k as f64 / n as f64)
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

/// Scaled variance of two proportions: `((a - b) / 2)^2 / 0.25`.
fn var2(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    diff(a, b).map(|d| d * d)
}

fn per_group(
    rows: &[Row],
    event: impl Fn(&Row) -> bool + Copy,
    cond: impl Fn(&Row) -> bool + Copy,
) -> (Option<f64>, Option<f64>) {
    (
        prob(rows, event, |r| r.g == 0 && cond(r)),
        prob(rows, event, |r| r.g == 1 && cond(r)),
    )
}

fn max_of(xs: &[Option<f64>]) -> f64 {
    xs.iter().flatten().fold(0.0, |a, &b| a.max(b))
}

fn min_of(xs: &[Option<f64>]) -> f64 {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().fold(1.0, |a, &b| a.min(b))
    }
}

fn flip(v: f64, c: Convention) -> f64 {
    if c == Convention::Verbatim {
        1.0 - v
    } else {
        v
    }
}

fn unbounded_pair(a: Option<f64>, b: Option<f64>, scale: f64) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => match (a.is_infinite(), b.is_infinite()) {
            (true, true) => 0.0,
            (true, false) | (false, true) => 1.0,
            _ => ((a - b).abs() / scale).min(1.0),
        },
        _ => 0.0,
    }
}

pub fn oracle(id: MetricId, rows: &[Row], c: Convention) -> f64 {
    use MetricId::*;
    let m = rows.len() as f64;
    let both_groups = rows.iter().any(|r| r.g == 0) && rows.iter().any(|r| r.g == 1);
    if !both_groups {
        let inverted = matches!(
            id,
            EqualOpportunity | ErrorRateBalance | PredictionParity | ErrorRateBalanceScore
        );
        return if inverted { flip(0.0, c) } else { 0.0 };
    }
    let any = |_: &Row| true;
    let tpr = per_group(rows, |r| r.p, |r| r.y);
    let fpr = per_group(rows, |r| r.p, |r| !r.y);
    let fnr = per_group(rows, |r| !r.p, |r| r.y);
    let pos = per_group(rows, |r| r.p, any);
    let d = |(a, b): (Option<f64>, Option<f64>)| diff(a, b);
    let v = |(a, b): (Option<f64>, Option<f64>)| var2(a, b);
    match id {
        EqualizedOdds => max_of(&[v(tpr), v(fpr)]),
        DisparateImpact => {
            let (a, b) = (pos.0.unwrap(), pos.1.unwrap());
            let hi = a.max(b);
            if hi == 0.0 {
                0.0
            } else {
                let r = a.min(b) / hi;
                if r > 0.8 {
                    0.0
                } else {
                    1.0 - r / 0.8
                }
            }
        }
        DemographicParity => d(pos).unwrap(),
        Sensitivity => d(tpr).unwrap_or(0.0),
        Specificity => d(per_group(rows, |r| !r.p, |r| !r.y)).unwrap_or(0.0),
        BalanceErrorRate => {
            let e = |g| rows.iter().filter(|r| r.g == g && r.p != r.y).count() as f64;
            (e(1) - e(0)).abs() / m
        }
        LRPlus => {
            let lr = |t: Option<f64>| t.map(|t| t / (1.0 - t));
            unbounded_pair(lr(tpr.0), lr(tpr.1), m / 2.0)
        }
        EqualPositivePredictionValue => d(per_group(rows, |r| r.y, |r| r.p)).unwrap_or(0.0),
        EqualNegativePredictionValue => d(per_group(rows, |r| !r.y, |r| !r.p)).unwrap_or(0.0),
        EqualAccuracy => match c {
            Convention::Corrected => d(per_group(rows, |r| r.p == r.y, any)).unwrap(),
            Convention::Verbatim => {
                let a = |g| rows.iter().filter(|r| r.g == g && r.p == r.y).count() as f64 / m;
                (a(1) - a(0)).abs()
            }
        },
        EqualOpportunity => flip(v(tpr).unwrap_or(0.0), c),
        TreatmentEquality => {
            let te = |g| {
                let fnc = rows.iter().filter(|r| r.g == g && !r.p && r.y).count() as f64;
                let fpc = rows.iter().filter(|r| r.g == g && r.p && !r.y).count() as f64;
                if fnc == 0.0 && fpc == 0.0 {
                    None
                } else {
                    Some(fnc / fpc)
                }
            };
            unbounded_pair(te(0), te(1), m)
        }
        EqualFPR => d(fpr).unwrap_or(0.0),
        EqualFNR => d(fnr).unwrap_or(0.0),
        ErrorRateBalance => flip(min_of(&[d(fnr), d(fpr)]), c),
        NormalizedDifference => {
            let pi = prob(rows, |r| r.p, any).unwrap();
            let w0 = prob(rows, |r| r.g == 0, any).unwrap();
            let w1 = 1.0 - w0;
            let (r0, r1) = (pos.0.unwrap(), pos.1.unwrap());
            let nd10 = (r1 - r0) / (pi / w0).max((1.0 - pi) / w1);
            let nd01 = (r0 - r1) / (pi / w1).max((1.0 - pi) / w0);
            nd10.abs().max(nd01.abs()).min(1.0)
        }
        MutualInformation => {
            let mut info = 0.0;
            let mut hp = 0.0;
            let mut hg = 0.0;
            for p in [false, true] {
                let pp = prob(rows, |r| r.p == p, any).unwrap();
                if pp > 0.0 {
                    hp -= pp * pp.log2();
                }
                for g in [0, 1] {
                    let pg = prob(rows, |r| r.g == g, any).unwrap();
                    let joint = prob(rows, |r| r.p == p && r.g == g, any).unwrap();
                    if joint > 0.0 {
                        info += joint * (joint / (pp * pg)).log2();
                    }
                }
            }
            for g in [0, 1] {
                let pg = prob(rows, |r| r.g == g, any).unwrap();
                hg -= pg * pg.log2();
            }
            if hp == 0.0 {
                0.0
            } else {
                (info / (hp * hg).sqrt()).clamp(0.0, 1.0)
            }
        }
        BalanceResiduals => d(per_group(rows, |r| r.p != r.y, any)).unwrap(),
        Calibration => {
            let lo = rows.iter().map(|r| r.s).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r.s).fold(f64::NEG_INFINITY, f64::max);
            let bin = |s: f64| {
                if hi > lo {
                    (((s - lo) / (hi - lo) * BINS as f64) as usize).min(BINS - 1)
                } else {
                    0
                }
            };
            let terms: Vec<Option<f64>> = (0..BINS)
                .filter(|&b| rows.iter().any(|r| bin(r.s) == b))
                .map(|b| v(per_group(rows, |r| r.p, |r| bin(r.s) == b)))
                .collect();
            match c {
                Convention::Corrected => max_of(&terms),
                Convention::Verbatim => min_of(&terms),
            }
        }
        PredictionParity => flip(v(per_group(rows, |r| r.p, |r| r.s > THRESHOLD)).unwrap_or(0.0), c),
        ErrorRateBalanceScore => {
            let a = v(per_group(rows, |r| r.s > THRESHOLD, |r| !r.p));
            let b = v(per_group(rows, |r| r.s <= THRESHOLD, |r| r.p));
            flip(min_of(&[a, b]), c)
        }
    }
}

/// Every (metric, convention) where the estimator and the oracle differ by more than [`TOL`].
pub fn mismatches(rows: &[Row], ids: &[MetricId], with_labels: bool) -> Vec<String> {
    let preds: Vec<bool> = rows.iter().map(|r| r.p).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.y).collect();
    let groups: Vec<f64> = rows.iter().map(|r| f64::from(r.g)).collect();
    let scores: Vec<f64> = rows.iter().map(|r| r.s).collect();
    let mut inp = EvalInput::new(&preds, &groups).with_scores(&scores, THRESHOLD);
    inp.calibration_bins = BINS;
    if with_labels {
        inp = inp.with_labels(&labels);
    }
    let mut out = Vec::new();
    for &id in ids {
        for c in [Convention::Corrected, Convention::Verbatim] {
            let got = estimate(id, &inp, c).unwrap().value;
            let want = oracle(id, rows, c);
            // NaN on either side counts as a mismatch.
            let close = (got - want).abs() <= TOL;
            if !close {
                out.push(format!("{id} ({c}) on {rows:?}: got {got}, oracle {want}"));
            }
        }
    }
    out
}

/// All multisets of size `m` drawn from `cells`, visited in non-decreasing index order.
pub fn multisets(cells: &[Row], m: usize, start: usize, acc: &mut Vec<Row>, f: &mut impl FnMut(&[Row])) {
    if acc.len() == m {
        f(acc);
        return;
    }
    for i in start..cells.len() {
        acc.push(cells[i]);
        multisets(cells, m, i, acc, f);
        acc.pop();
    }
}

pub fn label_cells() -> Vec<Row> {
    let mut v = Vec::new();
    for p in [false, true] {
        for y in [false, true] {
            for g in [0, 1] {
                v.push(Row { p, y, g, s: 0.5 });
            }
        }
    }
    v
}

pub fn score_cells() -> Vec<Row> {
    let mut v = Vec::new();
    for p in [false, true] {
        for g in [0, 1] {
            for s in [0.2, 0.5, 0.8] {
                v.push(Row { p, y: false, g, s });
            }
        }
    }
    v
}

pub fn label_ids() -> Vec<MetricId> {
    MetricId::ALL
        .iter()
        .copied()
        .filter(|m| {
            !matches!(
                m,
                MetricId::Calibration | MetricId::PredictionParity | MetricId::ErrorRateBalanceScore
            )
        })
        .collect()
}

pub const SCORE_IDS: [MetricId; 3] = [
    MetricId::Calibration,
    MetricId::PredictionParity,
    MetricId::ErrorRateBalanceScore,
];

/// The `code`-th ordered sequence of `m` cells.
pub fn ordered(cells: &[Row], m: usize, code: usize) -> Vec<Row> {
    let mut c = code;
    (0..m)
        .map(|_| {
            let r = cells[c % cells.len()];
            c /= cells.len();
            r
        })
        .collect()
}
