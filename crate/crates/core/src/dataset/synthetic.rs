//! Sanity-check dataset with one maximally biased and one perfectly fair
//! protected feature.
//!
//! Base records carry `(label, random)`; `biased` copies the label. Every base
//! record is emitted twice, once with `fair = 1` and once with `fair = 0`, so
//! the label rate is identical in both fair groups. An odd row count cannot be
//! made of pairs alone: for an odd composite count `d * e` (`d` its smallest
//! prime factor) the generator emits `(count - d) / 2` pairs plus `d` unpaired
//! `fair = 1` rows, choosing the label rate `(d + 1) / 2d` so both fair groups
//! still match exactly. 305 = 5 * 61 gives 150 pairs with 90 positives plus
//! 5 rows with 3 positives (rate 0.6 in both groups). An odd prime count has no
//! exact construction; one unpaired row is added and a warning logged.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetSchema};
use crate::error::{Error, Result};

pub const SYNTHETIC_DEFAULT_COUNT: usize = 305;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticOptions {
    pub count: usize,
    pub seed: u64,
    /// Probability that a base record's `biased` value equals its label.
    /// 1.0 is the exact construction; lower values give a partially biased
    /// feature (useful for exercising mitigation, which cannot act on a
    /// feature that determines the label).
    pub biased_agreement: f64,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            count: SYNTHETIC_DEFAULT_COUNT,
            seed: 0,
            biased_agreement: 1.0,
        }
    }
}

pub fn synthetic_schema() -> DatasetSchema {
    DatasetSchema::new(["biased", "fair", "random"], ["biased", "fair"]).with_label("label")
}

/// Generates the exact construction (`biased` equals the label on every row).
pub fn generate_synthetic(count: usize, seed: u64) -> Result<Dataset> {
    SyntheticOptions {
        count,
        seed,
        ..Default::default()
    }
    .generate()
}

impl SyntheticOptions {
    pub fn generate(&self) -> Result<Dataset> {
        let count = self.count;
        if count < 8 {
            return Err(Error::arg(format!(
                "synthetic sample count must be at least 8, got {count}"
            )));
        }
        if !(0.0..=1.0).contains(&self.biased_agreement) {
            return Err(Error::arg("biased_agreement must lie in [0, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        // (pairs, unpaired fair=1 rows, positives among pairs, positives among unpaired)
        let (pairs, extra, pair_pos, extra_pos) = if count % 2 == 0 {
            let p = count / 2;
            (p, 0, p / 2, 0)
        } else {
            let d = smallest_prime_factor(count);
            if d == count {
                log::warn!("synthetic count {count} is prime; the fair feature is fair only up to one unpaired row");
                let p = (count - 1) / 2;
                (p, 1, p / 2, 0)
            } else {
                let e = count / d;
                let x = d.div_ceil(2);
                ((count - d) / 2, d, x * (e - 1) / 2, x)
            }
        };

        let mut rows = Vec::with_capacity(count * 3);
        let mut labels = Vec::with_capacity(count);
        let mut push = |rng: &mut ChaCha8Rng, label: bool, fairs: &[f64]| {
            let random = f64::from(rng.gen_range(0..2u8));
            let agree = self.biased_agreement >= 1.0 || rng.gen_bool(self.biased_agreement);
            let biased = if agree == label { 1.0 } else { 0.0 };
            for &fair in fairs {
                rows.extend_from_slice(&[biased, fair, random]);
                labels.push(label);
            }
        };
        for i in 0..pairs {
            push(&mut rng, spread(i, pair_pos, pairs), &[1.0, 0.0]);
        }
        for i in 0..extra {
            push(&mut rng, i < extra_pos, &[1.0]);
        }

        let m = labels.len();
        debug_assert_eq!(m, count);
        let rows = Array2::from_shape_vec((m, 3), rows).expect("three columns per row");
        Dataset::new(synthetic_schema(), rows, Some(labels), None, None)
    }
}

/// True for exactly `hits` of the indices `0..len`, evenly spread.
fn spread(i: usize, hits: usize, len: usize) -> bool {
    (i + 1) * hits / len > i * hits / len
}

fn smallest_prime_factor(n: usize) -> usize {
    (2..).take_while(|d| d * d <= n).find(|d| n % d == 0).unwrap_or(n)
}
